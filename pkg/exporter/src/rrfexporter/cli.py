"""Command line: export patch embeddings from a directory of aligned images."""

from __future__ import annotations

import argparse
import sys

from . import layout as layout_mod
from . import plugins
from .errors import ExportError
from .export import export


def _parse_opt(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, _, raw = text.partition("=")
    for cast in (int, float):
        try:
            return key, cast(raw)
        except ValueError:
            continue
    return key, raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrf-export",
        description="Run an extractor plugin over aligned images and write "
        "one patch-embedding file per image plus a manifest.",
    )
    parser.add_argument("--images", required=True, help="directory of aligned images")
    parser.add_argument("--layout", required=True, help="layout JSON file")
    parser.add_argument(
        "--plugin",
        default="rrfexporter.plugins:identity",
        help="module.path:factory naming the extractor plugin",
    )
    parser.add_argument(
        "--plugin-opt",
        action="append",
        type=_parse_opt,
        default=[],
        metavar="KEY=VALUE",
        help="option passed to the plugin factory (repeatable)",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--flip", action="store_true", help="merge a mirrored-image pass per position"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        grid = layout_mod.load(args.layout)
        plugin = plugins.load_plugin(args.plugin, dict(args.plugin_opt))
        result = export(
            args.images,
            grid,
            plugin,
            args.out,
            flip=args.flip,
            plugin_label=args.plugin,
        )
    except (ExportError, OSError) as exc:
        print(f"rrf-export: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    state = "complete (skipped)" if result.skipped else f"wrote {result.written} file(s)"
    print(f"{result.manifest_path} [{state}]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
