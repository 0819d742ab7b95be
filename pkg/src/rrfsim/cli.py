"""Command-line interface.

Subcommands: layout, generate, embed, sim, fit, verify, combine. Structured
outputs are JSON; grids are CSV or binary graymap. Exit codes: 0 success,
1 user/input error (single-line message on stderr), 2 internal invariant
violation. Identical invocations produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import fusion, geometry, io, metric, protocol, toyembed
from .errors import DomainError, MissingEmbeddingsError, RRFSimError

PROG = "rrfsim"


class _Parser(argparse.ArgumentParser):
    # exit 1 (user error) instead of argparse's default 2
    def error(self, message):
        self.exit(1, f"{PROG}: error: usage: {message}\n")


def _default_seed() -> int:
    return int(os.environ.get("RRFSIM_SEED", "0"))


def _add_layout_args(p: argparse.ArgumentParser):
    p.add_argument("--image-w", type=int, default=112, help="image width")
    p.add_argument("--image-h", type=int, default=112, help="image height")
    p.add_argument("--w", type=int, default=28, help="patch width")
    p.add_argument("--h", type=int, default=None, help="patch height (default: --w)")
    p.add_argument(
        "--stride", type=int, default=None, help="grid stride (default: half patch width)"
    )
    p.add_argument(
        "--exclude-corners",
        action="store_true",
        help="drop patches touching the four 28x28 corner squares",
    )


def _layout_from_args(args) -> geometry.PatchLayout:
    h = args.h if args.h is not None else args.w
    stride = args.stride if args.stride is not None else max(args.w // 2, 1)
    return geometry.layout_patches(
        width=args.image_w,
        height=args.image_h,
        patch_width=args.w,
        patch_height=h,
        stride=stride,
        corner_exclusion=args.exclude_corners,
    )


def _path(args, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else Path(args.root) / p


def _write_json(path: Path | None, payload: dict):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(path)


def _shape_tuple(t):
    return list(t) if t is not None else None


def cmd_layout(args) -> int:
    layout = _layout_from_args(args)
    mirror = geometry.mirror_map(layout)
    plans = {}
    for variant in ("rrfnet", "resnet"):
        plan = geometry.shape_plan(
            variant,
            batch=args.batch,
            width=layout.width,
            height=layout.height,
            channels=args.channels,
            patch_width=layout.patch_width,
            patch_height=layout.patch_height,
            patch_count=layout.count,
        )
        plans[variant] = {
            "patches": _shape_tuple(plan.patches),
            "blocks": [list(b) for b in plan.blocks],
            "feature": list(plan.feature),
            "mean": _shape_tuple(plan.mean),
        }
    payload = {
        "layout": layout.to_dict(),
        "count": layout.count,
        "fingerprint": f"{io.layout_fingerprint(layout):#018x}",
        "mirror": {"pairs": list(mirror.pairs), "class_count": mirror.class_count},
        "shapes": plans,
    }
    _write_json(_path(args, args.out) if args.out else None, payload)
    return 0


def _embed_benchmark(
    bench_dir: Path,
    out: Path,
    dim: int,
    seed: int,
    flip: bool = False,
    mask_ratio: float = 0.0,
    shift_range: int = 0,
    augment_seed: int = 0,
) -> Path:
    spec = json.loads((bench_dir / "benchmark.json").read_text())
    layout = geometry.PatchLayout.from_dict(spec["layout"])
    out.mkdir(parents=True, exist_ok=True)
    embedder = toyembed.ToyEmbedder(seed=seed, dim=dim)
    augmented = mask_ratio > 0 or shift_range > 0
    images = {}
    for idx, npy in enumerate(sorted((bench_dir / "images").glob("*.npy"))):
        image_id = npy.stem
        image = np.load(npy)
        if augmented:
            image = toyembed.augment(
                image,
                layout,
                shift_range=shift_range,
                mask_ratio=mask_ratio,
                seed=augment_seed * 1_000_003 + idx,
            )
        embeddings = toyembed.embed(embedder, image, layout, flip=flip, image_id=image_id)
        io.write_embeddings(embeddings, out / f"{image_id}.rrfe")
        images[image_id] = f"{image_id}.rrfe"
    if not images:
        raise DomainError(f"no images under {bench_dir / 'images'}")
    describe = embedder.describe()
    if augmented:
        describe += (
            f"+augment(shift_range={shift_range},"
            f"mask_ratio={mask_ratio},seed={augment_seed})"
        )
    manifest = io.Manifest(
        layout=layout,
        images=images,
        flip_policy="merged" if flip else "none",
        embedder=describe,
    )
    io.write_manifest(manifest, out / "manifest.json")
    return out / "manifest.json"


def cmd_generate(args) -> int:
    layout = _layout_from_args(args)
    sigma = (
        [float(s) for s in args.sigma.split(",")] if "," in args.sigma else float(args.sigma)
    )
    bench = toyembed.generate_benchmark(
        n_ids=args.ids,
        imgs_per_id=args.imgs_per_id,
        layout=layout,
        sigma_w=sigma,
        seed=args.seed,
        channels=args.channels,
        train_ids=args.train_ids,
        fold_count=args.folds,
    )
    out = _path(args, args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for image_id in sorted(bench.images):
        np.save(out / "images" / f"{image_id}.npy", bench.images[image_id])
    io.write_pairs(bench.pairs, out / "pairs.csv")
    artifacts = [out / "benchmark.json", out / "pairs.csv"]
    if bench.train_pairs is not None:
        io.write_pairs(bench.train_pairs, out / "train_pairs.csv")
        artifacts.append(out / "train_pairs.csv")
    (out / "truth.json").write_text(
        json.dumps(bench.identities, sort_keys=True, indent=2) + "\n"
    )
    artifacts.append(out / "truth.json")
    payload = {"config": bench.config, "layout": layout.to_dict()}
    (out / "benchmark.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n"
    )
    if args.embed:
        artifacts.append(
            _embed_benchmark(out, out / "embeddings", args.dim, args.seed)
        )
    for p in artifacts:
        print(p)
    return 0


def cmd_embed(args) -> int:
    bench_dir = _path(args, args.benchmark)
    out = _path(args, args.out) if args.out else bench_dir / "embeddings"
    manifest_path = _embed_benchmark(
        bench_dir,
        out,
        dim=args.dim,
        seed=args.seed,
        flip=args.flip,
        mask_ratio=args.mask_ratio,
        shift_range=args.shift_range,
        augment_seed=args.augment_seed,
    )
    print(manifest_path)
    return 0


def cmd_sim(args) -> int:
    manifest_path = _path(args, args.manifest)
    _, store = io.load_store(manifest_path)
    for image_id in (args.a, args.b):
        if image_id not in store:
            raise DomainError(f"image id {image_id!r} not in manifest")
    a, b = store[args.a], store[args.b]
    manifest = io.load_manifest(manifest_path)
    payload = {
        "config": {
            "manifest": args.manifest,
            "a": args.a,
            "b": args.b,
            "mode": args.mode,
            "model": args.model,
        },
        "mode": args.mode,
        "image_a": args.a,
        "image_b": args.b,
    }
    if args.mode == "region_based":
        if not args.model:
            raise DomainError("region_based similarity needs --model")
        model = fusion.load_model(_path(args, args.model))
        breakdown = metric.region_similarity(a, b, model)
        payload.update(
            global_score=breakdown.global_score,
            patch_count=breakdown.patch_count,
            local_scores=breakdown.local_scores.tolist(),
            weighted_terms=breakdown.weighted_terms.tolist(),
            bias=breakdown.bias,
        )
    else:
        breakdown = metric.rrfnet_similarity_decomposed(a, b)
        payload.update(
            global_score=breakdown.global_score,
            patch_count=breakdown.patch_count,
            heatmap_a=metric.heatmap(breakdown, "A").tolist(),
            heatmap_b=metric.heatmap(breakdown, "B").tolist(),
        )
        if args.contrib_csv:
            io.export_contributions(
                breakdown, _path(args, args.contrib_csv), scale=args.contrib_scale
            )
            print(_path(args, args.contrib_csv))
    if args.heatmap_csv or args.heatmap_pgm:
        values = metric.heatmap(breakdown, args.side)
        if args.heatmap_csv:
            io.export_heatmap(values, manifest.layout, _path(args, args.heatmap_csv), "csv")
            print(_path(args, args.heatmap_csv))
        if args.heatmap_pgm:
            io.export_heatmap(values, manifest.layout, _path(args, args.heatmap_pgm), "pgm")
            print(_path(args, args.heatmap_pgm))
    _write_json(_path(args, args.out) if args.out else None, payload)
    return 0


def _local_feature_matrix(store, pairs: protocol.PairList) -> np.ndarray:
    from . import kernels

    rows = []
    for e in pairs.entries:
        a, b = store[e.id_a], store[e.id_b]
        rows.append(kernels.row_cosines(a.matrix, b.matrix))
    return np.stack(rows)


def cmd_fit(args) -> int:
    manifest_path = _path(args, args.manifest)
    _, store = io.load_store(manifest_path)
    pairs = io.load_pairs(_path(args, args.pairs))
    missing = pairs.image_ids() - set(store)
    if missing:
        raise MissingEmbeddingsError(missing)
    features = _local_feature_matrix(store, pairs)
    model = fusion.fit_fusion(features, pairs.labels(), reg=args.reg, seed=args.seed)
    fusion.save_model(model, _path(args, args.out))
    print(_path(args, args.out))
    return 0


def _source_from_parts(args, name, manifest, mode, model) -> protocol.ScoringSource:
    _, store = io.load_store(_path(args, manifest))
    fitted = fusion.load_model(_path(args, model)) if model else None
    return protocol.ScoringSource(name=name, store=store, mode=mode, model=fitted)


def cmd_verify(args) -> int:
    source = _source_from_parts(args, "source", args.manifest, args.mode, args.model)
    pairs = io.load_pairs(_path(args, args.pairs))
    reports = protocol.evaluate_configuration(
        pairs, [source], combine=None, jobs=args.jobs
    )
    payload = {
        "config": {
            "manifest": args.manifest,
            "pairs": args.pairs,
            "mode": args.mode,
            "model": args.model,
            "jobs": args.jobs,
        },
        "report": reports["source"].to_dict(),
    }
    _write_json(_path(args, args.out) if args.out else None, payload)
    return 0


def _parse_source_spec(spec: str) -> dict:
    parts = dict(
        kv.split("=", 1) for kv in spec.split(",") if kv
    )
    unknown = set(parts) - {"name", "manifest", "mode", "model"}
    if unknown or "name" not in parts or "manifest" not in parts or "mode" not in parts:
        raise DomainError(
            f"--source needs name=...,manifest=...,mode=...[,model=...]; got {spec!r}"
        )
    return parts


def cmd_combine(args) -> int:
    sources = []
    for spec in args.source:
        parts = _parse_source_spec(spec)
        sources.append(
            _source_from_parts(
                args, parts["name"], parts["manifest"], parts["mode"], parts.get("model")
            )
        )
    pairs = io.load_pairs(_path(args, args.pairs))
    reports = protocol.evaluate_configuration(
        pairs, sources, combine=args.method, reg=args.reg, jobs=args.jobs
    )
    payload = {
        "config": {
            "pairs": args.pairs,
            "sources": list(args.source),
            "method": args.method,
            "jobs": args.jobs,
        },
        "reports": {name: report.to_dict() for name, report in reports.items()},
    }
    _write_json(_path(args, args.out) if args.out else None, payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--root", default=".", help="base directory for relative paths")
        p.add_argument(
            "--seed",
            type=int,
            default=_default_seed(),
            help="seed (default: $RRFSIM_SEED or 0)",
        )

    p = sub.add_parser("layout", help="print a patch layout, mirror map, and shape plan")
    common(p)
    _add_layout_args(p)
    p.add_argument("--batch", type=int, default=1, help="batch size for the shape plan")
    p.add_argument("--channels", type=int, default=3, help="channels for the shape plan")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("generate", help="write a synthetic verification benchmark")
    common(p)
    _add_layout_args(p)
    p.add_argument("--out", required=True, help="benchmark directory")
    p.add_argument("--ids", type=int, default=10, help="number of identities")
    p.add_argument("--imgs-per-id", type=int, default=4)
    p.add_argument(
        "--sigma", default="0.5", help="within-identity noise (scalar or comma list)"
    )
    p.add_argument("--train-ids", type=int, default=0, help="identities reserved for fitting")
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument(
        "--embed",
        action="store_true",
        help="also write embeddings + manifest (complete benchmark directory)",
    )
    p.add_argument("--dim", type=int, default=512, help="embedding dimension for --embed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("embed", help="embed a benchmark's images with the toy embedder")
    common(p)
    p.add_argument("--benchmark", required=True, help="directory from `generate`")
    p.add_argument("--out", default=None, help="embedding directory (default: <benchmark>/embeddings)")
    p.add_argument("--dim", type=int, default=512, help="embedding dimension")
    p.add_argument("--flip", action="store_true", help="merge mirrored-image embeddings")
    p.add_argument("--mask-ratio", type=float, default=0.0)
    p.add_argument("--shift-range", type=int, default=0)
    p.add_argument("--augment-seed", type=int, default=0)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("sim", help="similarity breakdown for one image pair")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--a", required=True, help="first image id")
    p.add_argument("--b", required=True, help="second image id")
    p.add_argument("--mode", choices=("region_based", "rrfnet"), default="rrfnet")
    p.add_argument("--model", default=None, help="fusion model JSON (region_based)")
    p.add_argument("--out", default=None, help="breakdown JSON path (default stdout)")
    p.add_argument("--heatmap-csv", default=None)
    p.add_argument("--heatmap-pgm", default=None)
    p.add_argument("--contrib-csv", default=None)
    p.add_argument("--contrib-scale", type=float, default=1.0)
    p.add_argument("--side", choices=("A", "B"), default="A")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("fit", help="fit per-patch fusion weights on a pair list")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--reg", type=float, default=1e-4)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="run the K-fold verification protocol")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--mode", choices=("region_based", "rrfnet"), default="rrfnet")
    p.add_argument("--model", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="report JSON path (default stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("combine", help="score-level combination of several configurations")
    common(p)
    p.add_argument("--pairs", required=True)
    p.add_argument(
        "--source",
        action="append",
        required=True,
        help="name=...,manifest=...,mode=...[,model=...] (repeatable)",
    )
    p.add_argument("--method", choices=("mean_zscore", "learned_logistic"), default="mean_zscore")
    p.add_argument("--reg", type=float, default=1e-4)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None, help="reports JSON path (default stdout)")
    p.set_defaults(func=cmd_combine)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RRFSimError, OSError, json.JSONDecodeError, ValueError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"{PROG}: error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - invariant violations exit 2
        message = str(exc).replace("\n", " ")
        print(f"{PROG}: internal-error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
