"""Extractor plugins: anything callable that maps a patch to a feature vector.

A plugin spec is "module.path:factory"; the factory is called with the
options given on the command line (--plugin-opt key=value) and must return
an object with:

    dim         output dimension (constant across calls)
    batch_size  preferred batch size (>= 1)
    __call__(patch)         (h, w, C) float array -> (dim,) vector
    embed_batch(patches)    optional: (N, h, w, C) -> (N, dim)

Any framework can hide behind the callable; the exporter never imports
model code itself.
"""

from __future__ import annotations

import importlib

import numpy as np

from .errors import PluginError


def load_plugin(spec: str, options: dict | None = None):
    """Instantiate a plugin from a "module:factory" spec string."""
    if ":" not in spec:
        raise PluginError(f"plugin spec must look like module.path:factory, got {spec!r}")
    module_name, _, attr = spec.partition(":")
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise PluginError(f"cannot import plugin module {module_name!r}: {exc}") from exc
    try:
        factory = getattr(module, attr)
    except AttributeError as exc:
        raise PluginError(f"{module_name!r} has no attribute {attr!r}") from exc
    try:
        plugin = factory(**(options or {}))
    except TypeError as exc:
        raise PluginError(f"plugin factory rejected options {options!r}: {exc}") from exc
    dim = getattr(plugin, "dim", None)
    if not isinstance(dim, int) or dim < 1:
        raise PluginError(f"plugin must declare a positive integer dim, got {dim!r}")
    if getattr(plugin, "batch_size", 1) < 1:
        raise PluginError("plugin batch_size must be >= 1")
    if not callable(plugin):
        raise PluginError("plugin must be callable on a single patch")
    return plugin


class IdentityExtractor:
    """Flattens patch pixels and truncates (or zero-pads) to ``dim``.

    Deliberately trivial: its outputs are position-decodable, which makes
    row/position alignment independently verifiable downstream.
    """

    def __init__(self, dim: int = 512, batch_size: int = 64):
        self.dim = int(dim)
        self.batch_size = int(batch_size)

    def __call__(self, patch: np.ndarray) -> np.ndarray:
        flat = np.asarray(patch, dtype=np.float32).reshape(-1)
        if flat.size >= self.dim:
            return flat[: self.dim].copy()
        out = np.zeros(self.dim, dtype=np.float32)
        out[: flat.size] = flat
        return out

    def embed_batch(self, patches: np.ndarray) -> np.ndarray:
        return np.stack([self(p) for p in patches])


def identity(dim: int = 512, batch_size: int = 64) -> IdentityExtractor:
    """Factory for the built-in identity extractor."""
    return IdentityExtractor(dim=dim, batch_size=batch_size)
