"""Numpy fallback for the compiled similarity kernels.

Same surface as the extension module. np.sum's pairwise reduction plays the
role of the compiled Kahan loops; both hold the additive-decomposition
identity far below the 1e-9 contract.
"""

from __future__ import annotations

import numpy as np


def pair_dot_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    return a @ b.T


def sum_all(m: np.ndarray) -> float:
    return float(np.sum(m))


def row_sums(m: np.ndarray) -> np.ndarray:
    return np.sum(m, axis=1)


def col_sums(m: np.ndarray) -> np.ndarray:
    return np.sum(m, axis=0)


def row_cosines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    dots = np.einsum("ij,ij->i", a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        return dots / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))


def vec_cosine(u: np.ndarray, v: np.ndarray) -> float:
    if u.shape != v.shape:
        raise ValueError("length mismatch")
    with np.errstate(invalid="ignore", divide="ignore"):
        return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
