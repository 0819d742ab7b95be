"""Per-patch weight learning and score-level combination.

fit_fusion trains an L2-regularized logistic regression on M x K matrices of
local similarities (rows = pairs, columns = patch positions) with
deterministic full-batch gradient descent plus backtracking line search, so
identical inputs always give bitwise-identical weights. Scores from several
receptive-field configurations are merged by ScoreCombiner, either as a mean
of z-scores or through a second logistic model over the z-scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateTrainingError,
    DomainError,
    IncompatibilityError,
    StateError,
)

GRAD_TOL = 1e-6
MAX_ITERATIONS = 10_000


@dataclass(frozen=True)
class FusionModel:
    """Learned per-patch weights and bias, plus training diagnostics."""

    weights: np.ndarray
    bias: float
    reg: float
    iterations: int
    final_loss: float
    grad_norm: float
    seed: int = 0

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] < 1:
            raise DomainError(f"weights must be a non-empty vector, got {w.shape}")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise DataError("non-finite model parameters")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def patch_count(self) -> int:
        return self.weights.shape[0]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp overflow saturates to 0/1, which is exactly what we want here
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def _loss_and_grad(x, signs, reg, w, b):
    z = signs * (x @ w + b)
    loss = float(np.mean(np.logaddexp(0.0, -z)) + 0.5 * reg * np.dot(w, w))
    # d/dz log(1 + exp(-z)) = -sigmoid(-z)
    coef = -signs * _sigmoid(-z) / x.shape[0]
    grad_w = x.T @ coef + reg * w
    grad_b = float(np.sum(coef))
    return loss, grad_w, grad_b


def fit_fusion(
    features,
    labels,
    reg: float = 1e-4,
    seed: int = 0,
    max_iterations: int = MAX_ITERATIONS,
    grad_tol: float = GRAD_TOL,
) -> FusionModel:
    """Fit per-patch weights by minimizing regularized logistic loss.

    features: (M, K) local similarity matrix; labels: M binary values
    (1 = genuine, 0 = impostor). Deterministic: zero init, full-batch
    descent with Armijo backtracking, stop when the gradient infinity-norm
    drops below ``grad_tol`` or after ``max_iterations`` steps. ``seed`` is
    recorded for provenance; nothing in the optimizer draws randomness.
    """
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DomainError(f"features {x.shape} do not match {y.shape[0]} labels")
    if x.shape[0] < 2:
        raise DegenerateTrainingError("need at least 2 training pairs")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite feature values")
    if set(np.unique(y)) - {0, 1}:
        raise DataError(f"labels must be 0/1, got {sorted(set(y.tolist()))}")
    if len(np.unique(y)) < 2:
        raise DegenerateTrainingError("both genuine and impostor labels required")
    if reg < 0:
        raise DomainError(f"regularization must be nonnegative, got {reg}")

    signs = np.where(y == 1, 1.0, -1.0)
    w = np.zeros(x.shape[1])
    b = 0.0
    loss, grad_w, grad_b = _loss_and_grad(x, signs, reg, w, b)
    step = 1.0
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        grad_norm = max(float(np.max(np.abs(grad_w))), abs(grad_b))
        if grad_norm < grad_tol:
            iterations -= 1
            break
        grad_sq = float(np.dot(grad_w, grad_w)) + grad_b * grad_b
        # Armijo backtracking from a step that is allowed to grow again.
        step = min(step * 2.0, 1e6)
        accepted = False
        while step >= 1e-18:
            new_w = w - step * grad_w
            new_b = b - step * grad_b
            new_loss, new_gw, new_gb = _loss_and_grad(x, signs, reg, new_w, new_b)
            if new_loss <= loss - 1e-4 * step * grad_sq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # numerically converged: no step decreases the loss
            iterations -= 1
            break
        w, b, loss, grad_w, grad_b = new_w, new_b, new_loss, new_gw, new_gb

    grad_norm = max(float(np.max(np.abs(grad_w))), abs(grad_b))
    return FusionModel(
        weights=w,
        bias=float(b),
        reg=float(reg),
        iterations=iterations,
        final_loss=loss,
        grad_norm=grad_norm,
        seed=seed,
    )


def fused_score(model: FusionModel, local_scores) -> float:
    """Raw fused logit: sum(w_i * local_i) + bias."""
    s = np.asarray(local_scores, dtype=np.float64)
    if s.shape != (model.patch_count,):
        raise IncompatibilityError(
            f"{s.shape[0] if s.ndim == 1 else s.shape} local scores for "
            f"{model.patch_count} weights"
        )
    return float(np.dot(model.weights, s) + model.bias)


def save_model(model: FusionModel, path):
    payload = {
        "K": model.patch_count,
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "reg": model.reg,
        "iterations": model.iterations,
        "loss": model.final_loss,
        "seed": model.seed,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_model(path) -> FusionModel:
    d = json.loads(Path(path).read_text())
    weights = np.asarray(d["weights"], dtype=np.float64)
    if weights.shape[0] != d["K"]:
        raise DataError(f"model claims K={d['K']} but has {weights.shape[0]} weights")
    return FusionModel(
        weights=weights,
        bias=float(d["bias"]),
        reg=float(d["reg"]),
        iterations=int(d["iterations"]),
        final_loss=float(d["loss"]),
        grad_norm=float("nan"),
        seed=int(d.get("seed", 0)),
    )


@dataclass
class ScoreCombiner:
    """Fuses global scores from several scoring configurations into one.

    ``mean_zscore`` averages per-source z-scores (affine-invariant per
    source); ``learned_logistic`` feeds the z-scores to a logistic model
    fitted on the calibration data. Normalization stats always come from
    calibration scores, never from the pairs being evaluated.
    """

    method: str
    means: np.ndarray | None = None
    stds: np.ndarray | None = None
    model: FusionModel | None = None

    @property
    def fitted(self) -> bool:
        return self.means is not None

    @property
    def source_count(self) -> int:
        if not self.fitted:
            raise StateError("combiner not fitted")
        return self.means.shape[0]


def fit_combiner(
    method: str,
    calibration_scores,
    labels=None,
    reg: float = 1e-4,
    seed: int = 0,
) -> ScoreCombiner:
    """Fit per-source normalization (and, if learned, fusion weights).

    calibration_scores: (M, S) matrix, one column per source configuration.
    """
    if method not in ("mean_zscore", "learned_logistic"):
        raise DomainError(f"unknown combination method {method!r}")
    scores = np.ascontiguousarray(calibration_scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 2:
        raise DomainError(f"calibration scores must be (M>=2, S), got {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise DataError("non-finite calibration scores")
    means = np.mean(scores, axis=0)
    stds = np.std(scores, axis=0)
    if np.any(stds <= 0):
        flat = np.flatnonzero(stds <= 0).tolist()
        raise DataError(f"source(s) {flat} have zero score variance")
    model = None
    if method == "learned_logistic":
        if labels is None:
            raise DomainError("learned_logistic needs calibration labels")
        model = fit_fusion((scores - means) / stds, labels, reg=reg, seed=seed)
    return ScoreCombiner(method=method, means=means, stds=stds, model=model)


def combine_scores(combiner: ScoreCombiner, per_source_scores) -> float:
    """Combine one pair's per-source scores into a single score."""
    if not combiner.fitted:
        raise StateError("combiner not fitted")
    s = np.asarray(per_source_scores, dtype=np.float64)
    if s.shape != combiner.means.shape:
        raise IncompatibilityError(
            f"{s.shape} scores for {combiner.source_count} sources"
        )
    z = (s - combiner.means) / combiner.stds
    if combiner.method == "mean_zscore":
        return float(np.mean(z))
    return fused_score(combiner.model, z)


def combine_score_matrix(combiner: ScoreCombiner, score_matrix) -> np.ndarray:
    """Vectorized combine_scores over an (M, S) matrix of pair scores."""
    if not combiner.fitted:
        raise StateError("combiner not fitted")
    s = np.ascontiguousarray(score_matrix, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != combiner.source_count:
        raise IncompatibilityError(
            f"score matrix {s.shape} for {combiner.source_count} sources"
        )
    z = (s - combiner.means) / combiner.stds
    if combiner.method == "mean_zscore":
        return np.mean(z, axis=1)
    return z @ combiner.model.weights + combiner.model.bias


def save_combiner(combiner: ScoreCombiner, path):
    if not combiner.fitted:
        raise StateError("combiner not fitted")
    payload = {
        "method": combiner.method,
        "sources": [
            {"mean": float(m), "std": float(s)}
            for m, s in zip(combiner.means, combiner.stds)
        ],
    }
    if combiner.model is not None:
        payload["weights"] = combiner.model.weights.tolist()
        payload["bias"] = combiner.model.bias
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_combiner(path) -> ScoreCombiner:
    d = json.loads(Path(path).read_text())
    means = np.asarray([s["mean"] for s in d["sources"]], dtype=np.float64)
    stds = np.asarray([s["std"] for s in d["sources"]], dtype=np.float64)
    model = None
    if d["method"] == "learned_logistic":
        model = FusionModel(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            reg=0.0,
            iterations=0,
            final_loss=float("nan"),
            grad_norm=float("nan"),
        )
    return ScoreCombiner(method=d["method"], means=means, stds=stds, model=model)
