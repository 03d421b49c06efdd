"""L2-regularised logistic regression trained from scratch, with stratified CV.

The objective over weights w and unregularised intercept b is

    (1 / C) * 0.5 ||w||^2  +  sum_i log(1 + exp(-y_i (w . x_i + b)))

with y in {-1, +1}. Minimisation uses a deterministic quasi-Newton solver
from a zero start; the fit is converged when the gradient infinity-norm is
at most 1e-6, and flagged (not failed) otherwise. Identical inputs give
bit-identical weights on one platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import (
    DimensionMismatchError,
    FoldDegenerateError,
    NonFiniteError,
    SingleClassError,
)
from .metrics import roc_auc

GRAD_TOL = 1e-6
MAX_ITER = 10_000

# 10^-8 .. 10^4, one value per decade.
DEFAULT_C_GRID = tuple(10.0 ** k for k in range(-8, 5))
DEFAULT_FOLDS = 5


@dataclass(frozen=True)
class ClassifierModel:
    """Fitted weights, intercept and training metadata."""

    weights: np.ndarray
    intercept: float
    c_value: float
    converged: bool
    n_iter: int
    grad_norm: float
    initial_loss: float
    final_loss: float

    def __post_init__(self):
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def direction(self) -> np.ndarray:
        """The learned weight vector, unnormalised."""
        return self.weights


def _prepare(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y).ravel()
    if x.ndim != 2:
        raise DimensionMismatchError("features must be 2-d")
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatchError(
            f"labels ({y.shape[0]}) and features ({x.shape[0]}) disagree"
        )
    if not np.isfinite(x).all():
        raise NonFiniteError("non-finite feature value")
    signs = np.where(np.asarray(y, dtype=bool), 1.0, -1.0)
    if signs.max() == signs.min():
        raise SingleClassError("training needs both classes present")
    return x, signs


def _loss_grad(params: np.ndarray, x: np.ndarray, signs: np.ndarray, inv_c: float):
    weights, intercept = params[:-1], params[-1]
    margins = signs * (x @ weights + intercept)
    # log(1 + exp(-m)) computed stably for both margin signs.
    loss = float(np.logaddexp(0.0, -margins).sum()) + 0.5 * inv_c * float(weights @ weights)
    # d/dm log(1+exp(-m)) = -sigmoid(-m)
    coeff = -signs * _sigmoid(-margins)
    grad = np.empty_like(params)
    grad[:-1] = x.T @ coeff + inv_c * weights
    grad[-1] = coeff.sum()
    return loss, grad


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def logreg_objective(
    weights: np.ndarray, intercept: float, x: np.ndarray, y: np.ndarray, c_value: float
) -> tuple[float, np.ndarray, float]:
    """Loss, weight gradient and intercept gradient at the given point."""
    x, signs = _prepare(x, y)
    params = np.concatenate([np.asarray(weights, dtype=np.float64), [float(intercept)]])
    loss, grad = _loss_grad(params, x, signs, 1.0 / c_value)
    return loss, grad[:-1], float(grad[-1])


def train_logreg(
    x: np.ndarray,
    y: np.ndarray,
    c_value: float,
    seed: int = 0,
    *,
    warm_start: np.ndarray | None = None,
) -> ClassifierModel:
    """Fit the regularised model. ``seed`` is recorded for provenance only;
    optimisation starts from zero (or ``warm_start``) and is deterministic."""
    if not (c_value > 0 and np.isfinite(c_value)):
        raise ValueError(f"C must be positive and finite, got {c_value}")
    x, signs = _prepare(x, y)
    inv_c = 1.0 / c_value
    start = np.zeros(x.shape[1] + 1)
    if warm_start is not None:
        start = np.asarray(warm_start, dtype=np.float64).copy()
        if start.shape != (x.shape[1] + 1,):
            raise DimensionMismatchError("warm start has wrong shape")
    initial_loss, _ = _loss_grad(start, x, signs, inv_c)
    result = scipy.optimize.minimize(
        _loss_grad,
        start,
        args=(x, signs, inv_c),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": MAX_ITER, "maxfun": 4 * MAX_ITER, "gtol": GRAD_TOL, "ftol": 0.0},
    )
    params = result.x
    final_loss, grad = _loss_grad(params, x, signs, inv_c)
    grad_norm = float(np.abs(grad).max())
    return ClassifierModel(
        weights=params[:-1],
        intercept=float(params[-1]),
        c_value=float(c_value),
        converged=grad_norm <= GRAD_TOL,
        n_iter=int(result.nit),
        grad_norm=grad_norm,
        initial_loss=float(initial_loss),
        final_loss=float(final_loss),
    )


def predict_scores(model: ClassifierModel, x: np.ndarray) -> np.ndarray:
    """Per-row sigmoid scores in (0, 1), monotone in the linear score."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != model.weights.shape[0]:
        raise DimensionMismatchError(
            f"model dimension {model.weights.shape[0]} does not match {x.shape[1]}"
        )
    return _sigmoid(x @ model.weights + model.intercept)


def stratified_folds(
    y: np.ndarray, n_folds: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic stratified K-fold (train_idx, val_idx) pairs.

    Raises FoldDegenerateError when any fold would miss a class.
    """
    y = np.asarray(y).astype(bool).ravel()
    pos = np.flatnonzero(y)
    neg = np.flatnonzero(~y)
    if min(len(pos), len(neg)) < n_folds:
        raise FoldDegenerateError(
            f"cannot build {n_folds} stratified folds from {len(pos)} positives "
            f"and {len(neg)} negatives"
        )
    rng = np.random.default_rng(seed)
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    pos_chunks = np.array_split(pos, n_folds)
    neg_chunks = np.array_split(neg, n_folds)
    folds = []
    for k in range(n_folds):
        val = np.sort(np.concatenate([pos_chunks[k], neg_chunks[k]]))
        train = np.sort(
            np.concatenate(
                [c for i, c in enumerate(pos_chunks) if i != k]
                + [c for i, c in enumerate(neg_chunks) if i != k]
            )
        )
        folds.append((train, val))
    return folds


def cv_select_c(
    x: np.ndarray,
    y: np.ndarray,
    seed: int,
    grid: tuple[float, ...] = DEFAULT_C_GRID,
    n_folds: int = DEFAULT_FOLDS,
) -> tuple[float, dict[float, float]]:
    """Pick C maximising mean validation ROC-AUC over stratified folds.

    Ties go to the smaller C. Returns (selected C, mean AUC per grid value).
    Fold fits warm-start along the ascending grid; the caller retrains the
    final model from scratch at the selected C.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y).astype(bool).ravel()
    folds = stratified_folds(y, n_folds, seed)
    ordered = sorted(grid)
    fold_scores = np.zeros((len(folds), len(ordered)))
    for f, (train_idx, val_idx) in enumerate(folds):
        x_train, y_train = x[train_idx], y[train_idx]
        x_val, y_val = x[val_idx], y[val_idx]
        warm = None
        for j, c_value in enumerate(ordered):
            model = train_logreg(x_train, y_train, c_value, seed, warm_start=warm)
            warm = np.concatenate([model.weights, [model.intercept]])
            fold_scores[f, j] = roc_auc(predict_scores(model, x_val), y_val)
    means = fold_scores.mean(axis=0)
    best = 0
    for j in range(1, len(ordered)):
        if means[j] > means[best]:  # strict: ties keep the smaller C
            best = j
    return ordered[best], {c: float(m) for c, m in zip(ordered, means)}
