"""Linear classifiers, cross-validation and the proxy A-distance.

One linear-model engine with two convex losses covers both the domain
classifier (hinge, i.e. a linear SVM) and the tissue classifier
(l2-regularized logistic regression).  Fits run full-batch gradient
descent with a backtracking line search from a zero initialization, so
the final objective never exceeds the starting one.

The proxy A-distance between two sample sets is 2*(1 - 2*e) where e is
the stratified k-fold cross-validated test error of a hinge-loss domain
classifier, clamped into [0, 2].
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLabelsError, ShapeError
from .network import embed_batch
from .seeds import derive

log = logging.getLogger(__name__)

DEFAULT_L2_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)

MAX_ITER = 10_000
GRAD_TOL = 1e-6


@dataclass
class FeatureSet:
    """Vectors with integer labels; semantics is "domain" or "tissue"."""

    x: np.ndarray               # (n, d)
    y: np.ndarray               # (n,)
    semantics: str = "tissue"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.x.ndim != 2 or len(self.x) != len(self.y):
            raise ShapeError(f"bad feature set shapes {self.x.shape} / {self.y.shape}")

    def __len__(self):
        return len(self.y)


@dataclass
class LinearModel:
    weights: np.ndarray         # (classes, d)
    bias: np.ndarray            # (classes,)
    classes: np.ndarray
    loss_kind: str              # "hinge" or "logistic"
    l2_strength: float
    cv_table: list = field(default_factory=list)   # [(l2, mean error), ...]


def _objective_and_grad(w, b, x, t, loss_kind, l2):
    """Mean loss over (x, t in {-1,+1}) plus l2*||w||^2, with gradient."""
    f = x @ w + b
    margin = t * f
    if loss_kind == "hinge":
        active = margin < 1.0
        loss = np.maximum(0.0, 1.0 - margin).mean()
        coeff = np.where(active, -t, 0.0) / len(t)
    elif loss_kind == "logistic":
        # log(1 + exp(-m)) computed stably for both signs of m
        loss = float(np.logaddexp(0.0, -margin).mean())
        coeff = -t / (1.0 + np.exp(margin)) / len(t)
    else:
        raise ValueError(f"unknown loss {loss_kind!r}")
    gw = x.T @ coeff + 2.0 * l2 * w
    gb = float(coeff.sum())
    return float(loss + l2 * (w @ w)), gw, gb


def _fit_binary(x, t, loss_kind, l2, max_iter=MAX_ITER, grad_tol=GRAD_TOL):
    """Gradient descent with backtracking from w = 0; monotone in the objective.

    The data is centered internally, which leaves the penalized optimum
    unchanged (only the bias shifts) but decouples the bias direction from
    the weights; the returned bias is mapped back to raw coordinates.
    """
    mu = x.mean(axis=0)
    xc = x - mu
    w = np.zeros(x.shape[1])
    b = 0.0
    obj, gw, gb = _objective_and_grad(w, b, xc, t, loss_kind, l2)
    start_obj = obj
    # initial step on the scale of the curvature of the data term
    step = len(t) / max(float((xc * xc).sum()), 1e-12)
    stall = 0
    for _ in range(max_iter):
        gnorm2 = float(gw @ gw) + gb * gb
        if np.sqrt(gnorm2) <= grad_tol:
            break
        improved = False
        while step > 1e-18:
            w_try = w - step * gw
            b_try = b - step * gb
            obj_try, gw_try, gb_try = _objective_and_grad(
                w_try, b_try, xc, t, loss_kind, l2)
            if obj_try <= obj - 1e-4 * step * gnorm2:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        if obj - obj_try <= 1e-12 * (1.0 + abs(obj)):
            stall += 1
            if stall >= 20:
                w, b, obj = w_try, b_try, obj_try
                break
        else:
            stall = 0
        w, b, obj = w_try, b_try, obj_try
        gw, gb = gw_try, gb_try
        step = min(step * 2.0, 1e6)
    assert obj <= start_obj + 1e-12, "convex fit must not increase the objective"
    return w, b - float(w @ mu)


def fit_linear(x, y, loss_kind, l2):
    """One-vs-rest fit; the binary case trains once and mirrors the model."""
    classes = np.unique(y)
    if len(classes) < 2:
        raise DegenerateLabelsError("need at least two classes to fit")
    if len(classes) == 2:
        t = np.where(y == classes[0], 1.0, -1.0)
        w, b = _fit_binary(x, t, loss_kind, l2)
        weights = np.stack([w, -w])
        bias = np.array([b, -b])
    else:
        rows = []
        bias = []
        for c in classes:
            t = np.where(y == c, 1.0, -1.0)
            w, b = _fit_binary(x, t, loss_kind, l2)
            rows.append(w)
            bias.append(b)
        weights = np.stack(rows)
        bias = np.array(bias)
    return LinearModel(weights, bias, classes, loss_kind, float(l2))


def predict(model, x):
    scores = x @ model.weights.T + model.bias
    return model.classes[np.argmax(scores, axis=1)]


def error_rate(model, x, y):
    return float(np.mean(predict(model, x) != np.asarray(y)))


def tissue_error(model, features):
    """Misclassification fraction of a fitted model on a labeled set."""
    return error_rate(model, features.x, features.y)


def stratified_folds(y, folds, seed):
    """Fold id per sample; within-class shuffles are seeded by class size so
    the partition does not depend on which label a class carries."""
    y = np.asarray(y)
    fold_of = np.empty(len(y), dtype=int)
    for c in np.unique(y):
        idx = np.nonzero(y == c)[0]
        perm = np.random.default_rng(
            derive(seed, "fold", len(idx))).permutation(len(idx))
        fold_of[idx[perm]] = np.arange(len(idx)) % folds
    return fold_of


def cv_error_table(x, y, loss_kind, l2_grid, folds, seed):
    """Mean validation error per grid value over shared stratified folds."""
    fold_of = stratified_folds(y, folds, seed)
    table = []
    for l2 in l2_grid:
        errs = []
        for f in range(folds):
            val = fold_of == f
            if val.all() or not val.any():
                continue
            model = fit_linear(x[~val], y[~val], loss_kind, l2)
            errs.append(error_rate(model, x[val], y[val]))
        table.append((float(l2), float(np.mean(errs))))
    return table


def train_linear(features, loss_kind, l2_grid=DEFAULT_L2_GRID, folds=5,
                 cv_seed=0):
    """Pick the grid value with the lowest cross-validated error (ties go to
    the larger l2), then refit on all data."""
    if folds < 2:
        raise ValueError(f"need folds >= 2, got {folds}")
    if len(features) < folds:
        raise ValueError(f"need at least {folds} samples, got {len(features)}")
    if len(np.unique(features.y)) < 2:
        raise DegenerateLabelsError("training labels contain a single class")
    table = cv_error_table(features.x, features.y, loss_kind,
                           l2_grid, folds, cv_seed)
    best = min(table, key=lambda item: (item[1], -item[0]))
    model = fit_linear(features.x, features.y, loss_kind, best[0])
    model.cv_table = table
    return model


def a_distance_from_error(e):
    """Proxy A-distance from a domain classification error, clamped to [0, 2]."""
    d = 2.0 * (1.0 - 2.0 * e)
    if d < 0.0:
        log.info("proxy A-distance %.3f clamped to 0 (error %.3f > 0.5)", d, e)
        return 0.0
    return min(d, 2.0)


def proxy_a_distance(source_x, target_x, folds=5, seed=0,
                     l2_grid=DEFAULT_L2_GRID):
    """Domain separability of two sample sets in [0, 2].

    Rows are put in a canonical order before fold construction, so swapping
    the two sets gives the identical value.
    """
    source_x = np.asarray(source_x, dtype=float)
    target_x = np.asarray(target_x, dtype=float)
    if source_x.ndim != 2 or target_x.ndim != 2 \
            or source_x.shape[1] != target_x.shape[1]:
        raise ShapeError(f"feature dimensions differ: {source_x.shape} vs "
                         f"{target_x.shape}")
    if len(source_x) == 0 or len(target_x) == 0:
        raise ValueError("both sample sets must be nonempty")
    x = np.vstack([source_x, target_x])
    y = np.concatenate([np.zeros(len(source_x), dtype=int),
                        np.ones(len(target_x), dtype=int)])
    order = np.lexsort(x.T[::-1])
    x, y = x[order], y[order]
    table = cv_error_table(x, y, "hinge", l2_grid, folds, seed)
    e = min(err for _, err in table)
    return a_distance_from_error(e)


# ---------------------------------------------------------------------------
# Feature builders

def embed_features(model, patches, semantics="tissue"):
    """Inference-mode embeddings with labels carried over from the patches."""
    x = embed_batch(model, patches)
    if semantics == "tissue":
        y = np.array([int(p.tissue) for p in patches])
    else:
        y = np.array([int(p.scanner_id) for p in patches])
    return FeatureSet(x, y, semantics)


def raw_features(patches, semantics="tissue", include_scanner_bit=True):
    """Flattened pixel vectors, optionally with the scanner ID appended."""
    x = np.stack([np.asarray(p.pixels, dtype=float).ravel() for p in patches])
    if include_scanner_bit:
        bits = np.array([[float(p.scanner_id)] for p in patches])
        x = np.concatenate([x, bits], axis=1)
    if semantics == "tissue":
        y = np.array([int(p.tissue) for p in patches])
    else:
        y = np.array([int(p.scanner_id) for p in patches])
    return FeatureSet(x, y, semantics)
