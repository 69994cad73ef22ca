"""Gaussian process regression with a dot-product kernel.

The corrector learns the systematic offset between where the pipeline thinks
a picking point is and where it was taught to be, as a function of the
close-range box coordinates.  The kernel is k(x, x') = sigma0^2 + x . x',
which makes the posterior mean a linear function of the features; training
solves (K + jitter I) alpha = y per output axis via a Cholesky factor.

Labels are vector offsets (estimated minus taught position, metres), so a
prediction is subtracted from an estimate to correct it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


class NotPositiveDefinite(ValueError):
    """Raised when the regularised Gram matrix fails its Cholesky factorisation."""


def kernel_eval(x: np.ndarray, y: np.ndarray, sigma0_sq: float) -> float:
    """Dot-product kernel k(x, y) = sigma0^2 + x . y.

    Raises:
        ValueError: on dimension mismatch or negative sigma0_sq.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"feature dimensions differ: {x.shape} vs {y.shape}")
    if sigma0_sq < 0:
        raise ValueError("sigma0_sq must be non-negative")
    return float(sigma0_sq + x @ y)


@dataclass(frozen=True)
class GprSample:
    """One training pair: feature vector plus offset label (metres)."""

    features: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float).ravel()
        lab = np.asarray(self.label, dtype=float).ravel()
        if lab.shape != (3,):
            raise ValueError("label must be a 3-vector")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "label", lab)


@dataclass(frozen=True)
class GprModel:
    """Fitted regressor.  Only the quantities needed to predict are stored;
    the Cholesky factor is rebuilt on demand after deserialisation."""

    sigma0_sq: float
    jitter: float
    standardize: bool
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    features: np.ndarray
    alpha: np.ndarray
    chol: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _standardized(features: np.ndarray, mean: np.ndarray,
                  scale: np.ndarray) -> np.ndarray:
    return (features - mean) / scale


def fit(samples: list[GprSample], sigma0_sq: float = 1.0, jitter: float = 1e-6,
        standardize: bool = False) -> GprModel:
    """Fit the regressor to offset samples.

    Args:
        samples: training pairs with a common feature dimension.
        sigma0_sq: kernel bias term; 0 gives a pure dot-product kernel.
        jitter: diagonal regulariser added to the Gram matrix.
        standardize: z-score the features before the kernel.  Off by
            default so the kernel sees raw features; the picking pipeline
            turns it on because pixel coordinates sit far from the origin.

    Raises:
        ValueError: on an empty sample list or inconsistent dimensions.
        NotPositiveDefinite: when K + jitter I is not positive definite.
    """
    if not samples:
        raise ValueError("cannot fit on an empty sample list")
    dim = samples[0].features.shape[0]
    for s in samples:
        if s.features.shape[0] != dim:
            raise ValueError("all samples must share one feature dimension")
    X = np.stack([s.features for s in samples])
    Y = np.stack([s.label for s in samples])

    if standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        mean = np.zeros(dim)
        scale = np.ones(dim)
    Z = _standardized(X, mean, scale)

    K = sigma0_sq + Z @ Z.T
    K_reg = K + jitter * np.eye(len(samples))
    try:
        L = np.linalg.cholesky(K_reg)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, Y))
    return GprModel(sigma0_sq=float(sigma0_sq), jitter=float(jitter),
                    standardize=bool(standardize), feature_mean=mean,
                    feature_scale=scale, features=X, alpha=alpha, chol=L)


def _chol(model: GprModel) -> np.ndarray:
    if model.chol is not None:
        return model.chol
    Z = _standardized(model.features, model.feature_mean, model.feature_scale)
    K_reg = model.sigma0_sq + Z @ Z.T + model.jitter * np.eye(len(Z))
    try:
        L = np.linalg.cholesky(K_reg)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    object.__setattr__(model, "chol", L)  # memoise after deserialisation
    return L


def predict(model: GprModel, features: np.ndarray) -> tuple:
    """Posterior mean and variance at one query point.

    Returns:
        (mean, variance): mean is a 3-vector of predicted offsets; variance
        is the per-axis posterior variance (shared across axes because the
        kernel is), clamped at zero.

    Raises:
        ValueError: on a feature-dimension mismatch.
    """
    q = np.asarray(features, dtype=float).ravel()
    if q.shape[0] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {q.shape[0]}")
    Z = _standardized(model.features, model.feature_mean, model.feature_scale)
    zq = _standardized(q, model.feature_mean, model.feature_scale)
    k_star = model.sigma0_sq + Z @ zq
    mean = model.alpha.T @ k_star
    L = _chol(model)
    v = np.linalg.solve(L, k_star)
    k_self = model.sigma0_sq + zq @ zq
    var = max(0.0, float(k_self - v @ v))
    return mean, np.full(3, var)


def correct_picking_point(pose: np.ndarray, model: GprModel,
                          features: np.ndarray) -> np.ndarray:
    """Subtract the predicted offset from an estimated picking point."""
    mean, _ = predict(model, features)
    return np.asarray(pose, dtype=float) - mean


# --- serialisation ---------------------------------------------------------

CSV_LABEL_COLUMNS = ("label_x", "label_y", "label_z")


def samples_to_csv(samples: list[GprSample]) -> str:
    """CSV with a header row: feature columns f0..fN then the label triple."""
    if not samples:
        raise ValueError("no samples to write")
    dim = samples[0].features.shape[0]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{i}" for i in range(dim)] + list(CSV_LABEL_COLUMNS))
    for s in samples:
        writer.writerow([repr(float(v)) for v in s.features]
                        + [repr(float(v)) for v in s.label])
    return buf.getvalue()


def samples_from_csv(text: str) -> list[GprSample]:
    """Parse a training CSV.  Rows must carry the header's column count.

    Raises:
        ValueError: on a missing header, ragged rows, or non-numeric cells.
    """
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if not rows:
        raise ValueError("empty training CSV")
    header = rows[0]
    if len(header) < 4 or tuple(header[-3:]) != CSV_LABEL_COLUMNS:
        raise ValueError("training CSV must end with label_x,label_y,label_z")
    width = len(header)
    out = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ValueError(f"row {k} has {len(row)} cells, expected {width}")
        vals = [float(v) for v in row]
        out.append(GprSample(features=np.array(vals[:-3]),
                             label=np.array(vals[-3:])))
    return out


def model_to_json(model: GprModel) -> str:
    doc = {
        "sigma0_sq": model.sigma0_sq,
        "jitter": model.jitter,
        "standardize": model.standardize,
        "feature_mean": [float(v) for v in model.feature_mean],
        "feature_scale": [float(v) for v in model.feature_scale],
        "features": [[float(v) for v in row] for row in model.features],
        "alpha": [[float(v) for v in row] for row in model.alpha],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def model_from_json(text: str) -> GprModel:
    """Restore a model; predictions match the original to the last bit.

    Raises:
        ValueError: on missing keys or malformed arrays.
    """
    doc = json.loads(text)
    try:
        model = GprModel(
            sigma0_sq=float(doc["sigma0_sq"]),
            jitter=float(doc["jitter"]),
            standardize=bool(doc["standardize"]),
            feature_mean=np.array(doc["feature_mean"], dtype=float),
            feature_scale=np.array(doc["feature_scale"], dtype=float),
            features=np.array(doc["features"], dtype=float),
            alpha=np.array(doc["alpha"], dtype=float),
        )
    except KeyError as exc:
        raise ValueError(f"model JSON missing key: {exc}") from exc
    if model.features.ndim != 2 or model.alpha.shape != (model.features.shape[0], 3):
        raise ValueError("model arrays have inconsistent shapes")
    return model
