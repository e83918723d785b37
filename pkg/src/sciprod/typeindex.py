"""Researcher type index and deep-to-individual parameter mapping.

The observable feature matrix collapses to a scalar type T per researcher:
columns are standardized, a two-cluster k-means is fit, and T is the
standardized log Euclidean distance to a reference centroid.  Individual
utility parameters are univariate functions of T: exponential links for
sigma, xi, zeta and a logistic link for eta (bounded in (0,1)); omega and
psi are common.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import PreferenceParams
from .errors import ValidationError

__all__ = [
    "DeepParams",
    "TypeModel",
    "fit_type_index",
    "preference_params_from_type",
    "preference_arrays_from_type",
    "valid_preference_arrays",
]

DIST_FLOOR = 1e-12
KMEANS_RESTARTS = 50
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class DeepParams:
    """Common parameters generating individual preferences from type T."""

    income_weight: float  # omega
    effort_weight: float  # psi
    sigma_intercept: float
    sigma_slope: float
    eta_intercept: float
    eta_slope: float
    xi_intercept: float
    xi_slope: float
    zeta_intercept: float
    zeta_slope: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.income_weight,
                self.effort_weight,
                self.sigma_intercept,
                self.sigma_slope,
                self.eta_intercept,
                self.eta_slope,
                self.xi_intercept,
                self.xi_slope,
                self.zeta_intercept,
                self.zeta_slope,
            ]
        )

    @staticmethod
    def from_array(x) -> "DeepParams":
        x = np.asarray(x, dtype=float)
        if x.shape != (10,):
            raise ValidationError(f"deep parameter vector must have length 10, got {x.shape}")
        return DeepParams(*x.tolist())

    def to_dict(self):
        return asdict(self)


def preference_params_from_type(T: float, d: DeepParams) -> PreferenceParams:
    """Individual utility parameters at type T (validated on construction)."""
    sigma = float(np.exp(d.sigma_intercept + T * d.sigma_slope))
    eta = float(1.0 / (1.0 + np.exp(-(d.eta_intercept + T * d.eta_slope))))
    xi = float(np.exp(d.xi_intercept + T * d.xi_slope))
    zeta = float(np.exp(d.zeta_intercept + T * d.zeta_slope))
    return PreferenceParams(
        income_weight=d.income_weight,
        income_curvature=sigma,
        output_curvature=eta,
        effort_weight=d.effort_weight,
        duty_penalty_exponent=xi,
        effort_curvature=zeta,
    )


def preference_arrays_from_type(T, d: DeepParams):
    """Vectorized parameter links; no validation (see valid_preference_arrays)."""
    T = np.asarray(T, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        sigma = np.exp(d.sigma_intercept + T * d.sigma_slope)
        eta = 1.0 / (1.0 + np.exp(-(d.eta_intercept + T * d.eta_slope)))
        xi = np.exp(d.xi_intercept + T * d.xi_slope)
        zeta = np.exp(d.zeta_intercept + T * d.zeta_slope)
    omega = np.full_like(T, d.income_weight)
    psi = np.full_like(T, d.effort_weight)
    return omega, sigma, eta, xi, zeta, psi


def valid_preference_arrays(omega, sigma, eta, xi, zeta, psi):
    """Elementwise validity of induced parameters (sigma=1 excluded)."""
    return (
        np.isfinite(sigma)
        & (sigma > 0)
        & (sigma != 1.0)
        & np.isfinite(eta)
        & (eta > 0)
        & (eta < 1)
        & np.isfinite(xi)
        & (xi > 0)
        & np.isfinite(zeta)
        & (zeta > 0)
        & np.isfinite(omega)
        & (omega > 0)
        & np.isfinite(psi)
        & (psi > 0)
    )


@dataclass
class TypeModel:
    """Fitted standardization, centroids, and the T normalization."""

    feature_means: np.ndarray
    feature_sds: np.ndarray
    centroids: np.ndarray  # (2, K) in standardized space
    reference: int
    log_dist_mean: float
    log_dist_sd: float
    degenerate: bool

    def standardize(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=float)
        sds = np.where(self.feature_sds > 0, self.feature_sds, 1.0)
        return (X - self.feature_means) / sds

    def transform(self, features) -> np.ndarray:
        """Type index for new rows under the fitted model."""
        X = np.atleast_2d(np.asarray(features, dtype=float))
        if self.degenerate:
            return np.zeros(X.shape[0])
        Z = self.standardize(X)
        dist = np.linalg.norm(Z - self.centroids[self.reference], axis=1)
        logd = np.log(np.maximum(dist, DIST_FLOOR))
        if self.log_dist_sd > 0:
            return (logd - self.log_dist_mean) / self.log_dist_sd
        return np.zeros(X.shape[0])

    def to_dict(self):
        return {
            "feature_means": self.feature_means.tolist(),
            "feature_sds": self.feature_sds.tolist(),
            "centroids": self.centroids.tolist(),
            "reference": int(self.reference),
            "log_dist_mean": self.log_dist_mean,
            "log_dist_sd": self.log_dist_sd,
            "degenerate": self.degenerate,
        }

    @staticmethod
    def from_dict(d):
        return TypeModel(
            feature_means=np.asarray(d["feature_means"], dtype=float),
            feature_sds=np.asarray(d["feature_sds"], dtype=float),
            centroids=np.asarray(d["centroids"], dtype=float),
            reference=int(d["reference"]),
            log_dist_mean=float(d["log_dist_mean"]),
            log_dist_sd=float(d["log_dist_sd"]),
            degenerate=bool(d["degenerate"]),
        )


def _stable_mean(x, axis=0):
    """Mean with a value-sorted summation order, so row permutations of the
    input cannot perturb the last floating-point bits."""
    return np.mean(np.sort(x, axis=axis), axis=axis)


def _stable_std(x, mean, axis=0):
    dev = (x - mean) ** 2
    return np.sqrt(np.mean(np.sort(dev, axis=axis), axis=axis))


def _kmeans_pp_init(Z, rng):
    """k-means++ seeding for k=2."""
    n = Z.shape[0]
    first = int(rng.integers(n))
    d2 = np.sum((Z - Z[first]) ** 2, axis=1)
    total = d2.sum()
    if total <= 0:
        second = int(rng.integers(n))
    else:
        second = int(rng.choice(n, p=d2 / total))
    return np.stack([Z[first], Z[second]])


def _lloyd(Z, centroids, max_iter=KMEANS_MAX_ITER):
    """Lloyd iterations; returns (centroids, labels, wcss, objective history)."""
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = ((Z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        wcss = float(d2[np.arange(Z.shape[0]), new_labels].sum())
        history.append(wcss)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(2):
            mask = labels == k
            if mask.any():
                centroids[k] = Z[mask].mean(axis=0)
            else:
                # re-seed an emptied cluster at the farthest point
                far = int(np.argmax(d2[np.arange(Z.shape[0]), labels]))
                centroids[k] = Z[far]
    d2 = ((Z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    wcss = float(d2[np.arange(Z.shape[0]), labels].sum())
    return centroids, labels, wcss, history


def fit_type_index(features, seed: int):
    """Fit the two-cluster model and return (TypeModel, T per row).

    Rows are processed in a canonical (lexicographic) order so the result
    is invariant to permutations of the input; T is returned aligned to
    the original row order, standardized to mean 0 and sd 1.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValidationError("feature matrix must be 2-D")
    n, k = X.shape
    if n < 2 or k < 1:
        raise ValidationError(f"need at least 2 rows and 1 column, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature matrix contains non-finite entries")

    means = _stable_mean(X)
    sds = _stable_std(X, means)
    scale = np.where(sds > 0, sds, 1.0)
    Z = (X - means) / scale

    if np.allclose(Z, Z[0], atol=0.0):
        model = TypeModel(
            feature_means=means,
            feature_sds=sds,
            centroids=np.stack([Z[0], Z[0]]),
            reference=0,
            log_dist_mean=0.0,
            log_dist_sd=0.0,
            degenerate=True,
        )
        return model, np.zeros(n)

    order = np.lexsort(Z.T[::-1])  # primary key = first column
    Zs = Z[order]

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(KMEANS_RESTARTS):
        init = _kmeans_pp_init(Zs, rng)
        cents, _, wcss, _ = _lloyd(Zs, init.copy())
        if best is None or wcss < best[1]:
            best = (cents, wcss)
    centroids = best[0]

    # deterministic ordering of the two centroids, then pick the reference
    # as the lexicographically smaller one
    key = tuple(centroids[0]) <= tuple(centroids[1])
    if not key:
        centroids = centroids[::-1].copy()
    reference = 0

    dist = np.linalg.norm(Z - centroids[reference], axis=1)
    logd = np.log(np.maximum(dist, DIST_FLOOR))
    mu = float(_stable_mean(logd))
    sd = float(_stable_std(logd, mu))
    T = (logd - mu) / sd if sd > 0 else np.zeros(n)

    model = TypeModel(
        feature_means=means,
        feature_sds=sds,
        centroids=centroids,
        reference=reference,
        log_dist_mean=mu,
        log_dist_sd=sd,
        degenerate=False,
    )
    return model, T
