"""Backing out researcher attributes from observed states and allocations.

For researchers with positive fundraising time, the attribute vector is
point-identified: phi from the expected-funds identity EG = phi*F, gamma
from the fundraising first-order condition (the funding share of the
dollar value of all scientific inputs), and alpha by inverting the hours
first-order condition at the observed allocation.  The inversion uses the
same margin expressions as the policy solver, so identification composed
with simulation is the identity by construction.

Zero-fundraisers carry no information about phi; their (phi, gamma) come
from auxiliary regressions fit on the positive-fundraising subsample
(log-link for phi, fractional logit for gamma, cubic polynomials in
standardized states), with phi rescaled below the researcher-specific
bound that keeps optimal fundraising at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from .core import Calibration, ContractState, PreferenceParams, TimeAllocation
from .datasets import Population
from .errors import ValidationError
from .policy import alpha_from_margins
from .typeindex import DeepParams, preference_arrays_from_type, valid_preference_arrays

__all__ = [
    "infer_phi",
    "infer_gamma",
    "infer_alpha",
    "ZeroFundraiserModels",
    "fit_zero_fundraiser_models",
    "predict_and_rescale",
    "IdentifiedAttributes",
    "identify_population",
]

MIN_POSITIVE_FUNDRAISERS = 30
RESCALE_FACTOR = 0.999
DESIGN_TERMS = [
    "G", "G^2", "G^3", "D", "D^2", "D^3", "M", "M^2", "M^3",
]


def infer_phi(expected_extra_funding: float, fundraising: float) -> float:
    """phi = EG / F, floored at 1 for numerical stability."""
    if not fundraising > 0:
        raise ValidationError(
            "phi is undefined at F = 0; use the zero-fundraiser models"
        )
    return max(expected_extra_funding / fundraising, 1.0)


def infer_gamma(c: ContractState, phi_hat, F, R, cal: Calibration):
    """Funding share of the dollar value of inputs used in research."""
    funds = cal.b_min + c.guaranteed_funding + phi_hat * F
    return funds / (funds + phi_hat * R)


def infer_alpha(
    c: ContractState,
    alloc: TimeAllocation,
    gamma_hat: float,
    phi_hat: float,
    p: PreferenceParams,
    cal: Calibration,
) -> Tuple[float, bool]:
    """TFP making the observed allocation satisfy the hours FOC.

    At the hours cap the condition is an inequality, so alpha is only
    set-identified; the returned value is then the lower bound and the
    corner flag is set.
    """
    B = cal.b_min + c.guaranteed_funding + phi_hat * alloc.fundraising
    alpha = float(
        alpha_from_margins(
            B,
            alloc.research,
            alloc.total_hours,
            c.duties,
            gamma_hat,
            p.output_curvature,
            p.effort_weight,
            p.duty_penalty_exponent,
            p.effort_curvature,
        )
    )
    corner = alloc.total_hours >= cal.h_max - 1e-9
    return alpha, corner


def _cubic_design(G, D, M, means, sds):
    cols = []
    for raw, mu, sd in zip((G, D, M), means, sds):
        z = (raw - mu) / sd
        cols.extend([z, z**2, z**3])
    return np.column_stack([np.ones_like(G)] + cols)


def _irls(X, y, link: str, max_iter=200, grad_tol=1e-8):
    """IRLS for a log-link quasi-Poisson or a fractional logit.

    Returns (coefs, kept column indices).  Collinear columns are dropped
    via pivoted QR on the design and reported by index.
    """
    n, k = X.shape
    q, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > max(n, k) * np.finfo(float).eps * diag.max()))
    kept = np.sort(piv[:rank])
    Xk = X[:, kept]

    if link == "log":
        beta = np.zeros(Xk.shape[1])
        beta[0] = np.log(max(y.mean(), 1e-12))
    else:
        beta = np.zeros(Xk.shape[1])
        p0 = min(max(y.mean(), 1e-6), 1 - 1e-6)
        beta[0] = np.log(p0 / (1 - p0))

    for _ in range(max_iter):
        lp = np.clip(Xk @ beta, -30.0, 30.0)
        if link == "log":
            mu = np.exp(lp)
            w = mu
        else:
            mu = 1.0 / (1.0 + np.exp(-lp))
            w = mu * (1.0 - mu)
        grad = Xk.T @ (y - mu)
        if np.linalg.norm(grad) <= grad_tol:
            break
        z = lp + (y - mu) / np.maximum(w, 1e-12)
        wx = Xk * w[:, None]
        beta_new = np.linalg.solve(Xk.T @ wx + 1e-12 * np.eye(Xk.shape[1]), wx.T @ z)
        if not np.all(np.isfinite(beta_new)):
            break
        step = beta_new - beta
        beta = beta_new
        if np.max(np.abs(step)) < 1e-14:
            break
    full = np.zeros(k)
    full[kept] = beta
    return full, kept


@dataclass
class ZeroFundraiserModels:
    """Auxiliary (phi, gamma) regressions for zero-fundraisers."""

    phi_coefs: np.ndarray
    gamma_coefs: np.ndarray
    state_means: tuple
    state_sds: tuple
    phi_scale: float  # phi fit on y / phi_scale for conditioning
    dropped_phi: List[str] = field(default_factory=list)
    dropped_gamma: List[str] = field(default_factory=list)

    def _design(self, G, D, M):
        return _cubic_design(
            np.asarray(G, dtype=float),
            np.asarray(D, dtype=float),
            np.asarray(M, dtype=float),
            self.state_means,
            self.state_sds,
        )

    def predict_phi(self, G, D, M):
        lp = np.clip(self._design(G, D, M) @ self.phi_coefs, -30.0, 30.0)
        return np.maximum(self.phi_scale * np.exp(lp), 1.0)

    def predict_gamma(self, G, D, M):
        lp = np.clip(self._design(G, D, M) @ self.gamma_coefs, -30.0, 30.0)
        return 1.0 / (1.0 + np.exp(-lp))


def fit_zero_fundraiser_models(G, D, M, phi_hat, gamma_hat) -> ZeroFundraiserModels:
    """Fit the phi (log link) and gamma (fractional logit) regressions."""
    G, D, M, phi_hat, gamma_hat = (
        np.asarray(x, dtype=float) for x in (G, D, M, phi_hat, gamma_hat)
    )
    n = len(G)
    if n < MIN_POSITIVE_FUNDRAISERS:
        raise ValidationError(
            f"need at least {MIN_POSITIVE_FUNDRAISERS} positive-fundraiser "
            f"observations to fit the zero-fundraiser models, got {n}"
        )
    if np.any(phi_hat <= 0) or np.any((gamma_hat <= 0) | (gamma_hat >= 1)):
        raise ValidationError("phi_hat must be positive and gamma_hat inside (0,1)")

    means, sds = [], []
    for raw in (G, D, M):
        means.append(float(raw.mean()))
        sd = float(raw.std())
        sds.append(sd if sd > 0 else 1.0)
    X = _cubic_design(G, D, M, means, sds)

    phi_scale = float(phi_hat.mean())
    phi_coefs, kept_phi = _irls(X, phi_hat / phi_scale, "log")
    gamma_coefs, kept_gamma = _irls(X, gamma_hat, "logit")

    names = ["intercept"] + DESIGN_TERMS
    dropped_phi = [names[i] for i in range(X.shape[1]) if i not in kept_phi]
    dropped_gamma = [names[i] for i in range(X.shape[1]) if i not in kept_gamma]
    return ZeroFundraiserModels(
        phi_coefs=phi_coefs,
        gamma_coefs=gamma_coefs,
        state_means=tuple(means),
        state_sds=tuple(sds),
        phi_scale=phi_scale,
        dropped_phi=dropped_phi,
        dropped_gamma=dropped_gamma,
    )


def fundraising_ability_bound(gamma_hat, G, D, H_obs, cal: Calibration):
    """Largest phi keeping optimal fundraising at zero given observed hours.

    The zero-fundraiser's alpha is inverted from the F = 0 branch of the
    hours FOC, which does not involve phi, so the re-solved hours equal
    the observed hours for any phi.  Fundraising turns on exactly when
    the threshold D + (1-gamma)(B_min+G)/(gamma*phi) falls below H_obs;
    solving threshold(phi) = H_obs for phi gives the bound.
    """
    return (1.0 - gamma_hat) * (cal.b_min + G) / (gamma_hat * (H_obs - D))


def predict_and_rescale(
    models: ZeroFundraiserModels,
    c: ContractState,
    observed_hours: float,
    cal: Calibration,
) -> Tuple[float, float]:
    """(phi, gamma) for an F = 0 researcher, phi rescaled for consistency."""
    if not observed_hours > c.duties:
        raise ValidationError("observed hours must exceed duties")
    gamma = float(
        models.predict_gamma(
            np.array([c.guaranteed_funding]), np.array([c.duties]), np.array([c.salary])
        )[0]
    )
    phi_raw = float(
        models.predict_phi(
            np.array([c.guaranteed_funding]), np.array([c.duties]), np.array([c.salary])
        )[0]
    )
    bound = fundraising_ability_bound(
        gamma, c.guaranteed_funding, c.duties, observed_hours, cal
    )
    phi = phi_raw if phi_raw <= bound else RESCALE_FACTOR * bound
    return max(phi, 1.0), gamma


@dataclass
class IdentifiedAttributes:
    """Per-researcher attribute estimates aligned to the population rows."""

    alpha: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    hours_corner: np.ndarray  # alpha is a lower bound where set
    zero_fundraiser: np.ndarray
    failures: List[Tuple[str, str]] = field(default_factory=list)


def identify_population(
    pop: Population, deep: DeepParams, cal: Calibration
) -> IdentifiedAttributes:
    """Attributes for every researcher, splitting on F > 0 versus F = 0."""
    n = len(pop)
    alpha = np.full(n, np.nan)
    gamma = np.full(n, np.nan)
    phi = np.full(n, np.nan)
    corner = np.zeros(n, dtype=bool)
    failures: List[Tuple[str, str]] = []
    if n == 0:
        return IdentifiedAttributes(alpha, gamma, phi, corner, np.zeros(0, dtype=bool))

    if pop.T is None:
        raise ValidationError("population must carry the type index before identification")
    omega, sigma, eta, xi, zeta, psi = preference_arrays_from_type(pop.T, deep)
    valid = valid_preference_arrays(omega, sigma, eta, xi, zeta, psi)

    pos = pop.F > 0
    zero = ~pos
    no_models = np.zeros(n, dtype=bool)

    with np.errstate(all="ignore"):
        phi_pos = np.maximum(pop.EG[pos] / pop.F[pos], 1.0)
        funds = cal.b_min + pop.G[pos] + phi_pos * pop.F[pos]
        gamma_pos = funds / (funds + phi_pos * pop.R[pos])
        phi[pos] = phi_pos
        gamma[pos] = gamma_pos

        if zero.any():
            if pos.sum() >= MIN_POSITIVE_FUNDRAISERS:
                models = fit_zero_fundraiser_models(
                    pop.G[pos], pop.D[pos], pop.M[pos], phi_pos, gamma_pos
                )
                g0 = models.predict_gamma(pop.G[zero], pop.D[zero], pop.M[zero])
                p_raw = models.predict_phi(pop.G[zero], pop.D[zero], pop.M[zero])
                bound = fundraising_ability_bound(
                    g0, pop.G[zero], pop.D[zero], pop.H[zero], cal
                )
                p0 = np.where(p_raw <= bound, p_raw, RESCALE_FACTOR * bound)
                phi[zero] = np.maximum(p0, 1.0)
                gamma[zero] = g0
            else:
                no_models = zero.copy()

        B = cal.b_min + pop.G + phi * pop.F
        alpha = alpha_from_margins(
            B, pop.R, pop.H, pop.D, gamma, eta, psi, xi, zeta
        )
        corner = pop.H >= cal.h_max - 1e-9

    usable = np.isfinite(alpha) & (alpha > 0) & valid & ~no_models
    for i in np.flatnonzero(~usable):
        rid = str(pop.ids[i])
        if no_models[i]:
            failures.append(
                (rid, "too few positive fundraisers to fit the zero-fundraiser models")
            )
        elif not valid[i]:
            failures.append((rid, "invalid preference parameters at this type"))
        else:
            failures.append((rid, "alpha inversion failed"))
    alpha = np.where(usable, alpha, np.nan)

    return IdentifiedAttributes(
        alpha=alpha,
        gamma=gamma,
        phi=phi,
        hours_corner=corner,
        zero_fundraiser=zero,
        failures=failures,
    )
