"""GMM estimation of the deep utility parameters.

The loss is the sum of squared gaps between observed and model-predicted
indifference salaries over researchers and offers.  Each candidate deep
vector implies individual preferences through the type links, which in
turn re-identify every researcher's attributes from their observed
allocation before the four offers are re-priced.  The search runs a fixed
coarse grid followed by staged Nelder-Mead refinements with tightening
tolerances, keeping candidates within survivor bands of the running
minimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional

import numpy as np

from .core import Calibration
from .datasets import Population
from .errors import EstimationFailedError, ValidationError
from .identification import (
    MIN_POSITIVE_FUNDRAISERS,
    RESCALE_FACTOR,
    fit_zero_fundraiser_models,
    fundraising_ability_bound,
)
from .policy import alpha_from_margins
from .typeindex import DeepParams, preference_arrays_from_type, valid_preference_arrays
from .wtp import predict_indifference_batch

__all__ = [
    "EstimationConfig",
    "EstimationResult",
    "SimplexResult",
    "initial_grid",
    "gmm_loss",
    "prepare_estimation_data",
    "estimate",
    "simplex_minimize",
]

FAILURE_PENALTY = 1.0e12

# coarse grid from the staged search: omega, psi, then intercept/slope
# pairs for sigma, eta (logit scale), xi, zeta
GRID_OMEGA = (0.1, 1.0, 10.0)
GRID_PSI = (1e-5, 1.0, 10.0)
GRID_SIGMA0 = (-100.0, 0.0)
GRID_SIGMA1 = (0.0,)
GRID_ETA0 = (math.log(0.8) - math.log(0.2), 0.0, math.log(0.2) - math.log(0.8))
GRID_ETA1 = (0.0,)
GRID_XI0 = (-11.5, math.log(2.0))
GRID_XI1 = (0.0,)
GRID_ZETA0 = (-11.5, 0.0)
GRID_ZETA1 = (0.0,)


def initial_grid() -> List[DeepParams]:
    """The 216-point Cartesian starting grid, in a fixed order."""
    out = []
    for omega, psi, s0, s1, e0, e1, x0, x1, z0, z1 in product(
        GRID_OMEGA,
        GRID_PSI,
        GRID_SIGMA0,
        GRID_SIGMA1,
        GRID_ETA0,
        GRID_ETA1,
        GRID_XI0,
        GRID_XI1,
        GRID_ZETA0,
        GRID_ZETA1,
    ):
        out.append(DeepParams(omega, psi, s0, s1, e0, e1, x0, x1, z0, z1))
    return out


@dataclass
class _PreparedData:
    """Candidate-independent pieces of the loss: the (phi, gamma) backfill
    does not involve the deep parameters, so it is computed once."""

    order: np.ndarray  # row permutation sorting ids (fixed summation order)
    M: np.ndarray
    G: np.ndarray
    D: np.ndarray
    H: np.ndarray
    F: np.ndarray
    R: np.ndarray
    T: np.ndarray
    answers: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    unidentified: np.ndarray  # rows with no (phi, gamma) backfill available
    penalty_unit: float = FAILURE_PENALTY


def prepare_estimation_data(pop: Population, cal: Calibration) -> _PreparedData:
    if pop.T is None:
        raise ValidationError("population must carry the type index before estimation")
    order = np.argsort(pop.ids, kind="stable")
    M, G, D, H, F, R = (x[order] for x in (pop.M, pop.G, pop.D, pop.H, pop.F, pop.R))
    EG = pop.EG[order]
    T = pop.T[order]
    answers = pop.answers[order]

    n = len(M)
    phi = np.full(n, np.nan)
    gamma = np.full(n, np.nan)
    pos = F > 0
    zero = ~pos
    phi_pos = np.maximum(EG[pos] / F[pos], 1.0)
    funds = cal.b_min + G[pos] + phi_pos * F[pos]
    phi[pos] = phi_pos
    gamma[pos] = funds / (funds + phi_pos * R[pos])

    unidentified = np.zeros(n, dtype=bool)
    if zero.any():
        if pos.sum() >= MIN_POSITIVE_FUNDRAISERS:
            models = fit_zero_fundraiser_models(
                G[pos], D[pos], M[pos], phi[pos], gamma[pos]
            )
            g0 = models.predict_gamma(G[zero], D[zero], M[zero])
            p_raw = models.predict_phi(G[zero], D[zero], M[zero])
            bound = fundraising_ability_bound(g0, G[zero], D[zero], H[zero], cal)
            phi[zero] = np.maximum(
                np.where(p_raw <= bound, p_raw, RESCALE_FACTOR * bound), 1.0
            )
            gamma[zero] = g0
        else:
            unidentified = zero.copy()
            phi[zero] = 1.0
            gamma[zero] = 0.5

    # one identification failure must outweigh any achievable fit error in
    # raw squared dollars, so the penalty scales with the answer energy
    penalty_unit = max(FAILURE_PENALTY, 10.0 * float(np.nansum(answers**2)))
    return _PreparedData(
        order, M, G, D, H, F, R, T, answers, phi, gamma, unidentified, penalty_unit
    )


def _loss_components(mu: DeepParams, prep: _PreparedData, cal: Calibration):
    """(loss, predictions, n_penalized) for one candidate."""
    omega, sigma, eta, xi, zeta, psi = preference_arrays_from_type(prep.T, mu)
    valid = valid_preference_arrays(omega, sigma, eta, xi, zeta, psi) & ~prep.unidentified

    with np.errstate(all="ignore"):
        B = cal.b_min + prep.G + prep.phi * prep.F
        alpha = alpha_from_margins(
            B, prep.R, prep.H, prep.D, prep.gamma, eta, psi, xi, zeta
        )
    valid &= np.isfinite(alpha) & (alpha > 0)

    # substitute innocuous values on failed rows so the batch solver runs
    alpha_s = np.where(valid, alpha, 1.0)
    sigma_s = np.where(valid & (sigma != 1.0), sigma, 2.0)
    eta_s = np.where(valid, eta, 0.5)
    xi_s = np.where(valid, xi, 1.0)
    zeta_s = np.where(valid, zeta, 1.0)
    psi_s = np.where(valid, psi, 1.0)
    omega_s = np.where(valid, omega, 1.0)

    preds, failed = predict_indifference_batch(
        prep.M, prep.G, prep.D, alpha_s, prep.gamma, prep.phi,
        omega_s, sigma_s, eta_s, psi_s, xi_s, zeta_s, cal,
    )
    good_rows = valid & ~failed
    resid = prep.answers - preds
    contributes = ~np.isnan(prep.answers) & good_rows[:, None] & ~np.isnan(preds)
    sq = np.where(contributes, resid, 0.0) ** 2
    n_penalized = int((~good_rows).sum())
    loss = math.fsum(sq.ravel().tolist()) + prep.penalty_unit * n_penalized
    preds = np.where(good_rows[:, None], preds, np.nan)
    return loss, preds, n_penalized


def gmm_loss(mu: DeepParams, pop: Population, cal: Calibration) -> float:
    """Squared-deviation loss at one candidate deep vector."""
    prep = prepare_estimation_data(pop, cal)
    return _loss_components(mu, prep, cal)[0]


@dataclass
class EstimationConfig:
    grid: Optional[List[DeepParams]] = None
    survivor_band_grid: float = 0.005
    survivor_band_stage1: float = 0.01
    stage_loss_tols: tuple = (1e-2, 1e-4, 1e-6)  # relative to the grid minimum
    param_tol: float = 1e-6
    max_iter_stage1: int = 1200
    max_iter_final: int = 4000
    grid_only: bool = False


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_iter: int
    n_eval: int


def simplex_minimize(f, x0, loss_tol, param_tol, max_iter=2000) -> SimplexResult:
    """Nelder-Mead with reflection/expansion/contraction/shrink (1, 2, 0.5, 0.5).

    Stops when the simplex loss spread is at most loss_tol and its
    diameter at most param_tol; hitting the iteration cap returns the
    best point with converged=False.
    """
    x0 = np.asarray(x0, dtype=float)
    dim = x0.size
    n_eval = 0

    def fx(x):
        nonlocal n_eval
        n_eval += 1
        return float(f(x))

    simplex = [x0.copy()]
    for i in range(dim):
        step = 0.05 * abs(x0[i]) if abs(x0[i]) > 1e-12 else 0.25
        pt = x0.copy()
        pt[i] += step
        simplex.append(pt)
    vals = [fx(p) for p in simplex]

    for it in range(max_iter):
        idx = np.argsort(vals, kind="stable")
        simplex = [simplex[i] for i in idx]
        vals = [vals[i] for i in idx]

        spread = vals[-1] - vals[0]
        diam = max(np.max(np.abs(p - simplex[0])) for p in simplex[1:])
        if spread <= loss_tol and diam <= param_tol:
            return SimplexResult(simplex[0], vals[0], True, it, n_eval)

        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        reflected = centroid + 1.0 * (centroid - worst)
        fr = fx(reflected)
        if vals[0] <= fr < vals[-2]:
            simplex[-1], vals[-1] = reflected, fr
            continue
        if fr < vals[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            fe = fx(expanded)
            if fe < fr:
                simplex[-1], vals[-1] = expanded, fe
            else:
                simplex[-1], vals[-1] = reflected, fr
            continue
        contracted = centroid + 0.5 * (worst - centroid)
        fc = fx(contracted)
        if fc < vals[-1]:
            simplex[-1], vals[-1] = contracted, fc
            continue
        best = simplex[0]
        for i in range(1, dim + 1):
            simplex[i] = best + 0.5 * (simplex[i] - best)
            vals[i] = fx(simplex[i])

    idx = np.argsort(vals, kind="stable")
    return SimplexResult(simplex[idx[0]], vals[idx[0]], False, max_iter, n_eval)


@dataclass
class EstimationResult:
    mu_hat: DeepParams
    loss: float
    trace: List[dict] = field(default_factory=list)
    residuals: Optional[np.ndarray] = None  # answers - predictions, id-sorted order
    predictions: Optional[np.ndarray] = None
    row_order: Optional[np.ndarray] = None
    n_penalized: int = 0
    converged: bool = True


def estimate(pop: Population, cfg: EstimationConfig, cal: Calibration) -> EstimationResult:
    """Staged grid + simplex search for the deep parameter vector."""
    prep = prepare_estimation_data(pop, cal)
    if len(prep.M) == 0:
        raise ValidationError("cannot estimate on an empty dataset")

    def loss_vec(x):
        return _loss_components(DeepParams.from_array(x), prep, cal)[0]

    grid = cfg.grid if cfg.grid is not None else initial_grid()
    trace: List[dict] = []

    stage0 = []
    pens0 = []
    for mu in grid:
        l, _, npen = _loss_components(mu, prep, cal)
        stage0.append((mu.as_array(), l))
        pens0.append(npen)
    losses0 = np.array([l for _, l in stage0])
    pens0 = np.array(pens0)
    trace.append({"stage": 0, "losses": losses0.tolist(), "penalized": pens0.tolist()})
    n_rows = len(prep.M)
    if np.all(pens0 >= n_rows):
        raise EstimationFailedError(
            "every grid candidate was fully penalized; see trace"
        )
    ref = max(float(np.min(losses0)), 1e-30)
    survivors = [stage0[i] for i in np.flatnonzero(losses0 <= ref * (1.0 + cfg.survivor_band_grid))]
    if cfg.grid_only:
        xs, ls = min(stage0, key=lambda t: t[1])
        mu_hat = DeepParams.from_array(xs)
        loss, preds, n_pen = _loss_components(mu_hat, prep, cal)
        return EstimationResult(
            mu_hat, loss, trace, prep.answers - preds, preds, prep.order, n_pen, True
        )

    tol1, tol2, tol3 = (t * ref for t in cfg.stage_loss_tols)

    stage1 = []
    for x, _ in survivors:
        res = simplex_minimize(loss_vec, x, tol1, cfg.param_tol, cfg.max_iter_stage1)
        stage1.append((res.x, res.fun))
    losses1 = np.array([l for _, l in stage1])
    trace.append({"stage": 1, "losses": losses1.tolist()})
    min1 = float(np.min(losses1))
    keep = [stage1[i] for i in np.flatnonzero(losses1 <= min1 * (1.0 + cfg.survivor_band_stage1))]

    stage2 = []
    for x, _ in keep:
        res = simplex_minimize(loss_vec, x, tol2, cfg.param_tol, cfg.max_iter_final)
        stage2.append((res.x, res.fun))
    losses2 = np.array([l for _, l in stage2])
    trace.append({"stage": 2, "losses": losses2.tolist()})
    best_x, best_l = stage2[int(np.argmin(losses2))]

    converged = True
    for _ in range(2):
        res = simplex_minimize(loss_vec, best_x, tol3, cfg.param_tol, cfg.max_iter_final)
        if res.fun <= best_l:
            best_x, best_l = res.x, res.fun
        converged = converged and res.converged
    trace.append({"stage": 3, "losses": [best_l]})

    mu_hat = DeepParams.from_array(best_x)
    loss, preds, n_pen = _loss_components(mu_hat, prep, cal)
    return EstimationResult(
        mu_hat=mu_hat,
        loss=loss,
        trace=trace,
        residuals=prep.answers - preds,
        predictions=preds,
        row_order=prep.order,
        n_penalized=n_pen,
        converged=converged,
    )
