"""Within-field social planner: reallocating guaranteed funding and duties.

The planner chooses each researcher's guaranteed funding and/or duties to
maximize an aggregate objective (total output, or kappa-weighted utility
net of effort) subject to conservation of the lever totals,
non-negativity, and a funding-feasibility fixed point: a scalar pi scales
everyone's fundraising ability so that the counterfactual total of raised
funds equals the observed total.

The solver is dual ascent: for trial multipliers each researcher's demand
solves marginal-value = multiplier by bisection (piecewise around the
fundraising-corner switch, where the output objective's marginal value
jumps), the multiplier is bisected on the conservation constraint, and the
outer loop alternates levers with damped pi updates until joint residuals
are small.  All inner solves are vectorized across researchers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .core import Calibration
from .errors import InfeasibleConstraintError, NumericalError, ValidationError
from .policy import solve_policy_batch
from .typeindex import DeepParams, preference_arrays_from_type

__all__ = [
    "PlannerProblem",
    "CounterfactualAllocation",
    "MarginalValues",
    "marginal_values",
    "optimize_allocation",
    "feasibility_fixed_point",
    "reallocation_magnitude",
]

H_STEP_D = 1e-4
PI_TOL = 1e-6
JOINT_TOL = 1e-6
DUTY_HEADROOM = 1.0  # hours kept below H_max for every researcher


@dataclass
class PlannerProblem:
    """One field's reallocation problem."""

    ids: np.ndarray
    M: np.ndarray
    G: np.ndarray
    D: np.ndarray
    EG: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    omega: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    objective: str = "output"
    levers: frozenset = frozenset({"G", "D"})
    kappa: float = 10.0
    cal: Calibration = Calibration()
    unconstrained_budget: bool = False

    def __post_init__(self):
        if self.objective not in ("output", "utility"):
            raise ValidationError(f"unknown objective {self.objective!r}")
        if not self.levers:
            raise ValidationError("at least one lever must be active")
        if not self.levers <= {"G", "D"}:
            raise ValidationError(f"unknown levers {self.levers}")
        if self.unconstrained_budget and self.levers != frozenset({"D"}):
            raise ValidationError("the unconstrained-budget variant reallocates duties only")

    @property
    def g_total(self) -> float:
        return float(np.sum(self.G))

    @property
    def d_total(self) -> float:
        return float(np.sum(self.D))

    @staticmethod
    def from_attributes(ids, M, G, D, EG, alpha, gamma, phi, T, deep: DeepParams,
                        objective="output", levers=frozenset({"G", "D"}),
                        kappa=10.0, cal=Calibration(), unconstrained_budget=False):
        omega, sigma, eta, xi, zeta, psi = preference_arrays_from_type(
            np.asarray(T, dtype=float), deep
        )
        return PlannerProblem(
            ids=np.asarray(ids), M=np.asarray(M, float), G=np.asarray(G, float),
            D=np.asarray(D, float), EG=np.asarray(EG, float),
            alpha=np.asarray(alpha, float), gamma=np.asarray(gamma, float),
            phi=np.asarray(phi, float),
            omega=omega, sigma=sigma, eta=eta, psi=psi, xi=xi, zeta=zeta,
            objective=objective, levers=frozenset(levers), kappa=kappa, cal=cal,
            unconstrained_budget=unconstrained_budget,
        )


def _solve(p: PlannerProblem, G, D, pi, idx=None):
    if idx is None:
        alpha, gamma, phi = p.alpha, p.gamma, p.phi
        eta, psi, xi, zeta = p.eta, p.psi, p.xi, p.zeta
    else:
        alpha, gamma, phi = p.alpha[idx], p.gamma[idx], p.phi[idx]
        eta, psi, xi, zeta = p.eta[idx], p.psi[idx], p.xi[idx], p.zeta[idx]
    return solve_policy_batch(
        G, D, alpha, gamma, pi * phi, eta, psi, xi, zeta, p.cal
    )


def _objective_terms(p: PlannerProblem, out, D, idx=None):
    eta = p.eta if idx is None else p.eta[idx]
    psi = p.psi if idx is None else p.psi[idx]
    xi = p.xi if idx is None else p.xi[idx]
    zeta = p.zeta if idx is None else p.zeta[idx]
    if p.objective == "output":
        return out["Y"]
    u2 = out["Y"] ** (1.0 - eta) / (1.0 - eta)
    u3 = psi * (out["R"] + out["F"] + D**xi) ** (1.0 + zeta) / (1.0 + zeta)
    return p.kappa * u2 - u3


def _value(p: PlannerProblem, G, D, pi, idx=None):
    out = _solve(p, G, D, pi, idx)
    return _objective_terms(p, out, D, idx)


def _social_flow(p: PlannerProblem, out, D):
    u1 = p.omega * p.M ** (1.0 - p.sigma) / (1.0 - p.sigma)
    u2 = out["Y"] ** (1.0 - p.eta) / (1.0 - p.eta)
    u3 = p.psi * (out["R"] + out["F"] + D**p.xi) ** (1.0 + p.zeta) / (1.0 + p.zeta)
    return u1 + u2 - u3, u1 + p.kappa * u2 - u3


def _marginal(p: PlannerProblem, G, D, pi, lever, idx=None):
    """Central-difference marginal of the objective along one lever.

    The three stencil points run through one stacked batch solve.  A
    fundraising-corner change inside the stencil switches to the one-sided
    difference on the side matching the center's branch.
    """
    n = len(G)
    if lever == "G":
        h = np.maximum(1.0, 1e-4 * (p.cal.b_min + G))
        up_x, dn_x = G + h, np.maximum(G - h, 0.0)
        G_stack = np.concatenate([up_x, dn_x, G])
        D_stack = np.tile(D, 3)
        span_up, span_dn = up_x - G, G - dn_x
    else:
        up_x = D + H_STEP_D
        dn_x = np.maximum(D - H_STEP_D, 0.0)
        G_stack = np.tile(G, 3)
        D_stack = np.concatenate([up_x, dn_x, D])
        span_up, span_dn = up_x - D, D - dn_x
    idx3 = np.tile(np.arange(n) if idx is None else np.asarray(idx), 3)
    out = _solve(p, G_stack, D_stack, pi, idx3)
    v = _objective_terms(p, out, D_stack, idx3)
    v_up, v_dn, v_mid = v[:n], v[n: 2 * n], v[2 * n:]
    c = out["fundraising_corner"]
    c_up, c_dn, c_mid = c[:n], c[n: 2 * n], c[2 * n:]

    central = (v_up - v_dn) / (span_up + span_dn)
    fwd = (v_up - v_mid) / span_up
    bwd = (v_mid - v_dn) / np.maximum(span_dn, 1e-300)
    use_fwd = (c_up == c_mid) & (c_dn != c_mid)
    use_bwd = (c_dn == c_mid) & (c_up != c_mid)
    return np.where(use_fwd, fwd, np.where(use_bwd, bwd, central))


@dataclass
class MarginalValues:
    dV_dG: float
    dV_dD: float
    dY_dG: float
    dY_dD: float


def marginal_values(p: PlannerProblem, i: int, g: float, d: float, pi: float) -> MarginalValues:
    """Total derivatives (including behavioral response) for researcher i."""
    idx = np.array([i])
    G = np.array([g])
    D = np.array([d])

    def util_m(lever):
        q = PlannerProblem(
            ids=p.ids, M=p.M, G=p.G, D=p.D, EG=p.EG, alpha=p.alpha, gamma=p.gamma,
            phi=p.phi, omega=p.omega, sigma=p.sigma, eta=p.eta, psi=p.psi,
            xi=p.xi, zeta=p.zeta, objective="utility", levers=p.levers,
            kappa=p.kappa, cal=p.cal, unconstrained_budget=p.unconstrained_budget,
        )
        return float(_marginal(q, G, D, pi, lever, idx)[0])

    def out_m(lever):
        q = PlannerProblem(
            ids=p.ids, M=p.M, G=p.G, D=p.D, EG=p.EG, alpha=p.alpha, gamma=p.gamma,
            phi=p.phi, omega=p.omega, sigma=p.sigma, eta=p.eta, psi=p.psi,
            xi=p.xi, zeta=p.zeta, objective="output", levers=p.levers,
            kappa=p.kappa, cal=p.cal, unconstrained_budget=p.unconstrained_budget,
        )
        return float(_marginal(q, G, D, pi, lever, idx)[0])

    return MarginalValues(
        dV_dG=util_m("G"),
        dV_dD=util_m("D"),
        dY_dG=out_m("G"),
        dY_dD=out_m("D"),
    )


def _switch_points(p: PlannerProblem, other, pi, lever, x_max):
    """Per-researcher lever level where optimal fundraising hits zero.

    F* is monotone in either lever (decreasing in G, decreasing in D), so
    a sign-change bisection localizes the corner; researchers without a
    switch get a degenerate boundary.
    """
    n = len(p.M)
    lo = np.zeros(n)
    hi = np.full(n, x_max)

    def f_at(x):
        if lever == "G":
            return _solve(p, x, other, pi)["F"]
        return _solve(p, other, x, pi)["F"]

    f_lo = f_at(lo)
    f_hi = f_at(hi)
    no_switch_all_pos = f_hi > 0.0  # fundraising never stops
    no_switch_all_zero = f_lo == 0.0  # never fundraises
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        pos = f_at(mid) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    s = 0.5 * (lo + hi)
    s = np.where(no_switch_all_pos, x_max, s)
    s = np.where(no_switch_all_zero, 0.0, s)
    return s


def _demand(p: PlannerProblem, lever, other, pi, lam, x_max, switches):
    """Per-researcher demand x(lam): argmax of value - lam * x on [0, x_max].

    Solved piecewise on [0, s] and [s, x_max] (s = fundraising switch);
    both piece bisections run in one stacked batch, and the piece roots
    compete with the boundary points on the Lagrangian.
    """
    n = len(p.M)
    idx2 = np.tile(np.arange(n), 2)
    other2 = np.tile(other, 2)

    def marg2(x):
        if lever == "G":
            return _marginal(p, x, other2, pi, "G", idx2)
        return _marginal(p, other2, x, pi, "D", idx2)

    lo = np.concatenate([np.zeros(n), switches])
    hi = np.concatenate([switches, np.full(n, x_max)])
    active = (hi - lo) > 1e-12
    m_lo = marg2(lo)
    m_hi = marg2(hi)
    # a root exists inside a piece when its (decreasing) marginal straddles
    # the multiplier
    has_root = active & (m_lo >= lam) & (m_hi <= lam)
    b_lo, b_hi = lo.copy(), hi.copy()
    for _ in range(36):
        mid = 0.5 * (b_lo + b_hi)
        above = marg2(mid) > lam
        b_lo = np.where(has_root & above, mid, b_lo)
        b_hi = np.where(has_root & ~above, mid, b_hi)
    root = 0.5 * (b_lo + b_hi)

    # candidates: piece roots where they exist, plus all piece boundaries
    cands = np.stack(
        [
            np.where(has_root[:n], root[:n], 0.0),
            np.where(has_root[n:], root[n:], switches),
            np.zeros(n),
            switches,
            np.full(n, x_max),
        ]
    )  # (5, n)
    k = cands.shape[0]
    flat = cands.ravel()
    idxk = np.tile(np.arange(n), k)
    if lever == "G":
        vals = _value(p, flat, np.tile(other, k), pi, idxk)
    else:
        vals = _value(p, np.tile(other, k), flat, pi, idxk)
    lagr = vals.reshape(k, n) - lam * cands
    best = np.argmax(lagr, axis=0)
    return cands[best, np.arange(n)]


def _solve_lever(p: PlannerProblem, lever, other, pi, target, x_max, warm=None):
    """Bisect the multiplier so demands sum to the lever total."""
    n = len(p.M)
    switches = _switch_points(p, other, pi, lever, x_max)

    def total(lam):
        return float(np.sum(_demand(p, lever, other, pi, lam, x_max, switches)))

    if lever == "G":
        m_zero = _marginal(p, np.zeros(n), other, pi, "G")
        m_full = _marginal(p, np.full(n, x_max), other, pi, "G")
    else:
        m_zero = _marginal(p, other, np.zeros(n), pi, "D")
        m_full = _marginal(p, other, np.full(n, x_max), pi, "D")
    hi = float(np.max(m_zero))
    lo = float(np.min(m_full))
    hi += abs(hi) * 1e-3 + 1e-12
    lo -= abs(lo) * 1e-3 + 1e-12
    if warm is not None:
        # previous outer iteration's multiplier brackets the new one closely
        span = (hi - lo) * 0.05
        w_lo, w_hi = warm - span, warm + span
        if total(w_lo) >= target >= total(w_hi):
            lo, hi = w_lo, w_hi
    iters = 30 if warm is None else 18
    for _ in range(iters):
        lam = 0.5 * (lo + hi)
        if total(lam) > target:
            lo = lam
        else:
            hi = lam
    lam = 0.5 * (lo + hi)
    x = _demand(p, lever, other, pi, lam, x_max, switches)

    # proportional repair of the residual bisection gap, preserving
    # symmetry between identical researchers
    s = float(np.sum(x))
    gap = target - s
    if s > 0:
        x = np.maximum(x + gap * x / s, 0.0)
    elif target > 0:
        x = np.full_like(x, target / n)
    return lam, x


def feasibility_fixed_point(p: PlannerProblem, G, D, pi0: float = 1.0) -> float:
    """Scalar pi solving sum(EG) = pi * sum(phi * F(pi)) by damped iteration."""
    eg_total = float(np.sum(p.EG))
    pi = pi0

    def raised(pi_):
        out = _solve(p, G, D, pi_)
        return float(np.sum(pi_ * p.phi * out["F"]))

    if eg_total == 0.0:
        if raised(1.0) == 0.0:
            return 1.0
        # drive pi down so nobody fundraises; the constraint is vacuous
        return 1.0
    for _ in range(200):
        r = raised(pi)
        if r == 0.0:
            raise InfeasibleConstraintError(
                "no fundraising occurs at the counterfactual allocation but "
                "observed additional funding is positive"
            )
        if abs(r - eg_total) <= PI_TOL * eg_total:
            return pi
        unscaled = r / pi  # sum phi * F at current behavior
        pi = 0.5 * pi + 0.5 * (eg_total / unscaled)
        pi = min(max(pi, 1e-9), 1e9)
    raise NumericalError("feasibility fixed point failed to converge")


@dataclass
class CounterfactualAllocation:
    ids: np.ndarray
    G_new: np.ndarray
    D_new: np.ndarray
    pi: float
    lambda_G: Optional[float]
    lambda_D: Optional[float]
    policy: Dict[str, np.ndarray]
    utility: np.ndarray
    social: np.ndarray
    objective_value: float
    actual_objective_value: float
    kkt: Dict[str, float] = field(default_factory=dict)
    converged: bool = True


def optimize_allocation(p: PlannerProblem) -> CounterfactualAllocation:
    """Dual ascent on the lever multipliers with the pi fixed point."""
    n = len(p.M)
    cal = p.cal

    pi_actual = 1.0 if p.unconstrained_budget else feasibility_fixed_point(p, p.G, p.D)
    out_act = _solve(p, p.G, p.D, pi_actual)
    actual_obj = float(np.sum(_objective_terms(p, out_act, p.D)))

    if n == 1:
        G_new, D_new = p.G.copy(), p.D.copy()
        out = _solve(p, G_new, D_new, pi_actual)
        u, w = _social_flow(p, out, D_new)
        return CounterfactualAllocation(
            ids=p.ids, G_new=G_new, D_new=D_new, pi=pi_actual,
            lambda_G=None, lambda_D=None, policy=out, utility=u, social=w,
            objective_value=actual_obj, actual_objective_value=actual_obj,
        )

    G_new = p.G.copy()
    D_new = p.D.copy()
    pi = 1.0
    lam_G = lam_D = None
    d_cap = cal.h_max - DUTY_HEADROOM
    g_cap = p.g_total

    converged = False
    for outer in range(40):
        G_prev, D_prev, pi_prev = G_new.copy(), D_new.copy(), pi
        if "G" in p.levers and p.g_total > 0:
            lam_G, G_new = _solve_lever(p, "G", D_new, pi, p.g_total, g_cap, warm=lam_G)
        if "D" in p.levers and p.d_total > 0:
            lam_D, D_new = _solve_lever(p, "D", G_new, pi, p.d_total, d_cap, warm=lam_D)
        if not p.unconstrained_budget:
            pi = feasibility_fixed_point(p, G_new, D_new, pi)
        drift = max(
            float(np.max(np.abs(G_new - G_prev))) / max(1.0, float(np.max(p.G))),
            float(np.max(np.abs(D_new - D_prev))) / max(1.0, float(np.max(p.D)) or 1.0),
            abs(pi - pi_prev) / max(pi, 1e-12),
        )
        if drift <= JOINT_TOL and outer >= 1:
            converged = True
            break

    out = _solve(p, G_new, D_new, pi)
    u, w = _social_flow(p, out, D_new)
    obj = float(np.sum(_objective_terms(p, out, D_new)))

    kkt = {}
    if lam_G is not None:
        m = _marginal(p, G_new, D_new, pi, "G")
        interior = G_new > 1e-9
        kkt["G_interior_gap"] = float(
            np.max(np.abs(m[interior] - lam_G)) if interior.any() else 0.0
        )
        kkt["G_bound_violation"] = float(
            np.max(np.maximum(m[~interior] - lam_G, 0.0)) if (~interior).any() else 0.0
        )
        kkt["G_conservation"] = abs(float(np.sum(G_new)) - p.g_total) / max(p.g_total, 1.0)
    if lam_D is not None:
        m = _marginal(p, G_new, D_new, pi, "D")
        interior = (D_new > 1e-9) & (D_new < d_cap - 1e-9)
        kkt["D_interior_gap"] = float(
            np.max(np.abs(m[interior] - lam_D)) if interior.any() else 0.0
        )
        kkt["D_conservation"] = abs(float(np.sum(D_new)) - p.d_total) / max(p.d_total, 1.0)

    return CounterfactualAllocation(
        ids=p.ids, G_new=G_new, D_new=D_new, pi=pi,
        lambda_G=lam_G, lambda_D=lam_D, policy=out, utility=u, social=w,
        objective_value=obj, actual_objective_value=actual_obj,
        kkt=kkt, converged=converged,
    )


def reallocation_magnitude(actual, counterfactual, label="input"):
    """Share of the input moved between researchers.

    Sum of positive per-researcher changes over the actual total; None
    when the actual total is zero (the share is undefined).
    """
    actual = np.asarray(actual, dtype=float)
    counterfactual = np.asarray(counterfactual, dtype=float)
    if actual.shape != counterfactual.shape:
        raise ValidationError("reallocation inputs must align")
    total = float(np.sum(actual))
    if total == 0.0:
        return None
    moved = float(np.sum(np.maximum(counterfactual - actual, 0.0)))
    return moved / total
