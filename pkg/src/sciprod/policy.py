"""Optimal time-allocation policies.

Each researcher chooses total hours H and a split between research R and
fundraising F, given duties D, guaranteed funding G, and attributes
(alpha, gamma, phi).  Substituting the budget and time constraints, the
problem reduces to a one-dimensional first-order condition in H that is
piecewise across the fundraising corner:

  * below the threshold H_{F>0} = D + (1-gamma)(B_min+G)/(gamma*phi)
    optimal fundraising is zero, B = B_min + G and R = H - D;
  * above it, F = gamma*(H-D) - (1-gamma)(B_min+G)/phi is interior, which
    gives B = gamma*phi*rho and R = (1-gamma)*rho with
    rho = (H-D) + (B_min+G)/phi.

On both sides the condition reads

    (1-gamma) * Y^(1-eta) / R  =  psi * (H - D + D^xi)^zeta

with Y evaluated at the branch allocation.  The left side is strictly
decreasing in H, diverges as H -> D+, and is continuous (though kinked) at
the threshold, so the root is unique and bracketed bisection is exact.
All solver entry points are vectorized; the scalar API wraps a batch of
one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Attributes,
    Calibration,
    ContractState,
    PreferenceParams,
    salary_utility,
)
from .errors import NumericalError, ValidationError

__all__ = [
    "PolicySolution",
    "fundraising_threshold",
    "interior_fundraising",
    "hours_residual",
    "solve_policy",
    "solve_policy_batch",
    "effort_margin",
    "research_margin",
    "branch_allocation",
]

# Bracket offset above D for the left branch, in hours.
H_FLOOR = 1e-6
# enough halvings of the (D, H_max] bracket to pass the 1e-10-hour width
# tolerance with margin: 62 / 2^48 ~ 2e-13
BISECT_ITERS = 48


def effort_margin(H, D, psi, xi, zeta):
    """Marginal disutility of an hour worked: psi * (H - D + D^xi)^zeta."""
    return psi * (H - D + D**xi) ** zeta


def research_margin(alpha, B, R, gamma, eta):
    """Marginal utility of an hour worked: (1-gamma) * Y^(1-eta) / R.

    This is the single expression shared by the policy solver and the
    productivity identification (which inverts it for alpha).
    """
    Y = alpha * B**gamma * R ** (1.0 - gamma)
    return (1.0 - gamma) * Y ** (1.0 - eta) / R


def alpha_from_margins(B, R, H, D, gamma, eta, psi, xi, zeta):
    """Invert research_margin == effort_margin for alpha at observed (B, R, H)."""
    target = effort_margin(H, D, psi, xi, zeta)
    scale = (1.0 - gamma) * (B**gamma * R ** (1.0 - gamma)) ** (1.0 - eta) / R
    return (target / scale) ** (1.0 / (1.0 - eta))


def fundraising_threshold(c: ContractState, a: Attributes, cal: Calibration) -> float:
    """Hours level below which optimal fundraising is zero."""
    g = a.funding_intensity
    return c.duties + (1.0 - g) * (cal.b_min + c.guaranteed_funding) / (
        g * a.fundraising_ability
    )


def interior_fundraising(H, c: ContractState, a: Attributes, cal: Calibration):
    """F on the interior branch: gamma*(H-D) - (1-gamma)*(B_min+G)/phi.

    Only valid above the fundraising threshold; below it the caller must
    use the F = 0 branch.
    """
    thr = fundraising_threshold(c, a, cal)
    if np.any(np.asarray(H) <= thr):
        raise ValidationError(
            f"H={H} is at or below the fundraising threshold {thr}; use the F=0 branch"
        )
    g = a.funding_intensity
    return g * (np.asarray(H) - c.duties) - (1.0 - g) * (
        cal.b_min + c.guaranteed_funding
    ) / a.fundraising_ability


def branch_allocation(H, right, G, D, gamma, phi, b_min):
    """(B, R, F) at hours H on the indicated branch (right = interior F)."""
    base = b_min + G
    rho = (H - D) + base / phi
    B = np.where(right, gamma * phi * rho, base)
    F = np.where(right, gamma * (H - D) - (1.0 - gamma) * base / phi, 0.0)
    R = H - D - F
    return B, R, F


def _residual(H, right, G, D, alpha, gamma, phi, eta, psi, xi, zeta, b_min):
    B, R, _ = branch_allocation(H, right, G, D, gamma, phi, b_min)
    return research_margin(alpha, B, R, gamma, eta) - effort_margin(H, D, psi, xi, zeta)


def hours_residual(
    H,
    branch: str,
    c: ContractState,
    a: Attributes,
    p: PreferenceParams,
    cal: Calibration,
) -> float:
    """First-order-condition residual at hours H on the given branch.

    branch is "left" (F = 0, valid for H <= threshold) or "right"
    (interior F, valid for H > threshold); a branch/threshold mismatch is
    rejected.
    """
    thr = fundraising_threshold(c, a, cal)
    H = float(H)
    if not c.duties < H <= cal.h_max + 1e-12:
        raise ValidationError(f"H={H} outside (D, H_max]")
    if branch == "left":
        if H > thr + 1e-12:
            raise ValidationError(f"left branch invalid at H={H} > threshold {thr}")
        right = False
    elif branch == "right":
        # the threshold itself belongs to the left branch, but continuity
        # makes evaluating the right form there legitimate for kink checks
        if H < thr - 1e-12:
            raise ValidationError(f"right branch invalid at H={H} < threshold {thr}")
        right = True
    else:
        raise ValidationError(f"unknown branch {branch!r}")
    return float(
        _residual(
            H,
            right,
            c.guaranteed_funding,
            c.duties,
            a.tfp,
            a.funding_intensity,
            a.fundraising_ability,
            p.output_curvature,
            p.effort_weight,
            p.duty_penalty_exponent,
            p.effort_curvature,
            cal.b_min,
        )
    )


def solve_policy_batch(G, D, alpha, gamma, phi, eta, psi, xi, zeta, cal: Calibration):
    """Solve the hours FOC for arrays of researchers.

    Returns a dict of arrays: H, F, R, B, Y, cont_value (u2 - u3, the
    salary-independent part of utility), corner flags and multipliers.
    """
    G, D, alpha, gamma, phi, eta, psi, xi, zeta = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (G, D, alpha, gamma, phi, eta, psi, xi, zeta))
    )
    b_min, h_max = cal.b_min, cal.h_max
    # phi below 1 is allowed here: the planner feeds pi-scaled abilities
    if (
        np.any(G < 0)
        or np.any(D < 0)
        or np.any(D >= h_max)
        or np.any(alpha <= 0)
        or np.any((gamma <= 0) | (gamma >= 1))
        or np.any(phi <= 0)
        or np.any(eta <= 0)
        or np.any(eta >= 1)
        or np.any(psi <= 0)
        or np.any(xi <= 0)
        or np.any(zeta <= 0)
    ):
        raise ValidationError("solve_policy_batch: inputs violate domain bounds")

    def resid(H, right):
        return _residual(H, right, G, D, alpha, gamma, phi, eta, psi, xi, zeta, b_min)

    thr = D + (1.0 - gamma) * (b_min + G) / (gamma * phi)
    hi_left = np.minimum(thr, h_max)

    r_hi_left = resid(hi_left, False)
    left = r_hi_left <= 0.0  # root in the F=0 bracket
    r_hmax = resid(np.full_like(G, h_max), thr < h_max)
    corner = ~left & (r_hmax > 0.0)
    right = ~left & ~corner

    lo = np.where(left, D + H_FLOOR, hi_left)
    hi = np.where(left, hi_left, h_max)

    # The residual diverges to +inf as H -> D+, but for microscopic alpha the
    # sign change can sit below D + H_FLOOR; shrink geometrically toward D.
    for _ in range(10):
        bad = left & (resid(lo, False) <= 0.0) & (lo - D > 1e-13)
        if not bad.any():
            break
        lo = np.where(bad, D + (lo - D) / 256.0, lo)

    interior = ~corner
    on_right = right  # branch indicator is fixed within each bracket
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        go_up = resid(mid, on_right) > 0.0
        lo = np.where(interior & go_up, mid, lo)
        hi = np.where(interior & ~go_up, mid, hi)

    H = np.where(corner, h_max, 0.5 * (lo + hi))
    # exact corner value, exact complementary slackness
    H = np.where(corner, h_max, np.minimum(H, h_max))

    B, R, F = branch_allocation(H, right | (corner & (thr < h_max)), G, D, gamma, phi, b_min)
    Y = alpha * B**gamma * R ** (1.0 - gamma)

    res_final = research_margin(alpha, B, R, gamma, eta) - effort_margin(H, D, psi, xi, zeta)
    lam_H = np.where(corner, np.maximum(res_final, 0.0), 0.0)
    fundraising_corner = F == 0.0
    lam_F = np.where(
        fundraising_corner,
        np.maximum(
            Y ** (1.0 - eta) * ((1.0 - gamma) / R - gamma * phi / B), 0.0
        ),
        0.0,
    )

    width = hi - lo
    ok = corner | (np.abs(res_final) <= 1e-8) | (width <= 1e-10)
    if not np.all(ok & np.isfinite(H) & np.isfinite(Y)):
        idx = np.flatnonzero(~(ok & np.isfinite(H) & np.isfinite(Y)))
        raise NumericalError(
            f"policy solver failed to converge for {idx.size} researcher(s); "
            f"first indices {idx[:5].tolist()}, residuals "
            f"{np.asarray(res_final).ravel()[idx[:5]].tolist()}"
        )

    cont = output_utility_raw(Y, eta) - effort_raw(R, F, D, psi, xi, zeta)
    return {
        "H": H,
        "F": F,
        "R": R,
        "B": B,
        "Y": Y,
        "cont_value": cont,
        "fundraising_corner": fundraising_corner,
        "hours_corner": corner,
        "lam_F": lam_F,
        "lam_H": lam_H,
    }


def output_utility_raw(Y, eta):
    return Y ** (1.0 - eta) / (1.0 - eta)


def effort_raw(R, F, D, psi, xi, zeta):
    return psi * (R + F + D**xi) ** (1.0 + zeta) / (1.0 + zeta)


@dataclass(frozen=True)
class PolicySolution:
    """Optimal allocation with corner flags and multipliers."""

    H: float
    F: float
    R: float
    B: float
    Y: float
    V: float
    fundraising_corner: bool
    hours_corner: bool
    lam_F: float
    lam_H: float


def solve_policy(
    c: ContractState, a: Attributes, p: PreferenceParams, cal: Calibration
) -> PolicySolution:
    """Solve one researcher's problem; see solve_policy_batch."""
    out = solve_policy_batch(
        np.array([c.guaranteed_funding]),
        np.array([c.duties]),
        np.array([a.tfp]),
        np.array([a.funding_intensity]),
        np.array([a.fundraising_ability]),
        np.array([p.output_curvature]),
        np.array([p.effort_weight]),
        np.array([p.duty_penalty_exponent]),
        np.array([p.effort_curvature]),
        cal,
    )
    V = float(salary_utility(c.salary, p) + out["cont_value"][0])
    return PolicySolution(
        H=float(out["H"][0]),
        F=float(out["F"][0]),
        R=float(out["R"][0]),
        B=float(out["B"][0]),
        Y=float(out["Y"][0]),
        V=V,
        fundraising_corner=bool(out["fundraising_corner"][0]),
        hours_corner=bool(out["hours_corner"][0]),
        lam_F=float(out["lam_F"][0]),
        lam_H=float(out["lam_H"][0]),
    )
