"""Indifference salaries for counterfactual contract offers.

An offer changes guaranteed funding and/or duties; the researcher
re-optimizes time and states the salary that leaves them indifferent.
Utility is additively separable in salary and the time policy does not
depend on it, so indirect utility splits as

    V(M, G, D) = u1(M) + C(G, D),   C = u2(Y*) - u3(R*, F*, D),

and the indifference salary solves u1(M~) = u1(M) + C(G, D) - C(G~, D~)
exactly by inverting the salary-utility term.  A lowest acceptable salary
is treated as exact indifference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Attributes, Calibration, ContractState, PreferenceParams
from .errors import UnboundedCompensationError, ValidationError
from .policy import solve_policy_batch

__all__ = [
    "Offer",
    "WtpReport",
    "MONTHLY_TO_WEEKLY",
    "thought_experiment_offers",
    "continuation_value",
    "invert_salary_utility",
    "indifference_salary",
    "run_thought_experiments",
    "predict_indifference_batch",
]

# hours/month -> hours/week under the annualized-weekly unit convention
MONTHLY_TO_WEEKLY = 12.0 / 52.0


@dataclass(frozen=True)
class Offer:
    """Alternative contract terms: funding G_tilde and duties D_tilde."""

    g_tilde: float
    d_tilde: float
    label: str = "custom"

    def __post_init__(self):
        if self.g_tilde < 0:
            raise ValidationError(f"offer funding must be >= 0, got {self.g_tilde}")
        if self.d_tilde < 0:
            raise ValidationError(f"offer duties must be >= 0, got {self.d_tilde}")


@dataclass(frozen=True)
class WtpReport:
    """Indifference salary and willingness-to-pay conversions for one offer."""

    label: str
    indifference_salary: float
    wtp: float
    per_dollar: Optional[float] = None
    per_hour: Optional[float] = None


def thought_experiment_offers(c: ContractState, cal: Calibration):
    """The four survey offers; entry 3 is None when the researcher has no duties."""
    duty_bump = c.duties + 20.0 * MONTHLY_TO_WEEKLY
    if duty_bump >= cal.h_max:
        raise ValidationError("duty increase offer would exceed the hours cap")
    return [
        Offer(c.guaranteed_funding + 250_000.0, c.duties, "funding_250k"),
        Offer(c.guaranteed_funding + 1_000_000.0, c.duties, "funding_1m"),
        Offer(c.guaranteed_funding, 0.0, "duty_elimination") if c.duties > 0 else None,
        Offer(c.guaranteed_funding, duty_bump, "duty_increase"),
    ]


def continuation_value(G, D, a: Attributes, p: PreferenceParams, cal: Calibration):
    """Salary-independent utility component u2(Y*) - u3 at re-optimized time."""
    out = solve_policy_batch(
        G,
        D,
        a.tfp,
        a.funding_intensity,
        a.fundraising_ability,
        p.output_curvature,
        p.effort_weight,
        p.duty_penalty_exponent,
        p.effort_curvature,
        cal,
    )
    return out["cont_value"]


def invert_salary_utility(target, omega, sigma):
    """Solve u1(M) = target for M; raises when no positive salary works.

    For sigma > 1, u1 ranges over (-inf, 0); for sigma < 1 over (0, inf).
    A target outside the range means the offer is too punishing for any
    positive salary to restore indifference.
    """
    target = np.asarray(target, dtype=float)
    bad = (target >= 0) if sigma > 1 else (target <= 0)
    if np.any(bad):
        raise UnboundedCompensationError(
            "no positive salary achieves indifference (salary utility range exceeded)"
        )
    m = ((1.0 - sigma) * target / omega) ** (1.0 / (1.0 - sigma))
    return float(m) if m.ndim == 0 else m


def indifference_salary(
    c: ContractState,
    a: Attributes,
    p: PreferenceParams,
    cal: Calibration,
    offer: Offer,
) -> float:
    """Salary making the researcher indifferent between contract and offer."""
    if offer.d_tilde >= cal.h_max:
        raise ValidationError("offer duties must stay below the hours cap")
    if offer.g_tilde == c.guaranteed_funding and offer.d_tilde == c.duties:
        return c.salary  # identical problem, identical salary
    base = continuation_value(
        np.array([c.guaranteed_funding]), np.array([c.duties]), a, p, cal
    )[0]
    alt = continuation_value(
        np.array([offer.g_tilde]), np.array([offer.d_tilde]), a, p, cal
    )[0]
    u1_target = (
        p.income_weight * c.salary ** (1.0 - p.income_curvature) / (1.0 - p.income_curvature)
        + base
        - alt
    )
    return float(invert_salary_utility(u1_target, p.income_weight, p.income_curvature))


def _report(c: ContractState, offer: Offer, m_tilde: float) -> WtpReport:
    wtp = c.salary - m_tilde
    per_dollar = None
    per_hour = None
    dG = offer.g_tilde - c.guaranteed_funding
    dD = offer.d_tilde - c.duties
    if dG != 0.0:
        per_dollar = wtp / dG
    if dD != 0.0:
        per_hour = wtp / (-dD)  # dollars per hour of duty relief
    return WtpReport(offer.label, m_tilde, wtp, per_dollar, per_hour)


def run_thought_experiments(
    c: ContractState, a: Attributes, p: PreferenceParams, cal: Calibration
):
    """WtpReports for the four offers; the duty-elimination slot is None at D=0."""
    reports = []
    for offer in thought_experiment_offers(c, cal):
        if offer is None:
            reports.append(None)
            continue
        m_tilde = indifference_salary(c, a, p, cal, offer)
        reports.append(_report(c, offer, m_tilde))
    return reports


def predict_indifference_batch(
    M, G, D, alpha, gamma, phi, omega, sigma, eta, psi, xi, zeta, cal: Calibration
):
    """Model-predicted indifference salaries for the four offers, vectorized.

    Returns (salaries, failed): salaries is (N, 4) with NaN in column 3 for
    researchers without duties; failed marks researchers for whom any
    required prediction is impossible (no positive salary restores
    indifference, or non-finite values appeared).
    """
    M, G, D, alpha, gamma, phi, omega, sigma, eta, psi, xi, zeta = np.broadcast_arrays(
        *(
            np.asarray(x, dtype=float)
            for x in (M, G, D, alpha, gamma, phi, omega, sigma, eta, psi, xi, zeta)
        )
    )
    n = M.shape[0]

    def cont(g, d):
        return solve_policy_batch(g, d, alpha, gamma, phi, eta, psi, xi, zeta, cal)[
            "cont_value"
        ]

    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        c0 = cont(G, D)
        u1_base = omega * M ** (1.0 - sigma) / (1.0 - sigma)

        offers = [
            (G + 250_000.0, D),
            (G + 1_000_000.0, D),
            (G, np.zeros_like(D)),
            (G, D + 20.0 * MONTHLY_TO_WEEKLY),
        ]
        out = np.full((n, 4), np.nan)
        failed = np.zeros(n, dtype=bool)
        skip3 = D == 0.0
        for j, (g_j, d_j) in enumerate(offers):
            d_bad = d_j >= cal.h_max
            d_safe = np.where(d_bad, 0.5 * cal.h_max, d_j)
            cj = cont(g_j, d_safe)
            target = u1_base + c0 - cj
            ok = np.where(sigma > 1, target < 0, target > 0) & ~d_bad
            safe_target = np.where(ok, target, np.where(sigma > 1, -1.0, 1.0))
            m = ((1.0 - sigma) * safe_target / omega) ** (1.0 / (1.0 - sigma))
            m = np.where(ok, m, np.nan)
            good = ok & np.isfinite(m)
            if j == 2:
                out[:, j] = np.where(skip3, np.nan, m)
                failed |= ~skip3 & ~good
            else:
                out[:, j] = m
                failed |= ~good
    return out, failed
