"""Domain types and pure model primitives.

Money is measured in dollars per year, time in hours per week, and
fundraising ability in (dollars/year) per (hour/week).  Everything here is
side-effect free and accepts floats or numpy arrays interchangeably.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError

__all__ = [
    "Calibration",
    "ContractState",
    "Attributes",
    "PreferenceParams",
    "TimeAllocation",
    "ResearcherRecord",
    "total_budget",
    "production_output",
    "utility",
    "salary_utility",
    "output_utility",
    "effort_disutility",
    "social_value",
]


@dataclass(frozen=True)
class Calibration:
    """Calibrated constants: minimum funding, hours cap, externality multiplier."""

    b_min: float = 5_000.0
    h_max: float = 62.0
    kappa: float = 10.0

    def __post_init__(self):
        if not self.b_min > 0:
            raise ValidationError(f"b_min must be positive, got {self.b_min}")
        if not self.h_max > 0:
            raise ValidationError(f"h_max must be positive, got {self.h_max}")
        if not self.kappa >= 1:
            raise ValidationError(f"kappa must be >= 1, got {self.kappa}")


@dataclass(frozen=True)
class ContractState:
    """Institutional contract: salary M, guaranteed funding G, duties D."""

    salary: float
    guaranteed_funding: float
    duties: float

    def __post_init__(self):
        if not self.salary > 0:
            raise ValidationError(f"salary must be positive, got {self.salary}")
        if self.guaranteed_funding < 0:
            raise ValidationError(
                f"guaranteed_funding must be >= 0, got {self.guaranteed_funding}"
            )
        if self.duties < 0:
            raise ValidationError(f"duties must be >= 0, got {self.duties}")


@dataclass(frozen=True)
class Attributes:
    """Production-side attributes: TFP, funding intensity, fundraising ability."""

    tfp: float
    funding_intensity: float
    fundraising_ability: float

    def __post_init__(self):
        if not self.tfp > 0:
            raise ValidationError(f"tfp must be positive, got {self.tfp}")
        if not 0.0 < self.funding_intensity < 1.0:
            raise ValidationError(
                f"funding_intensity must lie in (0,1), got {self.funding_intensity}"
            )
        if not self.fundraising_ability >= 1.0:
            raise ValidationError(
                f"fundraising_ability must be >= 1, got {self.fundraising_ability}"
            )


@dataclass(frozen=True)
class PreferenceParams:
    """Utility parameters (omega, sigma, eta, psi, xi, zeta).

    sigma = 1 (the log case) is rejected: the functional forms used
    throughout are the pure power cases.
    """

    income_weight: float
    income_curvature: float
    output_curvature: float
    effort_weight: float
    duty_penalty_exponent: float
    effort_curvature: float

    def __post_init__(self):
        if not self.income_weight > 0:
            raise ValidationError(f"income_weight must be > 0, got {self.income_weight}")
        if not self.income_curvature > 0 or self.income_curvature == 1.0:
            raise ValidationError(
                f"income_curvature must be > 0 and != 1, got {self.income_curvature}"
            )
        if not 0.0 < self.output_curvature < 1.0:
            raise ValidationError(
                f"output_curvature must lie in (0,1), got {self.output_curvature}"
            )
        if not self.effort_weight > 0:
            raise ValidationError(f"effort_weight must be > 0, got {self.effort_weight}")
        if not self.duty_penalty_exponent > 0:
            raise ValidationError(
                f"duty_penalty_exponent must be > 0, got {self.duty_penalty_exponent}"
            )
        if not self.effort_curvature > 0:
            raise ValidationError(
                f"effort_curvature must be > 0, got {self.effort_curvature}"
            )


@dataclass(frozen=True)
class TimeAllocation:
    """Weekly time split (research, fundraising, total hours)."""

    research: float
    fundraising: float
    total_hours: float

    def validate(self, duties: float, h_max: float):
        if not self.research > 0:
            raise ValidationError(f"research time must be > 0, got {self.research}")
        if self.fundraising < 0:
            raise ValidationError(
                f"fundraising time must be >= 0, got {self.fundraising}"
            )
        if abs(self.research + self.fundraising + duties - self.total_hours) > 1e-6:
            raise ValidationError(
                "time allocation inconsistent: R + F + D != H "
                f"({self.research} + {self.fundraising} + {duties} != {self.total_hours})"
            )
        if not duties < self.total_hours <= h_max + 1e-9:
            raise ValidationError(
                f"hours must satisfy D < H <= H_max, got H={self.total_hours}"
            )


@dataclass
class ResearcherRecord:
    """One producer: contract, observed allocation, WTP answers, features."""

    id: str
    field_label: str
    contract: ContractState
    allocation: Optional[TimeAllocation] = None
    expected_extra_funding: float = 0.0
    wtp_answers: Optional[list] = None  # four entries; entry 3 may be None when D=0
    features: Optional[np.ndarray] = None
    type_index: Optional[float] = None

    def validate(self, cal: Calibration):
        if self.allocation is not None:
            self.allocation.validate(self.contract.duties, cal.h_max)
            if self.expected_extra_funding > 0 and self.allocation.fundraising <= 0:
                raise ValidationError(
                    f"researcher {self.id}: EG > 0 requires F > 0 at ingestion"
                )
        if self.expected_extra_funding < 0:
            raise ValidationError(
                f"researcher {self.id}: expected_extra_funding must be >= 0"
            )
        if self.wtp_answers is not None:
            for j, ans in enumerate(self.wtp_answers):
                if ans is not None and not ans > 0:
                    raise ValidationError(
                        f"researcher {self.id}: wtp answer {j + 1} must be positive"
                    )


def total_budget(c: ContractState, fundraising, ability, cal: Calibration):
    """Total research funding B = B_min + G + phi * F."""
    return cal.b_min + c.guaranteed_funding + ability * fundraising


def production_output(a: Attributes, budget, research):
    """Cobb-Douglas output Y = alpha * B^gamma * R^(1-gamma)."""
    budget = np.asarray(budget, dtype=float)
    research = np.asarray(research, dtype=float)
    if np.any(budget <= 0) or np.any(research <= 0):
        raise ValidationError("production requires B > 0 and R > 0")
    g = a.funding_intensity
    out = a.tfp * budget**g * research ** (1.0 - g)
    return float(out) if out.ndim == 0 else out


def salary_utility(salary, p: PreferenceParams):
    """u1(M) = omega * M^(1-sigma) / (1-sigma)."""
    s = p.income_curvature
    return p.income_weight * np.asarray(salary, dtype=float) ** (1.0 - s) / (1.0 - s)


def output_utility(output, p: PreferenceParams):
    """u2(Y) = Y^(1-eta) / (1-eta)."""
    e = p.output_curvature
    return np.asarray(output, dtype=float) ** (1.0 - e) / (1.0 - e)


def effort_disutility(research, fundraising, duties, p: PreferenceParams):
    """u3(R,F,D) = psi * (R + F + D^xi)^(1+zeta) / (1+zeta)."""
    base = (
        np.asarray(research, dtype=float)
        + np.asarray(fundraising, dtype=float)
        + np.asarray(duties, dtype=float) ** p.duty_penalty_exponent
    )
    z = p.effort_curvature
    return p.effort_weight * base ** (1.0 + z) / (1.0 + z)


def utility(salary, output, research, fundraising, duties, p: PreferenceParams):
    """Flow utility u1(M) + u2(Y) - u3(R,F,D)."""
    salary = np.asarray(salary, dtype=float)
    output = np.asarray(output, dtype=float)
    if np.any(salary <= 0):
        raise ValidationError("utility requires M > 0")
    if np.any(output <= 0):
        raise ValidationError("utility requires Y > 0")
    val = (
        salary_utility(salary, p)
        + output_utility(output, p)
        - effort_disutility(research, fundraising, duties, p)
    )
    return float(val) if np.ndim(val) == 0 else val


def social_value(salary, output, research, fundraising, duties, p: PreferenceParams, kappa):
    """Social flow value: u1(M) + kappa * u2(Y*) - u3(R*,F*,D).

    Evaluated at privately optimal allocations; kappa = 1 recovers private
    utility exactly.
    """
    if np.any(np.asarray(kappa) < 1.0):
        raise ValidationError("kappa must be >= 1")
    val = (
        salary_utility(salary, p)
        + kappa * output_utility(output, p)
        - effort_disutility(research, fundraising, duties, p)
    )
    return float(val) if np.ndim(val) == 0 else val
