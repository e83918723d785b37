import numpy as np
import pytest

from sciprod.core import Attributes, Calibration, ContractState, PreferenceParams
from sciprod.datasets import Population
from sciprod.policy import alpha_from_margins, branch_allocation
from sciprod.typeindex import DeepParams, preference_arrays_from_type
from sciprod.wtp import predict_indifference_batch


@pytest.fixture(scope="session")
def cal():
    return Calibration()


@pytest.fixture(scope="session")
def homog_prefs():
    # homogeneous utility-parameter point used across the suite
    return PreferenceParams(
        income_weight=2.7e-4,
        income_curvature=1.736,
        output_curvature=0.1878,
        effort_weight=1.0e-14,
        duty_penalty_exponent=1.469,
        effort_curvature=5.2e-12,
    )


@pytest.fixture(scope="session")
def researcher_e1():
    contract = ContractState(salary=100_000.0, guaranteed_funding=50_000.0, duties=10.0)
    attrs = Attributes(tfp=1.0, funding_intensity=0.4, fundraising_ability=5_000.0)
    return contract, attrs


def random_preferences(rng):
    """Preference draw on scales where policies are interior at alpha ~ O(1)."""
    return PreferenceParams(
        income_weight=float(rng.uniform(0.05, 5.0)),
        income_curvature=float(rng.choice([rng.uniform(0.2, 0.9), rng.uniform(1.1, 2.5)])),
        output_curvature=float(rng.uniform(0.05, 0.9)),
        effort_weight=float(rng.uniform(0.2, 2.0)),
        duty_penalty_exponent=float(rng.uniform(0.6, 1.5)),
        effort_curvature=float(rng.uniform(0.5, 3.0)),
    )


DEEP_TEST = DeepParams(
    income_weight=2.7e-4,
    effort_weight=1.0e-14,
    sigma_intercept=float(np.log(1.736)),
    sigma_slope=0.0,
    eta_intercept=float(np.log(0.1878 / 0.8122)),
    eta_slope=0.0,
    xi_intercept=float(np.log(1.469)),
    xi_slope=0.0,
    zeta_intercept=float(np.log(3.0)),
    zeta_slope=0.0,
)


def make_consistent_population(n, seed, cal, deep=DEEP_TEST, zero_share=0.3,
                               d_zero_prob=0.15, with_answers=True):
    """Model-consistent population built by inverting the hours FOC.

    Target hours are drawn first and alpha is backed out from the FOC at
    the implied allocation, so observed (H, F, R) are exactly optimal and
    EG = phi * F by construction.  Researchers whose offers admit no
    indifference salary are re-drawn (up to 100 rounds).
    """
    rng = np.random.default_rng(seed)
    T = rng.standard_normal(n)
    omega, sigma, eta, xi, zeta, psi = preference_arrays_from_type(T, deep)

    cols = {}
    redraw = np.ones(n, dtype=bool)
    for _ in range(100):
        k = int(redraw.sum())
        if k == 0:
            break
        M = rng.lognormal(np.log(9e4), 0.4, k)
        G = np.where(rng.random(k) < 0.25, 0.0, rng.lognormal(np.log(4e4), 1.0, k))
        D = np.where(rng.random(k) < d_zero_prob, 0.0, rng.uniform(2.0, 25.0, k))
        gamma = rng.uniform(0.15, 0.75, k)
        H = rng.uniform(D + 3.0, cal.h_max - 5.0, k)
        want_zero = rng.random(k) < zero_share
        bound = (1 - gamma) * (cal.b_min + G) / (gamma * (H - D))
        low = 1.0 + rng.random(k) * np.maximum(0.9 * bound - 1.0, 0.0)
        high = np.maximum(bound * (1.0 + rng.uniform(0.1, 2.0, k)), 1.0 + 1e-6)
        phi = np.where(want_zero, low, high)
        right = phi > bound
        B, R, F = branch_allocation(H, right, G, D, gamma, phi, cal.b_min)
        e, p_, x_, z_ = eta[redraw], psi[redraw], xi[redraw], zeta[redraw]
        alpha = alpha_from_margins(B, R, H, D, gamma, e, p_, x_, z_)
        for name, val in (("M", M), ("G", G), ("D", D), ("gamma", gamma), ("H", H),
                          ("phi", phi), ("B", B), ("R", R), ("F", F), ("alpha", alpha)):
            cols.setdefault(name, np.zeros(n))
            cols[name][redraw] = val
        if not with_answers:
            redraw[:] = False
            break
        answers, failed = predict_indifference_batch(
            cols["M"], cols["G"], cols["D"], cols["alpha"], cols["gamma"], cols["phi"],
            omega, sigma, eta, psi, xi, zeta, cal,
        )
        redraw = failed
    else:
        raise RuntimeError("could not draw an answerable population in 100 rounds")

    if with_answers:
        answers, failed = predict_indifference_batch(
            cols["M"], cols["G"], cols["D"], cols["alpha"], cols["gamma"], cols["phi"],
            omega, sigma, eta, psi, xi, zeta, cal,
        )
        assert not failed.any()
    else:
        answers = np.full((n, 4), np.nan)

    pop = Population(
        ids=np.array([f"r{i:05d}" for i in range(n)]),
        field_label=np.array(["field_a"] * n),
        M=cols["M"],
        G=cols["G"],
        D=cols["D"],
        H=cols["H"],
        F=cols["F"],
        R=cols["R"],
        EG=cols["phi"] * cols["F"],
        answers=answers,
        features=rng.standard_normal((n, 3)),
        T=T,
    )
    truth = {
        "alpha": cols["alpha"],
        "gamma": cols["gamma"],
        "phi": cols["phi"],
        "eta": eta,
        "psi": psi,
        "xi": xi,
        "zeta": zeta,
        "omega": omega,
        "sigma": sigma,
    }
    return pop, truth


def random_case(rng, cal, interior_bias=False):
    """One random researcher (contract, attributes, preferences).

    With interior_bias, alpha is scaled so the hours solution tends to be
    interior rather than at H_max.
    """
    contract = ContractState(
        salary=float(rng.uniform(4e4, 3e5)),
        guaranteed_funding=float(rng.uniform(0.0, 4e5)),
        duties=float(rng.uniform(0.0, 25.0)),
    )
    prefs = random_preferences(rng)
    alpha = float(rng.lognormal(-2.0 if interior_bias else 0.0, 1.0))
    attrs = Attributes(
        tfp=alpha,
        funding_intensity=float(rng.uniform(0.05, 0.95)),
        fundraising_ability=float(rng.uniform(1.0, 4e4)),
    )
    return contract, attrs, prefs
