"""Controller design: worst-case plant bounds in, gain and sampling period out.

The chain is fully explicit. Given the funnel constants, a bound on the
reference acceleration, and worst-case bounds (f_max, g_max, g_min) on the
plant drift and input gain over the operating set, it produces the feedback
gain beta and the largest sampling period tau_max for which the sampled
feedback provably keeps the weighted error inside the funnel. Every
intermediate constant is kept on the result so certificates and reports can
show the whole derivation.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleDesign
from .signals import Funnel, FunnelNorms, GainMap, Reference, ReciprocalGain


@dataclass(frozen=True)
class WorstCaseBounds:
    """Bounds on the plant over the closed-loop operating set.

    f_max bounds the drift norm, g_max the gain norm, and g_min the smallest
    eigenvalue of the symmetrized gain (strict positivity is the high-gain
    controllability assumption).
    """

    f_max: float
    g_max: float
    g_min: float

    def __post_init__(self):
        if not (self.f_max >= 0):
            raise ValueError(f"f_max must be nonnegative, got {self.f_max}")
        if not (0 < self.g_min <= self.g_max):
            raise ValueError(
                f"gain bounds must satisfy 0 < g_min <= g_max, got g_min={self.g_min} g_max={self.g_max}"
            )


@dataclass(frozen=True)
class DesignParameters:
    """Complete constant block produced by derive_design_parameters.

    xi        root of alpha(x^2)*x = 1 + ratio in (0,1)
    eps1      bound on the weighted error norm (max of initial value and xi)
    gamma_bar coupling constant from the weighted-error dynamics
    kappa0    bound on the error-rate drift
    eps_hat   bound on the tracking-error derivative norm
    e_hat     bound on the sampled surrogate signal norm
    beta      feedback gain (formula value times beta_margin, unless overridden)
    f_tilde   half-bound on the closed-loop output acceleration
    kappa1    error-rate drift bound including the feedback term
    tau_max   largest provably safe sampling period (min of tau_terms)

    The ingredients (funnel constants, plant bounds, reference acceleration
    bound, margins) are retained so the derivation can be replayed.
    """

    xi: float
    eps1: float
    gamma_bar: float
    kappa0: float
    eps_hat: float
    e_hat: float
    beta: float
    f_tilde: float
    kappa1: float
    lam: float
    tau_max: float
    tau_terms: tuple
    m_phi: float
    inf_phi: float
    sup_phi: float
    ratio: float
    f_max: float
    g_max: float
    g_min: float
    yref_acc_bound: float
    e1_initial_norm: float
    beta_margin: float
    beta_overridden: bool


def solve_xi(gain: GainMap, ratio: float) -> float:
    """Root of alpha(x^2)*x = 1 + ratio over (0,1), by bisection.

    The left side is strictly increasing from 0 to infinity for any
    admissible gain map, so the root exists and is unique. Bisection runs to
    floating-point fixpoint, which lands within one ulp of the root.
    """
    if not (ratio >= 0 and np.isfinite(ratio)):
        raise ValueError(f"funnel ratio must be finite and nonnegative, got {ratio}")
    target = 1.0 + ratio

    def residual(x):
        a, _ = gain.eval(x * x)
        return a * x - target

    lo, hi = 0.0, 1.0 - 1e-16
    if residual(hi) <= 0:  # cannot happen for the reciprocal map; guard anyway
        raise ValueError("gain map too weak: no root below 1")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if residual(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(residual(lo)) <= abs(residual(hi)) else hi


def derive_design_parameters(
    norms: FunnelNorms,
    bounds: WorstCaseBounds,
    yref_acc_bound: float,
    e1_initial_norm: float = 0.0,
    lam: float = 0.7,
    gain: GainMap = ReciprocalGain(),
    beta_margin: float = 1.01,
    beta_override: float | None = None,
    allow_infeasible_tau: bool = False,
) -> DesignParameters:
    """Run the full constant chain and return the design block.

    beta defaults to beta_margin * 2 * m_phi * kappa0 / g_min; pass
    beta_override to study a hand-picked gain instead (tau_max may then be
    nonpositive, which raises unless allow_infeasible_tau is set).
    """
    if not (0 < lam < 1):
        raise ValueError(f"activation threshold lam must lie in (0,1), got {lam}")
    if not (beta_margin >= 1):
        raise ValueError(f"beta_margin must be >= 1, got {beta_margin}")
    if not (yref_acc_bound >= 0):
        raise ValueError(f"yref_acc_bound must be nonnegative, got {yref_acc_bound}")
    if not (0 <= e1_initial_norm):
        raise ValueError(f"e1_initial_norm must be nonnegative, got {e1_initial_norm}")

    xi = solve_xi(gain, norms.ratio)
    eps1 = max(e1_initial_norm, xi)
    if eps1 >= 1:
        raise InfeasibleDesign(
            f"initial weighted error norm {e1_initial_norm} is not strictly inside the funnel"
        )

    a_xi, _ = gain.eval(xi * xi)
    a_e1, a_e1_prime = gain.eval(eps1 * eps1)
    gamma_bar = (2.0 * a_e1_prime * eps1 * eps1 + a_e1) * (a_xi * xi + a_e1 * eps1)
    kappa0 = (
        norms.ratio * (1.0 + a_e1 * eps1)
        + norms.m_phi * (bounds.f_max + yref_acc_bound)
        + gamma_bar
    )
    eps_hat = norms.m_phi * (1.0 + a_e1 * eps1)
    e_hat = norms.m_phi * eps_hat + a_e1 * eps1

    if beta_override is None:
        beta = beta_margin * 2.0 * norms.m_phi * kappa0 / bounds.g_min
    else:
        if not (beta_override > 0):
            raise ValueError(f"beta must be positive, got {beta_override}")
        beta = float(beta_override)

    f_tilde = 0.5 * (bounds.f_max + bounds.g_max * norms.m_phi * beta / lam)
    kappa1 = kappa0 + norms.m_phi * beta * bounds.g_max

    t1 = (norms.inf_phi * bounds.g_min * beta - 2.0 * kappa0) / (
        norms.m_phi**2 * f_tilde * e_hat
    )
    t2 = kappa0 / (kappa1 * kappa1)
    t3 = (1.0 - lam) / (norms.m_phi * (f_tilde + bounds.g_max * lam) + kappa0)
    terms = (t1, t2, t3)
    tau_max = min(terms)
    if tau_max <= 0 and not allow_infeasible_tau:
        failing = [name for name, v in zip(("gain-surplus", "drift-rate", "threshold-gap"), terms) if v <= 0]
        raise InfeasibleDesign(
            "no positive sampling period: nonpositive tau term(s) " + ", ".join(failing)
            + f" (terms = {terms})",
            terms=terms,
        )

    return DesignParameters(
        xi=xi,
        eps1=eps1,
        gamma_bar=gamma_bar,
        kappa0=kappa0,
        eps_hat=eps_hat,
        e_hat=e_hat,
        beta=beta,
        f_tilde=f_tilde,
        kappa1=kappa1,
        lam=lam,
        tau_max=tau_max,
        tau_terms=terms,
        m_phi=norms.m_phi,
        inf_phi=norms.inf_phi,
        sup_phi=norms.sup_phi,
        ratio=norms.ratio,
        f_max=bounds.f_max,
        g_max=bounds.g_max,
        g_min=bounds.g_min,
        yref_acc_bound=yref_acc_bound,
        e1_initial_norm=e1_initial_norm,
        beta_margin=beta_margin,
        beta_overridden=beta_override is not None,
    )


@dataclass(frozen=True)
class TauBreakdown:
    """The three sampling-period candidates with the binding one marked."""

    labels: tuple
    values: tuple
    binding: int

    def render(self) -> str:
        lines = ["sampling-period candidates (tau_max = smallest):"]
        for i, (label, value) in enumerate(zip(self.labels, self.values)):
            mark = "  <- binding" if i == self.binding else ""
            lines.append(f"  {label:<14} {value:.6e}{mark}")
        return "\n".join(lines)


def explain_tau(params: DesignParameters) -> TauBreakdown:
    """Recompute the three tau candidates from the stored ingredients."""
    t1 = (params.inf_phi * params.g_min * params.beta - 2.0 * params.kappa0) / (
        params.m_phi**2 * params.f_tilde * params.e_hat
    )
    t2 = params.kappa0 / (params.kappa1 * params.kappa1)
    t3 = (1.0 - params.lam) / (
        params.m_phi * (params.f_tilde + params.g_max * params.lam) + params.kappa0
    )
    values = (t1, t2, t3)
    binding = int(np.argmin(values))
    return TauBreakdown(
        labels=("gain-surplus", "drift-rate", "threshold-gap"),
        values=values,
        binding=binding,
    )


def design_for_linear_plant(
    plant,
    reference: Reference,
    funnel: Funnel,
    lam: float = 0.7,
    gain: GainMap = ReciprocalGain(),
    beta_margin: float = 1.01,
    e1_initial_norm: float = 0.0,
    bounds_override: WorstCaseBounds | None = None,
    beta_override: float | None = None,
    allow_infeasible_tau: bool = False,
):
    """Full pipeline for a linear input/output plant.

    Computes the operating-set radii from the funnel and reference (the
    output stays within one funnel width of the reference, its derivative
    within eps_hat of the reference derivative), bounds the internal state
    through the converging-internal-dynamics estimate, and feeds the result
    into derive_design_parameters. The worst-case bounds end up in the
    returned block as f_max / g_max / g_min.
    """
    from .plant import bibs_state_bound, worst_case_bounds  # local import, avoids a cycle

    norms = funnel.norms()
    y_bound, yd_bound, ydd_bound = reference.bounds()

    if bounds_override is None:
        xi = solve_xi(gain, norms.ratio)
        eps1 = max(e1_initial_norm, xi)
        if eps1 >= 1:
            raise InfeasibleDesign(
                f"initial weighted error norm {e1_initial_norm} is not strictly inside the funnel"
            )
        a_e1, _ = gain.eval(eps1 * eps1)
        eps_hat = norms.m_phi * (1.0 + a_e1 * eps1)
        y_set = y_bound + 1.0 / norms.inf_phi
        yd_set = yd_bound + eps_hat
        h_bound = bibs_state_bound(plant.Q, plant.P, plant.eta0, y_set)
        bounds = worst_case_bounds(plant, y_set, yd_set, h_bound)
    else:
        bounds = bounds_override

    params = derive_design_parameters(
        norms,
        bounds,
        ydd_bound,
        e1_initial_norm=e1_initial_norm,
        lam=lam,
        gain=gain,
        beta_margin=beta_margin,
        beta_override=beta_override,
        allow_infeasible_tau=allow_infeasible_tau,
    )
    return params
