"""The sampled high-gain feedback law and its auxiliary error signals.

Two variants share one switching map. The derivative-based law feeds it the
composite error e2 = phi*e' + alpha(||e1||^2)*e1, which needs the output
derivative. The derivative-free law replaces phi*e' by a backward difference
of the sampled error, so it needs only output samples; the substitution
costs an O(tau) perturbation that the design constants absorb.

The input produced by either variant is bounded by beta/lam by construction:
below the activation threshold the law is linear, above it the gain is
scaled down by the squared signal norm.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import FunnelViolation
from .signals import GainMap, ReciprocalGain


class Variant(enum.Enum):
    DERIVATIVE_FREE = "free"
    DERIVATIVE_BASED = "deriv"


@dataclass(frozen=True)
class ControlLawConfig:
    beta: float
    lam: float
    gain: GainMap = ReciprocalGain()
    variant: Variant = Variant.DERIVATIVE_FREE

    def __post_init__(self):
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError(f"controller.beta must be positive and finite, got {self.beta}")
        if not (0 < self.lam < 1):
            raise ValueError(f"controller.lam must lie in (0,1), got {self.lam}")
        if not isinstance(self.variant, Variant):
            object.__setattr__(self, "variant", Variant(self.variant))


@dataclass(frozen=True)
class ControllerState:
    """Sampler memory: the previous sampled error and the held input.

    The initial history pins y(-tau) to the reference, so the seed error is
    zero and the input held before the first sample is zero as well.
    """

    prev_sample_error: np.ndarray
    held_input: np.ndarray
    k: int
    tau: float

    @classmethod
    def initial(cls, output_dim: int, tau: float) -> "ControllerState":
        if not (tau > 0):
            raise ValueError(f"sampling period tau must be positive, got {tau}")
        return cls(
            prev_sample_error=np.zeros(output_dim),
            held_input=np.zeros(output_dim),
            k=0,
            tau=tau,
        )


def weighted_error(e, phi):
    """Funnel-weighted tracking error e1 = phi * e."""
    return phi * np.asarray(e, dtype=float)


def composite_error(e, e_dot, phi, gain: GainMap = ReciprocalGain()):
    """e2 = phi*e_dot + alpha(||e1||^2)*e1; requires the error derivative."""
    e1 = weighted_error(e, phi)
    n2 = float(e1 @ e1)
    alpha, _ = gain.eval(n2)
    return phi * np.asarray(e_dot, dtype=float) + alpha * e1


def difference_surrogate(e_now, e_prev, phi, tau, gain: GainMap = ReciprocalGain()):
    """Backward-difference stand-in for the composite error.

    Replaces phi*e' by phi*(e(t_k) - e(t_k - tau))/tau; by the mean value
    theorem the two differ by tau/2 times the error acceleration somewhere
    in the last sampling interval.
    """
    if not (tau > 0):
        raise ValueError(f"sampling period tau must be positive, got {tau}")
    e_now = np.asarray(e_now, dtype=float)
    e_prev = np.asarray(e_prev, dtype=float)
    e1 = weighted_error(e_now, phi)
    n2 = float(e1 @ e1)
    alpha, _ = gain.eval(n2)
    return phi * (e_now - e_prev) / tau + alpha * e1


def feedback_law(signal, beta: float, lam: float):
    """Two-branch high-gain map: u = -beta*v below the threshold, scaled by
    1/||v||^2 at or above it. The tie ||v|| = lam takes the scaled branch,
    so ||u|| <= beta/lam always."""
    v = np.asarray(signal, dtype=float)
    n = float(np.linalg.norm(v))
    if n < lam:
        return -beta * v
    return -beta * v / (n * n)


def controller_step(
    state: ControllerState,
    y_k,
    ydot_k,
    yref_k,
    phi_k: float,
    cfg: ControlLawConfig,
    ydotref_k=None,
    t_k: float | None = None,
):
    """One sampling instant: compute the held input and advance the memory.

    The derivative-free variant must be called with ydot_k = None; passing a
    derivative sample to it is rejected, which is what makes the
    derivative-free claim structural rather than conventional. The
    derivative-based variant requires both ydot_k and ydotref_k.

    Raises FunnelViolation if the weighted error has reached the funnel
    boundary at this instant.
    """
    y_k = np.asarray(y_k, dtype=float)
    yref_k = np.asarray(yref_k, dtype=float)
    e_k = y_k - yref_k

    e1 = weighted_error(e_k, phi_k)
    n2 = float(e1 @ e1)
    if n2 >= 1.0 or not np.isfinite(n2):
        at = f" at t = {t_k:.6g}" if t_k is not None else ""
        raise FunnelViolation(
            f"weighted error norm {np.sqrt(max(n2, 0.0)):.6g} reached the funnel boundary{at}"
            " (no guarantee applies; widen the funnel, raise beta, or shrink tau)",
            time=t_k,
        )

    if cfg.variant is Variant.DERIVATIVE_FREE:
        if ydot_k is not None:
            raise ValueError(
                "derivative sample passed to the derivative-free law; this variant only sees outputs"
            )
        signal = difference_surrogate(e_k, state.prev_sample_error, phi_k, state.tau, cfg.gain)
    else:
        if ydot_k is None or ydotref_k is None:
            raise ValueError(
                "derivative-based law needs ydot_k and ydotref_k at every sampling instant"
            )
        e_dot_k = np.asarray(ydot_k, dtype=float) - np.asarray(ydotref_k, dtype=float)
        signal = composite_error(e_k, e_dot_k, phi_k, cfg.gain)

    u = feedback_law(signal, cfg.beta, cfg.lam)
    new_state = replace(state, prev_sample_error=e_k, held_input=u, k=state.k + 1)
    return u, new_state


def error_series(t, y, y_dot, funnel, reference, gain: GainMap = ReciprocalGain()):
    """Vectorized error signals along a recorded trajectory.

    Returns (e, e1_norm, e2, e2_norm) with e2 rows NaN wherever the weighted
    error is outside the funnel (the gain map is undefined there).
    """
    t = np.asarray(t, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    y_dot = np.atleast_2d(np.asarray(y_dot, dtype=float))
    yr, ydr, _ = reference.eval(t)
    phi, _ = funnel.eval(t)
    e = y - yr
    e1 = phi[:, None] * e
    e1_norm = np.linalg.norm(e1, axis=1)
    e2 = np.full_like(e, np.nan)
    ok = e1_norm < 1.0
    if np.any(ok):
        alpha, _ = gain.eval(e1_norm[ok] ** 2)
        e2[ok] = phi[ok, None] * (y_dot[ok] - ydr[ok]) + np.asarray(alpha)[:, None] * e1[ok]
    e2_norm = np.linalg.norm(e2, axis=1)
    return e, e1_norm, e2, e2_norm
