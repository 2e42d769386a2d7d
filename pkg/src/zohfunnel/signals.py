"""Performance funnels, reference trajectories, and the error-to-gain map.

A funnel prescribes the tracking tolerance: the controller must keep
phi(t) * ||e(t)|| < 1 for all t >= 0, where phi is the reciprocal of the
instantaneous error tolerance (the funnel width). All funnels here are
bounded with bounded derivative and strictly positive infimum, and are
extended constantly to t < 0 to cover the initial history interval.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import FunnelViolation


def _scalarize(t, *values):
    # scalar in -> floats out; array in -> arrays out
    if np.ndim(t) == 0:
        return tuple(float(v) for v in values)
    return values


@dataclass(frozen=True)
class FunnelNorms:
    """Closed-form constants of a funnel consumed by the controller design.

    ratio bounds |phi_dot/phi| over t >= 0. m_phi = max(sup_phi, 1/inf_phi)
    is the conservative weight used wherever the design formulas need a
    uniform bound on the funnel; it is >= 1 for every admissible funnel.
    """

    sup_phi: float
    inf_phi: float
    ratio: float
    m_phi: float


class Funnel:
    """Base class: reciprocal tolerance phi with constant extension to t < 0."""

    def eval(self, t):
        """Return (phi(t), phi_dot(t)). Accepts scalars or arrays."""
        raise NotImplementedError

    def norms(self) -> FunnelNorms:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantFunnel(Funnel):
    """Fixed tolerance: phi(t) = 1/width."""

    width: float

    def __post_init__(self):
        if not (self.width > 0 and np.isfinite(self.width)):
            raise ValueError(f"funnel width must be positive and finite, got {self.width}")

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        phi = np.full(t.shape, 1.0 / self.width)
        return _scalarize(t, phi, np.zeros(t.shape))

    def norms(self) -> FunnelNorms:
        phi = 1.0 / self.width
        return FunnelNorms(sup_phi=phi, inf_phi=phi, ratio=0.0,
                           m_phi=max(phi, self.width))


@dataclass(frozen=True)
class ExponentialFunnel(Funnel):
    """Shrinking tolerance: width(t) = a*exp(-b*t) + c, so phi = 1/width.

    a = 0 or b = 0 degenerates to a constant funnel. c > 0 keeps the
    infimum of the width positive (phi bounded).
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ValueError(f"funnel terminal width c must be positive, got {self.c}")
        if self.a < 0 or self.b < 0:
            raise ValueError(f"funnel parameters a, b must be nonnegative, got a={self.a} b={self.b}")

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 0.0)  # constant extension over the history interval
        decay = self.a * np.exp(-self.b * tt)
        width = decay + self.c
        phi = 1.0 / width
        phi_dot = np.where(t < 0, 0.0, self.b * decay / (width * width))
        return _scalarize(t, phi, phi_dot)

    def norms(self) -> FunnelNorms:
        # width decreases from a+c to c, so phi rises from 1/(a+c) to 1/c;
        # phi_dot/phi = b*decay/width is maximal at t = 0.
        sup_phi = 1.0 / self.c
        inf_phi = 1.0 / (self.a + self.c)
        ratio = self.a * self.b / (self.a + self.c)
        return FunnelNorms(sup_phi=sup_phi, inf_phi=inf_phi, ratio=ratio,
                           m_phi=max(sup_phi, self.a + self.c))


class Reference:
    """Base class for reference trajectories with two derivatives."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def eval(self, t):
        """Return (y_ref, yd_ref, ydd_ref), each shaped (..., dim)."""
        raise NotImplementedError

    def bounds(self):
        """Conservative sup-norm bounds (||y_ref||, ||yd_ref||, ||ydd_ref||)."""
        raise NotImplementedError


def _as_channels(channels):
    out = []
    for ch in channels:
        terms = tuple((float(a), float(w), float(p)) for a, w, p in ch)
        out.append(terms)
    return tuple(out)


@dataclass(frozen=True)
class SinusoidReference(Reference):
    """Per output channel a finite sum of amplitude*sin(omega*t + phase) terms."""

    channels: tuple

    def __post_init__(self):
        object.__setattr__(self, "channels", _as_channels(self.channels))
        if len(self.channels) == 0:
            raise ValueError("reference needs at least one output channel")

    @property
    def dim(self) -> int:
        return len(self.channels)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        shape = t.shape + (self.dim,)
        y = np.zeros(shape)
        yd = np.zeros(shape)
        ydd = np.zeros(shape)
        for i, terms in enumerate(self.channels):
            for amp, omega, phase in terms:
                arg = omega * t + phase
                y[..., i] += amp * np.sin(arg)
                yd[..., i] += amp * omega * np.cos(arg)
                ydd[..., i] += -amp * omega * omega * np.sin(arg)
        return y, yd, ydd

    def bounds(self):
        # per-channel amplitude sums, combined as a Euclidean bound; exact for
        # single-term channels, conservative otherwise (the safe direction)
        per = np.array([[sum(abs(a) for a, w, p in terms),
                         sum(abs(a * w) for a, w, p in terms),
                         sum(abs(a * w * w) for a, w, p in terms)]
                        for terms in self.channels])
        return tuple(float(np.linalg.norm(per[:, j])) for j in range(3))


@dataclass(frozen=True)
class ConstantReference(Reference):
    """Set-point reference: y_ref(t) = values, derivatives zero."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) == 0:
            raise ValueError("reference needs at least one output channel")

    @property
    def dim(self) -> int:
        return len(self.values)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        shape = t.shape + (self.dim,)
        y = np.broadcast_to(np.array(self.values), shape).copy()
        return y, np.zeros(shape), np.zeros(shape)

    def bounds(self):
        return float(np.linalg.norm(self.values)), 0.0, 0.0


class GainMap:
    """Bijection [0,1) -> [1,inf) weighting the funnel-normalized error."""

    def eval(self, s):
        """Return (alpha(s), alpha'(s)). Raises FunnelViolation for s >= 1."""
        raise NotImplementedError


@dataclass(frozen=True)
class ReciprocalGain(GainMap):
    """alpha(s) = 1/(1-s): blows up as the weighted error approaches the funnel."""

    def eval(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0) or np.any(s >= 1) or not np.all(np.isfinite(s)):
            raise FunnelViolation(
                "gain map evaluated outside [0,1): the weighted error has reached the funnel boundary"
            )
        alpha = 1.0 / (1.0 - s)
        return _scalarize(s, alpha, alpha * alpha)
