"""Plant models: relative-degree-two systems with convergent internal dynamics.

The controlled class is

    y''  = f(d, y, y', eta) + g(d, y, y', eta) u,
    eta' = h(eta, y, y'),

with g strictly positive definite (symmetrized) and internal dynamics that
stay bounded for bounded (y, y'). LinearIOPlant is the matrix instance of
this class and the one the compiled simulation kernel accelerates.
"""

import abc
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .design import WorstCaseBounds


class PlantModel(abc.ABC):
    """Behavioral interface the simulator integrates against."""

    @property
    @abc.abstractmethod
    def output_dim(self) -> int: ...

    @property
    @abc.abstractmethod
    def internal_dim(self) -> int: ...

    @property
    def disturbance_dim(self) -> int:
        return 0

    @property
    @abc.abstractmethod
    def eta0(self) -> np.ndarray: ...

    @abc.abstractmethod
    def drift(self, d, y, y_dot, eta) -> np.ndarray: ...

    @abc.abstractmethod
    def gain(self, d, y, y_dot, eta) -> np.ndarray: ...

    @abc.abstractmethod
    def internal(self, eta, y, y_dot) -> np.ndarray: ...

    def disturbance(self, t) -> np.ndarray:
        return np.zeros(0)


def spectral_norm(a: np.ndarray) -> float:
    """Largest singular value via a symmetric eigensolve on a^T a."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    w = np.linalg.eigvalsh(a.T @ a)
    return float(np.sqrt(max(w[-1], 0.0)))


def _mat(a, rows, cols, name):
    m = np.ascontiguousarray(np.asarray(a, dtype=float).reshape(rows, cols))
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True, eq=False)
class LinearIOPlant(PlantModel):
    """y'' = R0 y + R1 y' + S eta + Gamma u,  eta' = Q eta + P y.

    Q must be Hurwitz (convergent internal dynamics) and the symmetric part
    of Gamma positive definite (sign-definite controllability). Both are
    checked at construction.
    """

    R0: np.ndarray
    R1: np.ndarray
    S: np.ndarray
    Gamma: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    eta0: np.ndarray = None

    def __post_init__(self):
        R0 = np.asarray(self.R0, dtype=float)
        m = 1 if R0.ndim == 0 else R0.shape[0]
        S = np.asarray(self.S, dtype=float)
        l = S.shape[1] if S.ndim == 2 else (S.size // m if S.size else 0)
        object.__setattr__(self, "R0", _mat(self.R0, m, m, "R0"))
        object.__setattr__(self, "R1", _mat(self.R1, m, m, "R1"))
        object.__setattr__(self, "S", _mat(self.S, m, l, "S"))
        object.__setattr__(self, "Gamma", _mat(self.Gamma, m, m, "Gamma"))
        object.__setattr__(self, "Q", _mat(self.Q, l, l, "Q"))
        object.__setattr__(self, "P", _mat(self.P, l, m, "P"))
        eta0 = np.zeros(l) if self.eta0 is None else np.asarray(self.eta0, dtype=float).reshape(l)
        object.__setattr__(self, "eta0", np.ascontiguousarray(eta0))

        sym = 0.5 * (self.Gamma + self.Gamma.T)
        if np.linalg.eigvalsh(sym)[0] <= 0:
            raise ValueError("Gamma must have positive definite symmetric part")
        if l and np.max(np.linalg.eigvals(self.Q).real) >= 0:
            raise ValueError("Q must be Hurwitz (all eigenvalue real parts negative)")

    @property
    def output_dim(self) -> int:
        return self.R0.shape[0]

    @property
    def internal_dim(self) -> int:
        return self.Q.shape[0]

    def drift(self, d, y, y_dot, eta):
        return self.R0 @ y + self.R1 @ y_dot + self.S @ eta

    def gain(self, d, y, y_dot, eta):
        return self.Gamma

    def internal(self, eta, y, y_dot):
        return self.Q @ eta + self.P @ y


def mass_on_car(m1: float = 4.0, m2: float = 1.0, k: float = 2.0,
                d: float = 1.0, theta: float = np.pi / 4) -> LinearIOPlant:
    """Car of mass m1 (position y, driven by the input force) carrying a mass
    m2 that slides on a ramp inclined by theta, coupled to the car through a
    spring k and damper d.

    With z the car position and s the displacement of m2 along the ramp, the
    Lagrangian equations of motion are

        (m1+m2) z'' + m2 cos(theta) s'' = u
        m2 cos(theta) z'' + m2 s'' + d s' + k s = 0.

    Eliminating s'' gives y'' = z'' with input gain 1/(m1 + m2 sin^2(theta));
    the spring/damper force enters through the relative coordinates. Internal
    coordinates are chosen so their dynamics are driven by y alone:

        eta1 = s + y cos(theta)
        eta2 = s' + y' cos(theta) - (d cos(theta)/m2) y

    (eta1 is the ramp-direction absolute position of the sliding mass; eta2
    its velocity with the feedthrough of y' absorbed). Then eta' = Q eta + P y
    with Q Hurwitz for any k, d > 0, independent of the car motion.

    The benchmark is posed for ramp angles strictly inside (0, pi/2); the
    geometry degenerates at the endpoints (at pi/2 the spring force
    decouples from the driven coordinate entirely), so the constructor
    rejects them.
    """
    for name, value in (("m1", m1), ("m2", m2), ("k", k), ("d", d)):
        if not (value > 0):
            raise ValueError(f"mass_on_car parameter {name} must be positive, got {value}")
    if not (0 < theta < np.pi / 2):
        raise ValueError(f"ramp angle theta must lie strictly inside (0, pi/2), got {theta}")

    ct = np.cos(theta)
    st = np.sin(theta)
    denom = m1 + m2 * st * st
    c = ct / denom  # couples the spring/damper force into the car acceleration

    gamma = 1.0 / denom
    r0 = c * ct * (d * d / m2 - k)
    r1 = -c * d * ct
    s_row = np.array([[c * k, c * d]])
    q = np.array([[0.0, 1.0], [-k / m2, -d / m2]])
    p = np.array([[d * ct / m2], [ct * (k / m2 - d * d / (m2 * m2))]])

    return LinearIOPlant(R0=[[r0]], R1=[[r1]], S=s_row, Gamma=[[gamma]], Q=q, P=p)


def worst_case_bounds(plant: LinearIOPlant, y_bound: float, yd_bound: float,
                      eta_bound: float) -> WorstCaseBounds:
    """Bounds on drift and gain over the box ||y|| <= y_bound, ||y'|| <= yd_bound,
    ||eta|| <= eta_bound, using spectral norms."""
    for name, value in (("y_bound", y_bound), ("yd_bound", yd_bound), ("eta_bound", eta_bound)):
        if not (value >= 0):
            raise ValueError(f"{name} must be nonnegative, got {value}")
    f_max = (
        spectral_norm(plant.R0) * y_bound
        + spectral_norm(plant.R1) * yd_bound
        + spectral_norm(plant.S) * eta_bound
    )
    g_max = spectral_norm(plant.Gamma)
    sym = 0.5 * (plant.Gamma + plant.Gamma.T)
    g_min = float(np.linalg.eigvalsh(sym)[0])
    if g_min <= 0:
        raise ValueError("Gamma must have positive definite symmetric part")
    return WorstCaseBounds(f_max=f_max, g_max=g_max, g_min=g_min)


def bibs_state_bound(Q: np.ndarray, P: np.ndarray, eta0: np.ndarray, y_bound: float) -> float:
    """Uniform bound on eta' = Q eta + P y under ||y|| <= y_bound.

    Solves Q^T X + X Q = -I; with M = sqrt(cond(X)) and omega = 1/(2 lmax(X))
    the transition matrix satisfies ||exp(Qt)|| <= M exp(-omega t), giving
    ||eta(t)|| <= M ||eta0|| + M ||P|| y_bound / omega.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.size == 0:
        return 0.0
    if np.max(np.linalg.eigvals(Q).real) >= 0:
        raise ValueError("Q must be Hurwitz for the internal state bound")
    X = scipy.linalg.solve_continuous_lyapunov(Q.T, -np.eye(Q.shape[0]))
    X = 0.5 * (X + X.T)
    w = np.linalg.eigvalsh(X)
    if w[0] <= 0:
        raise ValueError("Lyapunov solution not positive definite; Q is not Hurwitz")
    m_const = float(np.sqrt(w[-1] / w[0]))
    omega = 1.0 / (2.0 * w[-1])
    eta0 = np.asarray(eta0, dtype=float)
    return m_const * float(np.linalg.norm(eta0)) + m_const * spectral_norm(P) * y_bound / omega


@dataclass(frozen=True)
class SinusoidSignal:
    """Picklable sinusoidal vector signal for disturbance injection."""

    amplitudes: tuple
    omega: float
    phase: float = 0.0

    def __call__(self, t):
        return np.asarray(self.amplitudes, dtype=float) * np.sin(self.omega * t + self.phase)


@dataclass(frozen=True, eq=False)
class AdditiveDisturbance(PlantModel):
    """Wraps a plant, adding a time signal to the drift (matched disturbance).

    Forces the generic simulation path; used for robustness fuzzing.
    """

    base: PlantModel
    signal: object  # callable t -> (output_dim,)

    @property
    def output_dim(self) -> int:
        return self.base.output_dim

    @property
    def internal_dim(self) -> int:
        return self.base.internal_dim

    @property
    def disturbance_dim(self) -> int:
        return self.base.output_dim

    @property
    def eta0(self) -> np.ndarray:
        return self.base.eta0

    def drift(self, d, y, y_dot, eta):
        return self.base.drift(None, y, y_dot, eta) + d

    def gain(self, d, y, y_dot, eta):
        return self.base.gain(None, y, y_dot, eta)

    def internal(self, eta, y, y_dot):
        return self.base.internal(eta, y, y_dot)

    def disturbance(self, t):
        return np.asarray(self.signal(t), dtype=float)
