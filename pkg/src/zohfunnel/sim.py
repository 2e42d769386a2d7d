"""Closed-loop sample-and-hold simulation.

The plant runs in continuous time (fixed-step RK4 aligned to the sampling
grid); the controller fires at t_k = k*tau and its output is held constant
over [t_k, t_k + tau). Recording happens on the substep grid: every
interval start (= sampling instant) is always recorded, interior substep
boundaries according to record_stride, and the final time exactly.

Two engines produce identical trajectories up to floating-point accumulation
order: a compiled kernel for linear plants (see zohfunnel._kernel) and a
generic pure-Python loop that works for any PlantModel. Selection happens
per run from SimConfig.backend; "auto" prefers the compiled kernel when it
is importable and the plant is eligible.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .controller import (
    ControllerState,
    ControlLawConfig,
    Variant,
    composite_error,
    controller_step,
    difference_surrogate,
    error_series,
)
from .exceptions import FunnelViolation, NumericalBlowup
from .plant import LinearIOPlant, PlantModel
from .signals import Funnel, ReciprocalGain, Reference

_EDGE = 1e-12  # relative guard when deciding whether a sample still fits the horizon


@dataclass(frozen=True)
class SimConfig:
    tau: float
    horizon: float
    substeps: int = 20
    record_stride: int = 1
    integrator: str = "rk4"
    backend: str = "auto"  # auto | compiled | python
    y0: tuple | None = None
    ydot0: tuple | None = None

    def __post_init__(self):
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError(f"sim.tau must be positive and finite, got {self.tau}")
        if not (self.horizon >= self.tau):
            raise ValueError(
                f"sim.horizon must be at least one sampling period, got horizon={self.horizon} tau={self.tau}"
            )
        if not (isinstance(self.substeps, int) and self.substeps >= 1):
            raise ValueError(f"sim.substeps must be an integer >= 1, got {self.substeps}")
        if not (isinstance(self.record_stride, int) and self.record_stride >= 1):
            raise ValueError(f"sim.record_stride must be an integer >= 1, got {self.record_stride}")
        if self.integrator != "rk4":
            raise ValueError(f"sim.integrator: only 'rk4' is implemented, got {self.integrator!r}")
        if self.backend not in ("auto", "compiled", "python"):
            raise ValueError(f"sim.backend must be auto|compiled|python, got {self.backend!r}")


@dataclass
class Trace:
    """Recorded closed-loop run.

    Dense arrays are aligned: row i happened at t[i]. Sample arrays hold one
    entry per executed sampling instant; sample_row maps them into the dense
    grid. sample_E always stores the backward-difference surrogate signal,
    whichever variant produced the input. e2 rows are NaN wherever the
    weighted error is outside the funnel.
    """

    t: np.ndarray
    y: np.ndarray
    y_dot: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    e: np.ndarray
    e1_norm: np.ndarray
    e2: np.ndarray
    e2_norm: np.ndarray
    is_sample: np.ndarray
    sample_t: np.ndarray
    sample_E: np.ndarray
    sample_u: np.ndarray
    sample_branch: np.ndarray
    sample_row: np.ndarray
    tau: float
    horizon: float
    variant: str
    backend: str
    feasible: bool
    violation_time: float | None
    violation_kind: str | None

    def sample_indices(self) -> np.ndarray:
        return np.asarray(self.sample_row, dtype=int)


def n_sampling_instants(tau: float, horizon: float) -> int:
    """Number of controller firings in [0, horizon): ceil(horizon/tau)."""
    n = int(math.ceil(horizon / tau - _EDGE))
    return max(n, 1)


def integrate_hold(plant: PlantModel, y, y_dot, eta, u, t0: float, t1: float, substeps: int):
    """Integrate the plant under a constant input from t0 to t1 with a fixed
    RK4 grid of `substeps` steps.

    Returns (ts, Y, Yd, Eta) at the substep endpoints, t0 excluded and t1
    included. Raises NumericalBlowup if any state component goes non-finite.
    """
    if not (t1 > t0):
        raise ValueError(f"integrate_hold needs t1 > t0, got [{t0}, {t1}]")
    if not (isinstance(substeps, int) and substeps >= 1):
        raise ValueError(f"substeps must be an integer >= 1, got {substeps}")
    y = np.asarray(y, dtype=float).copy()
    yd = np.asarray(y_dot, dtype=float).copy()
    et = np.asarray(eta, dtype=float).copy()
    u = np.asarray(u, dtype=float)
    h = (t1 - t0) / substeps

    ts = np.empty(substeps)
    ys = np.empty((substeps, y.size))
    yds = np.empty((substeps, y.size))
    ets = np.empty((substeps, et.size))
    # overflow is diagnosed below via the finiteness check, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(substeps):
            t = t0 + s * h
            y, yd, et = _rk4_step(plant, t, h, y, yd, et, u)
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yd)) and np.all(np.isfinite(et))):
                raise NumericalBlowup(
                    f"non-finite state while integrating over [{t0:.6g}, {t1:.6g}]", time=t + h
                )
            ts[s] = t0 + (s + 1) * h
            ys[s] = y
            yds[s] = yd
            ets[s] = et
    ts[-1] = t1  # land exactly on the interval end
    return ts, ys, yds, ets


def _rhs(plant, t, y, yd, et, u):
    d = plant.disturbance(t)
    acc = plant.drift(d, y, yd, et) + plant.gain(d, y, yd, et) @ u
    return yd, acc, plant.internal(et, y, yd)


def _rk4_step(plant, t, h, y, yd, et, u):
    k1y, k1v, k1e = _rhs(plant, t, y, yd, et, u)
    h2 = 0.5 * h
    k2y, k2v, k2e = _rhs(plant, t + h2, y + h2 * k1y, yd + h2 * k1v, et + h2 * k1e, u)
    k3y, k3v, k3e = _rhs(plant, t + h2, y + h2 * k2y, yd + h2 * k2v, et + h2 * k2e, u)
    k4y, k4v, k4e = _rhs(plant, t + h, y + h * k3y, yd + h * k3v, et + h * k3e, u)
    w = h / 6.0
    return (
        y + w * (k1y + 2.0 * (k2y + k3y) + k4y),
        yd + w * (k1v + 2.0 * (k2v + k3v) + k4v),
        et + w * (k1e + 2.0 * (k2e + k3e) + k4e),
    )


def _initial_output_state(reference: Reference, cfg: SimConfig, m: int):
    y0_ref, yd0_ref, _ = reference.eval(0.0)
    y0 = np.asarray(cfg.y0, dtype=float).reshape(m) if cfg.y0 is not None else np.asarray(y0_ref)
    yd0 = np.asarray(cfg.ydot0, dtype=float).reshape(m) if cfg.ydot0 is not None else np.asarray(yd0_ref)
    return y0.copy(), yd0.copy()


def _resolve_backend(plant, law, cfg) -> str:
    eligible = isinstance(plant, LinearIOPlant) and isinstance(law.gain, ReciprocalGain)
    if cfg.backend == "python":
        return "python"
    if cfg.backend == "compiled":
        if not _kernel.compiled_available():
            raise RuntimeError(
                "compiled kernel requested but it is not available"
                " (extension not built, or disabled via ZOHFUNNEL_PURE_PYTHON)"
            )
        if not eligible:
            raise RuntimeError(
                "compiled kernel requested but it only handles LinearIOPlant with the reciprocal gain map"
            )
        return "compiled"
    if _kernel.backend_name() == "compiled" and eligible:
        return "compiled"
    return "python"


def simulate(plant: PlantModel, reference: Reference, funnel: Funnel,
             law: ControlLawConfig, cfg: SimConfig) -> Trace:
    """Run the closed loop and return a fully post-processed Trace.

    A funnel violation at a sampling instant stops the run and returns a
    trace flagged infeasible with the violation time; a non-finite state
    raises NumericalBlowup.
    """
    m = plant.output_dim
    if reference.dim != m:
        raise ValueError(
            f"reference dimension {reference.dim} does not match plant output dimension {m}"
        )
    y0, yd0 = _initial_output_state(reference, cfg, m)
    n_samples = n_sampling_instants(cfg.tau, cfg.horizon)
    ts_samples = np.arange(n_samples) * cfg.tau
    yref_s, ydref_s, _ = reference.eval(ts_samples)
    phi_s, _ = funnel.eval(ts_samples)

    backend = _resolve_backend(plant, law, cfg)
    if backend == "compiled":
        raw = _kernel.core().run_linear(
            plant.R0, plant.R1, plant.S, plant.Gamma, plant.Q, plant.P,
            y0, yd0, plant.eta0.copy(),
            np.ascontiguousarray(yref_s.reshape(n_samples, m)),
            np.ascontiguousarray(ydref_s.reshape(n_samples, m)),
            np.ascontiguousarray(phi_s),
            float(cfg.tau), float(cfg.horizon),
            int(cfg.substeps), int(cfg.record_stride),
            float(law.beta), float(law.lam),
            1 if law.variant is Variant.DERIVATIVE_BASED else 0,
        )
    else:
        raw = _python_closed_loop(
            plant, law, cfg, y0, yd0,
            yref_s.reshape(n_samples, m), ydref_s.reshape(n_samples, m),
            np.asarray(phi_s, dtype=float), n_samples,
        )

    if raw["status"] == 2:
        raise NumericalBlowup(
            f"non-finite state at t = {raw['viol_time']:.6g}; the closed loop diverged",
            time=raw["viol_time"],
        )

    t = raw["t"]
    e, e1_norm, e2, e2_norm = error_series(t, raw["y"], raw["y_dot"], funnel, reference, law.gain)
    feasible = raw["status"] == 0
    return Trace(
        t=t, y=raw["y"], y_dot=raw["y_dot"], eta=raw["eta"], u=raw["u"],
        e=e, e1_norm=e1_norm, e2=e2, e2_norm=e2_norm,
        is_sample=raw["is_sample"],
        sample_t=raw["sample_t"], sample_E=raw["sample_E"], sample_u=raw["sample_u"],
        sample_branch=raw["sample_branch"], sample_row=raw["sample_row"],
        tau=cfg.tau, horizon=cfg.horizon, variant=law.variant.value, backend=backend,
        feasible=feasible,
        violation_time=None if feasible else raw["viol_time"],
        violation_kind=None if feasible else "funnel",
    )


def _python_closed_loop(plant, law, cfg, y0, yd0, yref_s, ydref_s, phi_s, n_samples):
    m, l = plant.output_dim, plant.internal_dim
    per = 1 + (cfg.substeps - 1) // cfg.record_stride
    cap = n_samples * per + 1

    t_arr = np.empty(cap)
    y_arr = np.empty((cap, m))
    yd_arr = np.empty((cap, m))
    eta_arr = np.empty((cap, l))
    u_arr = np.empty((cap, m))
    is_sample = np.zeros(cap, dtype=bool)
    smp_t = np.empty(n_samples)
    smp_E = np.empty((n_samples, m))
    smp_u = np.empty((n_samples, m))
    smp_branch = np.empty(n_samples, dtype=np.int64)
    smp_row = np.empty(n_samples, dtype=np.int64)

    check_gain = not isinstance(plant, LinearIOPlant)
    y = y0.copy()
    yd = yd0.copy()
    eta = plant.eta0.astype(float).copy()
    state = ControllerState.initial(m, cfg.tau)
    n = 0
    n_smp = 0
    status = 0
    viol_time = math.nan
    guard = _EDGE * max(1.0, cfg.horizon)

    def record(tv, uv):
        nonlocal n
        t_arr[n] = tv
        y_arr[n] = y
        yd_arr[n] = yd
        eta_arr[n] = eta
        u_arr[n] = uv
        n += 1

    try:
        for k in range(n_samples):
            t_k = k * cfg.tau
            if t_k >= cfg.horizon - guard:
                break
            prev_e = state.prev_sample_error
            if check_gain:
                d_k = plant.disturbance(t_k)
                sym = plant.gain(d_k, y, yd, eta)
                sym = 0.5 * (sym + sym.T)
                if np.linalg.eigvalsh(sym)[0] <= 0:
                    raise ValueError(
                        f"plant gain lost positive definiteness at t = {t_k:.6g}"
                    )
            ydot_k = yd if law.variant is Variant.DERIVATIVE_BASED else None
            u, state = controller_step(
                state, y, ydot_k, yref_s[k], phi_s[k], law,
                ydotref_k=ydref_s[k], t_k=t_k,
            )

            e_k = y - yref_s[k]
            E_fd = difference_surrogate(e_k, prev_e, phi_s[k], cfg.tau, law.gain)
            if law.variant is Variant.DERIVATIVE_BASED:
                driving = composite_error(e_k, yd - ydref_s[k], phi_s[k], law.gain)
            else:
                driving = E_fd
            smp_t[n_smp] = t_k
            smp_E[n_smp] = E_fd
            smp_u[n_smp] = u
            smp_branch[n_smp] = 1 if float(np.linalg.norm(driving)) >= law.lam else 0
            smp_row[n_smp] = n
            n_smp += 1

            is_sample[n] = True
            record(t_k, u)

            t_end = min(t_k + cfg.tau, cfg.horizon)
            ts, ys, yds, ets = integrate_hold(plant, y, yd, eta, u, t_k, t_end, cfg.substeps)
            for s in range(cfg.record_stride, cfg.substeps, cfg.record_stride):
                y, yd, eta = ys[s - 1], yds[s - 1], ets[s - 1]
                record(ts[s - 1], u)
            y, yd, eta = ys[-1].copy(), yds[-1].copy(), ets[-1].copy()
        record(cfg.horizon, state.held_input)
    except FunnelViolation as exc:
        status = 1
        viol_time = exc.time if exc.time is not None else math.nan
        record(viol_time, state.held_input)
    except NumericalBlowup as exc:
        return {"status": 2, "viol_time": exc.time}

    return {
        "status": status,
        "viol_time": viol_time,
        "t": t_arr[:n].copy(),
        "y": y_arr[:n].copy(),
        "y_dot": yd_arr[:n].copy(),
        "eta": eta_arr[:n].copy(),
        "u": u_arr[:n].copy(),
        "is_sample": is_sample[:n].copy(),
        "sample_t": smp_t[:n_smp].copy(),
        "sample_E": smp_E[:n_smp].copy(),
        "sample_u": smp_u[:n_smp].copy(),
        "sample_branch": smp_branch[:n_smp].copy(),
        "sample_row": smp_row[:n_smp].copy(),
    }


@dataclass(frozen=True)
class VariantComparison:
    """Both control laws run on the identical grid and plant."""

    trace_free: Trace
    trace_deriv: Trace
    max_input_diff: float
    max_output_diff: float


def compare_variants(plant: PlantModel, reference: Reference, funnel: Funnel,
                     law: ControlLawConfig, cfg: SimConfig) -> VariantComparison:
    """Run the derivative-free and derivative-based laws side by side.

    Both runs must stay feasible; the comparison reports the largest input
    difference over the sampling instants and the largest output difference
    over the dense grid.
    """
    from dataclasses import replace as _replace

    trace_free = simulate(plant, reference, funnel,
                          _replace(law, variant=Variant.DERIVATIVE_FREE), cfg)
    trace_deriv = simulate(plant, reference, funnel,
                           _replace(law, variant=Variant.DERIVATIVE_BASED), cfg)
    for name, tr in (("derivative-free", trace_free), ("derivative-based", trace_deriv)):
        if not tr.feasible:
            raise FunnelViolation(
                f"variant comparison needs both runs feasible; the {name} run left the funnel"
                f" at t = {tr.violation_time}",
                time=tr.violation_time,
            )
    input_diff = float(np.max(np.linalg.norm(trace_free.sample_u - trace_deriv.sample_u, axis=1)))
    output_diff = float(np.max(np.linalg.norm(trace_free.y - trace_deriv.y, axis=1)))
    return VariantComparison(
        trace_free=trace_free,
        trace_deriv=trace_deriv,
        max_input_diff=input_diff,
        max_output_diff=output_diff,
    )
