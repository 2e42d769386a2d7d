"""Post-hoc certification of recorded closed-loop runs.

check_trace recomputes every error signal from the raw trajectory columns
(t, y, y_dot) and the declared funnel/reference, so a trace written to CSV
and read back yields the exact same report: every check sees only data that
survives the 17-significant-digit round trip.

Checks, with their bounds taken from the design block:
  funnel               phi*||e|| < 1 on the dense grid (strict, no slack)
  e2 (samples, dense)  ||e2|| <= 1 within slack
  input                ||u|| <= beta/lam within slack
  lemma_e1e2           while ||e2|| <= 1 held so far, ||e1|| <= eps1
  derivative           ||y' - y_ref'|| <= eps_hat
  surrogate magnitude  ||E(t_k)|| <= e_hat
  surrogate remainder  ||e2(t_k)|| <= ||E(t_k)|| + tau*m_phi*f_tilde

NaN e2 rows (weighted error outside the funnel, gain map undefined) count as
violating the ||e2|| <= 1 premise and are excluded from maxima; their count
is reported.
"""

from dataclasses import dataclass, field

import numpy as np

from .controller import error_series
from .design import DesignParameters
from .exceptions import FunnelViolation
from .signals import Funnel, GainMap, ReciprocalGain, Reference

SLACK = 1e-9  # numerical slack on non-strict inequalities


@dataclass
class VerificationReport:
    funnel_margin: float
    e2_sample_max: float
    e2_dense_max: float
    e2_max: float
    input_max: float
    input_bound: float
    edot_err_max: float
    surrogate_signal_max: float
    surrogate_gap_max: float
    lemma_e1e2_ok: bool
    lemma_worst_offset: float
    undefined_e2_rows: int
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "funnel_margin": self.funnel_margin,
            "e2_sample_max": self.e2_sample_max,
            "e2_dense_max": self.e2_dense_max,
            "e2_max": self.e2_max,
            "input_max": self.input_max,
            "input_bound": self.input_bound,
            "edot_err_max": self.edot_err_max,
            "surrogate_signal_max": self.surrogate_signal_max,
            "surrogate_gap_max": self.surrogate_gap_max,
            "lemma_e1e2_ok": self.lemma_e1e2_ok,
            "lemma_worst_offset": self.lemma_worst_offset,
            "undefined_e2_rows": self.undefined_e2_rows,
            "passed": self.passed,
            "violations": [list(v) for v in self.violations],
        }

    def summary_lines(self) -> list:
        out = [
            f"funnel margin        max phi*||e||      = {self.funnel_margin:.6g}  (< 1 required)",
            f"composite error      max ||e2|| samples = {self.e2_sample_max:.6g}  dense = {self.e2_dense_max:.6g}",
            f"input                max ||u||          = {self.input_max:.6g}  (<= {self.input_bound:.6g})",
            f"error derivative     max ||e'||         = {self.edot_err_max:.6g}",
            f"surrogate            max ||E||          = {self.surrogate_signal_max:.6g}  max ||E - e2|| = {self.surrogate_gap_max:.6g}",
            f"lemma e1-e2          {'holds' if self.lemma_e1e2_ok else 'FAILS'}  (worst offset {self.lemma_worst_offset:.3g})",
        ]
        if self.undefined_e2_rows:
            out.append(f"rows with e2 undefined (outside funnel): {self.undefined_e2_rows}")
        if self.violations:
            out.append("violations:")
            for check, time, value in self.violations:
                out.append(f"  {check:<22} t = {time:.6g}  value = {value:.6g}")
        else:
            out.append("all checks passed")
        return out


def _first_time(t, mask) -> float:
    idx = np.flatnonzero(mask)
    return float(t[idx[0]]) if idx.size else float("nan")


def check_trace(trace, funnel: Funnel, reference: Reference, params: DesignParameters,
                gain: GainMap = ReciprocalGain()) -> VerificationReport:
    """Evaluate every check against a recorded trace. Pure; does not rerun."""
    t = np.asarray(trace.t, dtype=float)
    e, e1n, e2, e2n = error_series(t, trace.y, trace.y_dot, funnel, reference, gain)
    violations = []

    # funnel containment is strict and gets no slack
    funnel_margin = float(np.max(e1n)) if e1n.size else 0.0
    bad = e1n >= 1.0
    if np.any(bad):
        violations.append(("funnel", _first_time(t, bad), funnel_margin))

    nan_rows = ~np.isfinite(e2n)
    undefined_rows = int(np.count_nonzero(nan_rows))

    rows = trace.sample_indices()
    e2_samples = e2n[rows]
    e2_dense = e2n
    e2_sample_max = float(np.nanmax(e2_samples)) if np.any(np.isfinite(e2_samples)) else float("nan")
    e2_dense_max = float(np.nanmax(e2_dense)) if np.any(np.isfinite(e2_dense)) else float("nan")
    e2_max = max(
        (v for v in (e2_sample_max, e2_dense_max) if np.isfinite(v)), default=float("nan")
    )
    bad_s = np.isfinite(e2_samples) & (e2_samples > 1.0 + SLACK)
    if np.any(bad_s):
        violations.append(("e2_samples", _first_time(t[rows], bad_s), e2_sample_max))
    bad_d = np.isfinite(e2_dense) & (e2_dense > 1.0 + SLACK)
    if np.any(bad_d):
        violations.append(("e2_dense", _first_time(t, bad_d), e2_dense_max))

    input_bound = params.beta / params.lam
    u_norm = np.linalg.norm(np.asarray(trace.u, dtype=float), axis=1)
    input_max = float(np.max(u_norm)) if u_norm.size else 0.0
    bad_u = u_norm > input_bound + SLACK
    if np.any(bad_u):
        violations.append(("input_bound", _first_time(t, bad_u), input_max))

    # lemma: as long as ||e2|| <= 1 has held on [0, t), ||e1(t)|| stays <= eps1.
    # NaN e2 rows break the premise from that row on.
    premise_broken = nan_rows | (e2n > 1.0 + SLACK)
    first_break = int(np.argmax(premise_broken)) if np.any(premise_broken) else len(t)
    head = e1n[:first_break]
    lemma_worst = float(np.max(head) - params.eps1) if head.size else float("-inf")
    lemma_ok = lemma_worst <= SLACK
    if not lemma_ok:
        bad_l = np.zeros(len(t), dtype=bool)
        bad_l[:first_break] = head > params.eps1 + SLACK
        violations.append(("lemma_e1e2", _first_time(t, bad_l), lemma_worst + params.eps1))

    # error-derivative bound over the dense grid
    _, ydr, _ = reference.eval(t)
    edot_err = np.linalg.norm(np.asarray(trace.y_dot, dtype=float) - ydr, axis=1)
    edot_err_max = float(np.max(edot_err)) if edot_err.size else 0.0
    bad_ed = edot_err > params.eps_hat + SLACK
    if np.any(bad_ed):
        violations.append(("derivative_bound", _first_time(t, bad_ed), edot_err_max))

    # surrogate magnitude and one-sample remainder, at sampling instants
    E = np.asarray(trace.sample_E, dtype=float)
    E_norm = np.linalg.norm(E, axis=1) if E.size else np.zeros(0)
    surrogate_signal_max = float(np.max(E_norm)) if E_norm.size else 0.0
    bad_E = E_norm > params.e_hat + SLACK
    if np.any(bad_E):
        violations.append(("surrogate_magnitude", _first_time(trace.sample_t, bad_E), surrogate_signal_max))

    e2_at = e2[rows] if len(rows) else np.zeros((0, E.shape[1] if E.ndim == 2 else 0))
    finite = np.all(np.isfinite(e2_at), axis=1) if e2_at.size else np.zeros(0, dtype=bool)
    gap = np.linalg.norm(E - e2_at, axis=1) if E.size else np.zeros(0)
    surrogate_gap_max = float(np.max(gap[finite])) if np.any(finite) else 0.0
    remainder_bound = E_norm + trace.tau * params.m_phi * params.f_tilde
    bad_r = np.zeros(len(E_norm), dtype=bool)
    bad_r[finite] = e2n[rows][finite] > remainder_bound[finite] + SLACK
    if np.any(bad_r):
        violations.append(
            ("surrogate_remainder", _first_time(trace.sample_t, bad_r),
             float(np.max(e2n[rows][finite] - remainder_bound[finite])))
        )

    return VerificationReport(
        funnel_margin=funnel_margin,
        e2_sample_max=e2_sample_max,
        e2_dense_max=e2_dense_max,
        e2_max=e2_max,
        input_max=input_max,
        input_bound=input_bound,
        edot_err_max=edot_err_max,
        surrogate_signal_max=surrogate_signal_max,
        surrogate_gap_max=surrogate_gap_max,
        lemma_e1e2_ok=lemma_ok,
        lemma_worst_offset=lemma_worst,
        undefined_e2_rows=undefined_rows,
        violations=violations,
    )


@dataclass(frozen=True)
class SurrogateStudy:
    """Largest surrogate-vs-composite gap per sampling period, with the
    log-log least-squares slope (first-order substitution shows slope 1)."""

    taus: tuple
    gaps: tuple
    slope: float

    def render(self) -> str:
        lines = ["tau          max ||E - e2||"]
        for tau, gap in zip(self.taus, self.gaps):
            lines.append(f"{tau:<12.6g} {gap:.6e}")
        lines.append(f"log-log slope: {self.slope:.4f}")
        return "\n".join(lines)


def surrogate_consistency_study(plant, reference, funnel, law, taus, horizon,
                                substeps: int = 20, backend: str = "auto") -> SurrogateStudy:
    """Rerun the loop over several sampling periods and fit the gap order.

    All runs must stay feasible. Needs at least three sampling periods to
    fit a slope worth reporting.
    """
    from .sim import SimConfig, simulate  # local import, verify stays import-light

    taus = tuple(float(x) for x in taus)
    if len(taus) < 3:
        raise ValueError(f"surrogate consistency needs at least 3 sampling periods, got {len(taus)}")
    gaps = []
    for tau in taus:
        cfg = SimConfig(tau=tau, horizon=horizon, substeps=substeps, backend=backend)
        trace = simulate(plant, reference, funnel, law, cfg)
        if not trace.feasible:
            raise FunnelViolation(
                f"surrogate study run at tau = {tau} left the funnel at t = {trace.violation_time}",
                time=trace.violation_time,
            )
        rows = trace.sample_indices()
        e2_at = trace.e2[rows]
        finite = np.all(np.isfinite(e2_at), axis=1)
        gap = np.linalg.norm(trace.sample_E - e2_at, axis=1)
        gaps.append(float(np.max(gap[finite])))
    slope = float(np.polyfit(np.log(taus), np.log(gaps), 1)[0])
    return SurrogateStudy(taus=taus, gaps=tuple(gaps), slope=slope)
