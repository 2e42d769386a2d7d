import numpy as np
import pytest

from zohfunnel import (
    AdditiveDisturbance,
    ConstantFunnel,
    ConstantReference,
    ControlLawConfig,
    FunnelViolation,
    LinearIOPlant,
    NumericalBlowup,
    SimConfig,
    SinusoidSignal,
    Variant,
    compare_variants,
    integrate_hold,
    n_sampling_instants,
    simulate,
)
from zohfunnel._kernel import compiled_available

from conftest import example1_setup, example2_setup


def integrator_plant(r0=0.0, r1=0.0):
    return LinearIOPlant(
        R0=[[r0]], R1=[[r1]], S=np.zeros((1, 0)),
        Gamma=[[1.0]], Q=np.zeros((0, 0)), P=np.zeros((0, 1)),
    )


@pytest.mark.parametrize("variant", [Variant.DERIVATIVE_FREE, Variant.DERIVATIVE_BASED])
@pytest.mark.parametrize("backend", ["python", "auto"])
def test_equilibrium_stays_identically_zero(variant, backend):
    trace = simulate(
        integrator_plant(),
        ConstantReference([0.0]),
        ConstantFunnel(1.0),
        ControlLawConfig(beta=1.0, lam=0.5, variant=variant),
        SimConfig(tau=0.1, horizon=1.0, backend=backend),
    )
    assert trace.feasible
    for arr in (trace.y, trace.y_dot, trace.u, trace.e, trace.e1_norm, trace.sample_E):
        assert np.all(arr == 0.0)
    assert np.all(trace.sample_branch == 0)


def test_double_integrator_quadrature_is_exact():
    # y'' = u = 1 from rest: RK4 integrates polynomials of degree <= 4 exactly,
    # and a dyadic step keeps the float arithmetic itself exact
    _, ys, yds, _ = integrate_hold(
        integrator_plant(), np.zeros(1), np.zeros(1), np.zeros(0), np.ones(1),
        0.0, 1.0, substeps=8,
    )
    assert ys[-1, 0] == 0.5
    assert yds[-1, 0] == 1.0
    _, ys7, _, _ = integrate_hold(
        integrator_plant(), np.zeros(1), np.zeros(1), np.zeros(0), np.ones(1),
        0.0, 1.0, substeps=7,
    )
    assert ys7[-1, 0] == pytest.approx(0.5, rel=1e-14)


def test_oscillator_against_cosine():
    # y'' = -y, y(0) = 1: solution cos(t)
    _, ys, yds, _ = integrate_hold(
        integrator_plant(r0=-1.0), np.ones(1), np.zeros(1), np.zeros(0), np.zeros(1),
        0.0, 1.0, substeps=100,
    )
    assert abs(ys[-1, 0] - np.cos(1.0)) < 1e-8
    assert abs(yds[-1, 0] + np.sin(1.0)) < 1e-8


def test_rk4_fourth_order_convergence():
    errs = []
    for n in (10, 20, 40):
        _, ys, _, _ = integrate_hold(
            integrator_plant(r0=-1.0), np.ones(1), np.zeros(1), np.zeros(0), np.zeros(1),
            0.0, 1.0, substeps=n,
        )
        errs.append(abs(ys[-1, 0] - np.cos(1.0)))
    for coarse, fine in zip(errs, errs[1:]):
        assert 12.8 <= coarse / fine <= 19.2  # 16 +- 20%


def test_integrate_hold_validation_and_blowup():
    p = integrator_plant()
    with pytest.raises(ValueError):
        integrate_hold(p, np.zeros(1), np.zeros(1), np.zeros(0), np.zeros(1), 1.0, 1.0, 5)
    with pytest.raises(ValueError):
        integrate_hold(p, np.zeros(1), np.zeros(1), np.zeros(0), np.zeros(1), 0.0, 1.0, 0)
    stiff = integrator_plant(r0=1e12)
    with pytest.raises(NumericalBlowup) as err:
        integrate_hold(stiff, np.full(1, 1e-4), np.zeros(1), np.zeros(0), np.zeros(1),
                       0.0, 0.5, substeps=50)
    assert err.value.time is not None and 0.0 < err.value.time <= 0.5


def test_simulate_blowup_raises_with_time():
    s = example1_setup()
    stiff = integrator_plant(r0=1e12)
    with pytest.raises(NumericalBlowup) as err:
        simulate(
            stiff, ConstantReference([0.0]), ConstantFunnel(1.0),
            ControlLawConfig(beta=1.0, lam=0.5),
            SimConfig(tau=0.5, horizon=1.0, substeps=50, y0=(1e-4,), backend="python"),
        )
    assert err.value.time is not None
    del s


def test_benchmark_run_shape_and_grid():
    s = example1_setup()
    trace = simulate(s["plant"], s["reference"], s["funnel"], s["law"], s["cfg"])
    assert trace.feasible
    assert trace.violation_time is None and trace.violation_kind is None
    assert trace.t[0] == 0.0
    assert trace.t[-1] == s["cfg"].horizon
    assert np.all(np.diff(trace.t) > 0)
    n = n_sampling_instants(s["cfg"].tau, s["cfg"].horizon)
    assert len(trace.sample_t) == n
    assert np.array_equal(trace.sample_t, np.arange(n) * s["cfg"].tau)
    assert np.array_equal(trace.t[trace.sample_indices()], trace.sample_t)
    assert np.all(trace.is_sample[trace.sample_indices()])
    # held input: every dense row carries the input of its sampling interval
    k = np.searchsorted(trace.sample_t, trace.t[:-1], side="right") - 1
    assert np.array_equal(trace.u[:-1], trace.sample_u[k])


def test_record_stride_row_counts():
    for stride, substeps in ((1, 20), (3, 20), (7, 20), (20, 20), (50, 20)):
        trace = simulate(
            integrator_plant(), ConstantReference([0.0]), ConstantFunnel(1.0),
            ControlLawConfig(beta=1.0, lam=0.5),
            SimConfig(tau=0.1, horizon=1.0, substeps=substeps, record_stride=stride),
        )
        per = 1 + (substeps - 1) // stride
        assert len(trace.t) == 10 * per + 1


def test_simulate_is_deterministic():
    s = example1_setup()
    cfg = SimConfig(tau=s["cfg"].tau, horizon=0.5)
    a = simulate(s["plant"], s["reference"], s["funnel"], s["law"], cfg)
    b = simulate(s["plant"], s["reference"], s["funnel"], s["law"], cfg)
    for name in ("t", "y", "y_dot", "eta", "u", "sample_E", "sample_u"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(a.e2, b.e2, equal_nan=True)


@pytest.mark.skipif(not compiled_available(), reason="compiled kernel not built")
def test_backends_agree_bitwise():
    s = example1_setup()
    cfg_c = SimConfig(tau=s["cfg"].tau, horizon=0.5, backend="compiled")
    cfg_p = SimConfig(tau=s["cfg"].tau, horizon=0.5, backend="python")
    a = simulate(s["plant"], s["reference"], s["funnel"], s["law"], cfg_c)
    b = simulate(s["plant"], s["reference"], s["funnel"], s["law"], cfg_p)
    assert a.backend == "compiled"
    assert b.backend == "python"
    for name in ("t", "y", "y_dot", "eta", "u", "is_sample",
                 "sample_t", "sample_E", "sample_u", "sample_branch", "sample_row"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


@pytest.mark.skipif(not compiled_available(), reason="compiled kernel not built")
def test_compiled_backend_rejects_generic_plant():
    s = example1_setup()
    wrapped = AdditiveDisturbance(s["plant"], SinusoidSignal(amplitudes=(0.01,), omega=1.0))
    with pytest.raises(RuntimeError):
        simulate(wrapped, s["reference"], s["funnel"], s["law"],
                 SimConfig(tau=1.8e-3, horizon=0.1, backend="compiled"))


def test_violation_truncates_trace():
    s = example2_setup()
    trace = simulate(s["plant"], s["reference"], s["funnel"], s["law"], s["cfg"])
    assert not trace.feasible
    assert trace.violation_kind == "funnel"
    assert trace.violation_time is not None
    assert trace.t[-1] == trace.violation_time
    assert trace.violation_time < s["cfg"].horizon
    assert trace.e1_norm[trace.sample_indices()[-1]] < 1.0  # last executed sample was fine
    assert np.max(trace.e1_norm) >= 1.0


def test_compare_variants_requires_feasible_runs():
    s = example2_setup()
    with pytest.raises(FunnelViolation):
        compare_variants(s["plant"], s["reference"], s["funnel"], s["law"], s["cfg"])


def test_compare_variants_reports_differences():
    s = example1_setup()
    cfg = SimConfig(tau=s["cfg"].tau, horizon=0.25)
    comp = compare_variants(s["plant"], s["reference"], s["funnel"], s["law"], cfg)
    assert comp.trace_free.variant == "free"
    assert comp.trace_deriv.variant == "deriv"
    assert comp.max_input_diff > 0.0
    assert comp.max_output_diff > 0.0
    assert np.array_equal(comp.trace_free.t, comp.trace_deriv.t)


def test_sampling_instant_counts():
    assert n_sampling_instants(0.3, 1.0) == 4
    assert n_sampling_instants(0.25, 1.0) == 4
    assert n_sampling_instants(0.5, 0.5) == 1
    assert n_sampling_instants(1.0, 0.999) == 1
    assert n_sampling_instants(0.1, 1.0) == 10
    assert n_sampling_instants(1.8e-3, 2.0) == 1112


def test_initial_state_defaults_to_reference():
    s = example1_setup()
    cfg = SimConfig(tau=0.01, horizon=0.1)
    trace = simulate(s["plant"], s["reference"], s["funnel"], s["law"], cfg)
    assert trace.y[0] == 0.0  # sinusoid reference starts at zero
    assert trace.y_dot[0] == pytest.approx(0.4 * np.pi / 2, abs=1e-15)

    cfg = SimConfig(tau=0.01, horizon=0.1, y0=(0.02,), ydot0=(0.1,))
    trace = simulate(s["plant"], s["reference"], s["funnel"], s["law"], cfg)
    assert trace.y[0] == 0.02
    assert trace.y_dot[0] == 0.1


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        simulate(
            integrator_plant(), ConstantReference([0.0, 0.0]), ConstantFunnel(1.0),
            ControlLawConfig(beta=1.0, lam=0.5), SimConfig(tau=0.1, horizon=1.0),
        )


def test_simconfig_validation():
    with pytest.raises(ValueError):
        SimConfig(tau=0.0, horizon=1.0)
    with pytest.raises(ValueError):
        SimConfig(tau=0.2, horizon=0.1)
    with pytest.raises(ValueError):
        SimConfig(tau=0.1, horizon=1.0, substeps=0)
    with pytest.raises(ValueError):
        SimConfig(tau=0.1, horizon=1.0, substeps=1.5)
    with pytest.raises(ValueError):
        SimConfig(tau=0.1, horizon=1.0, record_stride=0)
    with pytest.raises(ValueError):
        SimConfig(tau=0.1, horizon=1.0, integrator="euler")
    with pytest.raises(ValueError):
        SimConfig(tau=0.1, horizon=1.0, backend="gpu")
