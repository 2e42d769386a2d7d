import numpy as np
import pytest

from zohfunnel import (
    AdditiveDisturbance,
    ConstantFunnel,
    ControlLawConfig,
    LinearIOPlant,
    SimConfig,
    SinusoidReference,
    SinusoidSignal,
    bibs_state_bound,
    integrate_hold,
    mass_on_car,
    simulate,
    spectral_norm,
    worst_case_bounds,
)

from conftest import car_full_state_oracle, io_state_from_full


def test_mass_on_car_default_matrices():
    p = mass_on_car()  # m1=4, m2=1, k=2, d=1, theta=pi/4
    ct = np.sqrt(2.0) / 2.0
    c = ct / 4.5
    assert p.Gamma == pytest.approx(np.array([[2.0 / 9.0]]), abs=1e-15)
    assert p.R0 == pytest.approx(np.array([[c * ct * (1.0 - 2.0)]]), abs=1e-15)
    assert p.R1 == pytest.approx(np.array([[-c * ct]]), abs=1e-15)
    assert p.S == pytest.approx(np.array([[2.0 * c, c]]), abs=1e-15)
    assert p.Q == pytest.approx(np.array([[0.0, 1.0], [-2.0, -1.0]]), abs=1e-15)
    assert p.P == pytest.approx(np.array([[ct], [ct]]), abs=1e-15)
    assert p.output_dim == 1
    assert p.internal_dim == 2
    assert np.array_equal(p.eta0, np.zeros(2))


def test_io_form_matches_lagrangian_oracle():
    """The (y, y', eta) realization must reproduce the two-mass equations of
    motion under an arbitrary held-input sequence."""
    m1, m2, k, d, theta = 4.0, 1.0, 2.0, 1.0, np.pi / 4
    plant = mass_on_car(m1, m2, k, d, theta)
    rng = np.random.default_rng(3)
    us = rng.uniform(-3.0, 3.0, 20)
    edges = np.linspace(0.0, 2.0, 21)
    u_steps = [(edges[i], edges[i + 1], us[i]) for i in range(20)]

    x0 = np.array([0.3, -0.2, 0.1, 0.4])  # (z, z', s, s')
    full = car_full_state_oracle(m1, m2, k, d, theta, x0, u_steps, edges[1:])

    y, yd, eta = io_state_from_full(x0, m2, d, theta)
    y = np.array([y])
    yd = np.array([yd])
    worst = 0.0
    for i, (t0, t1, u) in enumerate(u_steps):
        _, ys, yds, ets = integrate_hold(plant, y, yd, eta, np.array([u]), t0, t1, substeps=200)
        y, yd, eta = ys[-1], yds[-1], ets[-1]
        y_o, yd_o, eta_o = io_state_from_full(full[i], m2, d, theta)
        worst = max(
            worst,
            abs(y[0] - y_o),
            abs(yd[0] - yd_o),
            float(np.max(np.abs(eta - eta_o))),
        )
    assert worst < 1e-8


def test_mass_on_car_rejects_degenerate_geometry():
    for theta in (0.0, np.pi / 2, -0.3, 2.0):
        with pytest.raises(ValueError):
            mass_on_car(theta=theta)
    for kwargs in (dict(m1=0.0), dict(m2=-1.0), dict(k=0.0), dict(d=0.0)):
        with pytest.raises(ValueError):
            mass_on_car(**kwargs)


def test_worst_case_bounds_hand_examples():
    trivial = LinearIOPlant(
        R0=[[0.0]], R1=[[0.0]], S=np.zeros((1, 0)),
        Gamma=[[1.0]], Q=np.zeros((0, 0)), P=np.zeros((0, 1)),
    )
    b = worst_case_bounds(trivial, 1.0, 1.0, 1.0)
    assert (b.f_max, b.g_max, b.g_min) == (0.0, 1.0, 1.0)

    two = LinearIOPlant(
        R0=np.zeros((2, 2)), R1=np.zeros((2, 2)), S=np.zeros((2, 0)),
        Gamma=np.diag([2.0, 3.0]), Q=np.zeros((0, 0)), P=np.zeros((0, 2)),
    )
    b = worst_case_bounds(two, 0.0, 0.0, 0.0)
    assert b.g_max == pytest.approx(3.0, abs=1e-12)
    assert b.g_min == pytest.approx(2.0, abs=1e-12)

    scalar = LinearIOPlant(
        R0=[[1.0]], R1=[[0.5]], S=np.zeros((1, 0)),
        Gamma=[[1.0]], Q=np.zeros((0, 0)), P=np.zeros((0, 1)),
    )
    assert worst_case_bounds(scalar, 1.0, 2.0, 5.0).f_max == pytest.approx(2.0, abs=1e-12)

    with pytest.raises(ValueError):
        worst_case_bounds(trivial, -1.0, 0.0, 0.0)


def test_worst_case_bounds_dominate_samples(conftest_rng=None):
    from conftest import random_linear_plant

    rng = np.random.default_rng(17)
    for _ in range(10):
        plant = random_linear_plant(rng)
        m, l = plant.output_dim, plant.internal_dim
        yb, ydb, eb = rng.uniform(0.1, 2.0, 3)
        bounds = worst_case_bounds(plant, yb, ydb, eb)

        def ball(dim, radius):
            if dim == 0:
                return np.zeros(0)
            v = rng.standard_normal(dim)
            return v / max(np.linalg.norm(v), 1e-300) * radius * rng.uniform(0.0, 1.0)

        for _ in range(50):
            y, yd, eta = ball(m, yb), ball(m, ydb), ball(l, eb)
            assert np.linalg.norm(plant.drift(None, y, yd, eta)) <= bounds.f_max + 1e-9
            z = rng.standard_normal(m)
            assert float(z @ (plant.Gamma @ z)) >= bounds.g_min * float(z @ z) - 1e-9
            assert np.linalg.norm(plant.Gamma @ z) <= bounds.g_max * np.linalg.norm(z) + 1e-9


def test_bibs_bound_closed_forms():
    assert bibs_state_bound(-np.eye(2), np.zeros((2, 1)), np.zeros(2), 1.0) == 0.0
    # Q = -I: X = I/2, M = 1, omega = 1 -> bound = ||P|| * y_bound
    got = bibs_state_bound(-np.eye(2), np.array([[1.0], [0.0]]), np.zeros(2), 1.0)
    assert got == pytest.approx(1.0, abs=1e-12)
    got = bibs_state_bound(-np.eye(2), np.zeros((2, 1)), np.array([3.0, 4.0]), 7.0)
    assert got == pytest.approx(5.0, abs=1e-12)
    with pytest.raises(ValueError):
        bibs_state_bound(np.eye(2), np.zeros((2, 1)), np.zeros(2), 1.0)
    assert bibs_state_bound(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros(0), 1.0) == 0.0


def test_bibs_bound_dominates_trajectories():
    import scipy.linalg

    rng = np.random.default_rng(23)
    for _ in range(5):
        q = rng.standard_normal((3, 3))
        q = q - (np.max(np.linalg.eigvals(q).real) + 0.7) * np.eye(3)
        p = 0.5 * rng.standard_normal((3, 2))
        eta0 = rng.standard_normal(3)
        y_bound = 1.3
        h_bound = bibs_state_bound(q, p, eta0, y_bound)

        # exact piecewise-constant response: eta+ = e^{Q dt} eta + Q^{-1}(e^{Q dt}-I) P y
        dt = 0.05
        ed = scipy.linalg.expm(q * dt)
        forced = np.linalg.solve(q, (ed - np.eye(3)))
        eta = eta0.copy()
        for _ in range(400):
            y = rng.standard_normal(2)
            y = y / np.linalg.norm(y) * y_bound * rng.uniform(0.0, 1.0)
            eta = ed @ eta + forced @ (p @ y)
            assert np.linalg.norm(eta) <= h_bound + 1e-9


def test_unforced_car_settles_at_rest():
    # stretched spring, everything else at rest; with u = 0 the damper brings
    # the coupled system to an equilibrium where the drift must vanish
    plant = mass_on_car()
    y = np.zeros(1)
    yd = np.zeros(1)
    eta = np.array([1.0, 0.0])
    _, ys, yds, ets = integrate_hold(plant, y, yd, eta, np.zeros(1), 0.0, 80.0, substeps=8000)
    y, yd, eta = ys[-1], yds[-1], ets[-1]
    assert abs(yd[0]) < 1e-6
    assert np.linalg.norm(plant.drift(None, y, yd, eta)) < 1e-6
    assert np.linalg.norm(plant.internal(eta, y, yd)) < 1e-6


def test_additive_disturbance_wraps_drift_and_forces_generic_path():
    base = mass_on_car()
    wrapped = AdditiveDisturbance(base, SinusoidSignal(amplitudes=(0.05,), omega=3.0))
    assert wrapped.disturbance_dim == 1
    assert wrapped.output_dim == base.output_dim
    assert wrapped.internal_dim == base.internal_dim

    t = 0.37
    d = wrapped.disturbance(t)
    assert d == pytest.approx(0.05 * np.sin(3.0 * t), abs=1e-15)
    y, yd, eta = np.array([0.2]), np.array([-0.1]), np.array([0.3, 0.4])
    assert wrapped.drift(d, y, yd, eta) == pytest.approx(
        base.drift(None, y, yd, eta) + d, abs=1e-15
    )

    trace = simulate(
        wrapped,
        SinusoidReference([[(0.4, np.pi / 2, 0.0)]]),
        ConstantFunnel(0.08),
        ControlLawConfig(beta=25.2, lam=0.7),
        SimConfig(tau=1.8e-3, horizon=0.5),
    )
    assert trace.backend == "python"  # wrapped plant is not kernel-eligible
    assert trace.feasible


def test_construction_rejections():
    eye0 = np.zeros((0, 0))
    with pytest.raises(ValueError):
        LinearIOPlant(R0=[[0.0]], R1=[[0.0]], S=np.zeros((1, 0)),
                      Gamma=[[0.0]], Q=eye0, P=np.zeros((0, 1)))
    with pytest.raises(ValueError):
        LinearIOPlant(R0=[[0.0]], R1=[[0.0]], S=np.zeros((1, 0)),
                      Gamma=[[-1.0]], Q=eye0, P=np.zeros((0, 1)))
    with pytest.raises(ValueError):  # purely skew gain: symmetric part is zero
        LinearIOPlant(R0=np.zeros((2, 2)), R1=np.zeros((2, 2)), S=np.zeros((2, 0)),
                      Gamma=[[0.0, 1.0], [-1.0, 0.0]], Q=eye0, P=np.zeros((0, 2)))
    with pytest.raises(ValueError):  # unstable internal dynamics
        LinearIOPlant(R0=[[0.0]], R1=[[0.0]], S=[[1.0]],
                      Gamma=[[1.0]], Q=[[0.1]], P=[[0.0]])
    with pytest.raises(ValueError):  # non-finite entry
        LinearIOPlant(R0=[[np.nan]], R1=[[0.0]], S=np.zeros((1, 0)),
                      Gamma=[[1.0]], Q=eye0, P=np.zeros((0, 1)))


def test_eta0_default_and_custom():
    p = LinearIOPlant(R0=[[0.0]], R1=[[0.0]], S=[[1.0, 0.0]],
                      Gamma=[[1.0]], Q=[[-1.0, 0.0], [0.0, -2.0]],
                      P=[[1.0], [0.0]], eta0=[0.5, -0.5])
    assert np.array_equal(p.eta0, [0.5, -0.5])
    assert p.internal(np.array([1.0, 1.0]), np.array([2.0]), None) == pytest.approx(
        [1.0, -2.0], abs=1e-15
    )


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(5)
    for _ in range(30):
        a = rng.standard_normal((int(rng.integers(1, 6)), int(rng.integers(1, 6))))
        assert spectral_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], abs=1e-10)
    assert spectral_norm(np.zeros((0, 0))) == 0.0
    assert spectral_norm(np.zeros((3, 0))) == 0.0
