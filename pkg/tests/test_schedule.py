import numpy as np
import pytest

import vrsgd
from vrsgd import objective as obj
from vrsgd import schedules as sch
from vrsgd import serial as ser


@pytest.fixture(scope="module")
def problem():
    ds = vrsgd.normalize_rows(vrsgd.generate_synthetic(40, 12, 3, seed=7, flip=0.1))
    return vrsgd.Problem(ds, lam=1.0 / 40)


def spec_for(kind, n, m=20, S=None, freq=None):
    kw = {"kind": kind, "m": m}
    if kind == "hsag":
        kw["hsag_S"] = S if S is not None else np.arange(0, n, 2)
        if freq is not None:
            kw["hsag_freq"] = freq
    return sch.ScheduleSpec(**kw)


def average_direction(state, p, x):
    acc = np.zeros(p.dim)
    for i in range(p.n):
        acc += sch.vr_direction(state, p, i, x=x)
    return acc / p.n


def test_direction_telescopes_at_fresh_state(problem, rng):
    p = problem
    x0 = rng.standard_normal(p.dim) * 0.2
    for kind in ("svrg", "saga", "hsag"):
        state = sch.make_state(p, spec_for(kind, p.n), x0)
        d = sch.vr_direction(state, p, 4, x=x0)
        # anchors sit at the current iterate, so the direction is exactly gbar
        assert np.array_equal(d, state.gbar)
        assert np.abs(state.gbar - obj.full_gradient(p, x0)).max() <= 1e-12


def test_unbiasedness_along_trajectory(problem, rng):
    p = problem
    for kind in ("svrg", "saga", "hsag", "gd"):
        m = 5 if kind == "gd" else 20
        spec = spec_for(kind, p.n, m=m)
        cfg = ser.SolverConfig(eta=0.1 / p.smoothness, epochs=1, schedule=spec,
                               pick_rule="uniform", seed=3)
        x = rng.standard_normal(p.dim) * 0.1
        state = sch.make_state(p, spec, x)
        for k in range(3):
            er, state = ser.run_epoch(p, cfg, x, state, epoch_index=k)
            x[:] = er.x_tilde
            probe = rng.standard_normal(p.dim) * 0.3
            avg = average_direction(state, p, probe)
            full = obj.full_gradient(p, probe)
            assert np.abs(avg - full).max() <= 1e-12, kind


def test_gd_direction_is_exact_gradient(problem, rng):
    p = problem
    x0 = rng.standard_normal(p.dim) * 0.2
    spec = spec_for("gd", p.n, m=4)
    state = sch.make_state(p, spec, x0)
    x1 = rng.standard_normal(p.dim) * 0.2
    sch.schedule_update(spec, state, p, t=0, i_t=2, x_t=x0, x_next=x1)
    d = sch.vr_direction(state, p, 7, x=x1)
    assert np.array_equal(d, state.gbar)
    assert np.abs(d - obj.full_gradient(p, x1)).max() <= 1e-12


def test_svrg_state_unchanged_mid_epoch(problem, rng):
    p = problem
    spec = spec_for("svrg", p.n, m=10)
    x0 = rng.standard_normal(p.dim) * 0.1
    state = sch.make_state(p, spec, x0)
    anchors = state.anchors.copy()
    gbar = state.gbar.copy()
    for t in (1, 3, 7, 9):
        sch.schedule_update(spec, state, p, t=t, i_t=1,
                            x_t=rng.standard_normal(p.dim), x_next=rng.standard_normal(p.dim))
    assert np.array_equal(state.anchors, anchors)
    assert np.array_equal(state.gbar, gbar)
    # and the epoch trigger moves it
    xt = rng.standard_normal(p.dim)
    sch.schedule_update(spec, state, p, t=10, i_t=1, x_t=xt, x_next=xt)
    assert np.array_equal(state.anchors[0], xt)


def test_saga_incremental_average_matches_recompute(problem, rng):
    p = problem
    spec = spec_for("saga", p.n)
    x = rng.standard_normal(p.dim) * 0.1
    state = sch.make_state(p, spec, x)
    for t in range(60):
        i = int(rng.integers(0, p.n))
        x_next = x - 0.01 * sch.vr_direction(state, p, i, x=x)
        sch.schedule_update(spec, state, p, t=t, i_t=i, x_t=x, x_next=x_next)
        x = x_next
    assert state.gbar_drift(p) <= 1e-10


def test_hsag_full_set_equals_saga_stepwise(problem, rng):
    p = problem
    n = p.n
    saga = sch.make_state(p, spec_for("saga", n), np.zeros(p.dim))
    hsag = sch.make_state(p, spec_for("hsag", n, S=np.arange(n)), np.zeros(p.dim))
    x = np.zeros(p.dim)
    for t in range(50):
        i = int(rng.integers(0, n))
        x_next = x - 0.02 * sch.vr_direction(saga, p, i, x=x)
        sch.schedule_update(spec_for("saga", n), saga, p, t, i, x, x_next)
        sch.schedule_update(spec_for("hsag", n, S=np.arange(n)), hsag, p, t, i, x, x_next)
        x = x_next
    assert np.array_equal(saga.tvals, hsag.tvals)
    assert np.array_equal(saga.gbar, hsag.gbar)
    assert np.array_equal(saga.tmarg, hsag.tmarg)


def test_limiting_trajectories_bitwise(problem):
    p = problem
    n, m = p.n, 2 * p.n
    eta = 0.1 / p.smoothness

    def run(spec):
        cfg = ser.SolverConfig(eta=eta, epochs=3, schedule=spec,
                               pick_rule="uniform", seed=13)
        return ser.solve(p, cfg)

    r_saga = run(spec_for("saga", n, m=m))
    r_full = run(spec_for("hsag", n, m=m, S=np.arange(n)))
    assert np.array_equal(r_saga.x, r_full.x)
    assert r_saga.trace.f_tilde == r_full.trace.f_tilde

    r_svrg = run(spec_for("svrg", n, m=m))
    r_none = run(spec_for("hsag", n, m=m, S=np.array([], dtype=int), freq=m))
    assert np.array_equal(r_svrg.x, r_none.x)
    assert r_svrg.trace.f_tilde == r_none.trace.f_tilde


def test_hsag_heterogeneous_frequencies(problem):
    p = problem
    n = p.n
    off = np.setdiff1d(np.arange(n), np.arange(0, n, 2))
    freqs = np.where(off % 4 == 1, 10, 20)
    spec = sch.ScheduleSpec(kind="hsag", m=20, hsag_S=np.arange(0, n, 2),
                            hsag_freq=freqs)
    cfg = ser.SolverConfig(eta=0.1 / p.smoothness, epochs=2, schedule=spec,
                           pick_rule="uniform", seed=5)
    res = ser.solve(p, cfg)
    assert np.isfinite(res.trace.f_tilde[-1])
    state = res.state
    assert state.gbar_drift(p) <= 1e-10
    # distinct frequencies really produce distinct anchors mid-epoch
    events = sch.refresh_events(state, 0, 20)
    assert [t for t, _ in events] == [0, 10]


def test_running_average_integrity_after_solve(problem):
    p = problem
    for kind in ("saga", "sag", "hsag"):
        spec = spec_for(kind, p.n, m=2 * p.n)
        cfg = ser.SolverConfig(eta=0.05 / p.smoothness, epochs=3, schedule=spec,
                               pick_rule="uniform", seed=2)
        res = ser.solve(p, cfg)
        assert res.state.gbar_drift(p) <= 1e-10, kind


def test_snapshot_cached_gradient(problem):
    p = problem
    spec = spec_for("svrg", p.n, m=2 * p.n)
    cfg = ser.SolverConfig(eta=0.1 / p.smoothness, epochs=2, schedule=spec,
                           pick_rule="uniform", seed=1)
    res = ser.solve(p, cfg)
    anchor = res.state.anchors[0]
    assert np.abs(res.state.gbar - obj.full_gradient(p, anchor)).max() <= 1e-12


def test_memory_accounting(problem):
    p = problem
    nnz = p.data.nnz
    svrg = sch.make_state(p, spec_for("svrg", p.n), np.zeros(p.dim))
    assert svrg.table_slot_count() == 0
    assert svrg.anchors.shape == (1, p.dim)
    saga = sch.make_state(p, spec_for("saga", p.n), np.zeros(p.dim))
    assert saga.table_slot_count() == nnz
    S = np.arange(0, p.n, 2)
    hsag = sch.make_state(p, spec_for("hsag", p.n, S=S), np.zeros(p.dim))
    widths = np.diff(p.data.indptr)
    assert hsag.table_slot_count() == int(widths[S].sum())


def test_is_biased():
    n = 10
    assert sch.is_biased(sch.ScheduleSpec(kind="sag", m=5))
    for kind in ("svrg", "saga", "gd"):
        assert not sch.is_biased(sch.ScheduleSpec(kind=kind, m=5))
    assert not sch.is_biased(sch.ScheduleSpec(kind="hsag", m=5, hsag_S=np.arange(n)))


def test_alpha_point_reconstruction(problem, rng):
    p = problem
    spec = spec_for("saga", p.n)
    state = sch.make_state(p, spec, np.zeros(p.dim))
    point = rng.standard_normal(p.dim) * 0.4
    sch.schedule_update(spec, state, p, t=0, i_t=5, x_t=point, x_next=point)
    alpha = state.alpha_point(p, 5)
    lo, hi = p.data.indptr[5], p.data.indptr[6]
    sup = p.data.indices[lo:hi]
    assert np.abs(alpha[sup] - point[sup]).max() <= 1e-12


def test_spec_validation():
    with pytest.raises(ValueError):
        sch.ScheduleSpec(kind="nope", m=5)
    with pytest.raises(ValueError):
        sch.ScheduleSpec(kind="svrg", m=0)
    with pytest.raises(ValueError):
        sch.ScheduleSpec(kind="hsag", m=5)
    with pytest.raises(ValueError):
        sch.ScheduleSpec(kind="svrg", m=5, hsag_S=np.arange(3))
