"""Tests for the hybrid simulator, monitors and CSV artifacts."""

import dataclasses
import math

import numpy as np
import pytest

from dynstc.engine import StcConfig, TriggerDecision, t_max_cap, t_min_of
from dynstc.sim import (
    FlowPoint,
    IntegrationBlowupError,
    MonitorRecord,
    RegionEscapeError,
    monitor_flow_bound,
    simulate,
    simulate_periodic,
    write_decisions_csv,
    write_monitors_csv,
    write_trajectory_csv,
)
from dynstc.synthesis import ParameterFamily, ParameterSet
from dynstc.systems import linear_test
from dynstc.timing import t_max


def _family(*triples):
    sets = tuple(ParameterSet(epsilon=e, gamma=g, l_const=l) for e, g, l in triples)
    return ParameterFamily(sets=sets, fallback_index=0)


def _linear_cfg(m=5, c=1.0):
    fam = _family((0.5, 1.05, 0.05), (-1.0, 1.05, 0.05), (-5.0, 1.05, 0.05))
    return StcConfig(family=fam, c=c, m=m), linear_test(c=c)


def test_initial_jump_and_termination():
    cfg, spec = _linear_cfg()
    traj = simulate([0.5], cfg, spec, t_end=3.0)
    assert traj.samples[0].t == 0.0
    assert traj.samples[0].j == 1
    assert [s.j for s in traj.samples] == list(range(1, len(traj.samples) + 1))
    assert traj.samples[-1].t >= 3.0
    assert traj.samples[-2].t < 3.0
    assert len(traj.decisions) == len(traj.samples)


def test_equilibrium_run():
    cfg, spec = _linear_cfg()
    traj = simulate([0.0], cfg, spec, t_end=5.0)
    assert all(s.v == 0.0 for s in traj.samples)
    assert all(p.v == 0.0 and p.u == 0.0 for p in traj.flow_points)
    # at the origin every set certifies its full cap
    cap = t_max_cap(cfg)
    for d in traj.decisions:
        assert d.h == pytest.approx(cap, rel=1e-12)
    assert not traj.violations()


def test_fallback_decrease_single_set():
    fam = _family((0.5, 1.05, 0.05))
    spec = linear_test()
    cfg = StcConfig(family=fam, c=1.0, m=1)
    traj = simulate([0.9], cfg, spec, t_end=4.0)
    tmin = t_min_of(cfg)
    rho = math.exp(-0.5 * tmin)
    assert all(d.used_fallback for d in traj.decisions)
    for a, b in zip(traj.samples, traj.samples[1:]):
        assert b.v <= rho * a.v * (1.0 + 1e-6)
    assert not traj.violations()


def test_sample_gaps_within_bounds():
    cfg, spec = _linear_cfg()
    traj = simulate([0.8], cfg, spec, t_end=6.0)
    tmin, cap = t_min_of(cfg), t_max_cap(cfg)
    gaps = traj.intervals()
    assert gaps
    for g, d in zip(gaps, traj.decisions):
        assert g == pytest.approx(d.h, rel=1e-12)
        assert tmin * (1 - 1e-12) <= g <= cap * (1 + 1e-12)


def test_window_lengthens_intervals():
    # with a window of past (larger) energies the log bound opens up and
    # negative-eps sets certify beyond the fall-back floor
    cfg, spec = _linear_cfg(m=5)
    traj = simulate([0.8], cfg, spec, t_end=6.0)
    assert any(not d.used_fallback for d in traj.decisions)
    assert max(d.h for d in traj.decisions) > t_min_of(cfg)


def test_jump_and_flow_consistency():
    cfg, spec = _linear_cfg()
    traj = simulate([0.7], cfg, spec, t_end=2.0)
    by_j = {}
    for p in traj.flow_points:
        by_j.setdefault(p.j, []).append(p)
    for k, smp in enumerate(traj.samples[:-1]):
        pts = by_j[smp.j]
        assert pts[0].t == smp.t
        # post-jump e = 0, so U(t_j+) = V(t_j+) and x matches the sample
        np.testing.assert_array_equal(pts[0].x, smp.x)
        assert pts[0].u == pytest.approx(pts[0].v, rel=1e-12)
        # flow is continuous into the next sample
        np.testing.assert_allclose(pts[-1].x, traj.samples[k + 1].x, rtol=1e-12)
        assert pts[-1].t == pytest.approx(traj.samples[k + 1].t, rel=1e-12)


def test_monitor_suite_passes_on_linear():
    cfg, spec = _linear_cfg()
    traj = simulate([0.9], cfg, spec, t_end=6.0)
    names = {r.monitor for r in traj.monitors}
    assert names == {"flow-bound", "region", "sample-decrease",
                     "combined-decrease", "running-cap", "window-envelope"}
    assert not traj.violations()
    flow = [r for r in traj.monitors if r.monitor == "flow-bound"]
    assert len(flow) == len(traj.samples) - 1


def test_monitor_inapplicable_beyond_horizon():
    dec = TriggerDecision(h=10.0, set_index=0, used_fallback=True,
                          bound_type="fallback-decrease", lambda_cap_used=1.0,
                          epsilon=0.5, v_now=1.0, c_val=1.0)
    assert 10.0 >= t_max(2.0, 1.0)
    pts = [FlowPoint(t=0.0, j=1, x=np.array([1.0]), v=1.0, u=1.0)]
    rec = monitor_flow_bound(pts, dec, gamma=2.0, l_const=0.5, v_plus=1.0,
                             t_start=0.0)
    assert rec.passed
    assert "inapplicable" in rec.note
    assert math.isnan(rec.slack)


def test_baseline_dominance_counts():
    cfg, spec = _linear_cfg(m=5)
    cfg1 = dataclasses.replace(cfg, m=1)
    horizon = 40.0
    dyn = simulate([0.8], cfg, spec, t_end=horizon, monitors=False)
    stat = simulate([0.8], cfg1, spec, t_end=horizon, monitors=False)
    per = simulate_periodic([0.8], spec, t_min_of(cfg), horizon)
    n_dyn = dyn.n_samples_before(horizon)
    n_stat = stat.n_samples_before(horizon)
    n_per = per.n_samples_before(horizon)
    assert n_dyn <= n_stat <= n_per
    assert n_dyn < n_per


def test_refinement_stability():
    cfg, spec = _linear_cfg()
    tmin = t_min_of(cfg)
    a = simulate([0.9], cfg, spec, t_end=4.0, dt_flow=tmin / 32.0)
    b = simulate([0.9], cfg, spec, t_end=4.0, dt_flow=tmin / 64.0)
    assert len(a.samples) == len(b.samples)
    for da, db in zip(a.decisions, b.decisions):
        assert da.set_index == db.set_index
        assert da.used_fallback == db.used_fallback
        assert da.h == pytest.approx(db.h, rel=1e-9)
    sa = {(r.monitor, r.j): r.slack for r in a.monitors}
    sb = {(r.monitor, r.j): r.slack for r in b.monitors}
    assert set(sa) == set(sb)
    for key, slack in sa.items():
        assert sb[key] == pytest.approx(slack, abs=1e-6 * (1 + abs(slack)))


def test_region_escape():
    base = linear_test(c=1.0)
    spec = dataclasses.replace(base, f=lambda x, e: np.asarray(x, dtype=float))
    cfg = StcConfig(family=_family((0.5, 1.05, 0.05)), c=1.0, m=1)
    with pytest.raises(RegionEscapeError) as exc:
        simulate([0.9], cfg, spec, t_end=5.0)
    assert exc.value.v > 1.0
    assert exc.value.t is not None and 0.0 < exc.value.t < 1.0


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_integration_blowup():
    base = linear_test(c=1e300)
    spec = dataclasses.replace(base, f=lambda x, e: np.asarray(x, dtype=float) ** 3)
    cfg = StcConfig(family=_family((0.5, 1.05, 0.05)), c=1e300, m=1)
    with pytest.raises(IntegrationBlowupError):
        simulate([1e80], cfg, spec, t_end=5.0)


def test_dt_flow_validation():
    cfg, spec = _linear_cfg()
    tmin = t_min_of(cfg)
    with pytest.raises(ValueError):
        simulate([0.5], cfg, spec, t_end=1.0, dt_flow=tmin / 8.0)
    with pytest.raises(ValueError):
        simulate([0.5], cfg, spec, t_end=-1.0)
    with pytest.raises(ValueError):
        simulate_periodic([0.5], spec, 0.0, 1.0)


def test_periodic_baseline():
    spec = linear_test()
    traj = simulate_periodic([0.5], spec, period=0.25, t_end=1.0)
    assert traj.kind == "periodic"
    assert traj.period == 0.25
    np.testing.assert_allclose(traj.sample_times(), [0.0, 0.25, 0.5, 0.75, 1.0])
    assert traj.n_samples_before(1.0) == 4
    assert traj.decisions == ()
    assert all(math.isnan(p.u) for p in traj.flow_points)
    assert all(s.v <= 0.25 for s in traj.samples)   # contraction
    # equilibrium stays put
    still = simulate_periodic([0.0], spec, period=0.25, t_end=1.0)
    assert all(s.v == 0.0 for s in still.samples)


def test_periodic_region_escape():
    base = linear_test(c=1.0)
    spec = dataclasses.replace(base, f=lambda x, e: np.asarray(x, dtype=float))
    with pytest.raises(RegionEscapeError):
        simulate_periodic([0.9], spec, period=0.5, t_end=5.0)


def test_csv_writers(tmp_path):
    cfg, spec = _linear_cfg()
    traj = simulate([0.9], cfg, spec, t_end=2.0)
    tp, dp, mp = tmp_path / "t.csv", tmp_path / "d.csv", tmp_path / "m.csv"
    write_trajectory_csv(tp, traj)
    write_decisions_csv(dp, traj)
    write_monitors_csv(mp, traj)
    tlines = tp.read_text().splitlines()
    assert tlines[0] == "t,j,x1,V,U,interval,set_index,used_fallback"
    assert len(tlines) == 1 + len(traj.flow_points)
    dlines = dp.read_text().splitlines()
    assert dlines[0] == "j,t,h,set_index,epsilon,used_fallback,V,C"
    assert len(dlines) == 1 + len(traj.decisions)
    assert dlines[1].startswith("1,0.0,")
    mlines = mp.read_text().splitlines()
    assert mlines[0] == "monitor,j,slack,passed"
    assert all(line.endswith(",1") for line in mlines[1:])
    # determinism: a second identical run yields identical bytes
    traj2 = simulate([0.9], cfg, spec, t_end=2.0)
    tp2 = tmp_path / "t2.csv"
    write_trajectory_csv(tp2, traj2)
    assert tp2.read_bytes() == tp.read_bytes()


def test_periodic_csv(tmp_path):
    spec = linear_test()
    traj = simulate_periodic([0.5], spec, period=0.25, t_end=0.5)
    path = tmp_path / "p.csv"
    write_trajectory_csv(path, traj)
    lines = path.read_text().splitlines()
    assert lines[1].split(",")[6] == "-1"   # set_index column
