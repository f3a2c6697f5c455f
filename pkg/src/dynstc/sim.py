"""Hybrid simulation of the sampled-data loop with proof-derived monitors.

Between samples the state flows under x' = f(x, e(t)) with the hold
error reconstructed exactly as e(t) = x(t_j) - x(t); at each scheduled
instant the trigger jump of :mod:`dynstc.engine` fires.  There is a jump
at t = 0, so sample k lives at hybrid time (t_k, k+1).

Every run can be checked against the inequalities that back the design:

* flow bound:  V(x(t)) <= U(xi(t)) <= exp(rate*(t - t_j)) * V(t_j+)
  along each segment, where U = V + gamma*phi(tau)*W^2 and phi is the
  comparison-ODE solution pinned to the issued interval;
* sample decrease: the certificate recorded with each decision
  (window bound or fall-back decrease), their combination with
  rate min{eps_1, eps_ref}, a running cap, and a windowed geometric
  envelope;
* region invariance: V <= c (plus tolerance) at every flow node.

Integration is fixed-step RK4 with the last step shortened to land
exactly on the next sample; sampling instants are known in advance, so
no event detection is needed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .engine import (
    FALLBACK_DECREASE,
    WINDOW_BOUND,
    HybridState,
    StcConfig,
    eta_initial,
    stc_step,
    t_min_of,
)
from .timing import HorizonError, phi_solve, solve_lambda_for_horizon

__all__ = [
    "RegionEscapeError",
    "IntegrationBlowupError",
    "Sample",
    "FlowPoint",
    "MonitorRecord",
    "HybridTrajectory",
    "simulate",
    "simulate_periodic",
    "monitor_flow_bound",
    "monitor_sample_decrease",
    "run_monitors",
    "write_trajectory_csv",
    "write_decisions_csv",
    "write_monitors_csv",
]

REGION_TOL_REL = 1e-6
MON_TOL = 1e-7
FLOW_RECORD_TARGET = 64  # dense records per segment before striding


class RegionEscapeError(RuntimeError):
    """V exceeded c + tolerance during flow; guarantees no longer apply."""

    def __init__(self, message, t=None, x=None, v=None):
        super().__init__(message)
        self.t = t
        self.x = x
        self.v = v


class IntegrationBlowupError(RuntimeError):
    """Non-finite state encountered during flow integration."""


@dataclass(frozen=True)
class Sample:
    t: float
    j: int
    x: np.ndarray
    v: float
    eta: tuple


@dataclass(frozen=True)
class FlowPoint:
    t: float
    j: int
    x: np.ndarray
    v: float
    u: float


@dataclass(frozen=True)
class MonitorRecord:
    monitor: str
    j: int
    slack: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class HybridTrajectory:
    samples: tuple
    decisions: tuple
    flow_points: tuple
    monitors: tuple = ()
    kind: str = "dynamic"
    period: float | None = None

    def intervals(self):
        return [s2.t - s1.t for s1, s2 in zip(self.samples, self.samples[1:])]

    def sample_times(self):
        return [s.t for s in self.samples]

    def n_samples_before(self, t_lim: float) -> int:
        return sum(1 for s in self.samples if s.t < t_lim)

    def violations(self):
        return [r for r in self.monitors if not r.passed]


@lru_cache(maxsize=512)
def _phi_for(h: float, gamma: float, lam_cap: float):
    lam = solve_lambda_for_horizon(h, gamma, lam_cap)
    return phi_solve(lam, gamma, lam_cap)


def _rk4_segment(spec, x_hold, h, dt_flow):
    """Integrate one hold interval; returns node states and offsets.

    All RK4 stages see the reconstructed error e = x_hold - x_stage.
    """
    n_full = int(h / dt_flow)
    rem = h - n_full * dt_flow
    steps = [dt_flow] * n_full
    if rem > 1e-12 * h:
        steps.append(rem)
    elif steps:
        steps[-1] += rem
    else:
        steps = [h]
    xs = np.empty((len(steps) + 1, x_hold.shape[0]))
    xs[0] = x_hold
    x = x_hold
    f = spec.f
    for k, st in enumerate(steps):
        k1 = f(x, x_hold - x)
        x2 = x + 0.5 * st * k1
        k2 = f(x2, x_hold - x2)
        x3 = x + 0.5 * st * k2
        k3 = f(x3, x_hold - x3)
        x4 = x + st * k3
        k4 = f(x4, x_hold - x4)
        x = x + (st / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        xs[k + 1] = x
    taus = np.concatenate([[0.0], np.cumsum(steps)])
    taus[-1] = h
    return xs, taus


def _check_flow(xs, vs, c, t_start, taus):
    if not np.all(np.isfinite(xs)):
        bad = int(np.nonzero(~np.all(np.isfinite(xs), axis=-1))[0][0])
        raise IntegrationBlowupError(
            f"non-finite state at t = {t_start + taus[bad]:.6g}")
    lim = c * (1.0 + REGION_TOL_REL)
    if np.any(vs > lim):
        bad = int(np.nonzero(vs > lim)[0][0])
        raise RegionEscapeError(
            f"V = {vs[bad]:.6g} left the region level c = {c:.6g} "
            f"at t = {t_start + taus[bad]:.6g}",
            t=float(t_start + taus[bad]), x=xs[bad].copy(), v=float(vs[bad]))


def _record_stride(n_steps):
    return max(1, int(n_steps / FLOW_RECORD_TARGET))


def _flow_u(spec, dec, gamma, xs, taus, x_hold):
    """U = V + gamma*phi(tau)*W(e)^2 at the given nodes."""
    phi = _phi_for(dec.h, gamma, dec.lambda_cap_used)
    w = spec.w(x_hold - xs)
    vs = np.asarray(spec.v(xs), dtype=float)
    return vs + gamma * phi.evaluate(taus) * w * w


def simulate(x0, cfg: StcConfig, spec, t_end: float, dt_flow: float | None = None,
             monitors: bool = True) -> HybridTrajectory:
    """Run the dynamic mechanism from x0 until the first sample >= t_end."""
    tmin = t_min_of(cfg)
    if dt_flow is None:
        dt_flow = tmin / 32.0
    if not (0.0 < dt_flow <= tmin / 16.0):
        raise ValueError(f"dt_flow must lie in (0, t_min/16] = (0, {tmin / 16.0:.6g}]")
    if t_end < 0.0:
        raise ValueError("t_end must be non-negative")
    x0 = np.asarray(x0, dtype=float)
    v0 = float(spec.v(x0))
    state = HybridState(x=x0, e=np.zeros(spec.n_e),
                        eta=eta_initial(cfg.m, v0, cfg.eta_init), tau=0.0, s=0.0)
    t = 0.0
    samples, decisions, flow_points = [], [], []
    while True:
        state, dec = stc_step(state, cfg, spec)
        j = len(decisions) + 1
        decisions.append(dec)
        samples.append(Sample(t=t, j=j, x=state.x.copy(), v=dec.v_now,
                              eta=state.eta.eta))
        if t >= t_end:
            break
        xs, taus = _rk4_segment(spec, state.x, dec.h, dt_flow)
        vs = np.asarray(spec.v(xs), dtype=float)
        _check_flow(xs, vs, cfg.c, t, taus)
        gamma = cfg.family.sets[dec.set_index].gamma
        us = _flow_u(spec, dec, gamma, xs, taus, state.x)
        stride = _record_stride(len(taus) - 1)
        idx = list(range(0, len(taus) - 1, stride)) + [len(taus) - 1]
        for k in idx:
            flow_points.append(FlowPoint(t=t + taus[k], j=j, x=xs[k].copy(),
                                         v=float(vs[k]), u=float(us[k])))
        t += dec.h
        state = HybridState(x=xs[-1], e=xs[0] - xs[-1], eta=state.eta,
                            tau=dec.h, s=dec.h)
    traj = HybridTrajectory(samples=tuple(samples), decisions=tuple(decisions),
                            flow_points=tuple(flow_points))
    if monitors:
        traj = HybridTrajectory(samples=traj.samples, decisions=traj.decisions,
                                flow_points=traj.flow_points,
                                monitors=tuple(run_monitors(traj, cfg)))
    return traj


def simulate_periodic(x0, spec, period: float, t_end: float,
                      dt_flow: float | None = None,
                      c: float | None = None) -> HybridTrajectory:
    """Constant-interval baseline on the same flow/jump machinery."""
    if not (period > 0.0):
        raise ValueError("period must be positive")
    if c is None:
        c = spec.region_c
    if dt_flow is None:
        dt_flow = period / 32.0
    if not (0.0 < dt_flow <= period / 16.0):
        raise ValueError("dt_flow must lie in (0, period/16]")
    x0 = np.asarray(x0, dtype=float)
    t = 0.0
    x = x0
    samples, flow_points = [], []
    monitors = []
    while True:
        j = len(samples) + 1
        v = float(spec.v(x))
        if v > c * (1.0 + REGION_TOL_REL):
            raise RegionEscapeError(
                f"V = {v:.6g} exceeds c = {c:.6g} at sample t = {t:.6g}",
                t=t, x=x.copy(), v=v)
        samples.append(Sample(t=t, j=j, x=x.copy(), v=v, eta=()))
        if t >= t_end:
            break
        xs, taus = _rk4_segment(spec, x, period, dt_flow)
        vs = np.asarray(spec.v(xs), dtype=float)
        _check_flow(xs, vs, c, t, taus)
        stride = _record_stride(len(taus) - 1)
        idx = list(range(0, len(taus) - 1, stride)) + [len(taus) - 1]
        for k in idx:
            flow_points.append(FlowPoint(t=t + taus[k], j=j, x=xs[k].copy(),
                                         v=float(vs[k]), u=math.nan))
        monitors.append(MonitorRecord(
            monitor="region", j=j,
            slack=float(c * (1.0 + REGION_TOL_REL) - np.max(vs)), passed=True))
        x = xs[-1]
        t += period
    return HybridTrajectory(samples=tuple(samples), decisions=(),
                            flow_points=tuple(flow_points),
                            monitors=tuple(monitors), kind="periodic",
                            period=period)


def monitor_flow_bound(points, dec, gamma, l_const, v_plus, t_start) -> MonitorRecord:
    """Check V <= U <= exp(rate*tau)*V(t_j+) on one segment's dense nodes.

    rate = max{-eps_i, 2(L_i - Lambda_i)} from the hybrid Lyapunov bound.
    When the issued interval is not below the horizon t_max (cannot
    happen for trigger output, but callers may fabricate decisions) the
    monitor reports itself inapplicable instead of failing.
    """
    try:
        solve_lambda_for_horizon(dec.h, gamma, dec.lambda_cap_used)
    except HorizonError:
        return MonitorRecord(monitor="flow-bound", j=points[0].j, slack=math.nan,
                             passed=True, note="inapplicable: h >= t_max")
    rate = max(-dec.epsilon, 2.0 * (l_const - dec.lambda_cap_used))
    taus = np.array([p.t - t_start for p in points])
    us = np.array([p.u for p in points])
    vs = np.array([p.v for p in points])
    env = np.exp(rate * taus) * v_plus
    slack_env = env - us
    slack_vu = us - vs
    ok = np.all(us <= env + MON_TOL * (1.0 + np.abs(env))) and \
        np.all(vs <= us + MON_TOL * (1.0 + np.abs(us)))
    return MonitorRecord(monitor="flow-bound", j=points[0].j,
                         slack=float(min(slack_env.min(), slack_vu.min())),
                         passed=bool(ok))


def _segment_points(traj):
    by_j = {}
    for p in traj.flow_points:
        by_j.setdefault(p.j, []).append(p)
    return by_j


def monitor_sample_decrease(traj: HybridTrajectory, cfg: StcConfig):
    """Certificate checks across consecutive samples.

    Emits one record per sample pair for the decision's own bound, the
    combined bound with rate min{eps_1, eps_ref}, the running cap
    V(t_j) <= max{V(t_0), eta(t_0)}, and a conservative windowed
    envelope contracting once per full window of m samples.
    """
    records = []
    if not traj.samples:
        return records
    tmin = t_min_of(cfg)
    eps1 = cfg.family.fallback.epsilon
    eps_tilde = min(eps1, cfg.eps_ref)
    v0 = traj.samples[0].v
    eta0 = eta_initial(cfg.m, v0, cfg.eta_init).eta
    m0 = max([v0] + list(eta0))
    for k in range(len(traj.samples) - 1):
        dec = traj.decisions[k]
        v_next = traj.samples[k + 1].v
        if dec.bound_type == WINDOW_BOUND:
            bound = math.exp(-cfg.eps_ref * dec.h) * dec.c_val
        else:
            bound = math.exp(-eps1 * dec.h) * dec.v_now
        records.append(MonitorRecord(
            monitor="sample-decrease", j=k + 1, slack=float(bound - v_next),
            passed=bool(v_next <= bound + MON_TOL * (1.0 + bound))))
        eta_pre = traj.samples[k - 1].eta if k > 0 else eta0
        comb = math.exp(-eps_tilde * tmin) * max([dec.v_now] + list(eta_pre))
        records.append(MonitorRecord(
            monitor="combined-decrease", j=k + 1, slack=float(comb - v_next),
            passed=bool(v_next <= comb + MON_TOL * (1.0 + comb))))
    for k, smp in enumerate(traj.samples):
        records.append(MonitorRecord(
            monitor="running-cap", j=smp.j, slack=float(m0 - smp.v),
            passed=bool(smp.v <= m0 + MON_TOL * (1.0 + m0))))
        depth = max(0, k - cfg.m) / cfg.m
        env = math.exp(-eps_tilde * tmin * depth) * m0
        records.append(MonitorRecord(
            monitor="window-envelope", j=smp.j, slack=float(env - smp.v),
            passed=bool(smp.v <= env + MON_TOL * (1.0 + env))))
    return records


def run_monitors(traj: HybridTrajectory, cfg: StcConfig):
    """All monitor records for a dynamic trajectory."""
    records = []
    seg = _segment_points(traj)
    for k, dec in enumerate(traj.decisions):
        pts = seg.get(k + 1)
        if not pts:
            continue
        ps = cfg.family.sets[dec.set_index]
        records.append(monitor_flow_bound(pts, dec, ps.gamma, ps.l_const,
                                          traj.samples[k].v, traj.samples[k].t))
        vmax = max(p.v for p in pts)
        lim = cfg.c * (1.0 + REGION_TOL_REL)
        records.append(MonitorRecord(monitor="region", j=k + 1,
                                     slack=float(lim - vmax),
                                     passed=bool(vmax <= lim)))
    records.extend(monitor_sample_decrease(traj, cfg))
    return records


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_trajectory_csv(path, traj: HybridTrajectory) -> None:
    n = traj.flow_points[0].x.shape[0] if traj.flow_points else 0
    header = ["t", "j"] + [f"x{i + 1}" for i in range(n)] + \
        ["V", "U", "interval", "set_index", "used_fallback"]
    rows = []
    for p in traj.flow_points:
        if traj.kind == "periodic":
            interval, idx, fb = traj.period, -1, False
        else:
            dec = traj.decisions[p.j - 1]
            interval, idx, fb = dec.h, dec.set_index, dec.used_fallback
        rows.append([p.t, p.j] + list(p.x) + [p.v, p.u, interval, idx, fb])
    _write_rows(path, header, rows)


def write_decisions_csv(path, traj: HybridTrajectory) -> None:
    header = ["j", "t", "h", "set_index", "epsilon", "used_fallback", "V", "C"]
    rows = [[s.j, s.t, d.h, d.set_index, d.epsilon, d.used_fallback,
             d.v_now, d.c_val] for s, d in zip(traj.samples, traj.decisions)]
    _write_rows(path, header, rows)


def write_monitors_csv(path, traj: HybridTrajectory) -> None:
    header = ["monitor", "j", "slack", "passed"]
    rows = [[r.monitor, r.j, r.slack, r.passed] for r in traj.monitors]
    _write_rows(path, header, rows)
