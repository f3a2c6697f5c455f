"""Dynamic self-triggered sampling: window average, trigger, jump map.

At each sampling instant the mechanism chooses the next inter-sample
interval from the current energy V(x) and a shift register eta of the
m-1 previous sampled energies.  The window average

    C = min{ c, (V(x) + sum(eta)) / m }

relaxes the trigger: a candidate set (epsilon_i, gamma_i, L_i) may
certify a long interval h whenever exp(-epsilon_i h) V stays below
exp(-eps_ref h) C, which has the closed-form case split implemented in
:func:`interval_for_set`.  A positive-rate fall-back set guarantees the
strictly positive floor t_min = delta * t_max(gamma_1, L_1 + eps_1/2)
independently of the window, so every decision certifies one of two
inequalities for the next sample (recorded as ``bound_type``):

* ``window-bound``:      V(t_{j+1}) <= exp(-eps_ref h) C(t_j)
* ``fallback-decrease``: V(t_{j+1}) <= exp(-eps_1 t_min) V(t_j)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .synthesis import ParameterFamily, ParameterSet
from .timing import t_max

__all__ = [
    "WINDOW_BOUND",
    "FALLBACK_DECREASE",
    "RegionViolationError",
    "JumpConditionError",
    "DynamicVariable",
    "StcConfig",
    "TriggerDecision",
    "HybridState",
    "eta_initial",
    "update_eta",
    "window_average_c",
    "lambda_cap_for",
    "t_min_of",
    "t_max_cap",
    "interval_for_set",
    "gamma_trigger",
    "static_trigger",
    "stc_step",
]

WINDOW_BOUND = "window-bound"
FALLBACK_DECREASE = "fallback-decrease"

REGION_TOL_REL = 1e-6  # relative slack on V <= c before declaring escape


class RegionViolationError(RuntimeError):
    """The sampled state left {V <= c}; trigger guarantees are void."""


class JumpConditionError(RuntimeError):
    """stc_step called off the jump set (tau != s)."""


@dataclass(frozen=True)
class DynamicVariable:
    """FIR register of the m-1 past sampled energies, oldest first."""

    eta: tuple = ()

    def __post_init__(self):
        eta = tuple(float(v) for v in self.eta)
        if any(not math.isfinite(v) or v < 0.0 for v in eta):
            raise ValueError("eta entries must be finite and non-negative")
        object.__setattr__(self, "eta", eta)


def eta_initial(m: int, v0: float, policy: str = "v0") -> DynamicVariable:
    """Initial register: m-1 copies of V(x0) ("v0") or zeros ("zero").

    The choice does not affect the stability guarantees, only the first
    few intervals; seeding with V(x0) makes the initial window average
    equal V(x0).
    """
    if m < 1:
        raise ValueError("window length m must be at least 1")
    if v0 < 0.0:
        raise ValueError("initial energy must be non-negative")
    if policy == "v0":
        return DynamicVariable(eta=(float(v0),) * (m - 1))
    if policy == "zero":
        return DynamicVariable(eta=(0.0,) * (m - 1))
    raise ValueError(f"unknown eta-init policy {policy!r}")


def update_eta(dyn: DynamicVariable, v_now: float) -> DynamicVariable:
    """Shift register: drop the oldest entry, append v_now."""
    if v_now < 0.0:
        raise ValueError("energy must be non-negative")
    if len(dyn.eta) == 0:
        return dyn
    return DynamicVariable(eta=dyn.eta[1:] + (float(v_now),))


def window_average_c(v_now: float, dyn: DynamicVariable, c: float, m: int) -> float:
    if v_now < 0.0:
        raise ValueError("energy must be non-negative")
    if len(dyn.eta) != m - 1:
        raise ValueError(f"register holds {len(dyn.eta)} entries, expected m-1 = {m - 1}")
    return min(c, (v_now + math.fsum(dyn.eta)) / m)


@dataclass(frozen=True)
class StcConfig:
    family: ParameterFamily
    c: float
    delta: float = 0.999
    eps_ref: float = 0.01
    m: int = 30
    eta_init: str = "v0"

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie strictly in (0, 1)")
        if not (self.eps_ref > 0.0):
            raise ValueError("eps_ref must be positive")
        if self.m < 1:
            raise ValueError("window length m must be at least 1")
        if not (self.c > 0.0):
            raise ValueError("energy level c must be positive")
        if self.eta_init not in ("v0", "zero"):
            raise ValueError(f"unknown eta-init policy {self.eta_init!r}")


@dataclass(frozen=True)
class TriggerDecision:
    h: float
    set_index: int
    used_fallback: bool
    bound_type: str
    lambda_cap_used: float
    epsilon: float
    v_now: float
    c_val: float


def lambda_cap_for(ps: ParameterSet, delta: float) -> float:
    """Contraction-rate cap for a candidate set: max{L + eps/2, 1 - delta}."""
    return max(ps.l_const + 0.5 * ps.epsilon, 1.0 - delta)


def _fallback_interval(cfg: StcConfig) -> float:
    fb = cfg.family.fallback
    return cfg.delta * t_max(fb.gamma, fb.l_const + 0.5 * fb.epsilon)


def t_min_of(cfg: StcConfig) -> float:
    """Guaranteed sampling floor delta * t_max(gamma_1, L_1 + eps_1/2)."""
    return _fallback_interval(cfg)


def t_max_cap(cfg: StcConfig) -> float:
    """Largest interval any decision can return."""
    cap = _fallback_interval(cfg)
    for i, ps in enumerate(cfg.family.sets):
        if i == cfg.family.fallback_index:
            continue
        cap = max(cap, cfg.delta * t_max(ps.gamma, lambda_cap_for(ps, cfg.delta)))
    return cap


def interval_for_set(v_now: float, c_val: float, ps: ParameterSet,
                     delta: float, eps_ref: float) -> float:
    """Longest h <= delta*t_max certifiable by one set; 0 when infeasible.

    The certified inequality is (eps_ref - eps_i) * h <= log(c_val / v_now),
    split into four sign cases.  v_now = 0 is the origin, where any
    interval is admissible, so the cap is returned.
    """
    if v_now < 0.0:
        raise ValueError("energy must be non-negative")
    dt = delta * t_max(ps.gamma, lambda_cap_for(ps, delta))
    if v_now == 0.0:
        return dt
    a = eps_ref - ps.epsilon
    if c_val >= v_now:
        if a > 0.0:
            return min(dt, math.log(c_val / v_now) / a)
        return dt
    if a >= 0.0:
        return 0.0
    if c_val == 0.0:
        return 0.0
    t_bar = math.log(c_val / v_now) / a
    return dt if dt > t_bar else 0.0


def gamma_trigger(x, dyn: DynamicVariable, cfg: StcConfig, spec) -> TriggerDecision:
    """Next-interval computation: fall-back floor, then the best candidate.

    A candidate beats the incumbent only with a strictly longer interval,
    so ties resolve to the lower index; a candidate matching the
    fall-back interval still wins, since its window bound is the
    stronger certificate at the same h.
    """
    v = float(spec.v(np.asarray(x, dtype=float)))
    if v > cfg.c * (1.0 + REGION_TOL_REL):
        raise RegionViolationError(
            f"V(x) = {v:.6g} exceeds the region level c = {cfg.c:.6g}")
    c_val = window_average_c(v, dyn, cfg.c, cfg.m)
    fam = cfg.family
    h_fb = _fallback_interval(cfg)
    best_h, best_i, window = h_fb, fam.fallback_index, False
    for i, ps in enumerate(fam.sets):
        if i == fam.fallback_index:
            continue
        h_i = interval_for_set(v, c_val, ps, cfg.delta, cfg.eps_ref)
        if h_i < h_fb:
            continue
        if not window or h_i > best_h:
            best_h, best_i, window = h_i, i, True
    winner = fam.sets[best_i]
    if window:
        lam_cap = lambda_cap_for(winner, cfg.delta)
    else:
        lam_cap = winner.l_const + 0.5 * winner.epsilon
    return TriggerDecision(
        h=best_h,
        set_index=best_i,
        used_fallback=not window,
        bound_type=WINDOW_BOUND if window else FALLBACK_DECREASE,
        lambda_cap_used=lam_cap,
        epsilon=winner.epsilon,
        v_now=v,
        c_val=c_val,
    )


def static_trigger(x, cfg: StcConfig, spec) -> TriggerDecision:
    """Windowless baseline: the m = 1 mechanism with C = min{c, V(x)}."""
    cfg1 = cfg if cfg.m == 1 else replace(cfg, m=1)
    return gamma_trigger(x, DynamicVariable(), cfg1, spec)


@dataclass(frozen=True)
class HybridState:
    """One point of the hybrid state (x, e, eta, tau, s)."""

    x: np.ndarray
    e: np.ndarray
    eta: DynamicVariable
    tau: float
    s: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "e", np.asarray(self.e, dtype=float))


def stc_step(state: HybridState, cfg: StcConfig, spec) -> Tuple[HybridState, TriggerDecision]:
    """Jump map at a sampling instant (tau = s).

    The state is re-sampled (e reset to 0), the register shifts in the
    current energy, and the trigger schedules the next interval from the
    pre-shift register.
    """
    if state.tau != state.s:
        raise JumpConditionError(
            f"jump requested at tau = {state.tau!r}, scheduled s = {state.s!r}")
    decision = gamma_trigger(state.x, state.eta, cfg, spec)
    eta_next = update_eta(state.eta, decision.v_now)
    nxt = HybridState(
        x=state.x,
        e=np.zeros(spec.n_e),
        eta=eta_next,
        tau=0.0,
        s=decision.h,
    )
    return nxt, decision
