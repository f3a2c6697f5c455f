"""Grid verification and synthesis of certificate parameter sets.

A parameter set (epsilon, gamma, L) certifies the supply-rate inequality

    <grad V(x), f(x, e)> <= -epsilon*V(x) + gamma^2*W(e)^2 - H(x, e)^2

on the compact working sets of a system.  This module checks the
inequality on uniform grids, synthesizes the smallest grid-feasible
gamma for a given epsilon (with a 5% safety inflation), and assembles
ordered families whose first member is the positive-epsilon fall-back
set required by the trigger.

Grid checking is deliberate: it is system-agnostic and desk-scale, and
soundness is cross-checked by re-verification on finer grids rather
than by interval arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "SynthesisError",
    "ParameterSet",
    "ParameterFamily",
    "VerificationReport",
    "ball_grid",
    "verify_assumption",
    "verify_family",
    "synthesize_gamma",
    "build_family",
    "default_epsilon_ladder",
    "family_to_manifest",
    "manifest_to_family",
    "write_manifest",
    "read_manifest",
]

GAMMA_INFLATION = 1.05
GAMMA_FLOOR = 1e-6
_CHUNK = 256


class SynthesisError(RuntimeError):
    """No finite gamma can certify the requested epsilon on the grid."""

    def __init__(self, message, epsilon=None, point=None):
        super().__init__(message)
        self.epsilon = epsilon
        self.point = point


@dataclass(frozen=True)
class ParameterSet:
    epsilon: float
    gamma: float
    l_const: float
    margin: float = math.nan  # smallest verified slack at synthesis time

    def __post_init__(self):
        if not (math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be finite")
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValueError("gamma must be positive")
        if not (math.isfinite(self.l_const) and self.l_const > 0.0):
            raise ValueError("L must be positive")


@dataclass(frozen=True)
class ParameterFamily:
    """Ordered certificate sets; sets[fallback_index] has epsilon > 0."""

    sets: tuple
    fallback_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))
        if len(self.sets) == 0:
            raise ValueError("family must contain at least one set")
        if not (0 <= self.fallback_index < len(self.sets)):
            raise ValueError("fallback_index out of range")
        if not (self.sets[self.fallback_index].epsilon > 0.0):
            raise ValueError("fall-back set must have positive epsilon")

    @property
    def fallback(self) -> ParameterSet:
        return self.sets[self.fallback_index]


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one grid pass for one parameter set.

    max_violation is the grid maximum of
    s = <grad V, f> + eps*V + H^2 - gamma^2*W^2 (certified iff <= 0);
    margin is its negation, the smallest slack.  scale normalizes
    tolerances: the largest magnitude the individual terms of s reach.
    w_slack_min is the smallest slack of the error-growth inequality
    under the default W, H (None when custom weights are installed).
    """

    certified: bool
    max_violation: float
    margin: float
    worst_x: tuple
    worst_e: tuple
    grid_density: int
    n_points: int
    scale: float
    w_slack_min: float | None = None


def ball_grid(radius: float, dim: int, density: int) -> np.ndarray:
    """Uniform grid on [-radius, radius]^dim masked to the closed ball."""
    if density < 2:
        raise ValueError("grid density must be at least 2")
    axes = [np.linspace(-radius, radius, density)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    keep = np.linalg.norm(pts, axis=-1) <= radius * (1.0 + 1e-12)
    return pts[keep]


def _grids(spec, grid_density):
    if grid_density < 8:
        raise ValueError("grid_density must be at least 8 per dimension")
    xg = ball_grid(spec.x_radius, spec.n_x, grid_density)
    eg = ball_grid(spec.e_radius, spec.n_e, grid_density)
    if xg.shape[0] == 0 or eg.shape[0] == 0:
        raise ValueError("working-set grid is empty")
    return xg, eg


def _sweep(spec, params, grid_density):
    """One pass over the X x E grid, evaluated for several (eps, gamma).

    The epsilon/gamma-independent part <grad V, f> + H^2 is computed once
    per chunk and reused across all parameter sets, which keeps family
    verification at the cost of a single-set pass.
    Returns per-set (max_s, worst_x, worst_e, scale) plus shared
    (n_points, w_slack_min).
    """
    xg, eg = _grids(spec, grid_density)
    n_sets = len(params)
    vx = np.asarray(spec.v(xg), dtype=float)
    gx = np.asarray(spec.grad_v(xg), dtype=float)
    we2 = np.square(np.asarray(spec.w(eg), dtype=float))
    ne = np.linalg.norm(eg, axis=-1)

    max_s = np.full(n_sets, -np.inf)
    worst = [(None, None)] * n_sets
    scale = np.zeros(n_sets)
    w_slack_min = np.inf
    e_b = eg[None, :, :]
    for lo in range(0, xg.shape[0], _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, xg.shape[0]))
        x_b = xg[sl][:, None, :]
        f = spec.f(x_b, e_b)
        gvf = np.einsum("bi,bei->be", gx[sl], f)
        if spec.default_wh:
            h2 = np.einsum("bei,bei->be", f, f)
            # error-growth slack H - <e/|e|, -f>, defined off e = 0
            nz = ne > 1e-12
            if np.any(nz):
                rate = np.einsum("ei,bei->be", eg[nz], -f[:, nz, :]) / ne[nz]
                w_slack_min = min(w_slack_min,
                                  float(np.min(np.sqrt(h2[:, nz]) - rate)))
        else:
            h2 = np.square(np.asarray(spec.h_fn(x_b, e_b), dtype=float))
        base = gvf + h2
        absbase = np.abs(gvf) + h2
        if not np.all(np.isfinite(base)):
            raise ValueError("non-finite certificate evaluation on the grid")
        for k, (eps, gam) in enumerate(params):
            s = base + eps * vx[sl][:, None] - (gam * gam) * we2[None, :]
            flat = int(np.argmax(s))
            if s.flat[flat] > max_s[k]:
                max_s[k] = s.flat[flat]
                bi, ei = divmod(flat, eg.shape[0])
                worst[k] = (tuple(xg[sl][bi]), tuple(eg[ei]))
            mag = absbase + abs(eps) * vx[sl][:, None] + (gam * gam) * we2[None, :]
            scale[k] = max(scale[k], float(np.max(mag)))
    n_points = xg.shape[0] * eg.shape[0]
    slack = float(w_slack_min) if spec.default_wh else None
    return max_s, worst, np.maximum(scale, 1.0), n_points, slack


def _reports(spec, sets, grid_density):
    params = [(ps.epsilon, ps.gamma) for ps in sets]
    max_s, worst, scale, n_points, w_slack = _sweep(spec, params, grid_density)
    out = []
    for k in range(len(sets)):
        ms = float(max_s[k])
        out.append(VerificationReport(
            certified=ms <= 0.0,
            max_violation=ms,
            margin=-ms,
            worst_x=worst[k][0],
            worst_e=worst[k][1],
            grid_density=int(grid_density),
            n_points=n_points,
            scale=float(scale[k]),
            w_slack_min=w_slack,
        ))
    return out


def verify_assumption(spec, ps: ParameterSet, grid_density: int) -> VerificationReport:
    """Check one parameter set on a grid_density^(n_x+n_e) grid."""
    return _reports(spec, [ps], grid_density)[0]


def verify_family(spec, family: ParameterFamily, grid_density: int):
    """Reports for every set of the family from a single grid pass."""
    return _reports(spec, family.sets, grid_density)


def _synth_ratios(spec, epsilons, grid_density):
    """Per-epsilon max of (<grad V,f> + eps*V + H^2)/W^2 over W > 0.

    Grid points with W = 0 must have a non-positive numerator; the first
    offender is raised as a SynthesisError (no finite gamma can help
    there).
    """
    xg, eg = _grids(spec, grid_density)
    vx = np.asarray(spec.v(xg), dtype=float)
    gx = np.asarray(spec.grad_v(xg), dtype=float)
    we2 = np.square(np.asarray(spec.w(eg), dtype=float))
    pos = we2 > 0.0
    best = np.full(len(epsilons), -np.inf)
    e_b = eg[None, :, :]
    for lo in range(0, xg.shape[0], _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, xg.shape[0]))
        x_b = xg[sl][:, None, :]
        f = spec.f(x_b, e_b)
        gvf = np.einsum("bi,bei->be", gx[sl], f)
        if spec.default_wh:
            h2 = np.einsum("bei,bei->be", f, f)
        else:
            h2 = np.square(np.asarray(spec.h_fn(x_b, e_b), dtype=float))
        base = gvf + h2
        if not np.all(np.isfinite(base)):
            raise ValueError("non-finite certificate evaluation on the grid")
        for k, eps in enumerate(epsilons):
            num = base + eps * vx[sl][:, None]
            if np.any(~pos):
                bad = num[:, ~pos]
                if np.any(bad > 0.0):
                    bi, ei = np.unravel_index(int(np.argmax(bad)), bad.shape)
                    x_off = tuple(xg[sl][bi])
                    e_off = tuple(eg[~pos][ei])
                    raise SynthesisError(
                        f"epsilon={eps}: positive certificate numerator "
                        f"{bad[bi, ei]:.3e} at a W=0 grid point x={x_off}, e={e_off}",
                        epsilon=eps, point=(x_off, e_off))
            ratio = num[:, pos] / we2[None, pos]
            best[k] = max(best[k], float(np.max(ratio)))
    return best


def synthesize_gamma(spec, epsilon: float, l_const: float = 0.05,
                     grid_density: int = 48) -> ParameterSet:
    """Smallest grid-feasible gamma for one epsilon, inflated by 5%."""
    if not (l_const > 0.0):
        raise ValueError("L must be positive")
    ratio = _synth_ratios(spec, [epsilon], grid_density)[0]
    gamma = GAMMA_INFLATION * math.sqrt(ratio) if ratio > 0.0 else GAMMA_FLOOR
    ps = ParameterSet(epsilon=float(epsilon), gamma=gamma, l_const=float(l_const))
    report = verify_assumption(spec, ps, grid_density)
    if not report.certified:
        raise SynthesisError(
            f"epsilon={epsilon}: inflated gamma={gamma:.6g} still violates the "
            f"certificate by {report.max_violation:.3e}",
            epsilon=epsilon, point=(report.worst_x, report.worst_e))
    return replace(ps, margin=report.margin)


def build_family(spec, epsilons: Sequence[float], l_const: float = 0.05,
                 grid_density: int = 48) -> ParameterFamily:
    """Synthesize one set per epsilon; the largest epsilon leads as fall-back."""
    if not (l_const > 0.0):
        raise ValueError("L must be positive")
    epsilons = [float(e) for e in epsilons]
    if len(epsilons) == 0:
        raise ValueError("epsilon list must be non-empty")
    if max(epsilons) <= 0.0:
        raise ValueError("family needs a positive epsilon for the fall-back set")
    order = [int(np.argmax(epsilons))]
    order += [i for i in range(len(epsilons)) if i != order[0]]
    eps_ordered = [epsilons[i] for i in order]
    ratios = _synth_ratios(spec, eps_ordered, grid_density)
    sets = []
    for eps, ratio in zip(eps_ordered, ratios):
        gamma = GAMMA_INFLATION * math.sqrt(ratio) if ratio > 0.0 else GAMMA_FLOOR
        sets.append(ParameterSet(epsilon=eps, gamma=gamma, l_const=float(l_const)))
    reports = _reports(spec, sets, grid_density)
    for k, rep in enumerate(reports):
        if not rep.certified:
            raise SynthesisError(
                f"epsilon={sets[k].epsilon}: inflated gamma={sets[k].gamma:.6g} "
                f"still violates the certificate by {rep.max_violation:.3e}",
                epsilon=sets[k].epsilon, point=(rep.worst_x, rep.worst_e))
        sets[k] = replace(sets[k], margin=rep.margin)
    return ParameterFamily(sets=tuple(sets), fallback_index=0)


def default_epsilon_ladder(n: int = 21, eps_top: float = 0.01,
                           eps_bottom: float = -40.0) -> list:
    """One positive rate then n-1 geometrically spaced negative rates.

    The positive entry anchors the fall-back set; the negative tail
    spans magnitudes from eps_top down to |eps_bottom|.
    """
    if n < 1:
        raise ValueError("ladder needs at least one entry")
    if not (eps_top > 0.0 and eps_bottom < 0.0):
        raise ValueError("ladder runs from a positive rate down to a negative one")
    if n == 1:
        return [eps_top]
    if n == 2:
        return [eps_top, eps_bottom]
    span = abs(eps_bottom) / eps_top
    tail = [-eps_top * span ** (k / (n - 2)) for k in range(n - 1)]
    return [eps_top] + tail


def family_to_manifest(family: ParameterFamily, grid_density: int) -> dict:
    return {
        "fallback_index": family.fallback_index,
        "sets": [
            {
                "epsilon": ps.epsilon,
                "gamma": ps.gamma,
                "L": ps.l_const,
                "margin": ps.margin,
                "grid_density": int(grid_density),
            }
            for ps in family.sets
        ],
    }


def manifest_to_family(doc: dict) -> ParameterFamily:
    try:
        sets = tuple(
            ParameterSet(epsilon=float(d["epsilon"]), gamma=float(d["gamma"]),
                         l_const=float(d["L"]), margin=float(d.get("margin", math.nan)))
            for d in doc["sets"]
        )
        return ParameterFamily(sets=sets, fallback_index=int(doc.get("fallback_index", 0)))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed parameter-family manifest: {exc}") from exc


def write_manifest(path, family: ParameterFamily, grid_density: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(family_to_manifest(family, grid_density), fh,
                  indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    """Returns (family, grid_density) from a manifest file."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    family = manifest_to_family(doc)
    density = int(doc["sets"][0].get("grid_density", 0)) if doc.get("sets") else 0
    return family, density
