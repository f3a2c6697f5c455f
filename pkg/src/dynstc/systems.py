"""Closed-loop system models with Lyapunov data.

A :class:`SystemSpec` bundles the sampled-data closed loop: the drift
f(x, e) under a held input, an energy function V with its gradient, the
error weight W and disturbance-style term H, and the compact working
sets on which certificates are checked (a state ball of radius
``x_radius`` intersected with {V <= c}, and an error ball of radius
``e_radius``).

All evaluation callables are vectorized over leading axes: states and
errors are arrays whose last axis is the respective dimension, energies
drop that axis.  The hold error e is never integrated; the simulator
reconstructs it as e(t) = x(t_j) - x(t), which is exact under zero-order
hold since the error flows with -f.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "SystemSpec",
    "eval_f",
    "in_region",
    "default_w_h",
    "van_der_pol",
    "linear_test",
    "spec_from_config",
    "spec_from_json",
]

VDP_P_DEFAULT = ((4.68, 1.10), (1.10, 3.56))


@dataclass(frozen=True)
class SystemSpec:
    """Immutable description of one closed-loop system.

    The four ``alpha_*`` maps are scalar envelopes sandwiching V and W:
    alpha_v_lower(||x||) <= V(x) <= alpha_v_upper(||x||) on the state
    ball, and likewise for W over the error ball.  They are only needed
    by the runtime monitors and accept numpy arrays.
    """

    name: str
    n_x: int
    n_e: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    v: Callable[[np.ndarray], np.ndarray]
    grad_v: Callable[[np.ndarray], np.ndarray]
    w: Callable[[np.ndarray], np.ndarray]
    h_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    region_c: float
    x_radius: float
    e_radius: float
    alpha_v_lower: Callable[[np.ndarray], np.ndarray]
    alpha_v_upper: Callable[[np.ndarray], np.ndarray]
    alpha_w_lower: Callable[[np.ndarray], np.ndarray]
    alpha_w_upper: Callable[[np.ndarray], np.ndarray]
    default_wh: bool = True

    def __post_init__(self):
        if self.n_x < 1 or self.n_e < 1:
            raise ValueError("dimensions must be at least 1")
        if not (self.region_c > 0.0):
            raise ValueError("region level c must be positive")
        if not (self.x_radius > 0.0 and self.e_radius > 0.0):
            raise ValueError("working-set radii must be positive")


def _as_vec(z, dim, what):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] != dim:
        raise ValueError(f"{what} must have trailing dimension {dim}, got shape {z.shape}")
    return z


def eval_f(spec: SystemSpec, x, e) -> np.ndarray:
    """Closed-loop drift f(x, e); raises on trailing-dimension mismatch."""
    x = _as_vec(x, spec.n_x, "state")
    e = _as_vec(e, spec.n_e, "error")
    return spec.f(x, e)


def in_region(spec: SystemSpec, x):
    """True where V(x) <= c, the sublevel set on which guarantees hold."""
    return spec.v(_as_vec(x, spec.n_x, "state")) <= spec.region_c


def default_w_h(spec: SystemSpec):
    """Canonical weight pair: W(e) = ||e|| and H(x, e) = ||f(x, e)||.

    With this choice the error-growth inequality d||e||/dt <= L*W + H
    holds for every L >= 0, since the error rate is -f pointwise.
    """
    def w(e):
        return np.linalg.norm(np.asarray(e, dtype=float), axis=-1)

    def h_fn(x, e):
        return np.linalg.norm(spec.f(np.asarray(x, dtype=float),
                                      np.asarray(e, dtype=float)), axis=-1)

    return w, h_fn


def _quadratic_spec(name, n, p, c, f):
    if not (c > 0.0):
        raise ValueError("region level c must be positive")
    p = np.asarray(p, dtype=float)
    if p.shape != (n, n) or not np.allclose(p, p.T):
        raise ValueError("P must be a symmetric matrix of the state dimension")
    eigs = np.linalg.eigvalsh(p)
    if eigs[0] <= 0.0:
        raise ValueError("P must be positive definite")
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    a_bar = float(np.sqrt(c / lam_min))

    def v(x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, p, x)

    def grad_v(x):
        return 2.0 * np.asarray(x, dtype=float) @ p

    def w(e):
        return np.linalg.norm(np.asarray(e, dtype=float), axis=-1)

    def h_fn(x, e):
        return np.linalg.norm(f(np.asarray(x, dtype=float),
                                np.asarray(e, dtype=float)), axis=-1)

    ident = lambda r: np.asarray(r, dtype=float)
    return SystemSpec(
        name=name,
        n_x=n,
        n_e=n,
        f=f,
        v=v,
        grad_v=grad_v,
        w=w,
        h_fn=h_fn,
        region_c=float(c),
        x_radius=a_bar,
        e_radius=2.0 * a_bar,  # Minkowski bound: both x-hat and x lie in the state ball
        alpha_v_lower=lambda r: lam_min * np.square(np.asarray(r, dtype=float)),
        alpha_v_upper=lambda r: lam_max * np.square(np.asarray(r, dtype=float)),
        alpha_w_lower=ident,
        alpha_w_upper=ident,
    )


def van_der_pol(c: float = 10.0, p=None) -> SystemSpec:
    """Forced Van der Pol oscillator under state feedback with hold error.

    The loop is f(x, e) = A x + B(x, e) e with

        A = [[0, 1], [-1, -1]],
        B = [[0, 0], [a1, -2 + a2]],
        a1 = 2 x1 e2 + e1 e2,  a2 = x1^2 + 2 x1 e1 + e1^2,

    V(x) = x' P x, and the working region {V <= c}.
    """
    if p is None:
        p = VDP_P_DEFAULT

    def f(x, e):
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        e1, e2 = e[..., 0], e[..., 1]
        a1 = 2.0 * x1 * e2 + e1 * e2
        a2 = x1 * x1 + 2.0 * x1 * e1 + e1 * e1
        f1 = x2
        f2 = -x1 - x2 + a1 * e1 + (a2 - 2.0) * e2
        f1, f2 = np.broadcast_arrays(f1, f2)
        return np.stack([np.asarray(f1, dtype=float), f2], axis=-1)

    return _quadratic_spec("van_der_pol", 2, p, c, f)


def linear_test(c: float = 1.0) -> SystemSpec:
    """Scalar contraction x' = -(x + e) with V = x^2; sanity benchmark."""
    def f(x, e):
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        return -(x + e)

    return _quadratic_spec("linear_test", 1, np.eye(1), c, f)


_BUILTINS = {"van_der_pol": van_der_pol, "linear_test": linear_test}
_CONFIG_KEYS = {"name", "c", "p", "dimension"}


def spec_from_config(cfg: dict) -> SystemSpec:
    """Build a SystemSpec from a config mapping.

    Recognized keys: ``name`` (required, one of the built-ins), ``c``,
    ``p`` (Van der Pol energy matrix), ``dimension`` (cross-checked).
    """
    if not isinstance(cfg, dict):
        raise ValueError("system config must be a mapping")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown system config keys: {sorted(unknown)}")
    name = cfg.get("name")
    if name not in _BUILTINS:
        raise ValueError(f"unknown system {name!r}; expected one of {sorted(_BUILTINS)}")
    kwargs = {}
    if "c" in cfg:
        kwargs["c"] = float(cfg["c"])
    if "p" in cfg:
        if name != "van_der_pol":
            raise ValueError("key 'p' is only valid for van_der_pol")
        kwargs["p"] = cfg["p"]
    spec = _BUILTINS[name](**kwargs)
    if "dimension" in cfg and int(cfg["dimension"]) != spec.n_x:
        raise ValueError(f"dimension {cfg['dimension']} does not match {name} (n_x={spec.n_x})")
    return spec


def spec_from_json(path) -> SystemSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_config(json.load(fh))
