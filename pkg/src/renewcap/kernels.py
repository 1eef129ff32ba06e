"""Backend selection for the path kernels.

The compiled extension is used when it imports; otherwise (or when
``RENEWCAP_BACKEND=python`` is set) the numpy fallback takes over.
"""
from __future__ import annotations

import logging
import math
import os
from types import ModuleType

import numpy as np

from . import _fallback

log = logging.getLogger(__name__)

SCHEMES = {"euler": 0, "exact-latent": 1}
V_MAX = 1.0 - 1e-12


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:  # pragma: no cover - depends on build
        return None
    return _kernels


_compiled = _load_compiled()
if os.environ.get("RENEWCAP_BACKEND", "").lower() == "python" or _compiled is None:
    backend: ModuleType = _fallback
    BACKEND = "python"
else:
    backend = _compiled
    BACKEND = "cython"


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        return backend
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None


def pack_params(params, dt: float) -> np.ndarray:
    """Flatten model constants (plus derived ones) for the kernels."""
    v0, d0, c0 = params.x0
    s = params.s
    return np.array([
        params.lam1, params.lam2, params.m1, params.m2,
        params.sigma11, params.sigma12, params.sigma22,
        params.xi1, params.xi2, params.p, s,
        v0, d0, c0,
        -math.log1p(-v0) / s, d0 / params.p,
        math.exp(-params.lam1 * dt), math.exp(-params.lam2 * dt),
        params.lam1 * dt, params.lam2 * dt,
        math.exp(-params.xi1 * dt), math.exp(-params.xi2 * dt),
        dt, V_MAX,
    ], dtype=np.float64)


def discount_factors(r: float, dt: float, n_steps: int) -> np.ndarray:
    return np.array([math.exp(-r * n * dt) for n in range(max(n_steps, 1))])


def run_paths(keys: np.ndarray, n_steps: int, params, dt: float, scheme: str = "euler",
              threshold: float | None = None, store: bool = True, num_threads: int = 1,
              impl: ModuleType | None = None) -> dict:
    """Simulate one path per key; returns arrays keyed by name.

    With ``store=False`` only ``running`` (discounted shortfall) and
    ``c_final`` are returned.
    """
    impl = impl or backend
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    b = keys.shape[0]
    prm = pack_params(params, dt)
    disc = discount_factors(params.r, dt, n_steps)
    rows = b if store else 1
    out = {
        "v": np.zeros((rows, n_steps + 1)),
        "d": np.zeros((rows, n_steps + 1)),
        "c": np.zeros((rows, n_steps + 1)),
        "dv1": np.zeros((rows, max(n_steps, 1))),
        "dv2": np.zeros((rows, max(n_steps, 1))),
        "n": np.zeros((rows, 2 * max(n_steps, 1)), dtype=np.int32),
        "running": np.zeros(b),
        "c_final": np.zeros(b),
    }
    has_threshold = threshold is not None
    impl.simulate(keys, n_steps, prm, disc, SCHEMES[scheme],
                  float(threshold) if has_threshold else 0.0, int(has_threshold),
                  out["v"], out["d"], out["c"], out["dv1"], out["dv2"], out["n"],
                  out["running"], out["c_final"], int(store), num_threads)
    if not store:
        return {"running": out["running"], "c_final": out["c_final"]}
    out["dv1"] = out["dv1"][:, :n_steps]
    out["dv2"] = out["dv2"][:, :n_steps]
    out["n"] = out["n"][:, :2 * n_steps].reshape(b, n_steps, 2)
    return out


def aux_features(key: int, n_samples: int, params, dt: float,
                 impl: ModuleType | None = None) -> np.ndarray:
    impl = impl or backend
    out = np.zeros(n_samples)
    impl.aux_features(np.uint64(key), n_samples, pack_params(params, dt), out)
    return out
