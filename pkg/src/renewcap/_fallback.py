"""Pure numpy implementation of the path kernels.

Vectorised over paths.  Floating point expressions are written in the same
order as in ``_kernels.pyx`` so the two backends agree to the last bit
wherever numpy and libm agree on ``log``/``exp``/``expm1``.
"""
from __future__ import annotations

import numpy as np

from .rng import kernel_counter, uniform_at

(P_LAM1, P_LAM2, P_M1, P_M2, P_S11, P_S12, P_S22, P_XI1, P_XI2, P_P, P_S,
 P_V0, P_D0, P_C0, P_H10, P_H20, P_POIS1, P_POIS2, P_MU1, P_MU2,
 P_DECAY1, P_DECAY2, P_DT, P_VMAX, P_LEN) = range(25)


def _poisson(u: np.ndarray, p0: float, mean: float) -> np.ndarray:
    counts = np.zeros(u.shape, dtype=np.int64)
    if mean == 0.0:
        return counts
    k = 0
    p = p0
    cdf = p0
    active = u > cdf
    while active.any():
        k += 1
        counts[active] = k
        p = p * mean / k
        cdf = cdf + p
        active &= u > cdf
    return counts


def _counts(keys, n, prm):
    n1 = _poisson(uniform_at(keys, kernel_counter(n, 0, 0)), prm[P_POIS1], prm[P_MU1])
    n2 = _poisson(uniform_at(keys, kernel_counter(n, 1, 0)), prm[P_POIS2], prm[P_MU2])
    return n1, n2


def _euler(keys, n_steps, prm, disc, threshold, has_threshold, out, store):
    b = keys.shape[0]
    dt = prm[P_DT]
    s, s11, s12, s22, p = prm[P_S], prm[P_S11], prm[P_S12], prm[P_S22], prm[P_P]
    v = np.full(b, prm[P_V0])
    d = np.full(b, prm[P_D0])
    c = np.full(b, prm[P_C0])
    cost = np.zeros(b)
    if store:
        out["v"][:, 0] = v
        out["d"][:, 0] = d
        out["c"][:, 0] = c
    for n in range(n_steps):
        short = d - v * c
        cost = np.where(short > 0.0, cost + dt * disc[n] * short, cost)
        n1, n2 = _counts(keys, n, prm)
        dv1 = np.zeros(b)
        dv2 = np.zeros(b)
        dd = np.zeros(b)
        for l in range(1, int(n1.max(initial=0)) + 1):
            m = n1 >= l
            z = -np.log(uniform_at(keys[m], kernel_counter(n, 0, 2 * l - 1))) / prm[P_M1]
            dv1[m] = dv1[m] + (1.0 - v[m]) * (-np.expm1(-s * s11 * z))
        for l in range(1, int(n2.max(initial=0)) + 1):
            m = n2 >= l
            z = -np.log(uniform_at(keys[m], kernel_counter(n, 1, 2 * l - 1))) / prm[P_M2]
            dv2[m] = dv2[m] + (1.0 - v[m]) * (-np.expm1(-s * s12 * z))
            dd[m] = dd[m] + p * s22 * z
        if has_threshold:
            inst = np.where(threshold > v, (threshold - v) * (dv1 + dv2), 0.0)
        else:
            inst = np.zeros(b)
        v = v + (1.0 - v) * prm[P_XI1] * np.log(1.0 - v) * dt + (dv1 + dv2)
        v = np.where(v > prm[P_VMAX], prm[P_VMAX], v)
        v = np.where(v < 0.0, 0.0, v)
        d = d - prm[P_XI2] * d * dt + dd
        d = np.where(d < 0.0, 0.0, d)
        c = c + inst
        if store:
            out["v"][:, n + 1] = v
            out["d"][:, n + 1] = d
            out["c"][:, n + 1] = c
            out["dv1"][:, n] = dv1
            out["dv2"][:, n] = dv2
            out["n"][:, 2 * n] = n1
            out["n"][:, 2 * n + 1] = n2
    return cost, c


def _exact(keys, n_steps, prm, disc, threshold, has_threshold, out, store):
    b = keys.shape[0]
    rows = np.arange(b)
    dt = prm[P_DT]
    s = prm[P_S]
    xi1, xi2 = prm[P_XI1], prm[P_XI2]
    h1 = np.full(b, prm[P_H10])
    h2 = np.full(b, prm[P_H20])
    v = np.full(b, prm[P_V0])
    d = np.full(b, prm[P_D0])
    c = np.full(b, prm[P_C0])
    cost = np.zeros(b)
    if store:
        out["v"][:, 0] = v
        out["d"][:, 0] = d
        out["c"][:, 0] = c
    for n in range(n_steps):
        short = d - v * c
        cost = np.where(short > 0.0, cost + dt * disc[n] * short, cost)
        n1, n2 = _counts(keys, n, prm)
        total = n1 + n2
        k_max = int(total.max(initial=0))
        tau = np.full((b, max(k_max, 1)), np.inf)
        zs = np.zeros((b, max(k_max, 1)))
        src = np.zeros((b, max(k_max, 1)), dtype=np.int64)
        for l in range(1, int(n1.max(initial=0)) + 1):
            m = n1 >= l
            zs[m, l - 1] = -np.log(uniform_at(keys[m], kernel_counter(n, 0, 2 * l - 1))) / prm[P_M1]
            tau[m, l - 1] = uniform_at(keys[m], kernel_counter(n, 0, 2 * l))
        for l in range(1, int(n2.max(initial=0)) + 1):
            m = n2 >= l
            col = n1[m] + l - 1
            zs[rows[m], col] = -np.log(uniform_at(keys[m], kernel_counter(n, 1, 2 * l - 1))) / prm[P_M2]
            tau[rows[m], col] = uniform_at(keys[m], kernel_counter(n, 1, 2 * l))
            src[rows[m], col] = 1
        order = np.argsort(tau, axis=1, kind="stable")
        tau = np.take_along_axis(tau, order, axis=1)
        zs = np.take_along_axis(zs, order, axis=1)
        src = np.take_along_axis(src, order, axis=1)
        dv1 = np.zeros(b)
        dv2 = np.zeros(b)
        inst = np.zeros(b)
        tau_prev = np.zeros(b)
        for i in range(k_max):
            m = i < total
            ti = tau[m, i]
            zi = zs[m, i]
            one = src[m, i] == 0
            h1m = h1[m] * np.exp(-xi1 * ((ti - tau_prev[m]) * dt))
            h2m = h2[m] * np.exp(-xi2 * ((ti - tau_prev[m]) * dt))
            tau_prev[m] = ti
            v_pre = -np.expm1(-s * h1m)
            h1m = np.where(one, h1m + prm[P_S11] * zi, h1m + prm[P_S12] * zi)
            h2m = np.where(one, h2m, h2m + prm[P_S22] * zi)
            v_post = -np.expm1(-s * h1m)
            dv = v_post - v_pre
            dv1[m] = np.where(one, dv1[m] + dv, dv1[m])
            dv2[m] = np.where(one, dv2[m], dv2[m] + dv)
            if has_threshold:
                inst[m] = np.where(threshold > v_pre, inst[m] + (threshold - v_pre) * dv, inst[m])
            h1[m] = h1m
            h2[m] = h2m
        quiet = total == 0
        h1 = np.where(quiet, h1 * prm[P_DECAY1], h1 * np.exp(-xi1 * ((1.0 - tau_prev) * dt)))
        h2 = np.where(quiet, h2 * prm[P_DECAY2], h2 * np.exp(-xi2 * ((1.0 - tau_prev) * dt)))
        v = -np.expm1(-s * h1)
        v = np.where(v > prm[P_VMAX], prm[P_VMAX], v)
        d = prm[P_P] * h2
        c = c + inst
        if store:
            out["v"][:, n + 1] = v
            out["d"][:, n + 1] = d
            out["c"][:, n + 1] = c
            out["dv1"][:, n] = dv1
            out["dv2"][:, n] = dv2
            out["n"][:, 2 * n] = n1
            out["n"][:, 2 * n + 1] = n2
    return cost, c


def simulate(keys, n_steps, prm, disc, scheme, threshold, has_threshold,
             v_out, d_out, c_out, dv1_out, dv2_out, n_out, running_out, c_final_out,
             store, num_threads=1):
    keys = np.asarray(keys, dtype=np.uint64)
    out = {"v": v_out, "d": d_out, "c": c_out, "dv1": dv1_out, "dv2": dv2_out, "n": n_out}
    run = _euler if scheme == 0 else _exact
    cost, c = run(keys, n_steps, prm, disc, threshold, has_threshold, out, store)
    running_out[:] = cost
    c_final_out[:] = c


def aux_features(key, n_samples, prm, out):
    k = np.arange(n_samples, dtype=np.uint64)
    key = np.uint64(key)
    n1, n2 = _counts(key, k, prm)
    g = np.zeros(n_samples)
    s = prm[P_S]
    for l in range(1, int(n1.max(initial=0)) + 1):
        m = n1 >= l
        z = -np.log(uniform_at(key, kernel_counter(k[m], 0, 2 * l - 1))) / prm[P_M1]
        g[m] = g[m] + (-np.expm1(-s * prm[P_S11] * z))
    for l in range(1, int(n2.max(initial=0)) + 1):
        m = n2 >= l
        z = -np.log(uniform_at(key, kernel_counter(k[m], 1, 2 * l - 1))) / prm[P_M2]
        g[m] = g[m] + (-np.expm1(-s * prm[P_S12] * z))
    out[:] = g
