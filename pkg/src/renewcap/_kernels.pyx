# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path kernels.

Mirror of :mod:`renewcap._fallback`; both must perform the same floating
point operations in the same order.
"""
from cython.parallel import prange
from libc.math cimport exp, log, expm1
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free

import numpy as np

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef int STEP_SHIFT = 20
cdef int SOURCE_SHIFT = 19
cdef int STACK_JUMPS = 64

# parameter vector layout, see renewcap.kernels.pack_params
cdef enum:
    P_LAM1, P_LAM2, P_M1, P_M2, P_S11, P_S12, P_S22, P_XI1, P_XI2, P_P, P_S,
    P_V0, P_D0, P_C0, P_H10, P_H20, P_POIS1, P_POIS2, P_MU1, P_MU2,
    P_DECAY1, P_DECAY2, P_DT, P_VMAX, P_LEN


cdef inline uint64_t mix64(uint64_t x) noexcept nogil:
    cdef uint64_t z = x + GOLDEN
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t key, uint64_t counter) noexcept nogil:
    cdef uint64_t u = mix64(key ^ mix64(counter))
    return (<double>(u >> 11) + 0.5) * (1.0 / 9007199254740992.0)


cdef inline uint64_t counter(long step, int source, long slot) noexcept nogil:
    return ((<uint64_t>step) << STEP_SHIFT) | ((<uint64_t>source) << SOURCE_SHIFT) | (<uint64_t>slot)


cdef inline long poisson(double u, double p0, double mean) noexcept nogil:
    cdef long k = 0
    cdef double p = p0
    cdef double cdf = p0
    if mean == 0.0:
        return 0
    while u > cdf:
        k += 1
        p = p * mean / k
        cdf = cdf + p
    return k


cdef void euler_path(uint64_t key, long n_steps, const double* prm, const double* disc,
                     double threshold, int has_threshold,
                     double* v_row, double* d_row, double* c_row,
                     double* dv1_row, double* dv2_row, int* n_row,
                     double* running, double* c_final, int store) noexcept nogil:
    cdef double v = prm[P_V0]
    cdef double d = prm[P_D0]
    cdef double c = prm[P_C0]
    cdef double dt = prm[P_DT]
    cdef double cost = 0.0
    cdef double short, dv1, dv2, dd, z, inst
    cdef long n, l, n1, n2
    if store:
        v_row[0] = v
        d_row[0] = d
        c_row[0] = c
    for n in range(n_steps):
        short = d - v * c
        if short > 0.0:
            cost = cost + dt * disc[n] * short
        n1 = poisson(uniform(key, counter(n, 0, 0)), prm[P_POIS1], prm[P_MU1])
        n2 = poisson(uniform(key, counter(n, 1, 0)), prm[P_POIS2], prm[P_MU2])
        dv1 = 0.0
        dv2 = 0.0
        dd = 0.0
        for l in range(1, n1 + 1):
            z = -log(uniform(key, counter(n, 0, 2 * l - 1))) / prm[P_M1]
            dv1 = dv1 + (1.0 - v) * (-expm1(-prm[P_S] * prm[P_S11] * z))
        for l in range(1, n2 + 1):
            z = -log(uniform(key, counter(n, 1, 2 * l - 1))) / prm[P_M2]
            dv2 = dv2 + (1.0 - v) * (-expm1(-prm[P_S] * prm[P_S12] * z))
            dd = dd + prm[P_P] * prm[P_S22] * z
        inst = 0.0
        if has_threshold and threshold > v:
            inst = (threshold - v) * (dv1 + dv2)
        v = v + (1.0 - v) * prm[P_XI1] * log(1.0 - v) * dt + (dv1 + dv2)
        if v > prm[P_VMAX]:
            v = prm[P_VMAX]
        if v < 0.0:
            v = 0.0
        d = d - prm[P_XI2] * d * dt + dd
        if d < 0.0:
            d = 0.0
        c = c + inst
        if store:
            v_row[n + 1] = v
            d_row[n + 1] = d
            c_row[n + 1] = c
            dv1_row[n] = dv1
            dv2_row[n] = dv2
            n_row[2 * n] = <int>n1
            n_row[2 * n + 1] = <int>n2
    running[0] = cost
    c_final[0] = c


cdef void exact_path(uint64_t key, long n_steps, const double* prm, const double* disc,
                     double threshold, int has_threshold,
                     double* v_row, double* d_row, double* c_row,
                     double* dv1_row, double* dv2_row, int* n_row,
                     double* running, double* c_final, int store) noexcept nogil:
    cdef double h1 = prm[P_H10]
    cdef double h2 = prm[P_H20]
    cdef double v = prm[P_V0]
    cdef double d = prm[P_D0]
    cdef double c = prm[P_C0]
    cdef double dt = prm[P_DT]
    cdef double s = prm[P_S]
    cdef double cost = 0.0
    cdef double short, dv1, dv2, z, inst, tau_prev, step_fac, v_pre, v_post, dv, tau_tmp, z_tmp
    cdef long n, l, n1, n2, total, i, j, src_tmp
    cdef double stack_tau[64]
    cdef double stack_z[64]
    cdef long stack_src[64]
    cdef double* tau = stack_tau
    cdef double* zs = stack_z
    cdef long* src = stack_src
    cdef long cap = STACK_JUMPS
    if store:
        v_row[0] = v
        d_row[0] = d
        c_row[0] = c
    for n in range(n_steps):
        short = d - v * c
        if short > 0.0:
            cost = cost + dt * disc[n] * short
        n1 = poisson(uniform(key, counter(n, 0, 0)), prm[P_POIS1], prm[P_MU1])
        n2 = poisson(uniform(key, counter(n, 1, 0)), prm[P_POIS2], prm[P_MU2])
        total = n1 + n2
        if total > cap:
            if tau != stack_tau:
                free(tau)
                free(zs)
                free(src)
            cap = total
            tau = <double*>malloc(cap * sizeof(double))
            zs = <double*>malloc(cap * sizeof(double))
            src = <long*>malloc(cap * sizeof(long))
        for l in range(1, n1 + 1):
            zs[l - 1] = -log(uniform(key, counter(n, 0, 2 * l - 1))) / prm[P_M1]
            tau[l - 1] = uniform(key, counter(n, 0, 2 * l))
            src[l - 1] = 0
        for l in range(1, n2 + 1):
            zs[n1 + l - 1] = -log(uniform(key, counter(n, 1, 2 * l - 1))) / prm[P_M2]
            tau[n1 + l - 1] = uniform(key, counter(n, 1, 2 * l))
            src[n1 + l - 1] = 1
        # stable insertion sort by arrival time
        for i in range(1, total):
            tau_tmp = tau[i]
            z_tmp = zs[i]
            src_tmp = src[i]
            j = i - 1
            while j >= 0 and tau[j] > tau_tmp:
                tau[j + 1] = tau[j]
                zs[j + 1] = zs[j]
                src[j + 1] = src[j]
                j -= 1
            tau[j + 1] = tau_tmp
            zs[j + 1] = z_tmp
            src[j + 1] = src_tmp
        dv1 = 0.0
        dv2 = 0.0
        inst = 0.0
        tau_prev = 0.0
        for i in range(total):
            h1 = h1 * exp(-prm[P_XI1] * ((tau[i] - tau_prev) * dt))
            h2 = h2 * exp(-prm[P_XI2] * ((tau[i] - tau_prev) * dt))
            tau_prev = tau[i]
            v_pre = -expm1(-s * h1)
            if src[i] == 0:
                h1 = h1 + prm[P_S11] * zs[i]
            else:
                h1 = h1 + prm[P_S12] * zs[i]
                h2 = h2 + prm[P_S22] * zs[i]
            v_post = -expm1(-s * h1)
            dv = v_post - v_pre
            if src[i] == 0:
                dv1 = dv1 + dv
            else:
                dv2 = dv2 + dv
            if has_threshold and threshold > v_pre:
                inst = inst + (threshold - v_pre) * dv
        if total == 0:
            h1 = h1 * prm[P_DECAY1]
            h2 = h2 * prm[P_DECAY2]
        else:
            h1 = h1 * exp(-prm[P_XI1] * ((1.0 - tau_prev) * dt))
            h2 = h2 * exp(-prm[P_XI2] * ((1.0 - tau_prev) * dt))
        v = -expm1(-s * h1)
        if v > prm[P_VMAX]:
            v = prm[P_VMAX]
        d = prm[P_P] * h2
        c = c + inst
        if store:
            v_row[n + 1] = v
            d_row[n + 1] = d
            c_row[n + 1] = c
            dv1_row[n] = dv1
            dv2_row[n] = dv2
            n_row[2 * n] = <int>n1
            n_row[2 * n + 1] = <int>n2
    if tau != stack_tau:
        free(tau)
        free(zs)
        free(src)
    running[0] = cost
    c_final[0] = c


def simulate(const uint64_t[::1] keys, long n_steps, const double[::1] prm,
             const double[::1] disc, int scheme, double threshold, int has_threshold,
             double[:, ::1] v_out, double[:, ::1] d_out, double[:, ::1] c_out,
             double[:, ::1] dv1_out, double[:, ::1] dv2_out, int[:, ::1] n_out,
             double[::1] running_out, double[::1] c_final_out, int store, int num_threads=1):
    cdef Py_ssize_t b = keys.shape[0]
    cdef Py_ssize_t j
    cdef Py_ssize_t row
    if prm.shape[0] != P_LEN:
        raise ValueError("bad parameter vector length")
    with nogil:
        for j in prange(b, num_threads=num_threads, schedule="static"):
            row = j if store else 0
            if scheme == 0:
                euler_path(keys[j], n_steps, &prm[0], &disc[0], threshold, has_threshold,
                           &v_out[row, 0], &d_out[row, 0], &c_out[row, 0],
                           &dv1_out[row, 0], &dv2_out[row, 0], &n_out[row, 0],
                           &running_out[j], &c_final_out[j], store)
            else:
                exact_path(keys[j], n_steps, &prm[0], &disc[0], threshold, has_threshold,
                           &v_out[row, 0], &d_out[row, 0], &c_out[row, 0],
                           &dv1_out[row, 0], &dv2_out[row, 0], &n_out[row, 0],
                           &running_out[j], &c_final_out[j], store)


def aux_features(uint64_t key, long n_samples, const double[::1] prm, double[::1] out):
    """Summed per-jump capacity-factor amplitudes ``sum (1 - exp(-s sigma_1i z))``."""
    cdef long k, l, n1, n2
    cdef double g, z
    with nogil:
        for k in range(n_samples):
            n1 = poisson(uniform(key, counter(k, 0, 0)), prm[P_POIS1], prm[P_MU1])
            n2 = poisson(uniform(key, counter(k, 1, 0)), prm[P_POIS2], prm[P_MU2])
            g = 0.0
            for l in range(1, n1 + 1):
                z = -log(uniform(key, counter(k, 0, 2 * l - 1))) / prm[P_M1]
                g = g + (-expm1(-prm[P_S] * prm[P_S11] * z))
            for l in range(1, n2 + 1):
                z = -log(uniform(key, counter(k, 1, 2 * l - 1))) / prm[P_M2]
                g = g + (-expm1(-prm[P_S] * prm[P_S12] * z))
            out[k] = g
