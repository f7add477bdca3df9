# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: KDE unary term, plane-sweep SSD, occupancy warp.

Semantics mirror `_kernels_np`; the kernel-equivalence tests keep the two
paths in lockstep. The KDE kernel skips Gaussians beyond CUTOFF_SIGMAS
standard deviations (exp(-32) relative truncation at the default 8).
"""

from libc.math cimport exp, floor, log, sqrt

import numpy as np

cdef double DENSITY_FLOOR = 1e-30
cdef double CUTOFF_SIGMAS = 8.0
cdef double TWO_PI = 6.283185307179586


def kde_cost_grad(
    const double[:, :, ::1] probs,
    const double[::1] midpoints,
    double sigma,
    const double[:, ::1] depth,
    double[:, ::1] cost,
    grad_obj,
):
    cdef double[:, ::1] grad
    cdef bint want_grad = grad_obj is not None
    if want_grad:
        grad = grad_obj
    cdef Py_ssize_t h = probs.shape[0]
    cdef Py_ssize_t w = probs.shape[1]
    cdef Py_ssize_t k_count = probs.shape[2]
    cdef double norm = 1.0 / (sigma * sqrt(TWO_PI))
    cdef double inv_sigma2 = 1.0 / (sigma * sigma)
    cdef double cutoff = CUTOFF_SIGMAS * sigma
    cdef Py_ssize_t v, u, k, lo, hi, a, b, m
    cdef double d, f, fp, z, g, denom, lo_val, hi_val

    for v in range(h):
        for u in range(w):
            d = depth[v, u]
            lo_val = d - cutoff
            hi_val = d + cutoff
            # first midpoint >= lo_val
            a = 0
            b = k_count
            while a < b:
                m = (a + b) >> 1
                if midpoints[m] < lo_val:
                    a = m + 1
                else:
                    b = m
            lo = a
            # first midpoint > hi_val
            a = lo
            b = k_count
            while a < b:
                m = (a + b) >> 1
                if midpoints[m] <= hi_val:
                    a = m + 1
                else:
                    b = m
            hi = a
            f = 0.0
            fp = 0.0
            for k in range(lo, hi):
                z = (d - midpoints[k]) / sigma
                g = probs[v, u, k] * exp(-0.5 * z * z) * norm
                f += g
                fp += g * (midpoints[k] - d)
            fp *= inv_sigma2
            denom = f if f > DENSITY_FLOOR else DENSITY_FLOOR
            if f != f:  # propagate NaN like the numpy path
                denom = f
            cost[v, u] = -log(denom)
            if want_grad:
                grad[v, u] = -fp / denom


def accumulate_cost(
    double[:, :, ::1] cost,
    int[:, :, ::1] sample_count,
    const double[:, ::1] keyframe,
    const double[:, ::1] reference,
    const double[:, ::1] rotation,
    const double[::1] translation,
    double fx,
    double fy,
    double cx,
    double cy,
    const double[::1] midpoints,
):
    cdef Py_ssize_t h = keyframe.shape[0]
    cdef Py_ssize_t w = keyframe.shape[1]
    cdef Py_ssize_t k_count = midpoints.shape[0]
    cdef Py_ssize_t v, u, k, n, iu, iv, dv, du
    cdef double rx, ry, bx, by, bz, d, qx, qy, qz, pu, pv
    cdef double fu, fv, w00, w01, w10, w11, warped, diff, ssd
    cdef double patch[9]

    for v in range(1, h - 1):
        for u in range(1, w - 1):
            rx = (u - cx) / fx
            ry = (v - cy) / fy
            bx = rotation[0, 0] * rx + rotation[0, 1] * ry + rotation[0, 2]
            by = rotation[1, 0] * rx + rotation[1, 1] * ry + rotation[1, 2]
            bz = rotation[2, 0] * rx + rotation[2, 1] * ry + rotation[2, 2]
            n = 0
            for dv in range(-1, 2):
                for du in range(-1, 2):
                    patch[n] = keyframe[v + dv, u + du]
                    n += 1
            for k in range(k_count):
                d = midpoints[k]
                qz = d * bz + translation[2]
                if qz <= 0.0:
                    continue
                qx = d * bx + translation[0]
                qy = d * by + translation[1]
                pu = fx * qx / qz + cx
                pv = fy * qy / qz + cy
                # Whole warped 3x3 patch must stay inside the reference image;
                # the tolerance absorbs projection round-off at exact edges.
                if pu < 1.0 - 1e-9 or pu > w - 2.0 + 1e-9 or pv < 1.0 - 1e-9 or pv > h - 2.0 + 1e-9:
                    continue
                if pu < 1.0:
                    pu = 1.0
                elif pu > w - 2.0:
                    pu = w - 2.0
                if pv < 1.0:
                    pv = 1.0
                elif pv > h - 2.0:
                    pv = h - 2.0
                iu = <Py_ssize_t> floor(pu)
                iv = <Py_ssize_t> floor(pv)
                fu = pu - iu
                fv = pv - iv
                if iu >= w - 2:
                    iu = w - 3  # pu == w-2 exactly: shift cell, fu becomes 1
                    fu = pu - iu
                if iv >= h - 2:
                    iv = h - 3
                    fv = pv - iv
                w00 = (1.0 - fu) * (1.0 - fv)
                w01 = fu * (1.0 - fv)
                w10 = (1.0 - fu) * fv
                w11 = fu * fv
                ssd = 0.0
                n = 0
                for dv in range(-1, 2):
                    for du in range(-1, 2):
                        warped = (
                            w00 * reference[iv + dv, iu + du]
                            + w01 * reference[iv + dv, iu + du + 1]
                            + w10 * reference[iv + dv + 1, iu + du]
                            + w11 * reference[iv + dv + 1, iu + du + 1]
                        )
                        diff = patch[n] - warped
                        ssd += diff * diff
                        n += 1
                cost[v, u, k] += ssd
                sample_count[v, u, k] += 1


def warp_occupancy_sample(
    const double[:, :, ::1] occ,
    const double[:, ::1] rotation,
    const double[::1] translation,
    double fx,
    double fy,
    double cx,
    double cy,
    const double[::1] midpoints,
    double log_d_min,
    double log_d_max,
    double default_occ,
    double[:, :, ::1] out,
):
    cdef Py_ssize_t h = occ.shape[0]
    cdef Py_ssize_t w = occ.shape[1]
    cdef Py_ssize_t k_count = occ.shape[2]
    cdef double d_min = exp(log_d_min)
    cdef double d_max = exp(log_d_max)
    cdef double log_span = log_d_max - log_d_min
    cdef double edge = 1e-6
    cdef Py_ssize_t u_step = 1 if w > 1 else 0
    cdef Py_ssize_t v_step = 1 if h > 1 else 0
    cdef Py_ssize_t v, u, k, kk, iu, iv
    cdef double rx, ry, bx, by, bz, d, qx, qy, qz, pu, pv, fu, fv, frac

    for v in range(h):
        for u in range(w):
            rx = (u - cx) / fx
            ry = (v - cy) / fy
            bx = rotation[0, 0] * rx + rotation[0, 1] * ry + rotation[0, 2]
            by = rotation[1, 0] * rx + rotation[1, 1] * ry + rotation[1, 2]
            bz = rotation[2, 0] * rx + rotation[2, 1] * ry + rotation[2, 2]
            for k in range(k_count):
                d = midpoints[k]
                qz = d * bz + translation[2]
                if qz < d_min or qz > d_max:
                    out[v, u, k] = default_occ
                    continue
                qx = d * bx + translation[0]
                qy = d * by + translation[1]
                pu = fx * qx / qz + cx
                pv = fy * qy / qz + cy
                if pu < -edge or pu > w - 1 + edge or pv < -edge or pv > h - 1 + edge:
                    out[v, u, k] = default_occ
                    continue
                frac = (log(qz) - log_d_min) / log_span
                kk = <Py_ssize_t> floor(k_count * frac)
                if kk < 0:
                    kk = 0
                elif kk >= k_count:
                    kk = k_count - 1
                if pu < 0.0:
                    pu = 0.0
                elif pu > w - 1.0:
                    pu = w - 1.0
                if pv < 0.0:
                    pv = 0.0
                elif pv > h - 1.0:
                    pv = h - 1.0
                iu = <Py_ssize_t> floor(pu)
                iv = <Py_ssize_t> floor(pv)
                if iu > w - 1 - u_step:
                    iu = w - 1 - u_step
                if iv > h - 1 - v_step:
                    iv = h - 1 - v_step
                fu = pu - iu
                fv = pv - iv
                out[v, u, k] = (
                    (1.0 - fu) * (1.0 - fv) * occ[iv, iu, kk]
                    + fu * (1.0 - fv) * occ[iv, iu + u_step, kk]
                    + (1.0 - fu) * fv * occ[iv + v_step, iu, kk]
                    + fu * fv * occ[iv + v_step, iu + u_step, kk]
                )
