# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in ``_pure``.

Loop order in the quickshift routines matches the pure implementation
statement-for-statement so both backends produce bit-identical densities,
links and therefore label maps.
"""

from libc.math cimport exp, INFINITY

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def conv2d_forward(x, w, b, stride, padding):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t c = xv.shape[0], h = xv.shape[1], wd = xv.shape[2]
    cdef Py_ssize_t o = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    cdef Py_ssize_t ph = padding[0], pw = padding[1]
    cdef Py_ssize_t ho = (h + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t wo = (wd + 2 * pw - kw) // sw + 1
    out_arr = np.empty((o, ho, wo), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t oc, oh, ow, ic, i, j, ih, iw
    cdef double acc
    for oc in range(o):
        for oh in range(ho):
            for ow in range(wo):
                acc = bv[oc]
                for ic in range(c):
                    for i in range(kh):
                        ih = oh * sh + i - ph
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(kw):
                            iw = ow * sw + j - pw
                            if iw < 0 or iw >= wd:
                                continue
                            acc += xv[ic, ih, iw] * wv[oc, ic, i, j]
                out[oc, oh, ow] = acc
    return out_arr


def conv2d_lrp_epsilon(x, w, b, r_out, stride, padding, double eps):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, :, ::1] rv = np.ascontiguousarray(r_out, dtype=np.float64)
    cdef Py_ssize_t c = xv.shape[0], h = xv.shape[1], wd = xv.shape[2]
    cdef Py_ssize_t o = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    cdef Py_ssize_t ph = padding[0], pw = padding[1]
    cdef Py_ssize_t ho = rv.shape[1], wo = rv.shape[2]
    r_in_arr = np.zeros((c, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] r_in = r_in_arr
    cdef Py_ssize_t oc, oh, ow, ic, i, j, ih, iw
    cdef double z, denom, s
    for oc in range(o):
        for oh in range(ho):
            for ow in range(wo):
                z = bv[oc]
                for ic in range(c):
                    for i in range(kh):
                        ih = oh * sh + i - ph
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(kw):
                            iw = ow * sw + j - pw
                            if iw < 0 or iw >= wd:
                                continue
                            z += xv[ic, ih, iw] * wv[oc, ic, i, j]
                denom = z + eps if z >= 0.0 else z - eps
                if denom == 0.0:
                    continue
                s = rv[oc, oh, ow] / denom
                for ic in range(c):
                    for i in range(kh):
                        ih = oh * sh + i - ph
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(kw):
                            iw = ow * sw + j - pw
                            if iw < 0 or iw >= wd:
                                continue
                            r_in[ic, ih, iw] += xv[ic, ih, iw] * wv[oc, ic, i, j] * s
    return r_in_arr


def conv2d_lrp_alphabeta(x, w, b, r_out, stride, padding, double alpha, double beta):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, :, ::1] rv = np.ascontiguousarray(r_out, dtype=np.float64)
    cdef Py_ssize_t c = xv.shape[0], h = xv.shape[1], wd = xv.shape[2]
    cdef Py_ssize_t o = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    cdef Py_ssize_t ph = padding[0], pw = padding[1]
    cdef Py_ssize_t ho = rv.shape[1], wo = rv.shape[2]
    r_in_arr = np.zeros((c, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] r_in = r_in_arr
    cdef Py_ssize_t oc, oh, ow, ic, i, j, ih, iw
    cdef double zp, zn, contrib, sp, sn
    for oc in range(o):
        for oh in range(ho):
            for ow in range(wo):
                zp = bv[oc] if bv[oc] > 0.0 else 0.0
                zn = bv[oc] if bv[oc] < 0.0 else 0.0
                for ic in range(c):
                    for i in range(kh):
                        ih = oh * sh + i - ph
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(kw):
                            iw = ow * sw + j - pw
                            if iw < 0 or iw >= wd:
                                continue
                            contrib = xv[ic, ih, iw] * wv[oc, ic, i, j]
                            if contrib > 0.0:
                                zp += contrib
                            else:
                                zn += contrib
                sp = alpha * rv[oc, oh, ow] / zp if zp != 0.0 else 0.0
                sn = -beta * rv[oc, oh, ow] / zn if zn != 0.0 else 0.0
                if sp == 0.0 and sn == 0.0:
                    continue
                for ic in range(c):
                    for i in range(kh):
                        ih = oh * sh + i - ph
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(kw):
                            iw = ow * sw + j - pw
                            if iw < 0 or iw >= wd:
                                continue
                            contrib = xv[ic, ih, iw] * wv[oc, ic, i, j]
                            if contrib > 0.0:
                                r_in[ic, ih, iw] += contrib * sp
                            else:
                                r_in[ic, ih, iw] += contrib * sn
    return r_in_arr


def maxpool2d_forward(x, kernel, stride):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t c = xv.shape[0], h = xv.shape[1], wd = xv.shape[2]
    cdef Py_ssize_t kh = kernel[0], kw = kernel[1]
    cdef Py_ssize_t sh = stride[0], sw = stride[1]
    cdef Py_ssize_t ho = (h - kh) // sh + 1
    cdef Py_ssize_t wo = (wd - kw) // sw + 1
    out_arr = np.empty((c, ho, wo), dtype=np.float64)
    arg_arr = np.empty((c, ho, wo), dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, ::1] arg = arg_arr
    cdef Py_ssize_t ic, oh, ow, i, j, ih, iw, best_idx
    cdef double best, v
    for ic in range(c):
        for oh in range(ho):
            for ow in range(wo):
                best = -INFINITY
                best_idx = 0
                for i in range(kh):
                    ih = oh * sh + i
                    for j in range(kw):
                        iw = ow * sw + j
                        v = xv[ic, ih, iw]
                        if v > best:
                            best = v
                            best_idx = ih * wd + iw
                out[ic, oh, ow] = best
                arg[ic, oh, ow] = best_idx
    return out_arr, arg_arr


def quickshift_density(color, double sigma, Py_ssize_t radius):
    cdef const double[:, :, ::1] cv = np.ascontiguousarray(color, dtype=np.float64)
    cdef Py_ssize_t c = cv.shape[0], h = cv.shape[1], w = cv.shape[2]
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    density_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] density = density_arr
    cdef Py_ssize_t i, j, di, dj, ni, nj, ch
    cdef double acc, d2, dc
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(-radius, radius + 1):
                ni = i + di
                if ni < 0 or ni >= h:
                    continue
                for dj in range(-radius, radius + 1):
                    nj = j + dj
                    if nj < 0 or nj >= w:
                        continue
                    d2 = <double> (di * di + dj * dj)
                    for ch in range(c):
                        dc = cv[ch, i, j] - cv[ch, ni, nj]
                        d2 += dc * dc
                    acc += exp(-d2 * inv)
            density[i, j] = acc
    return density_arr


def quickshift_link(color, density, double max_dist, Py_ssize_t radius):
    cdef const double[:, :, ::1] cv = np.ascontiguousarray(color, dtype=np.float64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(density, dtype=np.float64)
    cdef Py_ssize_t c = cv.shape[0], h = cv.shape[1], w = cv.shape[2]
    cdef double md2 = max_dist * max_dist
    parent_arr = np.empty(h * w, dtype=np.int64)
    cdef cnp.int64_t[::1] parent = parent_arr
    cdef Py_ssize_t i, j, di, dj, ni, nj, ch, p, best
    cdef double best_d2, dp, d2, dc
    for i in range(h):
        for j in range(w):
            p = i * w + j
            best = p
            best_d2 = INFINITY
            dp = dv[i, j]
            for di in range(-radius, radius + 1):
                ni = i + di
                if ni < 0 or ni >= h:
                    continue
                if <double> (di * di) > md2:
                    continue
                for dj in range(-radius, radius + 1):
                    nj = j + dj
                    if nj < 0 or nj >= w:
                        continue
                    if di == 0 and dj == 0:
                        continue
                    if dv[ni, nj] <= dp:
                        continue
                    d2 = <double> (di * di + dj * dj)
                    for ch in range(c):
                        dc = cv[ch, i, j] - cv[ch, ni, nj]
                        d2 += dc * dc
                    if d2 <= md2 and d2 < best_d2:
                        best_d2 = d2
                        best = ni * w + nj
            parent[p] = best
    return parent_arr


def cd_nnlasso(gram, cov, double gamma2, u0, Py_ssize_t max_iter, double tol):
    cdef const double[:, ::1] gv = np.ascontiguousarray(gram, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(cov, dtype=np.float64)
    u_arr = np.array(u0, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef Py_ssize_t k = gv.shape[0]
    cdef Py_ssize_t it, j, l
    cdef Py_ssize_t sweeps = 0
    cdef bint converged = False
    cdef double gjj, gu, new, delta, max_delta
    for it in range(max_iter):
        max_delta = 0.0
        for j in range(k):
            gjj = gv[j, j]
            if gjj == 0.0:
                new = 0.0
            else:
                gu = 0.0
                for l in range(k):
                    gu += gv[j, l] * u[l]
                new = (cv[j] - gu + gjj * u[j] - gamma2) / gjj
                if new < 0.0:
                    new = 0.0
            delta = new - u[j] if new >= u[j] else u[j] - new
            if delta > max_delta:
                max_delta = delta
            u[j] = new
        sweeps = it + 1
        if max_delta < tol:
            converged = True
            break
    return u_arr, sweeps, converged
