"""Pure NumPy/Python fallback for the compiled kernels.

Every function here has a twin in ``_core.pyx`` with identical semantics.
The quickshift routines use plain Python loops (not vectorized numpy) so
that floating-point accumulation order matches the compiled kernels and
both backends make bit-identical link decisions on plateau fixtures.
"""

import math

import numpy as np

BACKEND_NAME = "pure"


def conv2d_forward(x, w, b, stride, padding):
    """Zero-padded 2-D cross-correlation. x: (C,H,W), w: (O,C,kh,kw)."""
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    view = view[:, ::sh, ::sw]  # (C, ho, wo, kh, kw)
    cols = view.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
    out = w.reshape(o, -1) @ cols + b[:, None]
    return np.ascontiguousarray(out.reshape(o, ho, wo))


def _im2col(x, kh, kw, stride, padding):
    c, h, wd = x.shape
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    view = view[:, ::sh, ::sw]
    cols = view.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
    return cols, xp.shape, (ho, wo)


def _col2im(contrib, c, kh, kw, padded_shape, out_hw, stride, padding, h, wd):
    sh, sw = stride
    ph, pw = padding
    ho, wo = out_hw
    rp = np.zeros(padded_shape)
    contrib = contrib.reshape(c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            rp[:, i : i + ho * sh : sh, j : j + wo * sw : sw] += contrib[:, i, j]
    return np.ascontiguousarray(rp[:, ph : ph + h, pw : pw + wd])


def conv2d_lrp_epsilon(x, w, b, r_out, stride, padding, eps):
    """Epsilon-rule relevance through a conv layer, bias share absorbed."""
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    cols, padded_shape, out_hw = _im2col(x, kh, kw, stride, padding)
    w2 = w.reshape(o, -1)
    z = w2 @ cols + b[:, None]
    denom = z + np.where(z >= 0.0, eps, -eps)
    r2 = r_out.reshape(o, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom != 0.0, r2 / denom, 0.0)
    contrib = (w2.T @ s) * cols
    return _col2im(contrib, c, kh, kw, padded_shape, out_hw, stride, padding, h, wd)


def conv2d_lrp_alphabeta(x, w, b, r_out, stride, padding, alpha, beta):
    """Alpha-beta rule relevance through a conv layer."""
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    cols, padded_shape, out_hw = _im2col(x, kh, kw, stride, padding)
    cp = np.maximum(cols, 0.0)
    cn = np.minimum(cols, 0.0)
    w2 = w.reshape(o, -1)
    wp = np.maximum(w2, 0.0)
    wn = np.minimum(w2, 0.0)
    zp = wp @ cp + wn @ cn + np.maximum(b, 0.0)[:, None]
    zn = wn @ cp + wp @ cn + np.minimum(b, 0.0)[:, None]
    r2 = r_out.reshape(o, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sp = np.where(zp != 0.0, alpha * r2 / zp, 0.0)
        sn = np.where(zn != 0.0, -beta * r2 / zn, 0.0)
    contrib = cp * (wp.T @ sp) + cn * (wn.T @ sp) + cp * (wn.T @ sn) + cn * (wp.T @ sn)
    return _col2im(contrib, c, kh, kw, padded_shape, out_hw, stride, padding, h, wd)


def maxpool2d_forward(x, kernel, stride):
    """Max pooling with argmax trace. Returns (out, argmax) where argmax
    holds flat row-major indices into the (H, W) plane per channel."""
    c, h, wd = x.shape
    kh, kw = kernel
    sh, sw = stride
    view = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    view = view[:, ::sh, ::sw]  # (C, ho, wo, kh, kw)
    ho, wo = view.shape[1], view.shape[2]
    flat = view.reshape(c, ho, wo, kh * kw)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    oh = np.arange(ho)[None, :, None]
    ow = np.arange(wo)[None, None, :]
    ih = oh * sh + arg // kw
    iw = ow * sw + arg % kw
    argmax = (ih * wd + iw).astype(np.int64)
    return np.ascontiguousarray(out), np.ascontiguousarray(argmax)


def quickshift_density(color, sigma, radius):
    """Parzen density per pixel over the joint (scaled-color, position)
    space within a square window. color: (C, H, W), already ratio-scaled."""
    c, h, w = color.shape
    inv = 1.0 / (2.0 * sigma * sigma)
    density = np.zeros((h, w))
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
                    d2 = float(di * di + dj * dj)
                    for ch in range(c):
                        dc = color[ch, i, j] - color[ch, ni, nj]
                        d2 += dc * dc
                    acc += math.exp(-d2 * inv)
            density[i, j] = acc
    return density


def quickshift_link(color, density, max_dist, radius):
    """Link every pixel to its joint-space-nearest neighbor of strictly
    higher density within max_dist. Equal distances keep the first
    candidate in row-major window order. Returns flat parent indices
    (parent == own index marks a root)."""
    c, h, w = color.shape
    md2 = max_dist * max_dist
    parent = np.empty(h * w, dtype=np.int64)
    for i in range(h):
        for j in range(w):
            p = i * w + j
            best = p
            best_d2 = math.inf
            dp = density[i, j]
            for di in range(-radius, radius + 1):
                ni = i + di
                if ni < 0 or ni >= h:
                    continue
                if di * di > md2:
                    continue
                for dj in range(-radius, radius + 1):
                    nj = j + dj
                    if nj < 0 or nj >= w:
                        continue
                    if di == 0 and dj == 0:
                        continue
                    if density[ni, nj] <= dp:
                        continue
                    d2 = float(di * di + dj * dj)
                    for ch in range(c):
                        dc = color[ch, i, j] - color[ch, ni, nj]
                        d2 += dc * dc
                    if d2 <= md2 and d2 < best_d2:
                        best_d2 = d2
                        best = ni * w + nj
            parent[p] = best
    return parent


def cd_nnlasso(gram, cov, gamma2, u0, max_iter, tol):
    """Cyclic coordinate descent for min_{u>=0} 0.5||x-Vu||^2 + gamma2 ||u||_1
    given gram = V'V and cov = V'x. Returns (u, sweeps, converged)."""
    k = gram.shape[0]
    u = u0.copy()
    sweeps = 0
    converged = False
    for it in range(max_iter):
        max_delta = 0.0
        for j in range(k):
            gjj = gram[j, j]
            if gjj == 0.0:
                new = 0.0
            else:
                gu = float(gram[j] @ u)
                new = (cov[j] - gu + gjj * u[j] - gamma2) / gjj
                if new < 0.0:
                    new = 0.0
            delta = abs(new - u[j])
            if delta > max_delta:
                max_delta = delta
            u[j] = new
        sweeps = it + 1
        if max_delta < tol:
            converged = True
            break
    return u, sweeps, converged
