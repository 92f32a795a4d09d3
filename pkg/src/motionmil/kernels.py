"""Hot numeric kernels, each in a numba and a pure-numpy variant.

Every public name at the bottom of this module is an alias resolved once at
import time by :mod:`motionmil.backend`. The numba variants are explicit
loops compiled with ``@njit(cache=True)``; the numpy variants are the
vectorized equivalents. Shapes and conventions:

``mil_forward(phi, w_det, b_det, w_cls, b_cls)``
    phi (R, D), weights (C, D), biases (C,). Returns scores ``z_det``/
    ``z_cls`` (R, C), ``p_det`` softmax over proposals per class, ``p_cls``
    softmax over classes per proposal, and the per-class sum
    ``s[c] = sum_i p_det[i, c] * p_cls[i, c]`` before any clamping.

``mil_fused(phi, w_det, b_det, w_cls, b_cls, y, eps)``
    Forward, binary cross-entropy against labels ``y`` (C,), and analytic
    gradients in one pass. The clamp of the image-level prediction to
    ``[eps, 1 - eps]`` contributes zero gradient where active. Returns
    ``(loss, g_w_det, g_b_det, g_w_cls, g_b_cls, g_phi)``.

``nce_fused(img, mot, rho)``
    L2-normalizes each row of ``img``/``mot`` (B, E), forms the cosine
    similarity matrix divided by ``rho``, and evaluates the symmetric
    paired-batch contrastive loss with its gradients. Returns
    ``(loss, g_img, g_mot, g_rho)``. Callers must reject zero rows first.

``colorize_core(u, v, wheel)``
    Direction-to-hue, magnitude-to-intensity rendering on the unit RGB cube;
    ``wheel`` is the (ncols, 3) hue table in [0, 1]. Returns float (H, W, 3)
    in [0, 1] with zero motion mapping to white.

All kernels expect C-contiguous float64 arrays unless noted; ``mil_forward``
also accepts float32 throughout (the optional fast path).
"""

import math

import numpy as np

from .backend import USE_NUMBA

if USE_NUMBA:
    from numba import njit


# ---------------------------------------------------------------------------
# pure-numpy variants
# ---------------------------------------------------------------------------


def _softmax_cols(z):
    e = np.exp(z - z.max(axis=0))
    return e / e.sum(axis=0)


def _softmax_rows(z):
    e = np.exp(z - z.max(axis=1)[:, None])
    return e / e.sum(axis=1)[:, None]


def mil_forward_numpy(phi, w_det, b_det, w_cls, b_cls):
    z_det = phi @ w_det.T + b_det
    z_cls = phi @ w_cls.T + b_cls
    p_det = _softmax_cols(z_det)
    p_cls = _softmax_rows(z_cls)
    s = (p_det * p_cls).sum(axis=0)
    return z_det, z_cls, p_det, p_cls, s


def mil_fused_numpy(phi, w_det, b_det, w_cls, b_cls, y, eps):
    _, _, p_det, p_cls, s = mil_forward_numpy(phi, w_det, b_det, w_cls, b_cls)
    p_hat = np.clip(s, eps, 1.0 - eps)
    loss = -float(np.sum(y * np.log(p_hat) + (1.0 - y) * np.log(1.0 - p_hat)))

    g_s = np.where(
        (s > eps) & (s < 1.0 - eps),
        -(y / p_hat - (1.0 - y) / (1.0 - p_hat)),
        0.0,
    )
    g_p_det = g_s[None, :] * p_cls
    g_p_cls = g_s[None, :] * p_det
    g_z_det = p_det * (g_p_det - (p_det * g_p_det).sum(axis=0)[None, :])
    g_z_cls = p_cls * (g_p_cls - (p_cls * g_p_cls).sum(axis=1)[:, None])

    g_w_det = g_z_det.T @ phi
    g_b_det = g_z_det.sum(axis=0)
    g_w_cls = g_z_cls.T @ phi
    g_b_cls = g_z_cls.sum(axis=0)
    g_phi = g_z_det @ w_det + g_z_cls @ w_cls
    return loss, g_w_det, g_b_det, g_w_cls, g_b_cls, g_phi


def nce_fused_numpy(img, mot, rho):
    b = img.shape[0]
    nx = np.sqrt((img * img).sum(axis=1))
    ny = np.sqrt((mot * mot).sum(axis=1))
    xn = img / nx[:, None]
    yn = mot / ny[:, None]
    s = (xn @ yn.T) / rho

    mx_r = s.max(axis=1)
    er = np.exp(s - mx_r[:, None])
    sr = er.sum(axis=1)
    p_row = er / sr[:, None]
    lse_r = mx_r + np.log(sr)

    mx_c = s.max(axis=0)
    ec = np.exp(s - mx_c[None, :])
    sc = ec.sum(axis=0)
    p_col = ec / sc[None, :]
    lse_c = mx_c + np.log(sc)

    diag = np.diagonal(s)
    loss = float((lse_r - diag).sum() + (lse_c - diag).sum()) / (2.0 * b)

    g = (p_row + p_col - 2.0 * np.eye(b)) / (2.0 * b)
    g_rho = -float((g * s).sum()) / rho
    gxh = (g @ yn) / rho
    gyh = (g.T @ xn) / rho
    g_img = (gxh - (gxh * xn).sum(axis=1)[:, None] * xn) / nx[:, None]
    g_mot = (gyh - (gyh * yn).sum(axis=1)[:, None] * yn) / ny[:, None]
    return loss, g_img, g_mot, g_rho


def colorize_core_numpy(u, v, wheel):
    ncols = wheel.shape[0]
    rad = np.hypot(u, v)
    m = rad.max() if rad.size else 0.0
    r = rad / m if m > 0.0 else np.zeros_like(rad)
    a = np.arctan2(-v, -u) / math.pi
    fk = (a + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64)
    f = fk - k0
    k1 = k0 + 1
    k1[k1 == ncols] = 0
    col = (1.0 - f)[..., None] * wheel[k0] + f[..., None] * wheel[k1]
    return 1.0 - r[..., None] * (1.0 - col)


# ---------------------------------------------------------------------------
# numba variants
# ---------------------------------------------------------------------------

if USE_NUMBA:

    @njit(cache=True)
    def mil_forward_numba(phi, w_det, b_det, w_cls, b_cls):
        r, d = phi.shape
        c = w_det.shape[0]
        z_det = np.empty((r, c), dtype=phi.dtype)
        z_cls = np.empty((r, c), dtype=phi.dtype)
        for i in range(r):
            for j in range(c):
                sd = b_det[j]
                sc = b_cls[j]
                for k in range(d):
                    sd += w_det[j, k] * phi[i, k]
                    sc += w_cls[j, k] * phi[i, k]
                z_det[i, j] = sd
                z_cls[i, j] = sc
        p_det = np.empty((r, c), dtype=phi.dtype)
        p_cls = np.empty((r, c), dtype=phi.dtype)
        for j in range(c):
            mx = z_det[0, j]
            for i in range(1, r):
                if z_det[i, j] > mx:
                    mx = z_det[i, j]
            tot = 0.0
            for i in range(r):
                e = math.exp(z_det[i, j] - mx)
                p_det[i, j] = e
                tot += e
            for i in range(r):
                p_det[i, j] /= tot
        for i in range(r):
            mx = z_cls[i, 0]
            for j in range(1, c):
                if z_cls[i, j] > mx:
                    mx = z_cls[i, j]
            tot = 0.0
            for j in range(c):
                e = math.exp(z_cls[i, j] - mx)
                p_cls[i, j] = e
                tot += e
            for j in range(c):
                p_cls[i, j] /= tot
        s = np.zeros(c, dtype=phi.dtype)
        for j in range(c):
            for i in range(r):
                s[j] += p_det[i, j] * p_cls[i, j]
        return z_det, z_cls, p_det, p_cls, s

    @njit(cache=True)
    def mil_fused_numba(phi, w_det, b_det, w_cls, b_cls, y, eps):
        r, d = phi.shape
        c = w_det.shape[0]
        _, _, p_det, p_cls, s = mil_forward_numba(phi, w_det, b_det, w_cls, b_cls)

        loss = 0.0
        g_s = np.zeros(c)
        for j in range(c):
            ph = s[j]
            if ph < eps:
                ph = eps
            elif ph > 1.0 - eps:
                ph = 1.0 - eps
            loss += -(y[j] * math.log(ph) + (1.0 - y[j]) * math.log(1.0 - ph))
            if s[j] > eps and s[j] < 1.0 - eps:
                g_s[j] = -(y[j] / ph - (1.0 - y[j]) / (1.0 - ph))

        g_z_det = np.empty((r, c))
        for j in range(c):
            dot = 0.0
            for i in range(r):
                dot += p_det[i, j] * g_s[j] * p_cls[i, j]
            for i in range(r):
                g_z_det[i, j] = p_det[i, j] * (g_s[j] * p_cls[i, j] - dot)
        g_z_cls = np.empty((r, c))
        for i in range(r):
            dot = 0.0
            for j in range(c):
                dot += p_cls[i, j] * g_s[j] * p_det[i, j]
            for j in range(c):
                g_z_cls[i, j] = p_cls[i, j] * (g_s[j] * p_det[i, j] - dot)

        g_w_det = np.zeros((c, d))
        g_b_det = np.zeros(c)
        g_w_cls = np.zeros((c, d))
        g_b_cls = np.zeros(c)
        for j in range(c):
            for i in range(r):
                gd = g_z_det[i, j]
                gc = g_z_cls[i, j]
                g_b_det[j] += gd
                g_b_cls[j] += gc
                for k in range(d):
                    g_w_det[j, k] += gd * phi[i, k]
                    g_w_cls[j, k] += gc * phi[i, k]
        g_phi = np.zeros((r, d))
        for i in range(r):
            for k in range(d):
                acc = 0.0
                for j in range(c):
                    acc += g_z_det[i, j] * w_det[j, k] + g_z_cls[i, j] * w_cls[j, k]
                g_phi[i, k] = acc
        return loss, g_w_det, g_b_det, g_w_cls, g_b_cls, g_phi

    @njit(cache=True)
    def nce_fused_numba(img, mot, rho):
        b, e = img.shape
        xn = np.empty((b, e))
        yn = np.empty((b, e))
        nx = np.empty(b)
        ny = np.empty(b)
        for a in range(b):
            sx = 0.0
            sy = 0.0
            for k in range(e):
                sx += img[a, k] * img[a, k]
                sy += mot[a, k] * mot[a, k]
            nx[a] = math.sqrt(sx)
            ny[a] = math.sqrt(sy)
            for k in range(e):
                xn[a, k] = img[a, k] / nx[a]
                yn[a, k] = mot[a, k] / ny[a]

        s = np.empty((b, b))
        for a in range(b):
            for j in range(b):
                dot = 0.0
                for k in range(e):
                    dot += xn[a, k] * yn[j, k]
                s[a, j] = dot / rho

        loss = 0.0
        p_row = np.empty((b, b))
        p_col = np.empty((b, b))
        for a in range(b):
            mx = s[a, 0]
            for j in range(1, b):
                if s[a, j] > mx:
                    mx = s[a, j]
            tot = 0.0
            for j in range(b):
                ex = math.exp(s[a, j] - mx)
                p_row[a, j] = ex
                tot += ex
            for j in range(b):
                p_row[a, j] /= tot
            loss += mx + math.log(tot) - s[a, a]
        for j in range(b):
            mx = s[0, j]
            for a in range(1, b):
                if s[a, j] > mx:
                    mx = s[a, j]
            tot = 0.0
            for a in range(b):
                ex = math.exp(s[a, j] - mx)
                p_col[a, j] = ex
                tot += ex
            for a in range(b):
                p_col[a, j] /= tot
            loss += mx + math.log(tot) - s[j, j]
        loss /= 2.0 * b

        g = np.empty((b, b))
        g_rho = 0.0
        for a in range(b):
            for j in range(b):
                val = p_row[a, j] + p_col[a, j]
                if a == j:
                    val -= 2.0
                val /= 2.0 * b
                g[a, j] = val
                g_rho += val * s[a, j]
        g_rho = -g_rho / rho

        g_img = np.empty((b, e))
        g_mot = np.empty((b, e))
        tmp = np.empty(e)
        for a in range(b):
            dot = 0.0
            for k in range(e):
                acc = 0.0
                for j in range(b):
                    acc += g[a, j] * yn[j, k]
                tmp[k] = acc / rho
                dot += tmp[k] * xn[a, k]
            for k in range(e):
                g_img[a, k] = (tmp[k] - dot * xn[a, k]) / nx[a]
        for j in range(b):
            dot = 0.0
            for k in range(e):
                acc = 0.0
                for a in range(b):
                    acc += g[a, j] * xn[a, k]
                tmp[k] = acc / rho
                dot += tmp[k] * yn[j, k]
            for k in range(e):
                g_mot[j, k] = (tmp[k] - dot * yn[j, k]) / ny[j]
        return loss, g_img, g_mot, g_rho

    @njit(cache=True)
    def colorize_core_numba(u, v, wheel):
        h, w = u.shape
        ncols = wheel.shape[0]
        out = np.empty((h, w, 3))
        m = 0.0
        for i in range(h):
            for j in range(w):
                mag = math.hypot(u[i, j], v[i, j])
                if mag > m:
                    m = mag
        for i in range(h):
            for j in range(w):
                rad = math.hypot(u[i, j], v[i, j]) / m if m > 0.0 else 0.0
                a = math.atan2(-v[i, j], -u[i, j]) / math.pi
                fk = (a + 1.0) / 2.0 * (ncols - 1)
                k0 = int(math.floor(fk))
                f = fk - k0
                k1 = k0 + 1
                if k1 == ncols:
                    k1 = 0
                for ch in range(3):
                    col = (1.0 - f) * wheel[k0, ch] + f * wheel[k1, ch]
                    out[i, j, ch] = 1.0 - rad * (1.0 - col)
        return out


if USE_NUMBA:
    mil_forward = mil_forward_numba
    mil_fused = mil_fused_numba
    nce_fused = nce_fused_numba
    colorize_core = colorize_core_numba
else:
    mil_forward = mil_forward_numpy
    mil_fused = mil_fused_numpy
    nce_fused = nce_fused_numpy
    colorize_core = colorize_core_numpy
