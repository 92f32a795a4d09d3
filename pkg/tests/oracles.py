"""Independent scalar-loop oracles used across the test suite.

Everything here is deliberately written with plain Python loops and the
``math`` module so it shares no code path with the vectorized or jitted
implementations it checks.
"""

import math


def magnitude_oracle(u, v):
    h, w = len(u), len(u[0])
    return [[math.sqrt(u[r][c] ** 2 + v[r][c] ** 2) for c in range(w)] for r in range(h)]


def corner_stats_oracle(u, v, corner_fraction):
    """Mean (u, v) and mean magnitude per corner window, as a dict."""
    h, w = len(u), len(u[0])
    wh = max(math.ceil(corner_fraction * h), 1)
    ww = max(math.ceil(corner_fraction * w), 1)
    windows = {
        "top_left": (range(0, wh), range(0, ww)),
        "top_right": (range(0, wh), range(w - ww, w)),
        "bottom_left": (range(h - wh, h), range(0, ww)),
        "bottom_right": (range(h - wh, h), range(w - ww, w)),
    }
    out = {}
    for cid, (rows, cols) in windows.items():
        su = sv = sm = 0.0
        n = 0
        for r in rows:
            for c in cols:
                su += u[r][c]
                sv += v[r][c]
                sm += math.sqrt(u[r][c] ** 2 + v[r][c] ** 2)
                n += 1
        out[cid] = (su / n, sv / n, sm / n)
    return out


def softmax_oracle(values):
    mx = max(values)
    exps = [math.exp(x - mx) for x in values]
    total = sum(exps)
    return [e / total for e in exps]


def mil_forward_oracle(phi, w_det, b_det, w_cls, b_cls, eps=1e-7):
    """(p_det, p_cls, p_hat) computed with nested scalar loops."""
    r, d = len(phi), len(phi[0])
    c = len(w_det)
    z_det = [[b_det[j] + sum(w_det[j][k] * phi[i][k] for k in range(d))
              for j in range(c)] for i in range(r)]
    z_cls = [[b_cls[j] + sum(w_cls[j][k] * phi[i][k] for k in range(d))
              for j in range(c)] for i in range(r)]
    p_det_cols = [softmax_oracle([z_det[i][j] for i in range(r)]) for j in range(c)]
    p_det = [[p_det_cols[j][i] for j in range(c)] for i in range(r)]
    p_cls = [softmax_oracle(z_cls[i]) for i in range(r)]
    p_hat = []
    for j in range(c):
        s = sum(p_det[i][j] * p_cls[i][j] for i in range(r))
        p_hat.append(min(max(s, eps), 1.0 - eps))
    return p_det, p_cls, p_hat


def bce_oracle(p_hat, y):
    return -sum(
        yc * math.log(pc) + (1.0 - yc) * math.log(1.0 - pc)
        for pc, yc in zip(p_hat, y)
    )


def similarity_oracle(img, mot, rho):
    """All B*B temperature-scaled cosine similarities, explicitly."""
    b, dim = len(img), len(img[0])
    nx = [math.sqrt(sum(img[a][k] ** 2 for k in range(dim))) for a in range(b)]
    ny = [math.sqrt(sum(mot[a][k] ** 2 for k in range(dim))) for a in range(b)]
    return [
        [sum(img[a][k] * mot[j][k] for k in range(dim)) / (nx[a] * ny[j]) / rho
         for j in range(b)]
        for a in range(b)
    ]


def nce_loss_oracle(img, mot, rho):
    """Forms every exp(S[a, b]) explicitly; positives excluded from negatives."""
    b = len(img)
    s = similarity_oracle(img, mot, rho)
    row = 0.0
    for a in range(b):
        pos = math.exp(s[a][a])
        neg = sum(math.exp(s[a][j]) for j in range(b) if j != a)
        row += -math.log(pos / (pos + neg))
    col = 0.0
    for j in range(b):
        pos = math.exp(s[j][j])
        neg = sum(math.exp(s[a][j]) for a in range(b) if a != j)
        col += -math.log(pos / (pos + neg))
    return (row / b + col / b) / 2.0


def box_stats_oracle(mag, box):
    """Inside/outside means with the pixel-center-inclusive rasterization."""
    h, w = len(mag), len(mag[0])
    x0, y0, x1, y1 = box
    ins, outs = [], []
    for r in range(h):
        for c in range(w):
            cx, cy = c + 0.5, r + 0.5
            if x0 <= cx <= x1 and y0 <= cy <= y1:
                ins.append(mag[r][c])
            else:
                outs.append(mag[r][c])
    ib = sum(ins) / len(ins) if ins else None
    ob = sum(outs) / len(outs) if outs else None
    return ib, ob


def colorize_pixel_oracle(u, v, max_mag, wheel01):
    """One pixel of the flow rendering, scalar math only."""
    ncols = len(wheel01)
    rad = math.sqrt(u * u + v * v) / max_mag if max_mag > 0 else 0.0
    a = math.atan2(-v, -u) / math.pi
    fk = (a + 1.0) / 2.0 * (ncols - 1)
    k0 = int(math.floor(fk))
    f = fk - k0
    k1 = 0 if k0 + 1 == ncols else k0 + 1
    out = []
    for ch in range(3):
        col = (1.0 - f) * wheel01[k0][ch] + f * wheel01[k1][ch]
        out.append(1.0 - rad * (1.0 - col))
    return out


def iou_oracle(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)
