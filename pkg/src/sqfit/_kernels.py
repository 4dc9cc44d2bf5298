"""Compiled inner loops for hull construction and convex clipping."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def signed_area(v):
    n = v.shape[0]
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        s += v[i, 0] * v[j, 1] - v[j, 0] * v[i, 1]
    return 0.5 * s


@njit(cache=True)
def monotone_chain(pts, tol):
    """Andrew's monotone chain; drops vertices with turn cross product <= tol."""
    n = pts.shape[0]
    order_y = np.argsort(pts[:, 1], kind="mergesort")
    order = order_y[np.argsort(pts[order_y, 0], kind="mergesort")]
    hull = np.empty((2 * n + 1, 2))
    k = 0
    for ii in range(n):
        p = pts[order[ii]]
        while k >= 2:
            ox, oy = hull[k - 2, 0], hull[k - 2, 1]
            cr = (hull[k - 1, 0] - ox) * (p[1] - oy) - (hull[k - 1, 1] - oy) * (p[0] - ox)
            if cr <= tol:
                k -= 1
            else:
                break
        hull[k, 0] = p[0]
        hull[k, 1] = p[1]
        k += 1
    lower_end = k + 1
    for ii in range(n - 2, -1, -1):
        p = pts[order[ii]]
        while k >= lower_end:
            ox, oy = hull[k - 2, 0], hull[k - 2, 1]
            cr = (hull[k - 1, 0] - ox) * (p[1] - oy) - (hull[k - 1, 1] - oy) * (p[0] - ox)
            if cr <= tol:
                k -= 1
            else:
                break
        hull[k, 0] = p[0]
        hull[k, 1] = p[1]
        k += 1
    return hull[:max(k - 1, 0)].copy()


@njit(cache=True)
def prefilter(pts, n_dirs):
    """Drop points strictly inside the polygon of extreme points along ``n_dirs`` directions."""
    n = pts.shape[0]
    idx = np.empty(n_dirs, dtype=np.int64)
    for k in range(n_dirs):
        ang = 2.0 * np.pi * k / n_dirs
        cx, cy = np.cos(ang), np.sin(ang)
        best = -np.inf
        bi = 0
        for i in range(n):
            d = pts[i, 0] * cx + pts[i, 1] * cy
            if d > best:
                best = d
                bi = i
        idx[k] = bi
    # extremes in angular order of their directions form a convex CCW chain
    ext = np.empty((n_dirs, 2))
    m = 0
    for k in range(n_dirs):
        if m == 0 or idx[k] != idx[k - 1]:
            ext[m] = pts[idx[k]]
            m += 1
    if m > 1 and ext[0, 0] == ext[m - 1, 0] and ext[0, 1] == ext[m - 1, 1]:
        m -= 1
    if m < 3:
        return pts
    keep = np.empty(n, dtype=np.bool_)
    cnt = 0
    for i in range(n):
        inside = True
        for k in range(m):
            j = k + 1 if k + 1 < m else 0
            cr = (ext[j, 0] - ext[k, 0]) * (pts[i, 1] - ext[k, 1]) - \
                 (ext[j, 1] - ext[k, 1]) * (pts[i, 0] - ext[k, 0])
            if cr <= 1e-9:
                inside = False
                break
        keep[i] = not inside
        if not inside:
            cnt += 1
    out = np.empty((cnt, 2))
    c = 0
    for i in range(n):
        if keep[i]:
            out[c] = pts[i]
            c += 1
    return out


@njit(cache=True)
def clip_convex(subject, clip):
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW ``clip``."""
    cap = subject.shape[0] + clip.shape[0] + 4
    cur = np.empty((cap * 2, 2))
    nxt = np.empty((cap * 2, 2))
    m = subject.shape[0]
    cur[:m] = subject
    nc = clip.shape[0]
    for i in range(nc):
        if m == 0:
            break
        ax, ay = clip[i, 0], clip[i, 1]
        j = i + 1 if i + 1 < nc else 0
        ex, ey = clip[j, 0] - ax, clip[j, 1] - ay
        k = 0
        px, py = cur[m - 1, 0], cur[m - 1, 1]
        sp = ex * (py - ay) - ey * (px - ax)
        for q in range(m):
            cx, cy = cur[q, 0], cur[q, 1]
            sc = ex * (cy - ay) - ey * (cx - ax)
            if sc >= 0.0:
                if sp < 0.0:
                    t = sp / (sp - sc)
                    nxt[k, 0] = px + t * (cx - px)
                    nxt[k, 1] = py + t * (cy - py)
                    k += 1
                nxt[k, 0] = cx
                nxt[k, 1] = cy
                k += 1
            elif sp >= 0.0:
                t = sp / (sp - sc)
                nxt[k, 0] = px + t * (cx - px)
                nxt[k, 1] = py + t * (cy - py)
                k += 1
            px, py, sp = cx, cy, sc
        cur, nxt = nxt, cur
        m = k
    return cur[:m].copy()


@njit(cache=True)
def convex_iou(a, b):
    """IOU of two CCW convex polygons."""
    area_a = signed_area(a)
    area_b = signed_area(b)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    if a[:, 0].max() < b[:, 0].min() or b[:, 0].max() < a[:, 0].min():
        return 0.0
    if a[:, 1].max() < b[:, 1].min() or b[:, 1].max() < a[:, 1].min():
        return 0.0
    if a.shape[0] >= b.shape[0]:
        inter = clip_convex(a, b)
    else:
        inter = clip_convex(b, a)
    ia = signed_area(inter)
    if ia <= 0.0:
        return 0.0
    union = area_a + area_b - ia
    if union <= 0.0:
        return 0.0
    r = ia / union
    return min(max(r, 0.0), 1.0)


@njit(cache=True)
def _spow(x, e):
    if x > 0.0:
        return x ** e
    if x < 0.0:
        return -((-x) ** e)
    return 0.0


@njit(cache=True)
def sq_view_ious(a, eps, R, p, cam_R, cam_p, f, kappa, n_eta, n_omega,
                 targets, target_counts, front_eps):
    """Per-view IOU of the projected surface-grid hull of one SQ against target polygons.

    ``targets`` is a (P, K, 2) array of CCW polygons padded to K vertices;
    ``target_counts`` holds the true vertex counts. A view where any grid point
    is not in front of the camera scores 0.
    """
    P = cam_R.shape[0]
    M = n_eta * n_omega
    ce = np.empty(n_eta)
    se = np.empty(n_eta)
    for i in range(n_eta):
        eta = -0.5 * np.pi + np.pi * i / (n_eta - 1)
        ce[i] = _spow(np.cos(eta), eps[0])
        se[i] = _spow(np.sin(eta), eps[0])
    co = np.empty(n_omega)
    so = np.empty(n_omega)
    for j in range(n_omega):
        om = -np.pi + 2.0 * np.pi * j / (n_omega - 1)
        co[j] = _spow(np.cos(om), eps[1])
        so[j] = _spow(np.sin(om), eps[1])
    world = np.empty((M, 3))
    k = 0
    for i in range(n_eta):
        for j in range(n_omega):
            tx = a[0] * ce[i] * co[j]
            ty = a[1] * ce[i] * so[j]
            tz = a[2] * se[i]
            for c in range(3):
                world[k, c] = R[c, 0] * tx + R[c, 1] * ty + R[c, 2] * tz + p[c]
            k += 1
    out = np.zeros(P)
    pix = np.empty((M, 2))
    for v in range(P):
        ok = True
        for q in range(M):
            dx = world[q, 0] - cam_p[v, 0]
            dy = world[q, 1] - cam_p[v, 1]
            dz = world[q, 2] - cam_p[v, 2]
            cx = cam_R[v, 0, 0] * dx + cam_R[v, 1, 0] * dy + cam_R[v, 2, 0] * dz
            cy = cam_R[v, 0, 1] * dx + cam_R[v, 1, 1] * dy + cam_R[v, 2, 1] * dz
            cz = cam_R[v, 0, 2] * dx + cam_R[v, 1, 2] * dy + cam_R[v, 2, 2] * dz
            if cz <= front_eps:
                ok = False
                break
            pix[q, 0] = f[0] * cx / cz + kappa[0]
            pix[q, 1] = f[1] * cy / cz + kappa[1]
        if not ok:
            continue
        xmin = pix[:, 0].min()
        xmax = pix[:, 0].max()
        ymin = pix[:, 1].min()
        ymax = pix[:, 1].max()
        diag2 = (xmax - xmin) ** 2 + (ymax - ymin) ** 2
        if diag2 == 0.0:
            continue
        cand = prefilter(pix, 16)
        hull = monotone_chain(cand, 1e-12 * diag2)
        if hull.shape[0] < 3:
            continue
        out[v] = convex_iou(hull, targets[v, :target_counts[v]].copy())
    return out
