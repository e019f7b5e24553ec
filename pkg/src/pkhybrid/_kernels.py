"""Compiled inner loops of the sweep.

These mirror the reference implementations in ``random_kit``, ``slice_kit``
and ``sampler`` and consume the same ``numpy.random.Generator``.  Status codes
are returned instead of raising so that the caller can map them onto the
package's exception types.
"""
import math

import numpy as np
from numba import njit

H_NONE, H_PY, H_NGG = 0, 1, 2
L_STABLE, L_LOGBETA = 0, 1
NW_HALF, NW_GRID, NW_LOGBETA = 0, 1, 2

OK, ERR_NEW_WEIGHT, ERR_COLLAPSE, ERR_REJECTION, ERR_GRID = 0, 1, 2, 3, 4

_TINY = 5e-324


@njit(cache=True)
def _series_log_f_large(t, sigma):
    # (1/pi) sum_j (-1)^(j+1) Gamma(sigma j + 1) / j! sin(pi sigma j) t^(-sigma j - 1)
    lt = math.log(t)
    total = 0.0
    quiet = 0
    for j in range(1, 400):
        sn = math.sin(math.pi * ((sigma * j) % 2.0))
        if sn == 0.0:
            continue
        mag = math.lgamma(sigma * j + 1.0) - math.lgamma(j + 1.0) - (sigma * j + 1.0) * lt
        term = math.exp(mag) * sn
        if j % 2 == 0:
            term = -term
        total += term
        if abs(term) < 1e-17 * abs(total):
            quiet += 1
            if quiet >= 4:
                break
        else:
            quiet = 0
    if total <= 0.0:
        return -np.inf
    return math.log(total / math.pi)


@njit(cache=True)
def table_log_f(t, sigma, x0, step, coef, a0, k, slope, edge, xmax):
    """``log f_sigma(t)`` from the spline table (see ``StableLogDensity``)."""
    if not t > 0.0:
        return -np.inf
    x = math.log(t)
    if x < x0:
        return edge + slope * (x - x0) - a0 * math.exp(-k * x)
    if x > xmax:
        return _series_log_f_large(t, sigma)
    m = coef.shape[1]
    i = int((x - x0) / step)
    if i > m - 1:
        i = m - 1
    dx = x - (x0 + i * step)
    r = ((coef[0, i] * dx + coef[1, i]) * dx + coef[2, i]) * dx + coef[3, i]
    return r - a0 * math.exp(-k * x)


@njit(cache=True)
def _log_h(t, h_kind, h_par):
    if h_kind == H_PY:
        return -h_par * math.log(t)
    if h_kind == H_NGG:
        return -h_par * t
    return 0.0


@njit(cache=True)
def _log_levy(x, l_kind, sigma, a, b):
    if l_kind == L_STABLE:
        return math.log(sigma) - math.lgamma(1.0 - sigma) - (sigma + 1.0) * math.log(x)
    return math.log(math.expm1(-b * x) / math.expm1(-x)) - a * x - math.log(x)


# ----------------------------------------------------------------- new weights


@njit(cache=True)
def new_weight_half(rng, v):
    g = rng.gamma(0.75, 1.0)
    ig = (1.0 / (64.0 * v * v)) / rng.gamma(0.25, 1.0)
    stick = 1.0 / (1.0 + math.sqrt(ig) / math.sqrt(g))
    return min(max(stick * v, _TINY), np.nextafter(v, 0.0))


@njit(cache=True)
def _logbeta_power(v, b):
    if b == 1.0:
        return False
    acc_u = 0.0
    for i in range(16):
        acc_u += (-math.expm1(-v * (i + 0.5) / 16.0)) ** (b - 1.0)
    return (-math.expm1(-v) / v) ** (b - 1.0) > acc_u / 16.0


@njit(cache=True)
def new_weight_logbeta(rng, v, b, max_rounds):
    power = _logbeta_power(v, b)
    for _ in range(max_rounds):
        if power:
            s = v * -math.expm1(math.log(rng.random()) / b)
        else:
            s = v * rng.random()
        u = rng.random()
        if not (s > 0.0 and s < v):
            continue
        ratio = math.expm1(-b * s) / math.expm1(-s)
        rest = v - s
        if power:
            acc = ratio / b * (-math.expm1(-rest) / rest) ** (b - 1.0)
        else:
            acc = ratio / b
            if b != 1.0:
                acc *= (-math.expm1(-rest)) ** (b - 1.0)
        if u < acc:
            return s
    return -1.0


@njit(cache=True)
def _invert_cell(l0, l1, node, h, r):
    g = l1 - l0
    if abs(g) < 1e-8:
        frac = r * h
    else:
        gc = g / h
        frac = math.log1p(r * math.expm1(gc * h)) / gc
        if not (frac == frac) or frac == np.inf or frac == -np.inf:
            frac = r * h
    return node + min(max(frac, 0.0), h)


@njit(cache=True)
def new_weight_grid(rng, v, sigma, grid, x0, step, coef, a0, k, slope, edge, xmax):
    """Two-piece inverse-CDF draw from ``s^-sigma f_sigma(v - s)`` on ``(0, v)``."""
    la = (1.0 - sigma) * math.log(v) - math.log(1.0 - sigma)
    wmax = 0.5 ** (1.0 - sigma)
    top_u = math.log(0.5 * v)
    lo = max(top_u - 60.0, -math.log(800.0 / a0) / k)
    ulo = min(lo, top_u - 5.0)
    na = grid + 1
    nodes = np.empty(2 * na)
    logd = np.empty(2 * na)
    top = -np.inf
    for i in range(na):
        w = wmax * i / grid
        rest = -v * math.expm1(math.log(max(w, 1e-300)) / (1.0 - sigma))
        nodes[i] = w
        logd[i] = la + table_log_f(rest, sigma, x0, step, coef, a0, k, slope, edge, xmax)
        u = ulo + (top_u - ulo) * i / grid
        r = math.exp(u)
        nodes[na + i] = u
        logd[na + i] = table_log_f(r, sigma, x0, step, coef, a0, k, slope, edge, xmax) + u \
            - sigma * math.log(v - r)
    for i in range(2 * na):
        if logd[i] != logd[i]:
            return -1.0
        if logd[i] > top:
            top = logd[i]
    if not top > -np.inf:
        return -1.0
    ex = np.empty(2 * na)
    for i in range(2 * na):
        ex[i] = math.exp(logd[i] - top)
    mass = np.empty(2 * grid)
    total = 0.0
    for p in range(2):
        for i in range(grid):
            j = p * na + i
            h = nodes[j + 1] - nodes[j]
            g = logd[j + 1] - logd[j]
            if abs(g) < 1e-8:
                m = h * 0.5 * (ex[j] + ex[j + 1])
            else:
                m = h * (ex[j + 1] - ex[j]) / g
            if not (m > 0.0 and m < np.inf):
                m = 0.0
            mass[p * grid + i] = m
            total += m
    if not (total > 0.0 and total < np.inf):
        return -1.0
    target = rng.random() * total
    acc = 0.0
    cell = 2 * grid - 1
    for i in range(2 * grid):
        if acc + mass[i] > target:
            cell = i
            break
        acc += mass[i]
    # skip empty trailing cells
    while mass[cell] == 0.0 and cell > 0:
        cell -= 1
    r = (target - acc) / mass[cell] if mass[cell] > 0.0 else 0.5
    r = min(max(r, 0.0), 1.0)
    p = cell // grid
    j = p * na + (cell - p * grid)
    xnew = _invert_cell(logd[j], logd[j + 1], nodes[j], nodes[j + 1] - nodes[j], r)
    if p == 0:
        s = v * max(xnew, 1e-300) ** (1.0 / (1.0 - sigma))
    else:
        s = v - math.exp(xnew)
    return min(max(s, _TINY), np.nextafter(v, 0.0))


@njit(cache=True)
def draw_new_weight(rng, v, nw_kind, sigma, b, grid, x0, step, coef, a0, k, slope, edge, xmax):
    if nw_kind == NW_HALF:
        return new_weight_half(rng, v)
    if nw_kind == NW_LOGBETA:
        return new_weight_logbeta(rng, v, b, 1000000)
    return new_weight_grid(rng, v, sigma, grid, x0, step, coef, a0, k, slope, edge, xmax)


# ----------------------------------------------------------------------- sweeps


@njit(cache=True)
def _log_weight_target(y, base, n, ni, h_kind, h_par, l_kind, sigma, a, b):
    s = math.exp(y)
    if not s > 0.0:
        return -np.inf
    t = base + s
    return -n * math.log(t) + _log_h(t, h_kind, h_par) + ni * y \
        + _log_levy(s, l_kind, sigma, a, b) + y


@njit(cache=True)
def update_weights(rng, weights, sizes, visit, v, n, width, max_steps,
                   h_kind, h_par, l_kind, sigma, a, b):
    """Log-scale slice update of each weight in the order ``visit`` (see ``slice_kit``)."""
    K = visit.shape[0]
    for i in visit:
        base = v
        for j in range(K):
            if j != i:
                base += weights[j]
        ni = sizes[i]
        y0 = math.log(weights[i])
        f0 = _log_weight_target(y0, base, n, ni, h_kind, h_par, l_kind, sigma, a, b)
        if not (f0 > -np.inf and f0 < np.inf):
            return ERR_COLLAPSE
        level = f0 - rng.standard_exponential()
        left = y0 - width * rng.random()
        right = left + width
        jl = int(max_steps * rng.random())
        kr = max_steps - 1 - jl
        while jl > 0 and _log_weight_target(left, base, n, ni, h_kind, h_par, l_kind, sigma, a, b) > level:
            left -= width
            jl -= 1
        while kr > 0 and _log_weight_target(right, base, n, ni, h_kind, h_par, l_kind, sigma, a, b) > level:
            right += width
            kr -= 1
        tol = 1e-14 * max(1.0, abs(y0))
        while True:
            y1 = left + (right - left) * rng.random()
            if _log_weight_target(y1, base, n, ni, h_kind, h_par, l_kind, sigma, a, b) > level:
                break
            if y1 < y0:
                left = y1
            else:
                right = y1
            if right - left < tol:
                return ERR_COLLAPSE
        weights[i] = math.exp(y1)
    return OK


@njit(cache=True)
def reassign(rng, data, order, labels, weights, params, sizes, K, v, pool, per_obs, flat, prec,
             mu0, sd0, nw_kind, sigma, b, grid, x0, step, coef, a0, k, slope, edge, xmax, scores):
    """AddTable & ReUse over ``order``; cluster arrays have capacity ``n + 1``."""
    M = pool.shape[0]
    n = data.shape[0]
    log_m = math.log(M)
    for oi in range(order.shape[0]):
        i = order[oi]
        x = data[i]
        c = labels[i]
        sizes[c] -= 1
        if sizes[c] == 0:
            pool[rng.integers(0, M)] = params[c]
            v += weights[c]
            for j in range(c, K - 1):
                weights[j] = weights[j + 1]
                params[j] = params[j + 1]
                sizes[j] = sizes[j + 1]
            K -= 1
            for j in range(n):
                if labels[j] > c:
                    labels[j] -= 1
        top = -np.inf
        for j in range(K):
            sc = math.log(weights[j])
            if not flat:
                d = x - params[j]
                sc -= prec * d * d
            scores[j] = sc
            if sc > top:
                top = sc
        lv = math.log(v) - log_m if v > 0.0 else -np.inf
        for j in range(M):
            sc = lv
            if not flat:
                d = x - pool[j]
                sc -= prec * d * d
            scores[K + j] = sc
            if sc > top:
                top = sc
        total = 0.0
        for j in range(K + M):
            scores[j] = math.exp(scores[j] - top)
            total += scores[j]
        target = rng.random() * total
        pick = K + M - 1
        acc = 0.0
        for j in range(K + M):
            acc += scores[j]
            if acc > target:
                pick = j
                break
        if pick >= K:
            slot = pick - K
            s_new = draw_new_weight(rng, v, nw_kind, sigma, b, grid, x0, step, coef, a0, k,
                                    slope, edge, xmax)
            if not (s_new > 0.0 and s_new < v):
                return K, v, ERR_NEW_WEIGHT
            v -= s_new
            weights[K] = s_new
            params[K] = pool[slot]
            sizes[K] = 1
            labels[i] = K
            K += 1
            pool[slot] = 0.0 if flat else rng.normal(mu0, sd0)
        else:
            sizes[pick] += 1
            labels[i] = pick
        if per_obs:
            for j in range(M):
                pool[j] = 0.0 if flat else rng.normal(mu0, sd0)
    if not per_obs:
        for j in range(M):
            pool[j] = 0.0 if flat else rng.normal(mu0, sd0)
    return K, v, OK
