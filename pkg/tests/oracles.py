"""Independent reference implementations used by the tests."""

import itertools

import numpy as np


def cd_lasso(X, y, lam, n_iter=20000, tol=1e-14):
    """Cyclic coordinate descent for 1/(2n)||yc - Xc b||^2 + lam ||b||_1."""
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    n, p = Xc.shape
    b = np.zeros(p)
    r = yc.copy()
    col_sq = (Xc**2).sum(axis=0) / n
    for _ in range(n_iter):
        delta = 0.0
        for j in range(p):
            if col_sq[j] == 0:
                continue
            rho = Xc[:, j] @ r / n + col_sq[j] * b[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != b[j]:
                r -= Xc[:, j] * (new - b[j])
                delta = max(delta, abs(new - b[j]))
                b[j] = new
        if delta < tol:
            break
    return b


def sgl_prox_objective(x, v, step, lam, alpha, groups):
    groups = np.asarray(groups)
    pen = lam * alpha * np.abs(x).sum(axis=-1)
    for g in np.unique(groups):
        xg = x[..., groups == g]
        pen = pen + lam * (1 - alpha) * np.sqrt(xg.shape[-1]) * np.linalg.norm(xg, axis=-1)
    return 0.5 * np.sum((x - v) ** 2, axis=-1) + step * pen


def grid_prox(v, step, lam, alpha, groups, h=1e-3):
    """Grid minimizer of the prox objective, refined down to spacing ``h``.

    Each coordinate of the minimizer lies between 0 and v_i, so the search
    box is [min(0, v_i), max(0, v_i)] padded by a few cells. The objective is
    strongly convex, so a coarse grid followed by finer grids centred on the
    incumbent reaches the best point of the final ``h`` grid.
    """
    v = np.asarray(v, float)
    d = len(v)
    lo = np.minimum(0.0, v) - 2 * h
    hi = np.maximum(0.0, v) + 2 * h
    span = float(np.max(hi - lo))
    spacing = max(h, span / (60 if d <= 2 else 24))
    center, best = None, None
    while True:
        axes = []
        for i in range(d):
            if center is None:
                a, b = lo[i], hi[i]
            else:
                a, b = center[i] - 12 * spacing, center[i] + 12 * spacing
            axes.append(np.arange(a, b + spacing / 2, spacing))
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = sgl_prox_objective(pts, v, step, lam, alpha, groups)
        k = int(np.argmin(vals))
        center, best = pts[k], float(vals[k])
        if spacing <= h:
            return center, best
        spacing = max(h, spacing / 8)


def sgl_subgradient_residual(x, v, step, lam, alpha, groups):
    """Distance of 0 from x - v + step * subdifferential(penalty)(x)."""
    groups = np.asarray(groups)
    a, b = step * lam * alpha, step * lam * (1 - alpha)
    worst = 0.0
    for g in np.unique(groups):
        m = groups == g
        xg, vg = x[m], v[m]
        w = b * np.sqrt(m.sum())
        ng = np.linalg.norm(xg)
        if ng > 0:
            for xi, vi in zip(xg, vg):
                if xi != 0:
                    worst = max(worst, abs(xi - vi + a * np.sign(xi) + w * xi / ng))
                else:
                    worst = max(worst, max(abs(vi) - a, 0.0))
        else:
            # need ||S(v_g, a)|| <= w
            s = np.sign(vg) * np.maximum(np.abs(vg) - a, 0)
            worst = max(worst, max(np.linalg.norm(s) - w, 0.0))
    return worst


def wilcoxon_enumeration(d):
    """Two-sided exact p by enumerating all 2^n sign patterns (midranks for ties)."""
    from scipy.stats import rankdata

    d = np.asarray(d, float)
    d = d[d != 0]
    n = len(d)
    ranks = rankdata(np.abs(d))
    w_obs = ranks[d > 0].sum()
    signs = np.array(list(itertools.product([0, 1], repeat=n)))
    w_all = signs @ ranks
    mean = ranks.sum() / 2
    lo = np.mean(w_all <= w_obs + 1e-9)
    hi = np.mean(w_all >= w_obs - 1e-9)
    del mean
    return min(1.0, 2 * min(lo, hi))


def bh_step_up(p, q):
    """Hand-applied BH: reject the k smallest where k = max{i: p_(i) <= i q / m}."""
    p = np.asarray(p, float)
    m = len(p)
    order = np.argsort(p)
    k = 0
    for i in range(1, m + 1):
        if p[order[i - 1]] <= i * q / m:
            k = i
    reject = np.zeros(m, bool)
    reject[order[:k]] = True
    return reject
