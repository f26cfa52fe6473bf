"""Compiled inner loops: multiplier root-finding, cyclic Bregman projection and
Birkhoff decomposition. Everything here works on raw arrays; the public
wrappers live in ``solver`` and ``sampler``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _mult_eval(a, lam):
    # h(lam) = sum 1/(4 (a - lam)^2) - 1 and its derivative
    h = -1.0
    dh = 0.0
    for k in range(a.size):
        d = a[k] - lam
        h += 0.25 / (d * d)
        dh += 0.5 / (d * d * d)
    return h, dh


@njit(cache=True)
def solve_multiplier(a, lam0, tol, max_iter):
    """Root of sum_k 1/(4 (a_k - lam)^2) = 1 with lam > max(a).

    Newton from the left of the root (monotone there since h is convex and
    decreasing), bisection if Newton runs out of iterations or leaves the
    branch. Returns (lam, newton_iters, residual, used_bisection).
    """
    amax = a[0]
    for k in range(1, a.size):
        if a[k] > amax:
            amax = a[k]
    lam = lam0
    ok = lam > amax
    if ok:
        h, _ = _mult_eval(a, lam)
        ok = np.isfinite(h) and h >= 0.0
    if not ok:
        lam = amax + 0.5
    it = 0
    while True:
        h, dh = _mult_eval(a, lam)
        if abs(h) <= tol:
            return lam, it, abs(h), False
        if it >= max_iter:
            break
        new = lam - h / dh
        if not (new > amax) or not np.isfinite(new) or new == lam:
            break
        lam = new
        it += 1
    # bisection on a bracket: h(amax+) = +inf, h(amax + sqrt(n)/2) <= 0
    lo = amax
    hi = amax + 0.5 * np.sqrt(a.size)
    h, _ = _mult_eval(a, lam)
    if lam > amax and np.isfinite(h):
        if h > 0.0:
            lo = lam
        elif lam < hi:
            hi = lam
    best = hi
    best_res = abs(_mult_eval(a, hi)[0])
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        h, _ = _mult_eval(a, mid)
        if abs(h) < best_res:
            best = mid
            best_res = abs(h)
        if abs(h) <= tol:
            break
        if h > 0.0:
            lo = mid
        else:
            hi = mid
    return best, it, best_res, True


@njit(cache=True)
def duals_to_primal(b, nu, mu, x):
    n, m = b.shape
    for i in range(n):
        for j in range(m):
            c = nu[j] + mu[i] - b[i, j]
            x[i, j] = 0.25 / (c * c)


@njit(cache=True)
def _column_step(b, nu, mu, ntol, nmax, buf, stats):
    n, m = b.shape
    for j in range(m):
        for i in range(n):
            buf[i] = b[i, j] - mu[i]
        lam, it, _, fb = solve_multiplier(buf[:n], nu[j], ntol, nmax)
        nu[j] = lam
        if it > stats[0]:
            stats[0] = it
        if fb:
            stats[1] += 1


@njit(cache=True)
def _row_step(b, nu, mu, ntol, nmax, corrected, buf, stats):
    n, m = b.shape
    for i in range(n):
        amax = -np.inf
        for j in range(m):
            buf[j] = b[i, j] - nu[j]
            if buf[j] > amax:
                amax = buf[j]
        # corrected: drop the previous row multiplier before re-projecting
        base = 0.0 if corrected else mu[i]
        if base > amax:
            s = 0.0
            for j in range(m):
                d = buf[j] - base
                s += 0.25 / (d * d)
            if s <= 1.0:
                mu[i] = base
                continue
        lam, it, _, fb = solve_multiplier(buf[:m], max(mu[i], base), ntol, nmax)
        mu[i] = lam
        if it > stats[0]:
            stats[0] = it
        if fb:
            stats[1] += 1


@njit(cache=True)
def kkt_residual(x, mu):
    n, m = x.shape
    res = 0.0
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += x[i, j]
        res = max(res, abs(s - 1.0))
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += x[i, j]
        if s > 1.0:
            res = max(res, s - 1.0)
        elif mu[i] > 0.0:
            res = max(res, 1.0 - s)
    return res


@njit(cache=True)
def _reduced_dual(b, nu, mu):
    n, m = b.shape
    g = 0.0
    for i in range(n):
        for j in range(m):
            g -= 0.25 / (nu[j] + mu[i] - b[i, j])
    for j in range(m):
        g -= nu[j]
    for i in range(n):
        g -= mu[i]
    return g


@njit(cache=True)
def dual_newton(b, nu, mu, tol, ntol, nmax, max_iter, buf, stats):
    """Projected Newton ascent on the dual restricted to row multipliers.

    Column multipliers are eliminated by exact column solves, leaving a
    smooth concave function of mu >= 0 with gradient (row sums - 1).
    Returns the number of Newton steps taken.
    """
    n, m = b.shape
    x = np.empty((n, m))
    w = np.empty((n, m))
    g = np.empty(n)
    R = np.empty(n)
    Wc = np.empty(m)
    mu_try = np.empty(n)
    nu_try = np.empty(m)
    _column_step(b, nu, mu, ntol, nmax, buf, stats)
    G = _reduced_dual(b, nu, mu)
    for it in range(max_iter):
        for i in range(n):
            for j in range(m):
                c = nu[j] + mu[i] - b[i, j]
                x[i, j] = 0.25 / (c * c)
                w[i, j] = 0.5 / (c * c * c)
        pg = 0.0
        for i in range(n):
            s = 0.0
            r = 0.0
            for j in range(m):
                s += x[i, j]
                r += w[i, j]
            g[i] = s - 1.0
            R[i] = r
            pg = max(pg, abs(mu[i] - max(0.0, mu[i] + g[i])))
        if pg <= tol:
            return it
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += w[i, j]
            Wc[j] = s
        eps = min(1e-9, pg)
        free = np.empty(n, dtype=np.int64)
        k = 0
        for i in range(n):
            if not (mu[i] <= eps and g[i] < 0.0):
                free[k] = i
                k += 1
        if k == 0:
            return it
        A = np.empty((k, k))
        for p in range(k):
            ip = free[p]
            for q in range(k):
                iq = free[q]
                s = 0.0
                for j in range(m):
                    s += w[ip, j] * w[iq, j] / Wc[j]
                A[p, q] = -s
            A[p, p] += R[ip]
        scale = 0.0
        for p in range(k):
            scale = max(scale, A[p, p])
        for p in range(k):
            A[p, p] += 1e-12 * scale + 1e-300
        rhs = np.empty(k)
        for p in range(k):
            rhs[p] = g[free[p]]
        d = np.linalg.solve(A, rhs)
        step = 1.0
        accepted = False
        for _ in range(40):
            for i in range(n):
                mu_try[i] = mu[i]
            for p in range(k):
                mu_try[free[p]] = max(0.0, mu[free[p]] + step * d[p])
            for j in range(m):
                nu_try[j] = nu[j]
            _column_step(b, nu_try, mu_try, ntol, nmax, buf, stats)
            G_try = _reduced_dual(b, nu_try, mu_try)
            lin = 0.0
            for i in range(n):
                lin += g[i] * (mu_try[i] - mu[i])
            if G_try >= G + 1e-4 * lin - 1e-15 * abs(G):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return it
        for i in range(n):
            mu[i] = mu_try[i]
        for j in range(m):
            nu[j] = nu_try[j]
        G = G_try
    return max_iter


@njit(cache=True)
def cbp_kernel(b, nu, mu, max_cycles, tol, ntol, nmax, corrected, polish):
    """Cyclic Bregman projection in dual coordinates.

    The iterate is x_ij = 1/(4 (nu_j + mu_i - b_ij)^2) with b = -(1 + eta L);
    nu and mu are updated in place. Returns
    (x, cycles, polish_steps, converged, kkt, change, max_newton_iters, n_bisections).
    """
    n, m = b.shape
    buf = np.empty(max(n, m))
    stats = np.zeros(2, dtype=np.int64)
    x = np.empty((n, m))
    x_old = np.empty((n, m))
    duals_to_primal(b, nu, mu, x)
    prev_change = np.inf
    change = np.inf
    kkt = np.inf
    polish_steps = 0
    n_polish = 0
    cycles = 0
    while cycles < max_cycles:
        x_old[:, :] = x
        _column_step(b, nu, mu, ntol, nmax, buf, stats)
        _row_step(b, nu, mu, ntol, nmax, corrected, buf, stats)
        cycles += 1
        duals_to_primal(b, nu, mu, x)
        change = 0.0
        for i in range(n):
            for j in range(m):
                change = max(change, abs(x[i, j] - x_old[i, j]))
        kkt = kkt_residual(x, mu)
        if change < tol and kkt < tol:
            return x, cycles, polish_steps, True, kkt, change, stats[0], stats[1]
        # slow linear rate: finish with Newton on the reduced dual
        if polish and n_polish < 3 and cycles >= 6 and change > 0.3 * prev_change:
            polish_steps += dual_newton(b, nu, mu, 0.1 * tol, ntol, nmax, 50, buf, stats)
            n_polish += 1
            duals_to_primal(b, nu, mu, x)
            prev_change = np.inf
            continue
        prev_change = change
    return x, cycles, polish_steps, False, kkt, change, stats[0], stats[1]


@njit(cache=True)
def _augment(W, supp, root, row_match, col_match, visited, stack, via, ptr):
    # depth-first augmenting path from a free row, columns tried in index order
    n = W.shape[0]
    for c in range(n):
        visited[c] = False
    depth = 0
    stack[0] = root
    ptr[0] = 0
    while depth >= 0:
        u = stack[depth]
        if ptr[depth] == 0:
            # a free supported column ends the path right here
            for c in range(n):
                if not visited[c] and col_match[c] < 0 and W[u, c] > supp:
                    visited[c] = True
                    via[depth] = c
                    for lvl in range(depth + 1):
                        r = stack[lvl]
                        cc = via[lvl]
                        row_match[r] = cc
                        col_match[cc] = r
                    return True
        found = -1
        c = ptr[depth]
        while c < n:
            if not visited[c] and W[u, c] > supp:
                found = c
                break
            c += 1
        if found < 0:
            depth -= 1
            continue
        ptr[depth] = found + 1
        visited[found] = True
        via[depth] = found
        if col_match[found] < 0:
            for lvl in range(depth + 1):
                r = stack[lvl]
                cc = via[lvl]
                row_match[r] = cc
                col_match[cc] = r
            return True
        depth += 1
        stack[depth] = col_match[found]
        ptr[depth] = 0
    return False


@njit(cache=True)
def perfect_matching(W, supp):
    n = W.shape[0]
    row_match = -np.ones(n, dtype=np.int64)
    col_match = -np.ones(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n + 1, dtype=np.int64)
    via = np.empty(n + 1, dtype=np.int64)
    ptr = np.empty(n + 1, dtype=np.int64)
    for r in range(n):
        if not _augment(W, supp, r, row_match, col_match, visited, stack, via, ptr):
            return row_match, False
    return row_match, True


@njit(cache=True)
def birkhoff_kernel(W_in, supp, resid_tol, max_terms):
    """Greedy Birkhoff decomposition of a (scaled) doubly stochastic matrix.

    The matching is repaired incrementally: after subtracting gamma * P only
    rows whose matched edge dropped to zero are re-augmented. Status 0 means
    the residual mass reached ``resid_tol``; 1 means no perfect matching on
    the remaining support; 2 means the term cap was hit.
    """
    n = W_in.shape[0]
    W = W_in.copy()
    for i in range(n):
        for j in range(n):
            if W[i, j] <= supp:
                W[i, j] = 0.0
    gammas = np.empty(max_terms)
    perms = np.empty((max_terms, n), dtype=np.int64)
    row_match = -np.ones(n, dtype=np.int64)
    col_match = -np.ones(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n + 1, dtype=np.int64)
    via = np.empty(n + 1, dtype=np.int64)
    ptr = np.empty(n + 1, dtype=np.int64)
    resid = W.sum()
    k = 0
    status = 0
    while resid > resid_tol:
        if k >= max_terms:
            status = 2
            break
        for r in range(n):
            c = row_match[r]
            if c >= 0 and W[r, c] <= 0.0:
                row_match[r] = -1
                col_match[c] = -1
        ok = True
        for r in range(n):
            if row_match[r] < 0:
                if not _augment(W, supp, r, row_match, col_match, visited, stack, via, ptr):
                    ok = False
                    break
        if not ok:
            status = 1
            break
        gamma = np.inf
        for r in range(n):
            v = W[r, row_match[r]]
            if v < gamma:
                gamma = v
        gammas[k] = gamma
        for r in range(n):
            c = row_match[r]
            perms[k, r] = c
            v = W[r, c] - gamma
            W[r, c] = v if v > supp else 0.0
        k += 1
        resid = W.sum()
    return gammas[:k].copy(), perms[:k].copy(), resid, status
