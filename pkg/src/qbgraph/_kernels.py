"""JIT-compiled numeric kernels for the samplers and the lasso solver.

Single source of truth for the hot-loop math: the public operations in
samplers.py and the chain driver both call these. All functions are njit
(nopython, no fastmath) so results are bit-reproducible; RNG draws go through
a numpy Generator, which numba implements with streams identical to numpy's.
"""

import math

import numpy as np
from numba import njit

_SQRT_PI = math.sqrt(math.pi)
_LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _erfcx(x):
    # exp(x^2)*erfc(x) for x >= 0; direct product below the exp overflow knee,
    # asymptotic series beyond it
    if x < 26.0:
        return math.exp(x * x) * math.erfc(x)
    t = 1.0 / (2.0 * x * x)
    s = 1.0 + t * (-1.0 + t * (3.0 + t * (-15.0 + t * (105.0 - 945.0 * t))))
    return s / (x * _SQRT_PI)


@njit(cache=True)
def _log_en_norm(alpha, lam1, lam2):
    # log normalizer of exp(-alpha*lam1*|z| - (1-alpha)*lam2*z^2/2)
    if alpha >= 1.0:
        return math.log(2.0 / lam1)
    b = (1.0 - alpha) * lam2
    arg = alpha * lam1 / math.sqrt(2.0 * b)
    return 0.5 * math.log(2.0 * math.pi / b) + math.log(_erfcx(arg))


@njit(cache=True)
def _soft(t, thr):
    if t > thr:
        return t - thr
    if t < -thr:
        return t + thr
    return 0.0


@njit(cache=True)
def _env_l1(t, lam, gamma):
    # Moreau-Yosida envelope of lam*|.| at t: quadratic inside |t| <= gamma*lam
    at = abs(t)
    if at <= gamma * lam:
        return t * t / (2.0 * gamma)
    return lam * at - 0.5 * gamma * lam * lam


@njit(cache=True)
def _log_en_norm_smoothed(alpha, lam1, lam2, gamma):
    # log normalizer of exp(-env(z; alpha*lam1) - (1-alpha)*lam2*z^2/2);
    # reduces to _log_en_norm as gamma -> 0
    lam = alpha * lam1
    b = (1.0 - alpha) * lam2
    if lam <= 0.0:
        return 0.5 * math.log(2.0 * math.pi / b)
    beta = 1.0 / gamma + b
    c = gamma * lam
    center = math.sqrt(2.0 * math.pi / beta) * math.erf(c * math.sqrt(0.5 * beta))
    if b > 0.0:
        expo = -0.5 * gamma * lam * lam * (1.0 + b * gamma)
        tail = 2.0 * math.exp(expo) * math.sqrt(0.5 * math.pi / b) * _erfcx(
            lam * (1.0 + gamma * b) / math.sqrt(2.0 * b)
        )
    else:
        tail = (2.0 / lam) * math.exp(-0.5 * gamma * lam * lam)
    return math.log(center + tail)


@njit(cache=True)
def _reflect(v, lo, hi):
    # fold v into [lo, hi] by reflection at both ends
    w = hi - lo
    t = (v - lo) % (2.0 * w)
    if t > w:
        t = 2.0 * w - t
    return lo + t


@njit(cache=True)
def _theta_rho_terms(delta, theta, alpha, rho1, rho2, sigma2, gamma, smooth):
    # rho-dependent part of the negative log prior given (delta, theta):
    # nd*logC + sum_active penalty
    nd = 0
    pen = 0.0
    lam1 = rho1 / sigma2
    lam2 = rho2 / sigma2
    g1 = alpha * lam1
    for k in range(delta.size):
        if delta[k]:
            nd += 1
            tk = theta[k]
            if smooth:
                pen += _env_l1(tk, g1, gamma)
            else:
                pen += g1 * abs(tk)
            pen += 0.5 * (1.0 - alpha) * lam2 * tk * tk
    if nd > 0:
        if smooth:
            pen += nd * _log_en_norm_smoothed(alpha, lam1, lam2, gamma)
        else:
            pen += nd * _log_en_norm(alpha, lam1, lam2)
    return pen


@njit(cache=True)
def _rho_step_kernel(delta, theta, rho1, rho2, alpha, a1, a2, sigma2, step, gamma, smooth, rng):
    # joint reflected random-walk MH on (rho1, rho2); uniform hyperprior, so
    # the acceptance ratio is the prior-term difference alone
    p1 = _reflect(rho1 + step * rng.standard_normal(), a1, a2)
    p2 = _reflect(rho2 + step * rng.standard_normal(), a1, a2)
    cur = _theta_rho_terms(delta, theta, alpha, rho1, rho2, sigma2, gamma, smooth)
    new = _theta_rho_terms(delta, theta, alpha, p1, p2, sigma2, gamma, smooth)
    if math.log(rng.random()) < cur - new:
        return p1, p2, 1
    return rho1, rho2, 0


@njit(cache=True)
def _rj_single(k, delta, theta, r, q, rho1, rho2, X, col_norm2, alpha, sigma2, gamma, smooth, logC, rng):
    # birth/death flip of coordinate k with a Gaussian pseudo-proposal centered
    # at the coordinatewise least-squares value; returns (birth_flag, accepted)
    c = col_norm2[k]
    n = r.size
    lam1 = rho1 / sigma2
    lam2 = rho2 / sigma2
    g1 = alpha * lam1
    lqodds = math.log(q) - math.log1p(-q)
    s2p = sigma2 / c
    sp = math.sqrt(s2p)
    if not delta[k]:
        xtr = 0.0
        for i in range(n):
            xtr += X[i, k] * r[i]
        m0 = xtr / c
        t = m0 + sp * rng.standard_normal()
        dll = (2.0 * t * xtr - t * t * c) / (2.0 * sigma2)
        if smooth:
            pen = _env_l1(t, g1, gamma)
        else:
            pen = g1 * abs(t)
        dlp = lqodds - logC - pen - 0.5 * (1.0 - alpha) * lam2 * t * t
        z = (t - m0) / sp
        lq = -0.5 * _LOG_2PI - math.log(sp) - 0.5 * z * z
        if math.log(rng.random()) < dll + dlp - lq:
            delta[k] = True
            theta[k] = t
            for i in range(n):
                r[i] -= t * X[i, k]
            return 1, 1
        return 1, 0
    t = theta[k]
    xtr0 = t * c
    for i in range(n):
        xtr0 += X[i, k] * r[i]
    m0 = xtr0 / c
    dll = -(2.0 * t * xtr0 - t * t * c) / (2.0 * sigma2)
    if smooth:
        pen = _env_l1(t, g1, gamma)
    else:
        pen = g1 * abs(t)
    dlp = -(lqodds - logC - pen - 0.5 * (1.0 - alpha) * lam2 * t * t)
    z = (t - m0) / sp
    lq = -0.5 * _LOG_2PI - math.log(sp) - 0.5 * z * z
    if math.log(rng.random()) < dll + dlp + lq:
        delta[k] = False
        theta[k] = 0.0
        for i in range(n):
            r[i] += t * X[i, k]
        return 0, 1
    return 0, 0


@njit(cache=True)
def _theta_rw_pass(delta, theta, r, rho1, rho2, X, col_norm2, alpha, sigma2, scale_mult, rng):
    # componentwise random-walk MH over active coordinates, ascending order
    n = r.size
    lam1 = rho1 / sigma2
    lam2 = rho2 / sigma2
    g1 = alpha * lam1
    acc = 0
    prop = 0
    for k in range(delta.size):
        if not delta[k]:
            continue
        prop += 1
        c = col_norm2[k]
        s = scale_mult * math.sqrt(sigma2 / c)
        told = theta[k]
        tnew = told + s * rng.standard_normal()
        dt = tnew - told
        xtr = 0.0
        for i in range(n):
            xtr += X[i, k] * r[i]
        dll = (2.0 * dt * xtr - dt * dt * c) / (2.0 * sigma2)
        dpen = g1 * (abs(tnew) - abs(told)) + 0.5 * (1.0 - alpha) * lam2 * (tnew * tnew - told * told)
        if math.log(rng.random()) < dll - dpen:
            theta[k] = tnew
            for i in range(n):
                r[i] -= dt * X[i, k]
            acc += 1
    return acc, prop


@njit(cache=True)
def _mala_step(delta, theta, r, rho1, rho2, X, col_norm2, alpha, sigma2, gamma, rng):
    # one MALA step on the smoothed negative log density of the active block;
    # MH-corrected, so the smoothed target is exactly invariant
    m = delta.size
    n = r.size
    d = 0
    for k in range(m):
        if delta[k]:
            d += 1
    if d == 0:
        return 0, 0
    idx = np.empty(d, dtype=np.int64)
    a = 0
    for k in range(m):
        if delta[k]:
            idx[a] = k
            a += 1
    lam1 = rho1 / sigma2
    lam2 = rho2 / sigma2
    g1 = alpha * lam1
    l2e = (1.0 - alpha) * lam2
    lip = l2e + 1.0 / gamma
    for a in range(d):
        lip += col_norm2[idx[a]] / sigma2
    h = 1.0 / lip
    t = np.empty(d)
    grad = np.empty(d)
    u_cur = 0.0
    for i in range(n):
        u_cur += r[i] * r[i]
    u_cur *= 0.5 / sigma2
    for a in range(d):
        k = idx[a]
        tk = theta[k]
        xtr = 0.0
        for i in range(n):
            xtr += X[i, k] * r[i]
        grad[a] = -xtr / sigma2 + l2e * tk + (tk - _soft(tk, gamma * g1)) / gamma
        t[a] = tk
        u_cur += _env_l1(tk, g1, gamma) + 0.5 * l2e * tk * tk
    tp = np.empty(d)
    sq2h = math.sqrt(2.0 * h)
    for a in range(d):
        tp[a] = t[a] - h * grad[a] + sq2h * rng.standard_normal()
    rp = r.copy()
    for a in range(d):
        dt = tp[a] - t[a]
        k = idx[a]
        for i in range(n):
            rp[i] -= dt * X[i, k]
    u_new = 0.0
    for i in range(n):
        u_new += rp[i] * rp[i]
    u_new *= 0.5 / sigma2
    gradp = np.empty(d)
    for a in range(d):
        k = idx[a]
        tk = tp[a]
        xtr = 0.0
        for i in range(n):
            xtr += X[i, k] * rp[i]
        gradp[a] = -xtr / sigma2 + l2e * tk + (tk - _soft(tk, gamma * g1)) / gamma
        u_new += _env_l1(tk, g1, gamma) + 0.5 * l2e * tk * tk
    fwd = 0.0
    rev = 0.0
    for a in range(d):
        df = tp[a] - (t[a] - h * grad[a])
        dr = t[a] - (tp[a] - h * gradp[a])
        fwd += df * df
        rev += dr * dr
    if math.log(rng.random()) < u_cur - u_new + (fwd - rev) / (4.0 * h):
        for a in range(d):
            theta[idx[a]] = tp[a]
        r[:] = rp
        return 1, 1
    return 0, 1


@njit(cache=True)
def _chain_driver(y, X, col_norm2, sigma2, alpha, u, a1, a2, gamma, n_iter, burn_in,
                  thin, smooth, rw_scale, rho_step, adapt, rng):
    # full sweep loop for one column; returns retained samples and counters
    m = col_norm2.size
    p = m + 1
    n_ret = (n_iter - burn_in + thin - 1) // thin
    delta = np.zeros(m, dtype=np.bool_)
    theta = np.zeros(m)
    r = y.copy()
    q = 1.0 / (1.0 + p ** u)
    rho1 = 0.5 * (a1 + a2)
    rho2 = 0.5 * (a1 + a2)
    beta_b_base = p ** u + (m - 0.0)
    theta_samples = np.empty((n_ret, m))
    incl = np.zeros(m)
    trace = np.empty(n_ret)
    counters = np.zeros(8, dtype=np.int64)  # rho a/p, birth a/p, death a/p, move a/p
    scale_mult = rw_scale
    adapt_acc = 0
    adapt_prop = 0
    batch = 0
    row = 0
    nd = 0
    for it in range(n_iter):
        q = rng.beta(1.0 + nd, beta_b_base - nd)
        rho1, rho2, acc = _rho_step_kernel(delta, theta, rho1, rho2, alpha, a1, a2,
                                           sigma2, rho_step, gamma, smooth, rng)
        counters[0] += acc
        counters[1] += 1
        lam1 = rho1 / sigma2
        lam2 = rho2 / sigma2
        if smooth:
            logC = _log_en_norm_smoothed(alpha, lam1, lam2, gamma)
        else:
            logC = _log_en_norm(alpha, lam1, lam2)
        order = rng.permutation(m)
        for oi in range(m):
            birth, acc = _rj_single(order[oi], delta, theta, r, q, rho1, rho2, X,
                                    col_norm2, alpha, sigma2, gamma, smooth, logC, rng)
            if birth == 1:
                counters[2] += acc
                counters[3] += 1
                nd += acc
            else:
                counters[4] += acc
                counters[5] += 1
                nd -= acc
        if smooth:
            acc, prop = _mala_step(delta, theta, r, rho1, rho2, X, col_norm2,
                                   alpha, sigma2, gamma, rng)
        else:
            acc, prop = _theta_rw_pass(delta, theta, r, rho1, rho2, X, col_norm2,
                                       alpha, sigma2, scale_mult, rng)
        counters[6] += acc
        counters[7] += prop
        if adapt and not smooth and it < burn_in:
            adapt_acc += acc
            adapt_prop += prop
            if adapt_prop >= 50:
                batch += 1
                rate = adapt_acc / adapt_prop
                scale_mult *= math.exp((rate - 0.44) / math.sqrt(batch))
                adapt_acc = 0
                adapt_prop = 0
        if it >= burn_in and (it - burn_in) % thin == 0:
            for k in range(m):
                theta_samples[row, k] = theta[k]
                if delta[k]:
                    incl[k] += 1.0
            rr = 0.0
            for i in range(y.size):
                rr += r[i] * r[i]
            trace[row] = 0.5 * rr / sigma2
            row += 1
    return theta_samples, incl, trace, counters


@njit(cache=True)
def _lasso_cd(G, Xty, yty, n, lam, beta, max_sweeps, gap_tol):
    # cyclic coordinate descent for (1/(2n))||y - X b||^2 + lam*||b||_1 on Gram
    # sufficient statistics; stops on duality gap plus a stationary sweep
    m = Xty.size
    Gb = G @ beta
    for _ in range(max_sweeps):
        maxdelta = 0.0
        for k in range(m):
            gkk = G[k, k]
            if gkk <= 0.0:
                continue
            old = beta[k]
            rho = Xty[k] - Gb[k] + gkk * old
            if lam > 0.0:
                bk = _soft(rho / n, lam) * n / gkk
            else:
                bk = rho / gkk
            if bk != old:
                d = bk - old
                for i in range(m):
                    Gb[i] += G[i, k] * d
                beta[k] = bk
                if abs(d) > maxdelta:
                    maxdelta = abs(d)
        btxty = 0.0
        btgb = 0.0
        l1 = 0.0
        for k in range(m):
            btxty += beta[k] * Xty[k]
            btgb += beta[k] * Gb[k]
            l1 += abs(beta[k])
        rr = yty - 2.0 * btxty + btgb
        if rr < 0.0:
            rr = 0.0
        if lam > 0.0:
            xr_inf = 0.0
            for k in range(m):
                v = abs(Xty[k] - Gb[k])
                if v > xr_inf:
                    xr_inf = v
            s = 1.0
            if xr_inf > lam * n:
                s = lam * n / xr_inf
            ry = yty - btxty
            gap = 0.5 * rr / n + lam * l1 - (s * ry / n - 0.5 * s * s * rr / n)
            if gap < gap_tol and maxdelta < 1e-10:
                break
        elif maxdelta < 1e-12:
            break
    return beta
