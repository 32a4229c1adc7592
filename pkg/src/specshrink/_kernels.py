"""Compiled inner loops."""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def mixture_psd(re, im, cosw, sinw):
    """Average of AR root-form PSDs over draws, on a fixed grid.

    ``re``/``im`` are ``(K, p)`` root coordinates. Runs of identical
    consecutive draws (rejected Metropolis moves) are evaluated once.
    """
    K, p = re.shape
    m = cosw.size
    out = np.zeros(m)
    a = np.empty(p)
    b = np.empty(p)
    c = np.empty(p)
    k = 0
    while k < K:
        w = 1
        while k + w < K:
            same = True
            for j in range(p):
                if re[k + w, j] != re[k, j] or im[k + w, j] != im[k, j]:
                    same = False
                    break
            if not same:
                break
            w += 1
        for j in range(p):
            a[j] = 1.0 + re[k, j] * re[k, j] + im[k, j] * im[k, j]
            b[j] = 2.0 * re[k, j]
            c[j] = 2.0 * im[k, j]
        for t in range(m):
            d = 1.0
            for j in range(p):
                d *= a[j] - b[j] * cosw[t] - c[j] * sinw[t]
            out[t] += w / d
        k += w
    return out / (2.0 * np.pi * K)


@njit(cache=True)
def ar_loglik_coeffs(cr, ci, head, gram, n):
    """Exact AR(p) log-likelihood from coefficients and sufficient statistics.

    Returns ``-inf`` when the stationary covariance is not positive definite.
    """
    p = cr.size
    c = np.empty(p + 1, dtype=np.complex128)
    c[0] = 1.0
    for i in range(p):
        c[i + 1] = cr[i] + 1j * ci[i]
    # gamma_h + sum_i c_i gamma_{h-i} = delta_h0 with gamma_{-k} = conj(gamma_k)
    q = p + 1
    M = np.zeros((2 * q, 2 * q))
    rhs = np.zeros(2 * q)
    rhs[0] = 1.0
    for h in range(q):
        for i in range(q):
            j = h - i
            cr_, ci_ = c[i].real, c[i].imag
            if j >= 0:
                # c * gamma_j
                M[h, j] += cr_
                M[h, q + j] -= ci_
                M[q + h, j] += ci_
                M[q + h, q + j] += cr_
            else:
                # c * conj(gamma_{-j})
                k = -j
                M[h, k] += cr_
                M[h, q + k] += ci_
                M[q + h, k] += ci_
                M[q + h, q + k] -= cr_
    sol = np.linalg.solve(M, rhs)
    gam = np.empty(q, dtype=np.complex128)
    for h in range(q):
        gam[h] = sol[h] + 1j * sol[q + h]
    # Cholesky of the p x p Toeplitz covariance
    L = np.zeros((p, p), dtype=np.complex128)
    logdet = 0.0
    for s in range(p):
        for t in range(s + 1):
            v = gam[s - t]
            for k in range(t):
                v -= L[s, k] * np.conj(L[t, k])
            if s == t:
                if not (v.real > 0.0):
                    return -np.inf
                L[s, s] = np.sqrt(v.real)
                logdet += np.log(v.real)
            else:
                L[s, t] = v / L[t, t].real
    quad = 0.0
    y = np.empty(p, dtype=np.complex128)
    for s in range(p):
        v = head[s]
        for k in range(s):
            v -= L[s, k] * y[k]
        y[s] = v / L[s, s].real
        quad += y[s].real ** 2 + y[s].imag ** 2
    resid = 0.0
    for i in range(q):
        for j in range(q):
            resid += (c[i] * gram[i, j] * np.conj(c[j])).real
    return -n * np.log(np.pi) - logdet - quad - resid


@njit(cache=True)
def max_root_modulus(cr, ci):
    """Largest root modulus of ``z^p + c_1 z^(p-1) + ...`` for ``p <= 2``."""
    p = cr.size
    if p == 1:
        return np.sqrt(cr[0] ** 2 + ci[0] ** 2)
    a1 = cr[0] + 1j * ci[0]
    a2 = cr[1] + 1j * ci[1]
    disc = np.sqrt(a1 * a1 - 4.0 * a2)
    return max(abs(-a1 + disc), abs(-a1 - disc)) / 2.0


@njit(cache=True)
def ar1_mixture_coefficients(re, im, m):
    """Aliased autocovariance coefficients of an equal-weight AR(1) mixture.

    On the grid ``w_j = -pi + 2 pi j / m`` the mixture PSD equals
    ``(2 pi)^-1 sum_r c_r e^{-i r w_j}`` exactly, where ``c_r`` folds every lag
    ``h = r (mod m)`` of ``gamma_h = xi^h / (1 - |xi|^2)`` (conjugated for
    negative ``h``). Geometric tails are cut once below 1e-18 relative.
    """
    K = re.size
    c = np.zeros(m, dtype=np.complex128)
    k = 0
    while k < K:
        w = 1
        while k + w < K and re[k + w] == re[k] and im[k + w] == im[k]:
            w += 1
        xi = re[k] + 1j * im[k]
        amp = w / (1.0 - (re[k] * re[k] + im[k] * im[k]))
        xm = xi**m
        tol = 1e-36 * amp * amp
        x = amp / (1.0 - xm)
        for r in range(m):
            c[r] += x
            x *= xi
            if x.real * x.real + x.imag * x.imag < tol:
                break
        xc = np.conj(xi)
        y = amp * xc / (1.0 - np.conj(xm))
        for s in range(1, m + 1):
            c[(m - s) % m] += y
            y *= xc
            if y.real * y.real + y.imag * y.imag < tol:
                break
        k += w
    return c / K


@njit(cache=True)
def rwm_ar1(x0, y0, kappa, head_abs2, g00, g10, g11, n, scale0, noise, logu, burn_in, kept, thin, adapt_every):
    """Random-walk Metropolis for one AR(1) root under a kappa-prior.

    ``g10 = sum z_{t-1} conj(z_t)``. Returns kept draws and the acceptance
    rate after burn-in.
    """
    log_pi = np.log(np.pi)

    def logpost(x, y):
        a2 = x * x + y * y
        if a2 >= 1.0:
            return -np.inf
        u = 1.0 - a2
        resid = g00 - 2.0 * (x * g10.real - y * g10.imag) + a2 * g11
        return -n * log_pi + np.log(u) - u * head_abs2 - resid - kappa * np.log(u)

    out_re = np.empty(kept)
    out_im = np.empty(kept)
    x, y = x0, y0
    lp = logpost(x, y)
    scale = scale0
    win = 0
    acc_after = 0
    total = burn_in + kept * thin
    for step in range(total):
        px = x + scale * noise[step, 0]
        py = y + scale * noise[step, 1]
        lq = logpost(px, py)
        accept = logu[step] < lq - lp
        if accept:
            x, y, lp = px, py, lq
        if step < burn_in:
            if accept:
                win += 1
            if (step + 1) % adapt_every == 0:
                rate = win / adapt_every
                if rate < 0.2:
                    scale *= 0.7
                elif rate > 0.5:
                    scale *= 1.4
                win = 0
        else:
            if accept:
                acc_after += 1
            k = step - burn_in
            if (k + 1) % thin == 0:
                out_re[k // thin] = x
                out_im[k // thin] = y
    return out_re, out_im, acc_after / max(kept * thin, 1)
