"""Complex circular-symmetric Gaussian samples, covariances and likelihoods."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal

from .errors import NonpositiveSpectrum, NotPositiveDefinite, SampleTooShort
from .spectral_model import SpectralGrid, batch_roots_to_coeffs, root_array, roots_to_coeffs

LOG_PI = np.log(np.pi)
WHITTLE_CONST = -np.log(np.pi) - np.log(2.0 * np.pi)

# sub-stream tags used under a per-trial RngSeed
DATA_STREAM = 0
MCMC_STREAM = 1
MLE_STREAM = 2


@dataclass(frozen=True)
class RngSeed:
    """Counter-based seed: ``(master_seed, stream_id)`` names an independent stream."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")
            object.__setattr__(self, name, int(v))

    def generator(self, *sub: int) -> np.random.Generator:
        """Philox generator for this stream, optionally split by ``sub`` tags."""
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id, *sub))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngSeed":
        """Seed of the ``index``-th work unit (trial) below this stream."""
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id, 2**32 + int(index)))
        return RngSeed(int(ss.generate_state(1, np.uint64)[0]), 0)


def as_seed(seed) -> RngSeed:
    if isinstance(seed, RngSeed):
        return seed
    return RngSeed(int(seed), 0)


@dataclass(frozen=True)
class ComplexSample:
    values: np.ndarray
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=complex)).ravel().copy()
        if v.size < 1:
            raise ValueError("a sample needs at least one value")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size


def _values(sample) -> np.ndarray:
    if isinstance(sample, ComplexSample):
        return sample.values
    return np.atleast_1d(np.asarray(sample, dtype=complex))


@dataclass(frozen=True)
class ToeplitzCovariance:
    """Hermitian Toeplitz covariance with entry ``(s, t) = gamma_{s-t}``."""

    autocovs: np.ndarray
    order: int
    cholesky: np.ndarray = field(repr=False, compare=False)

    def matrix(self) -> np.ndarray:
        return toeplitz_matrix(self.autocovs, self.order)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.cholesky).real)))

    def quad_form(self, z) -> float:
        """``z^H Sigma^{-1} z``."""
        w = linalg.solve_triangular(self.cholesky, np.asarray(z, dtype=complex), lower=True)
        return float(np.sum(np.abs(w) ** 2))


def toeplitz_matrix(autocovs, n: int) -> np.ndarray:
    g = np.asarray(autocovs, dtype=complex)[:n]
    # first column gamma_0..gamma_{n-1}, first row conj of the same
    return linalg.toeplitz(g, g.conj())


def build_toeplitz(autocovs, n: int) -> ToeplitzCovariance:
    g = np.asarray(autocovs, dtype=complex)
    if n < 1 or g.size < n:
        raise ValueError(f"need at least {n} autocovariances, got {g.size}")
    if not (abs(g[0].imag) < 1e-12 and g[0].real > 0):
        raise NotPositiveDefinite("gamma_0 must be real and positive")
    mat = toeplitz_matrix(g, n)
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Toeplitz covariance of order {n} is not positive definite") from exc
    return ToeplitzCovariance(g[:n].copy(), n, chol)


def sample_standard_complex_normal(n: int, seed) -> ComplexSample:
    """``n`` iid draws with independent N(0, 1/2) real and imaginary parts."""
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    s = as_seed(seed)
    rng = s.generator()
    return ComplexSample(_std_cn(rng, int(n)), seed=s.master_seed)


def _std_cn(rng: np.random.Generator, size) -> np.ndarray:
    x = rng.standard_normal(size=(2,) + tuple(np.atleast_1d(size)))
    return (x[0] + 1j * x[1]) * np.sqrt(0.5)


# ---------------------------------------------------------------------------
# AR(p) second-order structure


def _autocov_system(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real linear system for ``gamma_0..gamma_p`` of a batch of AR models.

    Uses ``gamma_h + sum_i a_i gamma_{h-i} = delta_{h0}`` with
    ``gamma_{-k} = conj(gamma_k)``, split into real and imaginary parts.
    """
    B, p = coeffs.shape
    c = np.concatenate([np.ones((B, 1), dtype=complex), coeffs], axis=1)
    A = np.zeros((B, p + 1, p + 1), dtype=complex)  # multiplies gamma_k
    Bc = np.zeros((B, p + 1, p + 1), dtype=complex)  # multiplies conj(gamma_k)
    for h in range(p + 1):
        for i in range(p + 1):
            j = h - i
            if j >= 0:
                A[:, h, j] += c[:, i]
            else:
                Bc[:, h, -j] += c[:, i]
    M = np.empty((B, 2 * (p + 1), 2 * (p + 1)))
    M[:, : p + 1, : p + 1] = (A + Bc).real
    M[:, : p + 1, p + 1 :] = (Bc - A).imag
    M[:, p + 1 :, : p + 1] = (A + Bc).imag
    M[:, p + 1 :, p + 1 :] = (A - Bc).real
    rhs = np.zeros((B, 2 * (p + 1)))
    rhs[:, 0] = 1.0
    return M, rhs


def batch_ar_autocovariances(coeffs) -> np.ndarray:
    """Exact ``gamma_0..gamma_p`` for each row of ``coeffs`` (shape ``(B, p)``)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    p = coeffs.shape[1]
    M, rhs = _autocov_system(coeffs)
    sol = np.linalg.solve(M, rhs[..., None])[..., 0]
    gam = sol[:, : p + 1] + 1j * sol[:, p + 1 :]
    gam[:, 0] = gam[:, 0].real
    return gam


def ar_autocovariances(roots, max_lag: int) -> np.ndarray:
    """Exact autocovariances ``gamma_0..gamma_max_lag`` of AR(p) with unit noise."""
    a = roots_to_coeffs(roots)
    p = a.size
    gam = np.zeros(max(max_lag, p) + 1, dtype=complex)
    gam[: p + 1] = batch_ar_autocovariances(a[None, :])[0]
    for h in range(p + 1, max_lag + 1):
        gam[h] = -np.dot(a, gam[h - 1 :: -1][:p])
    return gam[: max_lag + 1]


def stationary_covariance(roots) -> ToeplitzCovariance:
    """Covariance of ``p`` consecutive values of the stationary AR(p) process."""
    r = root_array(roots)
    return build_toeplitz(ar_autocovariances(r, r.size - 1), r.size)


def sample_ar_path(roots, n: int, seed) -> ComplexSample:
    """Stationary AR(p) path with unit innovation variance."""
    r = root_array(roots)
    p = r.size
    if n < p:
        raise SampleTooShort(f"path length {n} is shorter than the model order {p}")
    s = as_seed(seed)
    rng = s.generator()
    return ComplexSample(_ar_path(r, n, rng), seed=s.master_seed)


def _ar_path(roots: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    p = roots.size
    cov = stationary_covariance(roots)
    eps = _std_cn(rng, n)
    head = cov.cholesky @ eps[:p]
    if n == p:
        return head
    a = roots_to_coeffs(roots)
    den = np.concatenate([[1.0], a])
    zi = signal.lfiltic([1.0], den, head[::-1])
    tail, _ = signal.lfilter([1.0], den, eps[p:], zi=zi)
    return np.concatenate([head, tail])


# ---------------------------------------------------------------------------
# likelihoods


def ar_sufficient_stats(z, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Head ``z[:p]`` and lagged Gram matrix ``sum_t w_t w_t^H``.

    ``w_t = (z_t, z_{t-1}, ..., z_{t-p})`` for ``t = p..N-1``.
    """
    z = _values(z)
    n = z.size
    lagged = np.stack([z[p - k : n - k] for k in range(p + 1)])
    return z[:p].copy(), lagged @ lagged.conj().T


def batch_loglik_from_stats(coeffs, head, gram, n: int) -> np.ndarray:
    """Exact log-likelihood for a batch of AR models and data summaries.

    ``coeffs``: ``(B, p)``; ``head``: ``(B, p)``; ``gram``: ``(B, p+1, p+1)``.
    Non-stationary rows get ``-inf``.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    B, p = coeffs.shape
    c = np.concatenate([np.ones((B, 1), dtype=complex), coeffs], axis=1)
    resid = np.einsum("bi,bij,bj->b", c, gram, c.conj()).real
    if p == 1:
        g0inv = 1.0 - np.abs(coeffs[:, 0]) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -n * LOG_PI + np.log(g0inv) - g0inv * np.abs(head[:, 0]) ** 2 - resid
        return np.where(g0inv > 0, out, -np.inf)
    gam = batch_ar_autocovariances(coeffs)
    cov = np.empty((B, p, p), dtype=complex)
    for s in range(p):
        for t in range(p):
            cov[:, s, t] = gam[:, s - t] if s >= t else gam[:, t - s].conj()
    out = np.full(B, -np.inf)
    sign, logdet = np.linalg.slogdet(cov)
    ok = (np.abs(sign - 1) < 1e-8) & np.isfinite(logdet)
    if np.any(ok):
        x = np.linalg.solve(cov[ok], head[ok][..., None])[..., 0]
        quad = np.einsum("bi,bi->b", head[ok].conj(), x).real
        out[ok] = -n * LOG_PI - logdet[ok] - quad - resid[ok]
    return out


def loglik_from_coeffs(coeffs, sample) -> float:
    """Exact log-likelihood at AR coefficients (``-inf`` if non-stationary)."""
    z = _values(sample)
    a = np.atleast_1d(np.asarray(coeffs, dtype=complex))
    head, gram = ar_sufficient_stats(z, a.size)
    return float(batch_loglik_from_stats(a[None, :], head[None, :], gram[None], z.size)[0])


def exact_log_likelihood(roots, sample) -> float:
    """Exact Gaussian log-likelihood by prediction-error decomposition.

    The first ``p`` values use the stationary density, the rest the one-step
    conditionals ``z_t | past ~ CN(-sum a_i z_{t-i}, 1)``; ``O(N p)`` work.
    """
    r = root_array(roots)
    z = _values(sample)
    p = r.size
    if z.size < p:
        raise SampleTooShort(f"sample of length {z.size} is shorter than the model order {p}")
    cov = stationary_covariance(r)
    a = roots_to_coeffs(r)
    c = np.concatenate([[1.0], a])
    resid = np.convolve(z, c, mode="full")[p : z.size]
    return float(-z.size * LOG_PI - cov.logdet() - cov.quad_form(z[:p]) - np.sum(np.abs(resid) ** 2))


def periodogram(sample) -> SpectralGrid:
    """Periodogram ``|DFT_n|^2 / (2 pi N)`` on the Fourier grid mapped into [-pi, pi)."""
    z = _values(sample)
    n = z.size
    vals = np.abs(np.fft.fft(z)) ** 2 / (2.0 * np.pi * n)
    omegas = 2.0 * np.pi * np.fft.fftfreq(n)
    omegas[omegas >= np.pi] -= 2.0 * np.pi
    order = np.argsort(omegas, kind="stable")
    return SpectralGrid(omegas[order], vals[order])


def whittle_log_likelihood(psd, sample) -> float:
    """Whittle approximation ``N C0 - sum log S - sum I/S`` on the Fourier grid.

    ``C0 = -log(pi) - log(2 pi)`` makes the white-noise case exact.
    """
    z = _values(sample)
    grid = periodogram(z)
    s = np.asarray(psd(grid.omegas), dtype=float)
    if np.any(~(s > 0)):
        raise NonpositiveSpectrum("spectral density must be positive at every Fourier frequency")
    return float(z.size * WHITTLE_CONST - np.sum(np.log(s)) - np.sum(grid.values / s))


# ---------------------------------------------------------------------------
# score moments


def _real_coords(roots: np.ndarray) -> np.ndarray:
    return np.concatenate([roots.real, roots.imag])


def _from_real(x: np.ndarray) -> np.ndarray:
    p = x.size // 2
    return x[:p] + 1j * x[p:]


def loglik_wirtinger(roots, sample, h: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Wirtinger gradient ``(2p,)`` and Hessian ``(2p, 2p)`` of the exact log-likelihood.

    Closed form for ``p = 1``; central differences in real coordinates otherwise.
    Index ``a < p`` is holomorphic, ``a >= p`` antiholomorphic.
    """
    r = root_array(roots)
    z = _values(sample)
    if r.size == 1:
        return _ar1_wirtinger(complex(r[0]), z)
    return _fd_wirtinger(lambda x: exact_log_likelihood(_from_real(x), z), _real_coords(r), h)


def _ar1_wirtinger(xi: complex, z: np.ndarray):
    u = 1.0 - abs(xi) ** 2
    prev = z[:-1]
    e = z[1:] - xi * prev
    d = -xi.conjugate() / u + xi.conjugate() * abs(z[0]) ** 2 + np.sum(prev * e.conj())
    dd = -xi.conjugate() ** 2 / u**2
    dbar = -1.0 / u**2 + abs(z[0]) ** 2 - np.sum(np.abs(prev) ** 2)
    grad = np.array([d, np.conj(d)])
    hess = np.array([[dd, dbar], [dbar, np.conj(dd)]])
    return grad, hess


def _fd_wirtinger(f, x0: np.ndarray, h: float):
    """Wirtinger gradient and Hessian of a real function of ``2p`` real coordinates."""
    d = x0.size
    p = d // 2
    eye = np.eye(d)
    grad_r = np.array([(f(x0 + h * eye[k]) - f(x0 - h * eye[k])) / (2 * h) for k in range(d)])
    hr = np.empty((d, d))
    f0 = f(x0)
    H = 10 * h
    for k in range(d):
        hr[k, k] = (f(x0 + H * eye[k]) - 2 * f0 + f(x0 - H * eye[k])) / H**2
        for m in range(k + 1, d):
            ek, em = H * eye[k], H * eye[m]
            v = (f(x0 + ek + em) - f(x0 + ek - em) - f(x0 - ek + em) + f(x0 - ek - em)) / (4 * H**2)
            hr[k, m] = hr[m, k] = v
    # d = (dx - i dy)/2, dbar = (dx + i dy)/2
    J = np.zeros((d, d), dtype=complex)
    J[:p, :p] = 0.5 * np.eye(p)
    J[:p, p:] = -0.5j * np.eye(p)
    J[p:, :p] = 0.5 * np.eye(p)
    J[p:, p:] = 0.5j * np.eye(p)
    return J @ grad_r, J @ hr @ J.T


@dataclass
class MomentReport:
    """Monte Carlo estimates of normalized likelihood-derivative moments."""

    n: int
    trials: int
    score_mean: np.ndarray
    score_stderr: np.ndarray
    hessian_mean: np.ndarray
    hessian_stderr: np.ndarray
    outer_mean: np.ndarray
    outer_stderr: np.ndarray
    fisher: np.ndarray  # quadrature targets: 0, -g, +g

    def z_scores(self) -> dict:
        """Deviation from target in standard errors (``nan`` where stderr is 0)."""
        def zs(mean, se, target):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.abs(mean - target) / se

        return {
            "score": zs(self.score_mean, self.score_stderr, 0.0),
            "hessian": zs(self.hessian_mean, self.hessian_stderr, -self.fisher),
            "outer": zs(self.outer_mean, self.outer_stderr, self.fisher),
        }


def _complex_stderr(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    return np.sqrt(np.var(x.real, axis=0, ddof=1) + np.var(x.imag, axis=0, ddof=1)) / np.sqrt(n)


def score_moment_estimates(roots, n: int, trials: int, seed, m: int = 4096) -> MomentReport:
    """Monte Carlo check of the first three likelihood-moment identities."""
    from .spectral_model import fisher_tensor, psd_from_roots

    r = root_array(roots)
    p = r.size
    if n < p:
        raise SampleTooShort("n must be >= p")
    if trials < 100:
        raise ValueError("trials must be >= 100")
    s = as_seed(seed)
    grads = np.empty((trials, 2 * p), dtype=complex)
    hess = np.empty((trials, 2 * p, 2 * p), dtype=complex)
    for t in range(trials):
        z = _ar_path(r, n, s.child(t).generator(DATA_STREAM))
        grads[t], hess[t] = loglik_wirtinger(r, z)
    grads /= n
    hess /= n
    outer = grads[:, :, None] * grads[:, None, :] * n
    return MomentReport(
        n=n,
        trials=trials,
        score_mean=grads.mean(axis=0),
        score_stderr=_complex_stderr(grads),
        hessian_mean=hess.mean(axis=0),
        hessian_stderr=_complex_stderr(hess),
        outer_mean=outer.mean(axis=0),
        outer_stderr=_complex_stderr(outer),
        fisher=fisher_tensor(psd_from_roots(r), m),
    )
