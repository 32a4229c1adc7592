"""Maximum likelihood and posterior sampling over the AR(p) root space."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from ._kernels import ar1_mixture_coefficients, ar_loglik_coeffs, max_root_modulus, mixture_psd, rwm_ar1
from .errors import InvalidPrior, SampleTooShort, TooFewDraws
from .gaussian_core import (
    MCMC_STREAM,
    MLE_STREAM,
    ComplexSample,
    RngSeed,
    _values,
    ar_sufficient_stats,
    as_seed,
    batch_loglik_from_stats,
    whittle_log_likelihood,
)
from .kahler_geometry import BOUNDARY_GUARD, PriorSpec
from .spectral_model import (
    DEFAULT_GRID,
    ArPsd,
    SpectralGrid,
    batch_roots_to_coeffs,
    frequency_grid,
    polynomial_roots,
    psd_from_roots,
)

log = logging.getLogger(__name__)

ESS_FLOOR = 50.0


# ---------------------------------------------------------------------------
# helpers


def canonical_order(roots: np.ndarray) -> np.ndarray:
    """Sort roots by real part, then imaginary part."""
    r = np.asarray(roots, dtype=complex)
    return r[np.lexsort((r.imag, r.real))]


def cls_roots(z, p: int, r_max: float = 0.95) -> np.ndarray:
    """Conditional least-squares AR fit, returned as roots pulled inside ``r_max``."""
    z = _values(z)
    n = z.size
    if p == 1:
        den = np.sum(np.abs(z[:-1]) ** 2)
        xi = np.sum(z[1:] * z[:-1].conj()) / den if den > 0 else 0.0
        r = np.array([xi], dtype=complex)
    else:
        X = np.stack([z[p - k : n - k] for k in range(1, p + 1)], axis=1)
        coef, *_ = np.linalg.lstsq(X, z[p:], rcond=None)
        r = polynomial_roots(-coef)
    mod = np.abs(r)
    r = np.where(mod > r_max, r / np.maximum(mod, 1e-300) * r_max, r)
    # separate coincident roots so the start is inside the distinct-root space
    for i in range(1, r.size):
        while np.min(np.abs(r[i] - r[:i])) < 1e-6:
            r[i] = r[i] * 0.99 + 1e-3
    return r


# ---------------------------------------------------------------------------
# maximum likelihood


@dataclass
class MleOptions:
    objective: str = "exact"  # or "whittle"
    random_starts: int = 2
    max_iter: int = 4000
    xatol: float = 1e-8
    fatol: float = 1e-10


@dataclass
class MleResult:
    roots: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    restarts_used: int
    start_logliks: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _max_root_modulus(coeffs: np.ndarray) -> float:
    p = coeffs.size
    if p == 1:
        return abs(coeffs[0])
    if p == 2:
        a1, a2 = coeffs
        disc = np.sqrt(a1 * a1 - 4 * a2 + 0j)
        return max(abs(-a1 + disc), abs(-a1 - disc)) / 2
    return float(np.max(np.abs(polynomial_roots(coeffs))))


def mle(sample, p: int, options: Optional[MleOptions] = None, seed=0) -> MleResult:
    """Multistart Nelder-Mead over the ``2p`` real AR coefficient coordinates.

    A barrier returns ``-inf`` when any root leaves the ``0.995`` disk.
    Starts: origin, conditional least squares, and random disk points.
    """
    opts = options or MleOptions()
    z = _values(sample)
    n = z.size
    if n < max(p, 8):
        raise SampleTooShort(f"MLE needs N >= max(p, 8), got N={n}")
    head, gram = ar_sufficient_stats(z, p)

    if opts.objective == "exact":
        def loglik(c):
            return ar_loglik_coeffs(c.real.copy(), c.imag.copy(), head, gram, n)
    elif opts.objective == "whittle":
        def loglik(c):
            return whittle_log_likelihood(psd_from_roots(polynomial_roots(c)), z)
    else:
        raise ValueError(f"unknown objective {opts.objective!r}")

    def negobj(x):
        c = x[:p] + 1j * x[p:]
        rmax = max_root_modulus(x[:p], x[p:]) if p <= 2 else _max_root_modulus(c)
        if rmax > BOUNDARY_GUARD:
            return np.inf
        try:
            v = loglik(c)
        except np.linalg.LinAlgError:
            return np.inf
        return -v if np.isfinite(v) else np.inf

    rng = as_seed(seed).generator(MLE_STREAM)
    starts = [np.zeros(p, dtype=complex), cls_roots(z, p)]
    for _ in range(opts.random_starts):
        starts.append(0.9 * np.sqrt(rng.random(p)) * np.exp(2j * np.pi * rng.random(p)))
    best_x, best_f, iters, conv_best = None, np.inf, 0, False
    start_ll = []
    for r0 in starts:
        c0 = batch_roots_to_coeffs(r0[None, :])[0]
        x0 = np.concatenate([c0.real, c0.imag])
        f0 = negobj(x0)
        start_ll.append(-f0)
        res = optimize.minimize(
            negobj,
            x0,
            method="Nelder-Mead",
            options={"maxiter": opts.max_iter, "xatol": opts.xatol, "fatol": opts.fatol},
        )
        iters += int(res.nit)
        cand = [(res.fun, res.x, bool(res.success)), (f0, x0, False)]
        for f, x, ok in cand:
            if f < best_f:
                best_f, best_x, conv_best = f, x, ok
    c = best_x[:p] + 1j * best_x[p:]
    roots = canonical_order(polynomial_roots(c))
    return MleResult(roots, float(-best_f), conv_best, iters, len(starts), np.array(start_ll))


def estimative_psd(result: MleResult) -> ArPsd:
    """Plug-in spectral density at the MLE."""
    return psd_from_roots(result.roots)


# ---------------------------------------------------------------------------
# posterior sampling


@dataclass
class McmcOptions:
    burn_in: int = 2000
    kept: int = 4000
    thin: int = 2
    adapt_every: int = 50
    block: int = 1000  # steps per pre-drawn random block in the batched sampler


@dataclass
class PosteriorDraws:
    draws: np.ndarray  # (K, p) complex, unlabeled roots
    log_weights: np.ndarray
    acceptance_rate: float
    burn_in: int
    thinning: int
    ess: float
    low_ess_warning: bool

    def __len__(self):
        return self.draws.shape[0]


def _log_prior_batch(roots: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    B, p = roots.shape
    if p == 1:
        return -kappa * np.log1p(-np.abs(roots[:, 0]) ** 2)
    lp = -kappa * np.log(np.prod(1.0 - roots[:, :, None] * roots[:, None, :].conj(), axis=(1, 2)).real)
    iu = np.triu_indices(p, 1)
    diff = np.abs(roots[:, :, None] - roots[:, None, :])[:, iu[0], iu[1]]
    with np.errstate(divide="ignore"):
        return lp + np.sum(np.log(diff**2), axis=1)


def _log_post_batch(x, kappa, head, gram, n):
    p = x.shape[1] // 2
    roots = x[:, :p] + 1j * x[:, p:]
    out = np.full(x.shape[0], -np.inf)
    ok = np.all(np.abs(roots) < 1.0, axis=1)
    if np.any(ok):
        r = roots[ok]
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = batch_loglik_from_stats(batch_roots_to_coeffs(r), head[ok], gram[ok], n)
            val = ll + _log_prior_batch(r, kappa[ok])
        out[ok] = np.where(np.isnan(val), -np.inf, val)
    return out


def effective_sample_size(chains: np.ndarray) -> np.ndarray:
    """Per-chain ESS of a real series ``(B, K)`` with Geyer's initial positive sequence."""
    B, K = chains.shape
    x = chains - chains.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * K - 1).bit_length()
    f = np.fft.rfft(x, nfft, axis=1)
    acov = np.fft.irfft(f * f.conj(), nfft, axis=1)[:, :K] / K
    out = np.empty(B)
    for b in range(B):
        if acov[b, 0] <= 0:
            out[b] = K
            continue
        rho = acov[b] / acov[b, 0]
        npairs = (K - 1) // 2
        pairs = rho[1 : 2 * npairs + 1].reshape(-1, 2).sum(axis=1)
        neg = np.nonzero(pairs <= 0)[0]
        stop = neg[0] if neg.size else pairs.size
        tau = -1.0 + 2.0 * (rho[0] + pairs[:stop].sum()) if stop else 1.0
        out[b] = K / max(tau, 1e-12)
    return np.minimum(out, K)


def run_chains(
    x0: np.ndarray,
    kappa: np.ndarray,
    head: np.ndarray,
    gram: np.ndarray,
    n: int,
    rngs: list,
    stream_of_chain: np.ndarray,
    scale0: np.ndarray,
    opts: McmcOptions,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized random-walk Metropolis for ``B`` independent chains.

    Chains that share a stream index consume identical random numbers
    (common random numbers across prior arms). Returns kept draws
    ``(B, kept, 2p)`` and per-chain acceptance rates after burn-in.
    """
    B, d = x0.shape
    x = x0.copy()
    lp = _log_post_batch(x, kappa, head, gram, n)
    scale = scale0.astype(float).copy()
    total = opts.burn_in + opts.kept * opts.thin
    kept = np.empty((B, opts.kept, d))
    acc_window = np.zeros(B)
    acc_after = np.zeros(B)
    step = 0
    while step < total:
        blk = min(opts.block, total - step)
        noise = np.stack([g.standard_normal((blk, d)) for g in rngs])[stream_of_chain]
        logu = np.log(np.stack([g.random(blk) for g in rngs]))[stream_of_chain]
        for j in range(blk):
            prop = x + scale[:, None] * noise[:, j]
            lq = _log_post_batch(prop, kappa, head, gram, n)
            acc = logu[:, j] < lq - lp
            x[acc] = prop[acc]
            lp[acc] = lq[acc]
            if step < opts.burn_in:
                acc_window += acc
                if (step + 1) % opts.adapt_every == 0:
                    rate = acc_window / opts.adapt_every
                    scale = np.where(rate < 0.2, scale * 0.7, np.where(rate > 0.5, scale * 1.4, scale))
                    acc_window[:] = 0
            else:
                acc_after += acc
                k = step - opts.burn_in
                if (k + 1) % opts.thin == 0:
                    kept[:, k // opts.thin] = x
            step += 1
    return kept, acc_after / max(opts.kept * opts.thin, 1)


def initial_scale(roots: np.ndarray, n: int) -> float:
    """Proposal scale near the asymptotic posterior spread of one real coordinate."""
    u = max(1.0 - float(np.max(np.abs(roots)) ** 2), 1.0 / n)
    return 1.7 * np.sqrt(u / (2.0 * n))


def check_prior(prior: PriorSpec) -> None:
    if not prior.predictive_exists:
        raise InvalidPrior(f"kappa = {prior.effective_kappa:g} >= 2: the predictive density does not exist")


def posterior_sample(
    sample,
    prior: PriorSpec,
    p: int,
    options: Optional[McmcOptions] = None,
    seed=0,
) -> PosteriorDraws:
    """Random-walk Metropolis draws from ``exp(loglik) * prior`` over the roots."""
    check_prior(prior)
    opts = options or McmcOptions()
    z = _values(sample)
    n = z.size
    if n < p:
        raise SampleTooShort(f"posterior needs N >= p, got N={n}, p={p}")
    head, gram = ar_sufficient_stats(z, p)
    r0 = cls_roots(z, p)
    rng = as_seed(seed).generator(MCMC_STREAM)
    scale0 = initial_scale(r0, n)
    if p == 1:
        noise, logu = chain_randoms(rng, opts, 2)
        re, im, acc = ar1_chain(head, gram, n, prior.effective_kappa, r0, scale0, noise, logu, opts)
        kept = np.stack([re, im], axis=1)
        return draws_from_chain(kept, acc, opts)
    x0 = np.concatenate([r0.real, r0.imag])[None, :]
    kept, acc = run_chains(
        x0,
        np.array([prior.effective_kappa]),
        head[None],
        gram[None],
        n,
        [rng],
        np.zeros(1, dtype=int),
        np.array([scale0]),
        opts,
    )
    return draws_from_chain(kept[0], float(acc[0]), opts)


def chain_randoms(rng: np.random.Generator, opts: McmcOptions, d: int):
    """All proposal noise and log-uniforms for one chain, drawn up front."""
    total = opts.burn_in + opts.kept * opts.thin
    return rng.standard_normal((total, d)), np.log(rng.random(total))


def ar1_chain(head, gram, n, kappa, r0, scale0, noise, logu, opts: McmcOptions):
    """Compiled single-root chain; ``head``/``gram`` from :func:`ar_sufficient_stats`."""
    return rwm_ar1(
        float(r0[0].real),
        float(r0[0].imag),
        float(kappa),
        float(abs(head[0]) ** 2),
        float(gram[0, 0].real),
        complex(gram[1, 0]),
        float(gram[1, 1].real),
        n,
        float(scale0),
        noise,
        logu,
        opts.burn_in,
        opts.kept,
        opts.thin,
        opts.adapt_every,
    )


def draws_from_chain(kept: np.ndarray, acceptance: float, opts: McmcOptions) -> PosteriorDraws:
    p = kept.shape[1] // 2
    draws = kept[:, :p] + 1j * kept[:, p:]
    ess = float(effective_sample_size(kept.T).min())
    warn = ess < ESS_FLOOR
    if warn:
        log.warning("posterior chain ESS %.1f is below %g", ess, ESS_FLOOR)
    return PosteriorDraws(draws, np.zeros(draws.shape[0]), acceptance, opts.burn_in, opts.thin, ess, warn)


# ---------------------------------------------------------------------------
# predictive densities


MIN_DRAWS = 100


def ar1_mixture_on_grid(draws: np.ndarray, m: int) -> np.ndarray:
    """Equal-weight AR(1) mixture PSD on :func:`frequency_grid` via one FFT."""
    d = np.ascontiguousarray(np.asarray(draws, dtype=complex).ravel())
    c = ar1_mixture_coefficients(np.ascontiguousarray(d.real), np.ascontiguousarray(d.imag), m)
    # e^{-i r w_j} = (-1)^r e^{-2 pi i r j / m}
    c[1::2] *= -1.0
    return np.fft.fft(c).real / (2.0 * np.pi)


def predictive_values(draws: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """Equal-weight mixture of root-form PSDs evaluated at ``omegas``."""
    d = np.asarray(draws, dtype=complex)
    if d.ndim == 1:
        d = d[:, None]
    m = omegas.size
    if d.shape[1] == 1 and m >= 2 and not m & (m - 1) and np.array_equal(omegas, frequency_grid(m)):
        return ar1_mixture_on_grid(d[:, 0], m)
    return mixture_psd(
        np.ascontiguousarray(d.real), np.ascontiguousarray(d.imag), np.cos(omegas), np.sin(omegas)
    )


def predictive_psd(draws: PosteriorDraws, grid=DEFAULT_GRID) -> SpectralGrid:
    """Bayesian predictive PSD: posterior average of ``S(w | xi)`` on a grid."""
    if len(draws) < MIN_DRAWS:
        raise TooFewDraws(f"need at least {MIN_DRAWS} draws, got {len(draws)}")
    omegas = grid.omegas if isinstance(grid, SpectralGrid) else frequency_grid(int(grid))
    return SpectralGrid(omegas, predictive_values(draws.draws, omegas))
