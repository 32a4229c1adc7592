"""Monte Carlo risks of predictive spectral densities and domination scans.

Every trial owns a seed derived from ``(master seed, trial index)``. The data
stream and the sampler stream are separate sub-streams of that seed, and both
prior arms of a risk difference read the same two streams (common random
numbers). Trials are processed in fixed-size chunks, so serial and parallel
runs produce identical numbers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import SpecShrinkError
from .gaussian_core import DATA_STREAM, MCMC_STREAM, RngSeed, _ar_path, ar_sufficient_stats, as_seed
from .inference import (
    McmcOptions,
    MleOptions,
    ar1_chain,
    check_prior,
    chain_randoms,
    cls_roots,
    initial_scale,
    mle,
    predictive_values,
    run_chains,
)
from .kahler_geometry import PriorSpec, q_limit
from .spectral_model import ArRoots, frequency_grid, psd_from_roots, root_array

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 50


class WorkerFailure(SpecShrinkError):
    """A trial worker raised; the experiment result is incomplete."""


@dataclass
class RiskEstimate:
    mean: float
    stderr: float
    trials: int
    n: int
    seed: RngSeed
    excluded: int = 0

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("a risk estimate needs at least two trials")


def summarize(values: np.ndarray, n: int, seed: RngSeed, excluded: int = 0) -> RiskEstimate:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("a risk estimate needs at least two trials")
    return RiskEstimate(float(np.mean(v)), float(np.std(v, ddof=1) / np.sqrt(v.size)), v.size, n, seed, excluded)


def kl_rows(s0: np.ndarray, est: np.ndarray) -> np.ndarray:
    """KL divergence from ``s0`` to each row of ``est`` (grid means)."""
    d = (s0[None, :] - est) / est
    kl = np.mean(d - np.log1p(d), axis=1)
    if np.any(kl < -1e-12):
        raise ArithmeticError("negative KL divergence beyond tolerance")
    return np.maximum(kl, 0.0)


# ---------------------------------------------------------------------------
# trial workers (module-level so they pickle for process pools)


@dataclass(frozen=True)
class _BayesTask:
    theta0: tuple
    kappas: tuple  # effective kappa per arm
    n: int
    seed: RngSeed
    trial_ids: tuple
    mcmc: McmcOptions
    grid_size: int


def _bayes_chunk(task: _BayesTask) -> np.ndarray:
    """KL per (trial, arm) for the Bayesian predictive PSDs."""
    roots = np.array(task.theta0, dtype=complex)
    p = roots.size
    m = task.grid_size
    w = frequency_grid(m)
    s0 = psd_from_roots(roots)(w)
    arms = list(task.kappas)
    uniq = sorted(set(arms), key=arms.index)
    out = np.empty((len(task.trial_ids), len(arms)))
    for row, t in enumerate(task.trial_ids):
        ts = task.seed.child(t)
        z = _ar_path(roots, task.n, ts.generator(DATA_STREAM))
        head, gram = ar_sufficient_stats(z, p)
        r0 = cls_roots(z, p)
        scale0 = initial_scale(r0, task.n)
        rng = ts.generator(MCMC_STREAM)
        est = {}
        if p == 1:
            noise, logu = chain_randoms(rng, task.mcmc, 2)
            for k in uniq:
                re, im, _ = ar1_chain(head, gram, task.n, k, r0, scale0, noise, logu, task.mcmc)
                est[k] = predictive_values(re + 1j * im, w)
        else:
            x0 = np.repeat(np.concatenate([r0.real, r0.imag])[None, :], len(uniq), axis=0)
            kept, _ = run_chains(
                x0,
                np.array(uniq, dtype=float),
                np.repeat(head[None], len(uniq), axis=0),
                np.repeat(gram[None], len(uniq), axis=0),
                task.n,
                [rng],
                np.zeros(len(uniq), dtype=int),
                np.full(len(uniq), scale0),
                task.mcmc,
            )
            for j, k in enumerate(uniq):
                est[k] = predictive_values(kept[j, :, :p] + 1j * kept[j, :, p:], w)
        kl = kl_rows(s0, np.stack([est[k] for k in uniq]))
        out[row] = [kl[uniq.index(k)] for k in arms]
    return out


@dataclass(frozen=True)
class _MleTask:
    theta0: tuple
    n: int
    seed: RngSeed
    trial_ids: tuple
    grid_size: int
    options: MleOptions


def _mle_chunk(task: _MleTask) -> np.ndarray:
    """Rows of (KL, converged flag) for the estimative PSD."""
    roots = np.array(task.theta0, dtype=complex)
    p = roots.size
    w = frequency_grid(task.grid_size)
    s0 = psd_from_roots(roots)(w)
    out = np.empty((len(task.trial_ids), 2))
    for row, t in enumerate(task.trial_ids):
        ts = task.seed.child(t)
        z = _ar_path(roots, task.n, ts.generator(DATA_STREAM))
        res = mle(z, p, task.options, seed=ts)
        est = psd_from_roots(res.roots)(w)
        out[row, 0] = kl_rows(s0, est[None, :])[0]
        out[row, 1] = float(res.converged)
    return out


def _run_tasks(fn, tasks: list, jobs: int) -> list:
    try:
        if jobs <= 1 or len(tasks) <= 1:
            return [fn(t) for t in tasks]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    except SpecShrinkError:
        raise
    except Exception as exc:  # surfaced to the CLI as a worker failure
        raise WorkerFailure(f"trial worker failed: {exc!r}") from exc


def _chunks(ids: Sequence[int], size: int) -> list:
    return [tuple(ids[i : i + size]) for i in range(0, len(ids), size)]


# ---------------------------------------------------------------------------
# public API

Method = Union[PriorSpec, str]


def _theta(theta0) -> tuple:
    r = theta0.roots if isinstance(theta0, ArRoots) else root_array(theta0)
    return tuple(complex(x) for x in r)


def risk_estimate(
    theta0,
    method: Method,
    n: int,
    trials: int,
    seed,
    grid_size: int = 4096,
    mcmc: Optional[McmcOptions] = None,
    mle_options: Optional[MleOptions] = None,
    jobs: int = 1,
    chunk: int = DEFAULT_CHUNK,
) -> RiskEstimate:
    """Mean KL risk of a Bayesian (``PriorSpec``) or estimative (``"mle"``) PSD.

    Non-converged MLE fits are excluded and counted.
    """
    theta = _theta(theta0)
    if n < len(theta):
        raise ValueError("n must be >= p")
    s = as_seed(seed)
    ids = list(range(trials))
    if isinstance(method, str):
        if method != "mle":
            raise ValueError(f"unknown method {method!r}")
        tasks = [_MleTask(theta, n, s, c, grid_size, mle_options or MleOptions()) for c in _chunks(ids, chunk)]
        rows = np.concatenate(_run_tasks(_mle_chunk, tasks, jobs))
        ok = rows[:, 1] > 0
        return summarize(rows[ok, 0], n, s, excluded=int((~ok).sum()))
    check_prior(method)
    tasks = [
        _BayesTask(theta, (method.effective_kappa,), n, s, c, mcmc or McmcOptions(), grid_size)
        for c in _chunks(ids, chunk)
    ]
    rows = np.concatenate(_run_tasks(_bayes_chunk, tasks, jobs))
    return summarize(rows[:, 0], n, s)


def risk_difference(
    theta0,
    kappa: float,
    n: int,
    trials: int,
    seed,
    grid_size: int = 4096,
    mcmc: Optional[McmcOptions] = None,
    jobs: int = 1,
    chunk: int = DEFAULT_CHUNK,
    paired: bool = True,
) -> RiskEstimate:
    """``Z = N^2 (R(Jeffreys) - R(kappa-prior))`` from paired trials.

    With ``paired=False`` the two arms use disjoint trial seeds, which is
    only useful to measure the variance reduction of pairing.
    """
    check_prior(PriorSpec.from_kappa(kappa))
    theta = _theta(theta0)
    s = as_seed(seed)
    opts = mcmc or McmcOptions()
    ids = list(range(trials))
    if paired:
        tasks = [_BayesTask(theta, (1.0, float(kappa)), n, s, c, opts, grid_size) for c in _chunks(ids, chunk)]
        rows = np.concatenate(_run_tasks(_bayes_chunk, tasks, jobs))
        return summarize(n**2 * (rows[:, 0] - rows[:, 1]), n, s)
    jt = [_BayesTask(theta, (1.0,), n, s, c, opts, grid_size) for c in _chunks(ids, chunk)]
    kt = [_BayesTask(theta, (float(kappa),), n, s, c, opts, grid_size) for c in _chunks([i + trials for i in ids], chunk)]
    a = np.concatenate(_run_tasks(_bayes_chunk, jt, jobs))[:, 0]
    b = np.concatenate(_run_tasks(_bayes_chunk, kt, jobs))[:, 0]
    se = n**2 * np.sqrt(np.var(a, ddof=1) / trials + np.var(b, ddof=1) / trials)
    return RiskEstimate(float(n**2 * (a.mean() - b.mean())), float(se), trials, n, s)


@dataclass
class ExperimentConfig:
    xi_grid: Sequence[float]
    n_values: Sequence[int]
    kappa_values: Sequence[float] = (-1.0,)
    trials: int = 500
    grid_size: int = 4096
    mcmc: McmcOptions = field(default_factory=McmcOptions)
    master_seed: int = 0
    theta0: Optional[Sequence[complex]] = None  # single-point runs

    def __post_init__(self):
        self.xi_grid = sorted(float(x) for x in self.xi_grid)
        if any(abs(x) >= 1 for x in self.xi_grid):
            raise ValueError("xi grid must lie in (-1, 1)")
        if any(k >= 2 for k in self.kappa_values):
            raise ValueError("kappa must be < 2")
        if any(int(v) < 1 for v in self.n_values):
            raise ValueError("every N must be >= p")

    def point_seed(self, n: int) -> RngSeed:
        """Trial seeds depend on N only, so grid points and kappas share noise."""
        return RngSeed(self.master_seed, int(n))


@dataclass
class ScanPoint:
    xi: float
    kappa: float
    n: int
    estimate: RiskEstimate

    @property
    def q_limit(self) -> float:
        return q_limit(self.xi, self.kappa)


@dataclass
class DominationScan:
    xi_grid: list
    points: list  # ScanPoint, ascending xi then kappa
    intervals: dict  # (n, kappa) -> (lo, hi) or None

    def z(self, n: int, kappa: float) -> tuple[np.ndarray, np.ndarray]:
        sel = [pt for pt in self.points if pt.n == n and pt.kappa == kappa]
        return np.array([p.estimate.mean for p in sel]), np.array([p.estimate.stderr for p in sel])


def domination_interval(xi: Sequence[float], z: Sequence[float]) -> Optional[tuple]:
    """Maximal interval around 0 where ``z > 0``; ends at linear zero crossings.

    When positivity reaches the edge of the grid the edge value is returned.
    """
    xi = np.asarray(xi, dtype=float)
    z = np.asarray(z, dtype=float)
    c = int(np.argmin(np.abs(xi)))
    if not z[c] > 0:
        return None
    hi_i = c
    while hi_i + 1 < xi.size and z[hi_i + 1] > 0:
        hi_i += 1
    lo_i = c
    while lo_i - 1 >= 0 and z[lo_i - 1] > 0:
        lo_i -= 1

    def cross(i, j):
        return xi[i] + (xi[j] - xi[i]) * z[i] / (z[i] - z[j])

    hi = cross(hi_i, hi_i + 1) if hi_i + 1 < xi.size else xi[hi_i]
    lo = cross(lo_i, lo_i - 1) if lo_i - 1 >= 0 else xi[lo_i]
    return float(lo), float(hi)


def scan_domination(config: ExperimentConfig, jobs: int = 1, chunk: int = DEFAULT_CHUNK, progress=None) -> DominationScan:
    """Risk differences over a symmetric real ``xi`` grid for each N and kappa."""
    grid = list(config.xi_grid)
    if not np.allclose(sorted(grid), sorted(-x for x in grid)):
        raise ValueError("xi grid must be symmetric about 0")
    points = []
    for n in config.n_values:
        for x in grid:
            for k in config.kappa_values:
                est = risk_difference(
                    [x], k, n, config.trials, config.point_seed(n), config.grid_size, config.mcmc, jobs, chunk
                )
                points.append(ScanPoint(x, float(k), int(n), est))
                if progress is not None:
                    progress(points[-1])
    points.sort(key=lambda pt: (pt.n, pt.xi, pt.kappa))
    intervals = {}
    for n in config.n_values:
        for k in config.kappa_values:
            sel = [pt for pt in points if pt.n == n and pt.kappa == k]
            intervals[(int(n), float(k))] = domination_interval(
                [pt.xi for pt in sel], [pt.estimate.mean for pt in sel]
            )
    return DominationScan(grid, points, intervals)


def convergence_ladder(
    xi: float,
    kappa: float,
    n_values: Sequence[int],
    trials: int,
    seed,
    grid_size: int = 4096,
    mcmc: Optional[McmcOptions] = None,
    jobs: int = 1,
) -> list:
    """Risk-difference estimates at fixed ``xi`` for increasing N."""
    if list(n_values) != sorted(n_values):
        raise ValueError("n_values must be increasing")
    s = as_seed(seed)
    return [
        risk_difference([xi], kappa, n, trials, RngSeed(s.master_seed, int(n)), grid_size, mcmc, jobs)
        for n in n_values
    ]
