"""Fisher geometry of the AR(p) root space, shrinkage priors and risk-gap limits.

Wirtinger index convention matches :mod:`specshrink.spectral_model`: in a
``2p`` vector, entry ``i < p`` is ``d/dxi_i`` and entry ``p + i`` is
``d/dconj(xi_i)``. Full ``2p x 2p`` tensors are contracted against the full
inverse metric, which avoids any ambiguity in barred index placement.
"""

from __future__ import annotations

import warnings
from itertools import combinations_with_replacement
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import InvalidPrior, InvalidRoots, NearSingular
from .gaussian_core import RngSeed, as_seed
from .spectral_model import (
    DEFAULT_GRID,
    DISTINCT_TOL,
    frequency_grid,
    m_connection,
    psd_from_roots,
    root_array,
    skewness_tensor,
)

BOUNDARY_GUARD = 0.995
COND_LIMIT = 1e12
FD_STEP = 1e-5
FD_STEP2 = 1e-3  # coarse step of the extrapolated second-difference stencil


def _guard(roots) -> np.ndarray:
    r = root_array(roots)
    if np.any(np.abs(r) > BOUNDARY_GUARD):
        raise InvalidRoots(f"geometry is restricted to |xi| <= {BOUNDARY_GUARD}")
    return r


@dataclass(frozen=True)
class HermitianMetric:
    """Hermitian metric ``g[i, j] = g_{i jbar}`` with its inverse."""

    g: np.ndarray
    inverse: np.ndarray
    condition: float

    @property
    def p(self) -> int:
        return self.g.shape[0]

    def full(self) -> np.ndarray:
        """``2p x 2p`` symmetric form in the holomorphic/antiholomorphic basis."""
        p = self.p
        out = np.zeros((2 * p, 2 * p), dtype=complex)
        out[:p, p:] = self.g
        out[p:, :p] = self.g.T
        return out

    def full_inverse(self) -> np.ndarray:
        """Inverse of :meth:`full`; the ``(i, p+j)`` block is ``inverse.T``."""
        p = self.p
        out = np.zeros((2 * p, 2 * p), dtype=complex)
        out[:p, p:] = self.inverse.T
        out[p:, :p] = self.inverse
        return out


def fisher_metric_ar(roots) -> HermitianMetric:
    """Closed-form Fisher metric ``1 / (1 - xi_i conj(xi_j))`` of AR(p) roots."""
    r = _guard(roots)
    g = 1.0 / (1.0 - np.outer(r, r.conj()))
    ev = np.linalg.eigvalsh(g)
    cond = float(ev[-1] / ev[0]) if ev[0] > 0 else np.inf
    if not cond <= COND_LIMIT:
        raise NearSingular(f"metric condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    inv = np.linalg.solve(g, np.eye(r.size))
    return HermitianMetric(g, inv, cond)


def phi(roots) -> float:
    """Laplacian eigenfunction ``prod_{i,j} (1 - xi_i conj(xi_j))``."""
    r = root_array(roots)
    if np.any(np.abs(r) >= 1.0):
        raise InvalidRoots("phi is defined for |xi| < 1")
    return float(np.prod(1.0 - np.outer(r, r.conj())).real)


def log_phi(roots) -> float:
    return float(np.log(phi(roots)))


def log_vandermonde(roots) -> float:
    """``sum_{i<j} log |xi_i - xi_j|^2``."""
    r = root_array(roots)
    iu = np.triu_indices(r.size, 1)
    return float(np.sum(np.log(np.abs(r[:, None] - r[None, :])[iu] ** 2)))


def jeffreys_prior(roots) -> float:
    r = root_array(roots)
    return float(np.exp(log_vandermonde(r) - log_phi(r)))


@dataclass(frozen=True)
class PriorSpec:
    """Jeffreys prior or the kappa-prior ``phi^(1 - kappa) * Jeffreys``."""

    kind: str = "kappa"
    kappa: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("jeffreys", "kappa"):
            raise InvalidPrior(f"unknown prior kind {self.kind!r}")
        if self.kind == "kappa":
            if self.kappa is None or not np.isfinite(self.kappa):
                raise InvalidPrior("kappa prior needs a finite kappa")
        elif self.kappa is not None:
            raise InvalidPrior("the Jeffreys prior takes no kappa")

    @classmethod
    def jeffreys(cls) -> "PriorSpec":
        return cls("jeffreys", None)

    @classmethod
    def from_kappa(cls, kappa: float) -> "PriorSpec":
        return cls("kappa", float(kappa))

    @property
    def effective_kappa(self) -> float:
        return 1.0 if self.kind == "jeffreys" else float(self.kappa)

    @property
    def proper(self) -> bool:
        return self.effective_kappa < 1.0

    @property
    def predictive_exists(self) -> bool:
        return self.effective_kappa < 2.0

    def label(self) -> str:
        return "jeffreys" if self.kind == "jeffreys" else f"kappa={self.kappa:g}"


def log_prior(roots, prior: PriorSpec) -> float:
    """Unnormalized ``log pi``: ``-kappa log phi + log |Vandermonde|^2``."""
    r = root_array(roots)
    return float(-prior.effective_kappa * log_phi(r) + log_vandermonde(r))


def kappa_prior(roots, prior: PriorSpec) -> float:
    r = root_array(roots)
    if prior.kind == "jeffreys":
        return jeffreys_prior(r)
    return float(phi(r) ** (1.0 - prior.kappa) * jeffreys_prior(r))


# ---------------------------------------------------------------------------
# prior normalizer


@dataclass
class NormalizerResult:
    value: float  # inf when the integral diverges
    finite: bool
    stderr: float = 0.0
    truncated: Optional[dict] = None  # delta -> integral over |xi| <= 1 - delta


def _disk_integral_p1(prior: PriorSpec, r_max: float = 1.0) -> float:
    # the p = 1 prior depends on |xi| only
    def radial(r):
        return 2 * np.pi * r * kappa_prior([r], prior)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(radial, 0.0, r_max, epsabs=1e-11, epsrel=1e-11, limit=200)
    return val


def prior_normalizer(prior: PriorSpec, p: int = 1, samples: int = 200_000, seed=0) -> NormalizerResult:
    """Integral of the prior over the polydisk.

    ``p = 1`` uses adaptive quadrature in the radius; divergence is detected
    from the growth of integrals truncated at ``1 - delta``. ``p = 2`` uses
    uniform Monte Carlo on the bidisk.
    """
    if p == 1:
        deltas = (1e-2, 1e-3, 1e-4)
        trunc = {d: _disk_integral_p1(prior, 1.0 - d) for d in deltas}
        inc = np.diff([trunc[d] for d in deltas])
        # convergent tails shrink geometrically with ratio 10^(kappa - 1)
        diverging = bool(inc[0] > 0 and inc[1] >= 0.9 * inc[0])
        if diverging:
            return NormalizerResult(np.inf, False, truncated=trunc)
        return NormalizerResult(_disk_integral_p1(prior), True, truncated=trunc)
    if p == 2:
        rng = as_seed(seed).generator()
        rad = np.sqrt(rng.random((samples, 2)))
        ang = 2 * np.pi * rng.random((samples, 2))
        pts = rad * np.exp(1j * ang)
        k = prior.effective_kappa
        ph = np.prod(1.0 - pts[:, :, None] * pts[:, None, :].conj(), axis=(1, 2)).real
        vals = ph ** (-k) * np.abs(pts[:, 0] - pts[:, 1]) ** 2
        area = np.pi**2
        return NormalizerResult(
            float(area * vals.mean()),
            prior.proper,
            stderr=float(area * vals.std(ddof=1) / np.sqrt(samples)),
        )
    raise ValueError("prior_normalizer supports p = 1 or p = 2")


# ---------------------------------------------------------------------------
# Wirtinger calculus on scalar fields


@dataclass
class ScalarField:
    """Real-valued function of the roots with optional analytic derivatives.

    ``grad`` returns the ``p`` holomorphic derivatives ``d f / d xi_i``;
    ``mixed_hessian`` returns ``d^2 f / d xi_i d conj(xi_j)`` as a ``p x p`` array.
    """

    fn: Callable[[np.ndarray], float]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mixed_hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, roots) -> float:
        return float(self.fn(root_array(roots)))


def _real_fn(field: ScalarField, p: int):
    def f(x):
        return field.fn(x[:p] + 1j * x[p:])

    return f


def wirtinger_gradient(field: ScalarField, roots, h: float = FD_STEP) -> np.ndarray:
    """``(2p,)`` covector ``(d_i f, dbar_i f)``; analytic when available."""
    r = root_array(roots)
    p = r.size
    if field.grad is not None:
        d = np.asarray(field.grad(r), dtype=complex)
        return np.concatenate([d, d.conj()])
    f = _real_fn(field, p)
    x0 = np.concatenate([r.real, r.imag])
    eye = np.eye(2 * p)
    g = np.array([(f(x0 + h * eye[k]) - f(x0 - h * eye[k])) / (2 * h) for k in range(2 * p)])
    d = 0.5 * (g[:p] - 1j * g[p:])
    dbar = 0.5 * (g[:p] + 1j * g[p:])
    return np.concatenate([d, dbar])


def _mixed_hessian_fd(f, x0: np.ndarray, p: int, h: float) -> np.ndarray:
    d = 2 * p
    eye = np.eye(d)
    f0 = f(x0)
    hr = np.empty((d, d))
    for k in range(d):
        hr[k, k] = (f(x0 + h * eye[k]) - 2 * f0 + f(x0 - h * eye[k])) / h**2
        for m in range(k + 1, d):
            ek, em = h * eye[k], h * eye[m]
            v = (f(x0 + ek + em) - f(x0 + ek - em) - f(x0 - ek + em) + f(x0 - ek - em)) / (4 * h * h)
            hr[k, m] = hr[m, k] = v
    xx, xy, yx, yy = hr[:p, :p], hr[:p, p:], hr[p:, :p], hr[p:, p:]
    # d_i dbar_j = 1/4 (dx_i - i dy_i)(dx_j + i dy_j)
    return 0.25 * ((xx + yy) + 1j * (xy - yx))


def wirtinger_mixed_hessian(field: ScalarField, roots, h: float = FD_STEP2) -> np.ndarray:
    """``p x p`` matrix ``d_i dbar_j f``; analytic when available.

    The fallback is a central stencil at steps ``h`` and ``h/2`` combined by
    Richardson extrapolation, which cancels the ``h^2`` truncation term.
    """
    r = root_array(roots)
    p = r.size
    if field.mixed_hessian is not None:
        return np.asarray(field.mixed_hessian(r), dtype=complex)
    f = _real_fn(field, p)
    x0 = np.concatenate([r.real, r.imag])
    coarse = _mixed_hessian_fd(f, x0, p, h)
    fine = _mixed_hessian_fd(f, x0, p, h / 2)
    return (4.0 * fine - coarse) / 3.0


def laplacian_apply(field: ScalarField, roots, metric: Optional[HermitianMetric] = None) -> float:
    """Laplace-Beltrami operator ``2 g^{i jbar} d_i dbar_j f`` at ``roots``."""
    r = _guard(roots)
    if metric is None:
        metric = fisher_metric_ar(r)
    H = wirtinger_mixed_hessian(field, r)
    return float(2.0 * np.real(np.trace(metric.inverse @ H)))


def phi_field(exponent: float = 1.0) -> ScalarField:
    """``phi ** exponent`` as a field (finite differences only)."""
    return ScalarField(lambda r: phi(r) ** exponent)


def dlog_phi(roots) -> np.ndarray:
    """Holomorphic gradient ``d_i log phi = -sum_j conj(xi_j) / (1 - xi_i conj(xi_j))``."""
    r = root_array(roots)
    return -np.sum(r.conj()[None, :] / (1.0 - np.outer(r, r.conj())), axis=1)


def log_phi_field() -> ScalarField:
    def mixed(r):
        g = 1.0 / (1.0 - np.outer(r, r.conj()))
        return -(g**2)

    return ScalarField(log_phi, grad=dlog_phi, mixed_hessian=mixed)


def dlog_jeffreys_fd(roots) -> np.ndarray:
    """Holomorphic gradient of ``log pi_J`` by central differences."""
    return wirtinger_gradient(ScalarField(lambda r: log_vandermonde(r) - log_phi(r)), roots)[: root_array(roots).size]


def random_interior_roots(p: int, rng: np.random.Generator, r_max: float = 0.9, min_sep: float = 0.05) -> np.ndarray:
    """Uniform points of the disk of radius ``r_max`` with separated roots."""
    while True:
        r = r_max * np.sqrt(rng.random(p)) * np.exp(2j * np.pi * rng.random(p))
        if p == 1 or np.abs(r[:, None] - r[None, :])[np.triu_indices(p, 1)].min() > min_sep:
            return r


@dataclass
class EigenReport:
    p: int
    eigenvalue: float  # mean of -Delta phi / phi over the points
    max_residual: float
    points: int


def verify_eigenfunction(p: int, points: int = 50, seed=0, phi_exponent: float = 1.0) -> EigenReport:
    """Max of ``|Delta phi / phi + p(p+1)|`` over random interior points.

    ``phi_exponent`` perturbs the field as a negative control.
    """
    if not 1 <= p <= 3:
        raise ValueError("p must be 1, 2 or 3")
    rng = as_seed(seed).generator()
    K = p * (p + 1)
    field = phi_field(phi_exponent)
    ratios = []
    for _ in range(points):
        r = random_interior_roots(p, rng)
        ratios.append(laplacian_apply(field, r) / field(r))
    ratios = np.array(ratios)
    return EigenReport(p, float(-ratios.mean()), float(np.max(np.abs(ratios + K))), points)


# ---------------------------------------------------------------------------
# risk-gap limits


def closed_form_risk_gap(kappa: float, roots) -> float:
    """Closed form ``(1-k) K + (1-k^2) g^{i jbar} d_i log phi dbar_j log phi``."""
    r = _guard(roots)
    p = r.size
    met = fisher_metric_ar(r)
    d = dlog_phi(r)
    quad = np.real(d @ met.inverse.T @ d.conj())
    return float((1 - kappa) * p * (p + 1) + (1 - kappa**2) * quad)


def prior_ratio_field(prior: PriorSpec) -> ScalarField:
    """``sqrt(pi / pi_J)`` evaluated through the prior functions themselves."""
    return ScalarField(lambda r: np.sqrt(kappa_prior(r, prior) / jeffreys_prior(r)))


def half_log_ratio_field(prior: PriorSpec) -> ScalarField:
    """``u = log sqrt(pi / pi_J) = (1 - kappa)/2 log phi`` with analytic Wirtinger derivatives."""
    s = 0.5 * (1.0 - prior.effective_kappa)
    lp = log_phi_field()
    return ScalarField(
        lambda r: s * log_phi(r),
        grad=lambda r: s * lp.grad(r),
        mixed_hessian=lambda r: s * lp.mixed_hessian(r),
    )


def exp_laplacian_ratio(u: ScalarField, roots, metric: Optional[HermitianMetric] = None) -> float:
    """``Delta(e^u) / e^u = Delta u + 2 g^{i jbar} d_i u dbar_j u``."""
    r = _guard(roots)
    if metric is None:
        metric = fisher_metric_ar(r)
    d = wirtinger_gradient(u, r)[: r.size]
    quad = np.real(d @ metric.inverse.T @ d.conj())
    return laplacian_apply(u, r, metric) + 2.0 * float(quad)


def leading_risk_gap(prior: PriorSpec, roots, method: str = "analytic") -> float:
    """``N^2`` risk gap to the Jeffreys predictive: ``-2 f^{-1} Delta f``, ``f = sqrt(pi/pi_J)``.

    ``method="analytic"`` applies the Laplacian to ``log f`` with exact Wirtinger
    derivatives of ``log phi``. ``method="fd"`` differentiates ``f`` itself by
    extrapolated central differences; its error grows with the metric condition
    number, so it is reliable only for well-separated roots.
    """
    r = _guard(roots)
    if prior.kind == "jeffreys" or prior.kappa == 1.0:
        return 0.0
    if method == "analytic":
        return float(-2.0 * exp_laplacian_ratio(half_log_ratio_field(prior), r))
    if method == "fd":
        f = prior_ratio_field(prior)
        return float(-2.0 * laplacian_apply(f, r) / f(r))
    raise ValueError(f"unknown method {method!r}")


def q_limit(xi, kappa: float):
    """Pointwise limit ``2(1-k) + (1-k^2) |xi|^2 / (1 - |xi|^2)`` for ``p = 1``."""
    a = np.abs(np.asarray(xi)) ** 2
    if np.any(a >= 1):
        raise InvalidRoots("q_limit requires |xi| < 1")
    out = 2.0 * (1.0 - kappa) + (1.0 - kappa**2) * a / (1.0 - a)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# parallel and orthogonal parts


@dataclass
class GridParts:
    omegas: np.ndarray
    values: np.ndarray
    psd: np.ndarray  # S on the same grid, for inner products


def inner_product(a: GridParts, b: GridParts) -> float:
    """``(2 pi)^-1 int a b / S^2``."""
    return float(np.mean(np.real(a.values) * np.real(b.values) / a.psd**2))


def _full_inverse_quadrature(psd, m):
    from .spectral_model import fisher_tensor

    F = fisher_tensor(psd, m)
    return F, np.linalg.inv(F)


def contracted_skewness(roots, m: int = DEFAULT_GRID) -> np.ndarray:
    """``T_a = T_{abc} g^{bc}`` from quadrature tensors, length ``2p``."""
    psd = psd_from_roots(_guard(roots))
    _, Finv = _full_inverse_quadrature(psd, m)
    return np.einsum("abc,bc->a", skewness_tensor(psd, m), Finv)


def parallel_part_G(roots, prior: PriorSpec, m: int = DEFAULT_GRID) -> GridParts:
    """``g^{ab} (d_a log(pi/pi_J) + T_a / 2) d_b S`` on the quadrature grid."""
    r = _guard(roots)
    psd = psd_from_roots(r)
    w = frequency_grid(m)
    _, Finv = _full_inverse_quadrature(psd, m)
    T = np.einsum("abc,bc->a", skewness_tensor(psd, m), Finv)
    if prior.kind == "jeffreys" or prior.kappa == 1.0:
        dlr = np.zeros(2 * r.size, dtype=complex)
    else:
        # log(pi/pi_J) = (1 - kappa) log phi
        d = (1.0 - prior.kappa) * dlog_phi(r)
        dlr = np.concatenate([d, d.conj()])
    coef = Finv @ (dlr + 0.5 * T)
    vals = coef @ psd.dS(w)
    return GridParts(w, vals.real, psd(w))


def orthogonal_part_H(roots, m: int = DEFAULT_GRID) -> GridParts:
    """``1/2 g^{ab} (d_a d_b S - Gamma^(m)c_ab d_c S)`` on the quadrature grid."""
    r = _guard(roots)
    psd = psd_from_roots(r)
    w = frequency_grid(m)
    _, Finv = _full_inverse_quadrature(psd, m)
    gam_up = np.einsum("abd,dc->abc", m_connection(psd, m), Finv)
    dS = psd.dS(w)
    term = np.einsum("ab,abk->k", Finv, psd.d2S(w)) - np.einsum("ab,abc,ck->k", Finv, gam_up, dS)
    return GridParts(w, (0.5 * term).real, psd(w))


def parallel_part_closed_form(roots, kappa: float, m: int = DEFAULT_GRID) -> np.ndarray:
    """``2 (kappa + 1) Re(conj(xi_j) dbar_j S)``, the reduced form for kappa-priors."""
    r = _guard(roots)
    psd = psd_from_roots(r)
    dS = psd.dS(frequency_grid(m))
    p = r.size
    return 2.0 * (kappa + 1.0) * np.real(r.conj() @ dS[p:])


# ---------------------------------------------------------------------------
# tensor checks


def alpha_parallel_check(roots, m: int = DEFAULT_GRID) -> float:
    """``max_i |T_i + 4 d_i log phi|`` with ``T`` contracted from quadrature."""
    r = _guard(roots)
    T = contracted_skewness(r, m)
    return float(np.max(np.abs(T[: r.size] + 4.0 * dlog_phi(r))))


@dataclass
class HermiteReport:
    trials: int
    second_max_z: float
    fourth_max_z: float
    odd_max_z: float
    tolerance: float = 4.0

    @property
    def passed(self) -> bool:
        return max(self.second_max_z, self.fourth_max_z, self.odd_max_z) <= self.tolerance


def _max_z(samples: np.ndarray, target: np.ndarray) -> float:
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    se = np.sqrt(np.var(samples.real, axis=0, ddof=1) + np.var(samples.imag, axis=0, ddof=1)) / np.sqrt(n)
    dev = np.abs(mean - target)
    if np.any((se == 0) & (dev > 1e-12)):
        return np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, dev / se, 0.0)
    return float(z.max())


def _moment_z(L: np.ndarray, order: int, target: Callable[[tuple], complex]) -> float:
    """Largest z-score over all index multisets of the given order."""
    combos = list(combinations_with_replacement(range(L.shape[1]), order))
    samples = np.stack([np.prod(L[:, list(c)], axis=1) for c in combos], axis=1)
    return _max_z(samples, np.array([target(c) for c in combos]))


def hermite_moment_check(metric: HermitianMetric, trials: int = 200_000, seed=0) -> HermiteReport:
    """Gaussian moments under ``exp(-g_{ab} l^a l^b / 2)`` against Wick sums.

    With ``l = (lam, conj(lam))`` the weight is ``exp(-lam^T g conj(lam))``,
    so ``conj(lam)`` is complex normal with covariance ``g^{-1}``.
    """
    p = metric.p
    if p > 2:
        raise ValueError("hermite_moment_check supports p <= 2")
    rng = as_seed(seed).generator()
    C = np.linalg.cholesky(metric.inverse)
    eps = (rng.standard_normal((trials, p)) + 1j * rng.standard_normal((trials, p))) * np.sqrt(0.5)
    lam = (eps @ C.T).conj()
    L = np.concatenate([lam, lam.conj()], axis=1)
    G = metric.full_inverse()
    z2 = _moment_z(L, 2, lambda c: G[c[0], c[1]])
    z3 = _moment_z(L, 3, lambda c: 0.0)
    z4 = _moment_z(
        L,
        4,
        lambda c: G[c[0], c[1]] * G[c[2], c[3]] + G[c[0], c[2]] * G[c[1], c[3]] + G[c[0], c[3]] * G[c[1], c[2]],
    )
    return HermiteReport(trials, z2, z4, z3)
