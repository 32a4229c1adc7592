"""Spectral densities of complex AR/ARMA processes and quadrature helpers.

All integrals over [-pi, pi] use the uniform periodic trapezoid rule: the
integrands are smooth and 2*pi-periodic, so the rule converges geometrically
in the grid size.

Index convention for derivative tensors: for ``p`` roots, index ``a < p``
denotes the holomorphic Wirtinger derivative with respect to ``xi[a]`` and
``a >= p`` the antiholomorphic derivative with respect to ``conj(xi[a - p])``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CommonRootError, InvalidRoots, MissingDerivatives, NonpositiveSpectrum

TWO_PI = 2.0 * np.pi
DEFAULT_GRID = 4096
DISTINCT_TOL = 1e-9


@dataclass(frozen=True)
class ArRoots:
    """Distinct AR roots strictly inside the unit disk."""

    roots: np.ndarray

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.roots, dtype=complex)).ravel()
        if r.size == 0:
            raise InvalidRoots("at least one root is required")
        if not np.all(np.isfinite(r)):
            raise InvalidRoots("roots must be finite")
        if np.any(np.abs(r) >= 1.0):
            raise InvalidRoots(f"roots must satisfy |xi| < 1, got max |xi| = {np.abs(r).max():.6g}")
        if r.size > 1:
            gaps = np.abs(r[:, None] - r[None, :])[np.triu_indices(r.size, 1)]
            if gaps.min() <= DISTINCT_TOL:
                raise InvalidRoots("roots must be pairwise distinct (duplicate root)")
        r.setflags(write=False)
        object.__setattr__(self, "roots", r)

    @property
    def p(self) -> int:
        return self.roots.size

    def __len__(self):
        return self.roots.size

    def __iter__(self):
        return iter(self.roots)


def root_array(roots) -> np.ndarray:
    """Plain complex array from ``ArRoots`` or any array-like of roots."""
    if isinstance(roots, ArRoots):
        return roots.roots
    return np.atleast_1d(np.asarray(roots, dtype=complex)).ravel()


@dataclass(frozen=True)
class ArmaSpec:
    a: Sequence[complex] = ()
    b: Sequence[complex] = ()
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        ar = polynomial_roots(self.a)
        ma = polynomial_roots(self.b)
        if ar.size and np.any(np.abs(ar) >= 1.0):
            raise InvalidRoots("AR polynomial roots must lie inside the unit disk")
        if ar.size and ma.size:
            if np.abs(ar[:, None] - ma[None, :]).min() <= DISTINCT_TOL:
                raise CommonRootError("AR and MA polynomials share a root")


@dataclass
class SpectralGrid:
    """Values of a function on a uniform frequency grid over [-pi, pi)."""

    omegas: np.ndarray
    values: np.ndarray

    @property
    def m(self) -> int:
        return self.omegas.size

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.values = np.asarray(self.values)
        if self.omegas.shape != self.values.shape:
            raise ValueError("omegas and values must have the same shape")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")


def frequency_grid(m: int = DEFAULT_GRID) -> np.ndarray:
    """Uniform grid ``-pi + 2*pi*k/m``, ``k = 0..m-1``; ``m`` a power of two."""
    m = int(m)
    if m < 2 or m & (m - 1):
        raise ValueError(f"grid size must be a power of two >= 2, got {m}")
    return -np.pi + TWO_PI * np.arange(m) / m


def roots_to_coeffs(roots) -> np.ndarray:
    """Coefficients ``a_1..a_p`` with ``1 + sum a_i z^-i = prod (1 - xi_i z^-1)``."""
    r = root_array(roots)
    c = np.array([1.0 + 0j])
    for xi in r:
        c = np.append(c, 0.0) - xi * np.insert(c, 0, 0.0)
    return c[1:]


def batch_roots_to_coeffs(roots: np.ndarray) -> np.ndarray:
    """Vectorized :func:`roots_to_coeffs` over the leading axis of ``(B, p)``."""
    roots = np.asarray(roots, dtype=complex)
    B, p = roots.shape
    c = np.zeros((B, p + 1), dtype=complex)
    c[:, 0] = 1.0
    for i in range(p):
        c[:, 1 : i + 2] = c[:, 1 : i + 2] - roots[:, i : i + 1] * c[:, : i + 1]
    return c[:, 1:]


def polynomial_roots(coeffs) -> np.ndarray:
    """Roots ``xi`` of ``z^k (1 + sum c_i z^-i)`` (i.e. of ``1 + sum c_i z^-i``)."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
    if c.size == 0:
        return np.zeros(0, dtype=complex)
    return np.roots(np.concatenate([[1.0], c]))


class Psd:
    """A spectral density evaluator ``omega -> S(omega) > 0``."""

    has_derivatives = False

    def __call__(self, omega):
        raise NotImplementedError

    def on_grid(self, m: int = DEFAULT_GRID) -> SpectralGrid:
        w = frequency_grid(m)
        return SpectralGrid(w, self(w))


class ArPsd(Psd):
    """PSD of AR(p) in root form, ``S = 1 / (2 pi prod |1 - xi_i e^{-iw}|^2)``.

    Carries closed-form Wirtinger derivatives of ``log S`` with respect to the
    roots, up to third order.
    """

    has_derivatives = True

    def __init__(self, roots):
        self.roots = root_array(roots)
        if np.any(np.abs(self.roots) >= 1.0):
            raise InvalidRoots("roots must lie inside the unit disk")

    @property
    def p(self) -> int:
        return self.roots.size

    def _q(self, omega):
        # q_i(w) = xi_i e^{-iw}
        e = np.exp(-1j * np.asarray(omega, dtype=float))
        return self.roots[:, None] * e[None, :], e

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        flat = np.atleast_1d(omega).ravel()
        q, _ = self._q(flat)
        denom = np.prod(np.abs(1.0 - q) ** 2, axis=0)
        return (1.0 / (TWO_PI * denom)).reshape(omega.shape)

    def dlog(self, omega) -> np.ndarray:
        """``(2p, m)`` array of first Wirtinger derivatives of ``log S``."""
        q, e = self._q(omega)
        d = e[None, :] / (1.0 - q)
        return np.concatenate([d, d.conj()], axis=0)

    def d2log(self, omega) -> np.ndarray:
        """``(2p, 2p, m)`` second derivatives of ``log S``; mixed terms vanish."""
        q, e = self._q(omega)
        p, m = q.shape
        out = np.zeros((2 * p, 2 * p, m), dtype=complex)
        d = e[None, :] ** 2 / (1.0 - q) ** 2
        idx = np.arange(p)
        out[idx, idx] = d
        out[idx + p, idx + p] = d.conj()
        return out

    def d3log(self, omega) -> np.ndarray:
        q, e = self._q(omega)
        p, m = q.shape
        out = np.zeros((2 * p, 2 * p, 2 * p, m), dtype=complex)
        d = 2.0 * e[None, :] ** 3 / (1.0 - q) ** 3
        idx = np.arange(p)
        out[idx, idx, idx] = d
        out[idx + p, idx + p, idx + p] = d.conj()
        return out

    def dS(self, omega) -> np.ndarray:
        """``(2p, m)`` first derivatives of ``S`` itself."""
        return self(omega)[None, :] * self.dlog(omega)

    def d2S(self, omega) -> np.ndarray:
        dl = self.dlog(omega)
        return self(omega)[None, None, :] * (self.d2log(omega) + dl[:, None, :] * dl[None, :, :])


class ArmaPsd(Psd):
    """``sigma2/(2 pi) |1 + sum b_i e^{-iiw}|^2 / |1 + sum a_i e^{-iiw}|^2``."""

    def __init__(self, spec: ArmaSpec):
        self.spec = spec
        self.a = np.asarray(spec.a, dtype=complex)
        self.b = np.asarray(spec.b, dtype=complex)

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        e = np.exp(-1j * omega)
        ar = np.polyval(np.concatenate([self.a[::-1], [1.0]]), e)
        ma = np.polyval(np.concatenate([self.b[::-1], [1.0]]), e)
        return self.spec.sigma2 / TWO_PI * np.abs(ma) ** 2 / np.abs(ar) ** 2

    def dlog(self, omega):
        raise MissingDerivatives("ARMA spectral densities are evaluation-only")


def psd_from_roots(roots) -> ArPsd:
    return ArPsd(roots)


def psd_from_arma(spec: ArmaSpec) -> ArmaPsd:
    return ArmaPsd(spec)


def _values(psd, m: int) -> np.ndarray:
    if isinstance(psd, SpectralGrid):
        if psd.m != m:
            raise ValueError(f"grid has {psd.m} points, expected {m}")
        return np.asarray(psd.values, dtype=float)
    return np.asarray(psd(frequency_grid(m)), dtype=float)


def autocovariances(psd, max_lag: int, m: int = DEFAULT_GRID) -> np.ndarray:
    """``gamma_h = int e^{ihw} S(w) dw`` for ``h = 0..max_lag`` by trapezoid."""
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    w = frequency_grid(m)
    s = _values(psd, m)
    h = np.arange(max_lag + 1)
    kernel = np.exp(1j * np.outer(h, w))
    gam = TWO_PI * (kernel @ s) / m
    gam[0] = gam[0].real
    return gam


def kl_divergence_values(s1: np.ndarray, s2: np.ndarray) -> float:
    """Grid mean of ``-log(s1/s2) - 1 + s1/s2`` (i.e. the PSD KL divergence)."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if np.any(s1 <= 0) or np.any(s2 <= 0):
        raise NonpositiveSpectrum("spectral densities must be strictly positive on the grid")
    d = (s1 - s2) / s2
    val = float(np.mean(d - np.log1p(d)))
    if val < -1e-12:
        raise ArithmeticError(f"negative KL divergence {val:g}")
    return max(val, 0.0)


def kl_divergence(psd1, psd2, m: int = DEFAULT_GRID) -> float:
    """Kullback-Leibler divergence between two spectral densities."""
    return kl_divergence_values(_values(psd1, m), _values(psd2, m))


def _require_derivatives(psd) -> ArPsd:
    if not getattr(psd, "has_derivatives", False):
        raise MissingDerivatives("this PSD carries no root-derivative evaluators")
    return psd


def _normalized_derivative(psd: ArPsd, group: tuple, w: np.ndarray, cache: dict) -> np.ndarray:
    """``S^{-1} D_group S`` on the grid, for groups of one to three indices."""
    if "l1" not in cache:
        cache["l1"] = psd.dlog(w)
    l1 = cache["l1"]
    if len(group) == 1:
        return l1[group[0]]
    if "l2" not in cache:
        cache["l2"] = psd.d2log(w)
    l2 = cache["l2"]
    if len(group) == 2:
        a, b = group
        return l2[a, b] + l1[a] * l1[b]
    if len(group) == 3:
        if "l3" not in cache:
            cache["l3"] = psd.d3log(w)
        a, b, c = group
        return (
            cache["l3"][a, b, c]
            + l2[a, b] * l1[c]
            + l2[a, c] * l1[b]
            + l2[b, c] * l1[a]
            + l1[a] * l1[b] * l1[c]
        )
    raise ValueError("derivative groups of more than three indices are not supported")


def m_quantity(psd, groups, m: int = DEFAULT_GRID) -> complex:
    """Grid average of a product of normalized derivatives of ``S``.

    ``groups`` is a sequence of index tuples; ``((a,), (b,))`` gives the Fisher
    entry ``g_ab`` and ``((a, b), (c,))`` the mixture-connection coefficient.
    """
    psd = _require_derivatives(psd)
    w = frequency_grid(m)
    cache: dict = {}
    prod = np.ones(m, dtype=complex)
    for g in groups:
        prod = prod * _normalized_derivative(psd, tuple(g), w, cache)
    return complex(prod.mean())


def fisher_tensor(psd, m: int = DEFAULT_GRID) -> np.ndarray:
    """Full ``2p x 2p`` Fisher matrix ``g_ab`` by quadrature."""
    psd = _require_derivatives(psd)
    dl = psd.dlog(frequency_grid(m))
    return dl @ dl.T / m


def skewness_tensor(psd, m: int = DEFAULT_GRID) -> np.ndarray:
    """``T_abc = 2 M_{a,b,c}`` by quadrature."""
    psd = _require_derivatives(psd)
    dl = psd.dlog(frequency_grid(m))
    return 2.0 * np.einsum("ak,bk,ck->abc", dl, dl, dl) / m


def m_connection(psd, m: int = DEFAULT_GRID) -> np.ndarray:
    """Mixture-connection coefficients ``Gamma^(m)_{ab,c} = M_{ab,c}``."""
    psd = _require_derivatives(psd)
    w = frequency_grid(m)
    dl = psd.dlog(w)
    d2 = psd.d2log(w) + dl[:, None, :] * dl[None, :, :]
    return np.einsum("abk,ck->abc", d2, dl) / m
