import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specshrink.errors import CommonRootError, InvalidRoots, MissingDerivatives
from specshrink.spectral_model import (
    ArmaSpec,
    ArRoots,
    autocovariances,
    fisher_tensor,
    frequency_grid,
    kl_divergence,
    m_quantity,
    polynomial_roots,
    psd_from_arma,
    psd_from_roots,
    roots_to_coeffs,
)


def disk_point(r_max=0.9):
    return st.builds(
        lambda r, t: complex(r_max * np.sqrt(r) * np.cos(2 * np.pi * t), r_max * np.sqrt(r) * np.sin(2 * np.pi * t)),
        st.floats(0, 1),
        st.floats(0, 1),
    )


def distinct_roots(p_max=3, sep=0.05):
    return st.lists(disk_point(), min_size=1, max_size=p_max).filter(
        lambda r: len(r) == 1 or min(abs(a - b) for i, a in enumerate(r) for b in r[i + 1 :]) > sep
    )


# --- validation ------------------------------------------------------------


@pytest.mark.parametrize("bad", [[1.0], [0.3 + 0.99j], [np.nan], []])
def test_roots_outside_disk_rejected(bad):
    with pytest.raises(InvalidRoots):
        ArRoots(bad)


def test_duplicate_roots_rejected():
    with pytest.raises(InvalidRoots, match="duplicate"):
        ArRoots([0.5, 0.5])


def test_arma_common_root_rejected():
    with pytest.raises(CommonRootError):
        ArmaSpec(a=[-0.5], b=[-0.5])


def test_frequency_grid_requires_power_of_two():
    with pytest.raises(ValueError):
        frequency_grid(100)
    w = frequency_grid(8)
    assert w[0] == -np.pi and np.allclose(np.diff(w), 2 * np.pi / 8)


# --- PSD examples ----------------------------------------------------------


def test_white_noise_psd_is_flat():
    w = np.linspace(-np.pi, np.pi, 17)
    assert np.allclose(psd_from_roots([0.0])(w), 1 / (2 * np.pi))


def test_ar1_psd_at_zero():
    assert np.isclose(psd_from_roots([0.5])(0.0), 2 / np.pi)


def test_complex_root_psd_is_not_even():
    s = psd_from_roots([0.5j])
    assert not np.isclose(s(1.0), s(-1.0))
    # peak sits at the root's argument
    w = frequency_grid(1024)
    assert np.isclose(w[np.argmax(s(w))], np.pi / 2, atol=2 * np.pi / 1024)


def test_arma_matches_ar_form():
    w = frequency_grid(256)
    ar = psd_from_arma(ArmaSpec(a=[-0.5], b=[]))
    assert np.allclose(ar(w), psd_from_roots([0.5])(w))


def test_ma_spectrum_ratio():
    s = psd_from_arma(ArmaSpec(a=[], b=[0.5]))
    assert np.isclose(s(0.0) / s(np.pi), 9.0)


def test_arma_has_no_root_derivatives():
    with pytest.raises(MissingDerivatives):
        fisher_tensor(psd_from_arma(ArmaSpec(a=[-0.5], b=[0.2])))


# --- coefficients ------------------------------------------------------------


def test_roots_to_coeffs_examples():
    assert np.allclose(roots_to_coeffs([0.5]), [-0.5])
    assert np.allclose(roots_to_coeffs([0.5, -0.5]), [0.0, -0.25])


@settings(max_examples=60, deadline=None)
@given(distinct_roots())
def test_coeff_round_trip(roots):
    back = polynomial_roots(roots_to_coeffs(roots))
    for r in roots:
        assert np.min(np.abs(back - r)) < 1e-8


# --- autocovariances -----------------------------------------------------------


def test_white_noise_autocovariances():
    g = autocovariances(psd_from_roots([0.0]), 3)
    assert np.allclose(g, [1, 0, 0, 0], atol=1e-13)


def test_ar1_autocovariances():
    g = autocovariances(psd_from_roots([0.5]), 2)
    assert np.allclose(g, [4 / 3, 2 / 3, 1 / 3], atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(disk_point(0.9))
def test_ar1_autocovariance_ratio_is_root(xi):
    g = autocovariances(psd_from_roots([xi]), 3, m=8192)
    assert np.allclose(g[1:], xi * g[:-1], atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(distinct_roots())
def test_psd_positive_and_szego_mean(roots):
    s = psd_from_roots(roots)(frequency_grid(4096))
    assert np.all(s > 0)
    # unit innovation variance: mean log(2 pi S) vanishes
    assert abs(np.mean(np.log(2 * np.pi * s))) < 1e-10


# --- KL divergence -----------------------------------------------------------


def test_kl_closed_forms_and_asymmetry():
    ar = psd_from_roots([0.5])
    wn = psd_from_roots([0.0])
    assert np.isclose(kl_divergence(ar, wn), 1 / 3, atol=1e-12)
    assert np.isclose(kl_divergence(wn, ar), 1 / 4, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(distinct_roots(2), distinct_roots(2))
def test_kl_nonnegative_and_zero_on_self(r1, r2):
    s1, s2 = psd_from_roots(r1), psd_from_roots(r2)
    assert kl_divergence(s1, s1) == 0.0
    assert kl_divergence(s1, s2) >= 0.0


def test_kl_second_order_matches_fisher():
    xi, d = 0.4 + 0.3j, 1e-3 * (1 + 1j) / np.sqrt(2)
    kl = kl_divergence(psd_from_roots([xi]), psd_from_roots([xi + d]))
    g = 1 / (1 - abs(xi) ** 2)
    assert np.isclose(kl / (g * abs(d) ** 2), 1.0, rtol=1e-2)


# --- quadrature tensors --------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(distinct_roots())
def test_fisher_tensor_matches_closed_form(roots):
    r = np.array(roots)
    p = r.size
    F = fisher_tensor(psd_from_roots(r))
    closed = 1 / (1 - np.outer(r, r.conj()))
    assert np.allclose(F[:p, p:], closed, atol=1e-10)
    # no pure holomorphic block for a Kaehler metric
    assert np.allclose(F[:p, :p], 0, atol=1e-10)
    # Hermitian: g_{i jbar} = conj(g_{j ibar})
    assert np.allclose(F[:p, p:], F[:p, p:].conj().T, atol=1e-12)


def test_m_quantity_gives_fisher_entry():
    psd = psd_from_roots([0.5])
    assert np.isclose(m_quantity(psd, [(0,), (1,)]), 4 / 3, atol=1e-12)
    assert np.isclose(m_quantity(psd_from_roots([0.0]), [(0,), (1,)]), 1.0, atol=1e-12)


def test_quadrature_converges_with_grid():
    psd = psd_from_roots([0.6 + 0.2j, -0.3j])
    a = fisher_tensor(psd, 2048)
    b = fisher_tensor(psd, 4096)
    assert np.max(np.abs(a - b)) < 1e-12


def test_metric_kaehler_symmetry():
    # d_k g_{i jbar} = d_i g_{k jbar} using finite differences of quadrature metrics
    r = np.array([0.3 + 0.2j, -0.4 + 0.1j])
    p, h = 2, 1e-5

    def g(rr):
        return fisher_tensor(psd_from_roots(rr))[:p, p:]

    def dk(k):
        e = np.zeros(p, complex)
        e[k] = h
        dx = (g(r + e) - g(r - e)) / (2 * h)
        dy = (g(r + 1j * e) - g(r - 1j * e)) / (2 * h)
        return 0.5 * (dx - 1j * dy)

    D = np.stack([dk(k) for k in range(p)])  # D[k, i, j]
    assert np.allclose(D, D.transpose(1, 0, 2), atol=1e-7)


def test_dlog_matches_finite_difference():
    r = np.array([0.3 + 0.4j, -0.2])
    w = frequency_grid(64)
    dl = psd_from_roots(r).dlog(w)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2, complex)
        e[k] = h
        fx = (np.log(psd_from_roots(r + e)(w)) - np.log(psd_from_roots(r - e)(w))) / (2 * h)
        fy = (np.log(psd_from_roots(r + 1j * e)(w)) - np.log(psd_from_roots(r - 1j * e)(w))) / (2 * h)
        assert np.allclose(dl[k], 0.5 * (fx - 1j * fy), atol=1e-7)
        assert np.allclose(dl[k + 2], 0.5 * (fx + 1j * fy), atol=1e-7)
