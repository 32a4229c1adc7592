import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specshrink.errors import InvalidPrior, InvalidRoots, NearSingular
from specshrink.kahler_geometry import (
    PriorSpec,
    ScalarField,
    alpha_parallel_check,
    closed_form_risk_gap,
    dlog_jeffreys_fd,
    dlog_phi,
    fisher_metric_ar,
    hermite_moment_check,
    inner_product,
    jeffreys_prior,
    kappa_prior,
    laplacian_apply,
    leading_risk_gap,
    log_phi,
    orthogonal_part_H,
    parallel_part_G,
    parallel_part_closed_form,
    phi,
    phi_field,
    prior_normalizer,
    q_limit,
    random_interior_roots,
    verify_eigenfunction,
    wirtinger_gradient,
    wirtinger_mixed_hessian,
)

seeds = st.integers(0, 2**32 - 1)


def roots_for(p, seed, r_max=0.85):
    return random_interior_roots(p, np.random.default_rng(seed), r_max=r_max)


# --- metric and priors ------------------------------------------------------------


def test_metric_examples():
    assert np.isclose(fisher_metric_ar([0.0]).g[0, 0], 1.0)
    assert np.isclose(fisher_metric_ar([0.5]).g[0, 0], 4 / 3)


def test_full_metric_inverse():
    met = fisher_metric_ar([0.3 + 0.1j, -0.5j])
    assert np.allclose(met.full() @ met.full_inverse(), np.eye(4), atol=1e-12)


def test_metric_near_boundary_and_near_collision():
    with pytest.raises(InvalidRoots):
        fisher_metric_ar([0.999])
    with pytest.raises(NearSingular):
        fisher_metric_ar([0.5, 0.5 + 1e-8])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), seeds)
def test_jeffreys_is_metric_determinant(p, seed):
    r = roots_for(p, seed)
    assert np.isclose(jeffreys_prior(r), np.linalg.det(fisher_metric_ar(r).g).real, rtol=1e-9)


def test_phi_examples():
    assert phi([0.0]) == 1.0
    assert np.isclose(phi([0.5]), 0.75)
    assert np.isclose(phi([0.5, -0.5]), 0.75 * 0.75 * 1.25 * 1.25)


def test_prior_spec_validation():
    with pytest.raises(InvalidPrior):
        PriorSpec(kind="flat")
    with pytest.raises(InvalidPrior):
        PriorSpec(kind="kappa", kappa=None)
    with pytest.raises(InvalidPrior):
        PriorSpec(kind="jeffreys", kappa=0.0)
    j = PriorSpec.jeffreys()
    assert j.effective_kappa == 1.0 and not j.proper and j.predictive_exists
    assert PriorSpec.from_kappa(-1).proper
    assert not PriorSpec.from_kappa(2.0).predictive_exists


def test_kappa_one_prior_is_jeffreys():
    r = [0.3, -0.4j]
    assert np.isclose(kappa_prior(r, PriorSpec.from_kappa(1.0)), jeffreys_prior(r))


# --- normalizer --------------------------------------------------------------------


@pytest.mark.parametrize("kappa", [-1.0, 0.0, 0.5])
def test_p1_normalizer_closed_form(kappa):
    res = prior_normalizer(PriorSpec.from_kappa(kappa), 1)
    assert res.finite and abs(res.value - np.pi / (1 - kappa)) < 1e-6


@pytest.mark.parametrize("kappa", [1.0, 1.5])
def test_p1_normalizer_diverges(kappa):
    res = prior_normalizer(PriorSpec.from_kappa(kappa), 1)
    assert not res.finite and np.isinf(res.value)


def test_p2_normalizer_against_polar_quadrature():
    # integrand is polynomial in radii and trigonometric in angles at kappa = -1
    x, w = np.polynomial.legendre.leggauss(12)
    rad, rw = 0.5 * (x + 1), 0.5 * w * 0.5 * (x + 1)
    ang = 2 * np.pi * np.arange(16) / 16
    R1, A1, R2, A2 = np.meshgrid(rad, ang, rad, ang, indexing="ij")
    W = np.einsum("i,k->ik", rw, np.ones(16) * 2 * np.pi / 16)
    W = W[:, :, None, None] * W[None, None, :, :]
    a, b = R1 * np.exp(1j * A1), R2 * np.exp(1j * A2)
    ph = (1 - abs(a) ** 2) * (1 - abs(b) ** 2) * abs(1 - a * b.conj()) ** 2
    exact = float(np.sum(W * ph * abs(a - b) ** 2))
    res = prior_normalizer(PriorSpec.from_kappa(-1.0), 2, samples=400_000, seed=3)
    assert res.finite and abs(res.value - exact) < 4 * res.stderr


# --- Wirtinger calculus --------------------------------------------------------------


def test_wirtinger_gradient_of_modulus_squared():
    f = ScalarField(lambda r: float(abs(r[0]) ** 2))
    g = wirtinger_gradient(f, [0.3 + 0.4j])
    assert np.allclose(g, [0.3 - 0.4j, 0.3 + 0.4j], atol=1e-8)
    H = wirtinger_mixed_hessian(f, [0.3 + 0.4j])
    assert np.allclose(H, [[1.0]], atol=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), seeds)
def test_dlog_phi_matches_finite_difference(p, seed):
    r = roots_for(p, seed)
    fd = wirtinger_gradient(ScalarField(log_phi), r)[:p]
    assert np.allclose(dlog_phi(r), fd, atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), seeds)
def test_jacobi_formula(p, seed):
    # g^{i jbar} d_k g_{i jbar} = d_k log det g
    r = roots_for(p, seed)
    met = fisher_metric_ar(r)
    g = met.g
    lhs = np.empty(p, complex)
    for k in range(p):
        dg = np.zeros_like(g)
        dg[k, :] = r.conj() * g[k, :] ** 2
        lhs[k] = np.einsum("ji,ij->", met.inverse, dg)
    assert np.allclose(lhs, dlog_jeffreys_fd(r), atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 2), seeds, st.sampled_from([-1.0, 0.5, 2.0]))
def test_laplacian_of_powers(p, seed, a):
    r = roots_for(p, seed)
    met = fisher_metric_ar(r)
    d = dlog_phi(r)
    quad = np.real(d @ met.inverse.T @ d.conj())
    lhs = laplacian_apply(phi_field(a), r) / phi(r) ** a
    rhs = a * (-p * (p + 1)) + 2 * a * (a - 1) * quad
    assert abs(lhs - rhs) < 1e-5 * max(1.0, abs(rhs))


@pytest.mark.parametrize("p,tol", [(1, 1e-5), (2, 1e-4), (3, 1e-3)])
def test_phi_is_eigenfunction(p, tol):
    rep = verify_eigenfunction(p, points=10, seed=p)
    assert rep.max_residual < tol and abs(rep.eigenvalue - p * (p + 1)) < tol


def test_perturbed_phi_is_not_eigenfunction():
    assert verify_eigenfunction(2, points=5, seed=0, phi_exponent=1.01).max_residual > 1e-3


def test_random_interior_roots_are_separated():
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = random_interior_roots(3, rng, r_max=0.5, min_sep=0.1)
        assert np.all(np.abs(r) <= 0.5)
        assert np.abs(r[:, None] - r[None, :])[np.triu_indices(3, 1)].min() > 0.1


# --- risk gaps ------------------------------------------------------------------------


def test_closed_form_gap_special_values():
    r = [0.4 - 0.2j, 0.1j]
    assert closed_form_risk_gap(1.0, r) == 0.0
    assert np.isclose(closed_form_risk_gap(-1.0, r), 2 * 2 * 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), seeds, st.floats(-1.5, 1.5))
def test_two_risk_gap_routes_agree(p, seed, kappa):
    r = roots_for(p, seed, r_max=0.8)
    assert abs(leading_risk_gap(PriorSpec.from_kappa(kappa), r) - closed_form_risk_gap(kappa, r)) < 1e-6


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 2), seeds, st.floats(-1.5, 1.5))
def test_finite_difference_risk_gap_route(p, seed, kappa):
    r = roots_for(p, seed, r_max=0.8)
    gap = leading_risk_gap(PriorSpec.from_kappa(kappa), r, method="fd")
    assert abs(gap - closed_form_risk_gap(kappa, r)) < 1e-6


def test_risk_gap_rejects_unknown_method():
    with pytest.raises(ValueError):
        leading_risk_gap(PriorSpec.from_kappa(0.0), [0.3], method="spline")


def test_jeffreys_gap_is_zero():
    assert leading_risk_gap(PriorSpec.jeffreys(), [0.5]) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.95, 0.95), st.floats(-1.5, 1.5))
def test_q_limit_matches_closed_form_gap(xi, kappa):
    assert np.isclose(q_limit(xi, kappa), closed_form_risk_gap(kappa, [xi]), rtol=1e-12, atol=1e-12)


def test_q_limit_examples_and_sign():
    assert q_limit(0.0, -1.0) == 4.0
    assert q_limit(0.5, 1.0) == 0.0
    xs = np.linspace(-0.9, 0.9, 19)
    assert np.all(q_limit(xs, -1.0) == 4.0)
    # for kappa in (-1, 1) the limit is positive everywhere
    assert np.all(q_limit(xs, 0.5) > 0)
    with pytest.raises(InvalidRoots):
        q_limit(1.0, 0.0)


# --- parallel and orthogonal parts -------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 2), seeds)
def test_parallel_part_vanishes_for_shrinkage_prior(p, seed):
    r = roots_for(p, seed)
    assert np.max(np.abs(parallel_part_G(r, PriorSpec.from_kappa(-1.0)).values)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 2), seeds, st.floats(-1.5, 1.5))
def test_parallel_part_reduced_form(p, seed, kappa):
    r = roots_for(p, seed)
    G = parallel_part_G(r, PriorSpec.from_kappa(kappa)).values
    assert np.allclose(G, parallel_part_closed_form(r, kappa), atol=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 2), seeds, st.sampled_from([-1.0, 0.0, 0.5]))
def test_parallel_and_orthogonal_parts_are_orthogonal(p, seed, kappa):
    r = roots_for(p, seed)
    H = orthogonal_part_H(r)
    assert abs(inner_product(parallel_part_G(r, PriorSpec.from_kappa(kappa)), H)) < 1e-8
    assert inner_product(H, H) >= 0


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 2), seeds)
def test_alpha_parallel_identity(p, seed):
    assert alpha_parallel_check(roots_for(p, seed)) < 1e-6


def test_parallel_part_zero_root_jeffreys_free():
    # at the origin every kappa-prior shares the Jeffreys gradient
    G = parallel_part_G([0.0], PriorSpec.from_kappa(0.3)).values
    assert np.max(np.abs(G)) < 1e-12


@pytest.mark.parametrize("p", [1, 2])
def test_hermite_moments(p):
    met = fisher_metric_ar(roots_for(p, 7))
    rep = hermite_moment_check(met, 100_000, seed=5)
    assert rep.passed, rep
