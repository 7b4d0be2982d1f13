import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from meanfield_lab import ConvergenceError, DomainError
from meanfield_lab import definetti as df
from meanfield_lab.definetti import (
    ConventionError,
    SymmetricState,
    ckmr_formula,
    ckmr_moments,
    definetti_error,
    exact_moments,
    lower_symbol,
    product_state,
    product_vector,
    random_mixed_state,
    reduced_dm,
    sphere_quadrature,
    sym_basis,
    sym_dim,
    to_tensor,
)


def _tensor_rdm(G, k):
    # brute-force oracle: embed eigenvectors into H^{⊗N} and contract the last N-k factors
    N, d = G.N, G.d
    w, V = np.linalg.eigh(G.matrix)
    out = np.zeros((d**k, d**k), dtype=complex)
    for lam, v in zip(w, V.T):
        T = to_tensor(v, N, d).reshape(d**k, d ** (N - k))
        out += lam * T @ T.conj().T
    # back to the symmetric basis
    J = np.array([to_tensor(e, k, d).ravel() for e in np.eye(sym_dim(k, d))]).T
    return J.conj().T @ out @ J, np.linalg.norm(out - J @ J.conj().T @ out @ J @ J.conj().T)


def _sym_unitary(U, N):
    d = U.shape[0]
    J = np.array([to_tensor(e, N, d).ravel() for e in np.eye(sym_dim(N, d))]).T
    UN = U
    for _ in range(N - 1):
        UN = np.kron(UN, U)
    return J.conj().T @ UN @ J


@pytest.mark.parametrize("N,d,dim", [(2, 2, 3), (3, 2, 4), (0, 5, 1), (4, 3, 15)])
def test_sym_dim(N, d, dim):
    assert sym_dim(N, d) == dim
    assert len(sym_basis(N, d)[0]) == dim


def test_sym_dim_errors():
    with pytest.raises(DomainError):
        sym_dim(10**6, 50)
    with pytest.raises(DomainError):
        sym_dim(-1, 2)


def test_basis_order():
    assert sym_basis(2, 2)[0] == ((2, 0), (1, 1), (0, 2))


def test_product_vector_normalized_and_embeds():
    u = np.array([0.6, 0.8j])
    v = product_vector(u, 3)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-14)
    T = to_tensor(v, 3, 2)
    assert np.allclose(T, np.einsum("i,j,k->ijk", u, u, u), atol=1e-14)


def test_reduced_dm_of_product_state():
    u = np.array([1.0, 1j, -0.5]) / np.linalg.norm([1.0, 1j, -0.5])
    G = product_state(u, 5)
    for k in range(6):
        assert np.allclose(reduced_dm(G, k).matrix, product_state(u, k).matrix, atol=1e-13)


@pytest.mark.parametrize("N,d,k", [(4, 2, 2), (5, 3, 2), (6, 2, 3), (3, 4, 1)])
def test_reduced_dm_matches_tensor_contraction(N, d, k):
    G = random_mixed_state(N, d, seed=N + d)
    ref, leak = _tensor_rdm(G, k)
    assert leak < 1e-12  # the brute-force reduced matrix lives on the symmetric space
    assert np.linalg.norm(reduced_dm(G, k).matrix - ref) <= 1e-12
    assert np.trace(reduced_dm(G, k).matrix).real == pytest.approx(1.0, abs=1e-12)
    # tracing one more particle
    assert np.linalg.norm(reduced_dm(reduced_dm(G, k), k - 1).matrix - reduced_dm(G, k - 1).matrix) <= 1e-12


def test_reduced_dm_k_too_large():
    with pytest.raises(DomainError):
        reduced_dm(random_mixed_state(3, 2), 4)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 3))
def test_unitary_covariance(seed, k):
    N, d = 4, 2
    U = unitary_group.rvs(d, random_state=seed)
    G = random_mixed_state(N, d, seed=seed)
    UN = _sym_unitary(U, N)
    Gu = SymmetricState(N, d, UN @ G.matrix @ UN.conj().T)
    Uk = _sym_unitary(U, k)
    lhs = reduced_dm(Gu, k).matrix
    rhs = Uk @ reduced_dm(G, k).matrix @ Uk.conj().T
    assert np.linalg.norm(lhs - rhs) <= 1e-10


def test_state_validation():
    random_mixed_state(3, 2).validate()
    with pytest.raises(DomainError):
        SymmetricState(2, 2, np.diag([1.0, 0.5, -0.5])).validate()
    with pytest.raises(DomainError):
        SymmetricState(2, 2, np.eye(3)).validate()
    with pytest.raises(DomainError):
        SymmetricState(2, 2, np.eye(2))


# sphere quadrature and lower symbol

@pytest.mark.parametrize("d", [1, 2, 3])
def test_sphere_rule_moments(d):
    quad = sphere_quadrature(d, 6)
    assert quad.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(np.linalg.norm(quad.nodes, axis=1), 1.0)
    # E|u_1|^{2a} = a! (d-1)! / (a+d-1)! for the uniform sphere
    from math import factorial
    for a in range(4):
        exact = factorial(a) * factorial(d - 1) / factorial(a + d - 1)
        assert quad.weights @ np.abs(quad.nodes[:, 0]) ** (2 * a) == pytest.approx(exact, abs=1e-13)


def test_lower_symbol_peaks_at_e1():
    G = product_state([1, 0], 6)
    mu = lower_symbol(G)
    assert mu.density([1, 0]) == pytest.approx(7.0)
    assert mu.values.max() <= mu.density([1, 0]) + 1e-12
    assert mu.density(np.exp(0.7j) * np.array([1, 0])) == pytest.approx(7.0)


def test_lower_symbol_maximally_mixed_is_flat():
    N, d = 5, 3
    G = SymmetricState(N, d, np.eye(sym_dim(N, d)) / sym_dim(N, d))
    mu = lower_symbol(G)
    assert np.allclose(mu.values, 1.0, atol=1e-12)


@pytest.mark.parametrize("N", [1, 4, 7, 10])
def test_lower_symbol_unit_mass(N):
    mu = lower_symbol(random_mixed_state(N, 2, seed=N))
    assert mu.mass == pytest.approx(1.0, abs=1e-6)
    assert np.all(mu.values >= -1e-12)


def test_lower_symbol_detects_underresolved_rule():
    G = random_mixed_state(6, 2, seed=1)
    with pytest.raises(ConvergenceError):
        lower_symbol(G, sphere_quadrature(2, 2))


# moments

def test_k0_moment():
    assert ckmr_moments(random_mixed_state(3, 2), 0) == pytest.approx(np.ones((1, 1)))


def test_two_particle_e1_example():
    G = product_state([1, 0], 2)
    quad = lower_symbol(G, k=1).moment(1)
    got = ckmr_moments(G, 1, check="quadrature")
    assert np.max(np.abs(got - quad)) <= 1e-6
    # hand value: 3 E|u_1|^6 = 3/4 on S^3
    assert np.allclose(got, np.diag([0.75, 0.25]), atol=1e-14)


@pytest.mark.parametrize("N,d,k", [(2, 2, 2), (4, 2, 1), (4, 2, 2), (8, 2, 2), (3, 3, 2), (16, 2, 1)])
def test_formula_matches_quadrature(N, d, k):
    G = random_mixed_state(N, d, seed=7)
    quad = lower_symbol(G, k=k).moment(k)
    assert np.max(np.abs(ckmr_formula(G, k) - quad)) <= 1e-6
    assert np.max(np.abs(exact_moments(G, k) - quad)) <= 1e-6


def test_moments_psd_trace_and_consistency():
    G = random_mixed_state(6, 3, seed=4)
    prev = None
    for k in range(4):
        M = ckmr_moments(G, k)
        assert np.trace(M).real == pytest.approx(1.0, abs=1e-6)
        assert np.linalg.eigvalsh(M).min() >= -1e-12
        if prev is not None:
            assert np.allclose(reduced_dm(SymmetricState(k, 3, M), k - 1).matrix, prev, atol=1e-10)
        prev = M


def test_mixture_linearity():
    A = random_mixed_state(5, 2, seed=1)
    B = product_state([0.3, 0.4j], 5)
    t = 0.37
    C = SymmetricState(5, 2, t * A.matrix + (1 - t) * B.matrix)
    for k in (1, 2):
        assert np.allclose(reduced_dm(C, k).matrix, t * reduced_dm(A, k).matrix + (1 - t) * reduced_dm(B, k).matrix)
        assert np.allclose(ckmr_moments(C, k), t * ckmr_moments(A, k) + (1 - t) * ckmr_moments(B, k))
    assert lower_symbol(C).values == pytest.approx(t * lower_symbol(A).values + (1 - t) * lower_symbol(B).values)


def test_convention_mismatch_raises(monkeypatch):
    G = random_mixed_state(4, 2, seed=3)
    monkeypatch.setattr(df, "exact_moments", lambda G, k: np.zeros((k + 1, k + 1)))
    with pytest.raises(ConventionError) as info:
        ckmr_moments(G, 1)
    assert info.value.formula.shape == info.value.reference.shape


# trace-norm error

def test_product_state_example():
    res = definetti_error(product_state(np.array([0.6, 0.8]), 20), 1)
    assert res.bound == pytest.approx(0.4)
    # for a product state the error is 2(d-1)/(N+d)
    assert res.trace_distance == pytest.approx(2 / 22, abs=1e-12)
    assert definetti_error(product_state([0, 0, 1], 4), 1).trace_distance == pytest.approx(4 / 7, abs=1e-12)


@pytest.mark.parametrize("N", [4, 8, 16])
@pytest.mark.parametrize("k", [1, 2])
def test_bound_random_states(N, k):
    for seed in range(100):
        res = definetti_error(random_mixed_state(N, 2, seed=seed), k)
        assert res.trace_distance <= 2 * k * (2 + 2 * k) / N


def test_error_decay_rate():
    Ns = np.array([4, 8, 16])
    errs = [definetti_error(product_state([0.6, 0.8j], int(N)), 1).trace_distance for N in Ns]
    slope = np.polyfit(np.log(Ns), np.log(errs), 1)[0]
    assert -1.3 <= slope <= -0.7


def test_error_k_range():
    with pytest.raises(DomainError):
        definetti_error(random_mixed_state(3, 2), 0)
