"""Quantitative quantum de Finetti construction in finite dimension.

States live on the bosonic space H_sym^N, H = C^d, in the occupation-number basis: multi-indices
n = (n_1, ..., n_d) with |n| = N, ordered lexicographically from (N, 0, ..., 0) downwards.
The basis vector |n> embeds into H^{⊗N} as sqrt(prod n_i! / N!) times the sum of all words with
those occupations.

One-particle partial traces are the Kraus maps X -> (1/N) Σ_i a_i X a_i^†, whose adjoint
Y -> (1/N) Σ_i a_i^† Y a_i is Y -> P_sym (Y ⊗ 1) P_sym restricted to the symmetric space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb, lgamma

import numpy as np
from scipy import special

from meanfield_lab.errors import ConvergenceError, DomainError

MAX_SYM_DIM = 20000
MAX_QUAD_NODES = 2_000_000


class ConventionError(RuntimeError):
    """Two evaluations of the same moment matrix disagree (carries both)."""

    def __init__(self, message, formula, reference):
        super().__init__(message)
        self.formula = formula
        self.reference = reference


def sym_dim(N, d):
    if N < 0 or d < 1:
        raise DomainError("need N >= 0 and d >= 1")
    dim = comb(N + d - 1, d - 1)
    if dim > MAX_SYM_DIM:
        raise DomainError(f"symmetric space dimension {dim} exceeds {MAX_SYM_DIM}")
    return dim


def _compositions(N, d):
    if d == 1:
        yield (N,)
        return
    for first in range(N, -1, -1):
        for rest in _compositions(N - first, d - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def sym_basis(N, d):
    """Occupation tuples of H_sym^N (lexicographic, largest first) and their index map."""
    sym_dim(N, d)
    basis = tuple(_compositions(N, d))
    return basis, {n: i for i, n in enumerate(basis)}


@lru_cache(maxsize=None)
def _annihilators(N, d):
    """a_i : H_sym^N -> H_sym^{N-1} as dense matrices."""
    src, _ = sym_basis(N, d)
    _, dst = sym_basis(N - 1, d)
    ops = []
    for i in range(d):
        A = np.zeros((len(dst), len(src)))
        for col, n in enumerate(src):
            if n[i]:
                m = n[:i] + (n[i] - 1,) + n[i + 1 :]
                A[dst[m], col] = np.sqrt(n[i])
        ops.append(A)
    return ops


@dataclass
class SymmetricState:
    N: int
    d: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        dim = sym_dim(self.N, self.d)
        if self.matrix.shape != (dim, dim):
            raise DomainError(f"matrix must be {dim} x {dim}")

    def validate(self, tol=1e-12):
        M = self.matrix
        if np.max(np.abs(M - M.conj().T)) > tol:
            raise DomainError("state is not Hermitian")
        if np.linalg.eigvalsh(M).min() < -tol:
            raise DomainError("state is not positive semidefinite")
        if abs(np.trace(M).real - 1) > tol:
            raise DomainError("state does not have unit trace")
        return self

    @property
    def dim(self):
        return self.matrix.shape[0]


def product_vector(u, N):
    """u^{⊗N} in the occupation basis: sqrt(N!/prod n_i!) prod u_i^{n_i}."""
    u = np.asarray(u, dtype=complex)
    basis, _ = sym_basis(N, len(u))
    occ = np.array(basis, dtype=float)
    logc = 0.5 * (lgamma(N + 1) - special.gammaln(occ + 1).sum(axis=1))
    return np.exp(logc) * np.prod(u[None, :] ** occ, axis=1)


def product_state(u, N):
    u = np.asarray(u, dtype=complex)
    u = u / np.linalg.norm(u)
    v = product_vector(u, N)
    return SymmetricState(N, len(u), np.outer(v, v.conj()))


def random_mixed_state(N, d, seed=0, rank=None):
    """Γ = A A^† / Tr with A a complex Ginibre matrix (dim x rank)."""
    rng = np.random.default_rng(seed)
    dim = sym_dim(N, d)
    rank = dim if rank is None else rank
    A = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    G = A @ A.conj().T
    return SymmetricState(N, d, G / np.trace(G).real)


def _trace_out_one(X, n, d):
    ops = _annihilators(n, d)
    return sum(A @ X @ A.T for A in ops) / n


def _embed_one(Y, n, d):
    """P_sym (Y ⊗ 1) P_sym from n-1 to n particles."""
    ops = _annihilators(n, d)
    return sum(A.T @ Y @ A for A in ops) / n


def reduced_dm(G: SymmetricState, k) -> SymmetricState:
    """k-particle reduced density matrix (trace one) on H_sym^k."""
    if not 0 <= k <= G.N:
        raise DomainError(f"need 0 <= k <= N, got k={k}, N={G.N}")
    X = G.matrix
    for n in range(G.N, k, -1):
        X = _trace_out_one(X, n, G.d)
    return SymmetricState(k, G.d, X)


def sym_tensor_identity(Y, l, k, d):
    """P_sym (Y ⊗ 1^{⊗(k-l)}) P_sym on H_sym^k, for Y on H_sym^l."""
    X = np.asarray(Y, dtype=complex)
    for n in range(l + 1, k + 1):
        X = _embed_one(X, n, d)
    return X


def _partial_overlaps(N, k, d):
    """Matrices C_n (dim_k x dim_N), one per |n> in H_sym^{N+k}, with (<m| ⊗ 1)|n> = Σ C_n[:, m].

    (<m| ⊗ 1)|n> = sqrt(prod_i C(n_i, m_i) / C(N+k, N)) |n - m> when m <= n componentwise.
    """
    big, _ = sym_basis(N + k, d)
    small, small_idx = sym_basis(N, d)
    _, rest_idx = sym_basis(k, d)
    norm = comb(N + k, N)
    for n in big:
        C = np.zeros((len(rest_idx), len(small)))
        for j, m in enumerate(small):
            if all(a >= b for a, b in zip(n, m)):
                c = 1
                for a, b in zip(n, m):
                    c *= comb(a, b)
                C[rest_idx[tuple(a - b for a, b in zip(n, m))], j] = np.sqrt(c / norm)
        yield C


def exact_moments(G: SymmetricState, k):
    """∫ |u^{⊗k}><u^{⊗k}| dμ_N = dim_N / dim_{N+k} Tr_N[(Γ ⊗ 1^{⊗k}) P_sym^{N+k}].

    Uses ∫ |u^{⊗n}><u^{⊗n}| du = P_sym^n / dim_n and P_sym^{N+k} = Σ_n |n><n|.
    """
    if not 0 <= k <= G.N:
        raise DomainError(f"need 0 <= k <= N, got k={k}, N={G.N}")
    N, d = G.N, G.d
    gt = G.matrix.T
    out = np.zeros((sym_dim(k, d),) * 2, dtype=complex)
    for C in _partial_overlaps(N, k, d):
        out += C @ gt @ C.T
    return sym_dim(N, d) / sym_dim(N + k, d) * out


def ckmr_formula(G: SymmetricState, k):
    """C(N+k+d-1, k)^{-1} Σ_l C(N, l) C(k, l) P_sym(γ^(l) ⊗ 1)P_sym.

    The symmetric tensor product γ ⊗_s 1 is read as C(k, l) P_sym(γ ⊗ 1)P_sym, i.e. the sum
    over the C(k, l) choices of which l factors carry γ; this is the normalization that makes
    the identity agree with the sphere quadrature.
    """
    if not 0 <= k <= G.N:
        raise DomainError(f"need 0 <= k <= N, got k={k}, N={G.N}")
    N, d = G.N, G.d
    total = np.zeros((sym_dim(k, d),) * 2, dtype=complex)
    gam = G.matrix
    rdms = {N: gam}
    for n in range(N, 0, -1):
        gam = _trace_out_one(gam, n, d)
        rdms[n - 1] = gam
    for l in range(k + 1):
        total += comb(N, l) * comb(k, l) * sym_tensor_identity(rdms[l], l, k, d)
    return total / comb(N + k + d - 1, k)


@dataclass
class SphereQuadrature:
    """Nodes u_j on the unit sphere of C^d with weights summing to one (uniform measure)."""

    nodes: np.ndarray  # (n, d) complex
    weights: np.ndarray
    degree: int  # exact for polynomials of this degree in u and in conj(u)

    @property
    def size(self):
        return len(self.weights)


def _simplex_rule(d, n):
    """Gauss rule for the uniform measure on {t >= 0, Σ t = 1} in d barycentric coordinates.

    Collapsed coordinates: t_1 = x_1, t_2 = (1 - x_1) x_2, ...; the Jacobian (1-x_1)^{d-2} ...
    is absorbed by Gauss-Jacobi weights.
    """
    if d == 1:
        return np.ones((1, 1)), np.ones(1)
    factors = []
    for j in range(d - 1):
        beta = d - 2 - j
        x, w = special.roots_jacobi(n, beta, 0.0)  # weight (1-x)^beta on [-1, 1]
        factors.append(((x + 1) / 2, w / w.sum()))
    pts, wts = [], []
    for combo in itertools.product(*[range(n)] * (d - 1)):
        rem, t, weight = 1.0, [], 1.0
        for j, idx in enumerate(combo):
            xj, wj = factors[j][0][idx], factors[j][1][idx]
            t.append(rem * xj)
            rem *= 1 - xj
            weight *= wj
        t.append(rem)
        pts.append(t)
        wts.append(weight)
    return np.array(pts), np.array(wts)


def sphere_quadrature(d, degree):
    """Product rule exact for ∫ P(u, conj u) du with P of degree <= ``degree`` in each of u, conj u.

    u_i = sqrt(t_i) e^{i φ_i}: t uniform on the simplex, φ uniform. Phase-averaged monomials are
    polynomials of degree <= degree in t, so n_t = floor(degree/2) + 1 Gauss nodes per collapsed
    coordinate suffice; phase frequencies are at most ``degree`` so degree + 1 trapezoid nodes
    per relative phase are exact. The global phase is fixed (integrands are phase invariant).
    """
    if d < 1 or degree < 0:
        raise DomainError("need d >= 1 and degree >= 0")
    n_t = degree // 2 + 1
    n_phi = degree + 1
    count = n_t ** (d - 1) * n_phi ** (d - 1)
    if count > MAX_QUAD_NODES:
        raise DomainError(f"quadrature would need {count} nodes")
    t, wt = _simplex_rule(d, n_t)
    phis = 2 * np.pi * np.arange(n_phi) / n_phi
    combos = list(itertools.product(phis, repeat=d - 1))
    grid = np.array(combos, dtype=float).reshape(len(combos), d - 1)
    phase = np.exp(1j * np.column_stack([np.zeros(len(grid)), grid]))
    nodes = (np.sqrt(t)[:, None, :] * phase[None, :, :]).reshape(-1, d)
    weights = (wt[:, None] * np.full(len(grid), 1.0 / len(grid))[None, :]).ravel()
    return SphereQuadrature(nodes, weights, degree)


@dataclass
class DeFinettiMeasure:
    """dμ_N as a density against the uniform probability measure on the sphere."""

    state: SymmetricState
    quadrature: SphereQuadrature
    values: np.ndarray  # density at the quadrature nodes

    def density(self, u):
        u = np.asarray(u, dtype=complex)
        u = u / np.linalg.norm(u)
        v = product_vector(u, self.state.N)
        return float(np.real(sym_dim(self.state.N, self.state.d) * (v.conj() @ self.state.matrix @ v)))

    @property
    def mass(self):
        return float(self.quadrature.weights @ self.values)

    def moment(self, k):
        """Quadrature value of ∫ |u^{⊗k}><u^{⊗k}| dμ_N."""
        V = np.array([product_vector(u, k) for u in self.quadrature.nodes])
        return (V.T * (self.quadrature.weights * self.values)) @ V.conj()


def lower_symbol(G: SymmetricState, quad: SphereQuadrature | None = None, k=0, tol=1e-8):
    """Lower symbol u -> dim_N <u^{⊗N}, Γ u^{⊗N}> evaluated on a sphere rule.

    The default rule is exact for moments up to order k. The mass is compared against the same
    rule with one more degree; a gap above ``tol`` raises ConvergenceError.
    """
    N, d = G.N, G.d
    if quad is None:
        quad = sphere_quadrature(d, N + k)
    V = np.array([product_vector(u, N) for u in quad.nodes])
    dim = sym_dim(N, d)
    vals = dim * np.real(np.einsum("ji,ik,jk->j", V.conj(), G.matrix, V))
    mu = DeFinettiMeasure(G, quad, vals)
    finer = sphere_quadrature(d, quad.degree + 1)
    Vf = np.array([product_vector(u, N) for u in finer.nodes])
    mass_f = float(finer.weights @ (dim * np.real(np.einsum("ji,ik,jk->j", Vf.conj(), G.matrix, Vf))))
    if abs(mu.mass - mass_f) > tol or abs(mu.mass - 1) > max(tol, 1e-6):
        raise ConvergenceError(f"sphere quadrature not converged: mass {mu.mass} vs refined {mass_f}")
    return mu


def ckmr_moments(G: SymmetricState, k, check="exact", tol=1e-8):
    """γ̃^(k) from the explicit combinatorial formula, cross-checked before it is returned.

    check = "exact" compares with the projector identity, "quadrature" with the sphere rule,
    None skips the check. A mismatch raises ConventionError carrying both matrices.
    """
    formula = ckmr_formula(G, k)
    if check is None:
        return formula
    if check == "exact":
        ref = exact_moments(G, k)
    elif check == "quadrature":
        ref = lower_symbol(G, k=k).moment(k)
    else:
        raise DomainError(f"unknown check {check!r}")
    if np.max(np.abs(formula - ref)) > tol:
        raise ConventionError("moment formula disagrees with the reference", formula, ref)
    return formula


def trace_norm(X):
    X = np.asarray(X)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (X + X.conj().T))).sum())


@dataclass
class DeFinettiError:
    trace_distance: float
    bound: float
    N: int
    d: int
    k: int


def definetti_error(G: SymmetricState, k) -> DeFinettiError:
    """‖γ^(k) - γ̃^(k)‖_1 together with the bound 2k(d+2k)/N, which it must satisfy."""
    if not 1 <= k <= G.N:
        raise DomainError(f"need 1 <= k <= N, got k={k}, N={G.N}")
    gam = reduced_dm(G, k).matrix
    dist = trace_norm(gam - ckmr_moments(G, k))
    bound = 2 * k * (G.d + 2 * k) / G.N
    if dist > bound + 1e-12:
        raise ConvergenceError(f"trace distance {dist} exceeds the bound {bound}")
    return DeFinettiError(dist, bound, G.N, G.d, k)


def to_tensor(v, N, d):
    """Embed a vector of H_sym^N into H^{⊗N} as an array of shape (d,)*N."""
    _, index = sym_basis(N, d)
    out = np.zeros((d,) * N, dtype=complex)
    for word in itertools.product(range(d), repeat=N):
        occ = tuple(int(c) for c in np.bincount(word, minlength=d))
        out[word] = v[index[occ]] * np.exp(0.5 * (special.gammaln(np.array(occ) + 1).sum() - lgamma(N + 1)))
    return out
