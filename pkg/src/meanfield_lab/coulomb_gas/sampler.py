"""Random-walk Metropolis for mean-field Coulomb and Laughlin plasmas.

The target is exp(-U) with
    U(X) = pair_coef * sum_{i<j} w(x_i - x_j) + sum_i [a |x_i|^s + b log|x_i|].
Coulomb gas (Gibbs weight exp(-beta H_n / 2), ordered-pair H_n): pair_coef = beta and the
one-body term is beta n V / 2.  Laughlin plasma (weight exp(-N H_N)): pair_coef =
2 ell N / (N - 1), a = N, s = 2, b = -2 m N / (N - 1).

Sites are visited in a fixed cyclic order (one sweep = n proposals).  Random numbers are
drawn from a numpy Generator in fixed-size chunks outside the compiled kernel, so a chain
is a deterministic function of its seed.  In 2D the kernel stores squared distances and
accumulates the log-interaction change as one log per block of eight distance ratios.

Binary sample dumps: little-endian int64 header (n, d, count) followed by count * n * d
little-endian float64 coordinates in C order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from meanfield_lab.coulomb_gas.energy import PowerLogPotential, equilibrium_measure_radial
from meanfield_lab.errors import DomainError

CHUNK_MOVES = 1 << 18
WARMUP_BLOCK = 10  # sweeps between step-size adjustments
TARGET_ACCEPTANCE = (0.3, 0.5)


@numba.njit(cache=True, nogil=True)
def _delta_2d(xs, ys, r2m, i, nx, ny, pair, a, s_half, b, tmp, rat):
    n = xs.shape[0]
    xi = xs[i]
    yi = ys[i]
    old = xi * xi + yi * yi
    new = nx * nx + ny * ny
    if s_half == 1.0:
        de = a * (new - old)
    else:
        de = a * (new**s_half - old**s_half)
    if b != 0.0:
        de += 0.5 * b * (np.log(new) - np.log(old))
    row = r2m[i]
    for j in range(n):
        dx = nx - xs[j]
        dy = ny - ys[j]
        v = dx * dx + dy * dy
        tmp[j] = v
        rat[j] = v / row[j]
    rat[i] = 1.0
    tmp[i] = 1.0
    acc = 0.0
    for c in range(rat.shape[0] // 8):
        k = 8 * c
        p = ((rat[k] * rat[k + 1]) * (rat[k + 2] * rat[k + 3])) * (
            (rat[k + 4] * rat[k + 5]) * (rat[k + 6] * rat[k + 7]))
        acc += np.log(p)
    return de - 0.5 * pair * acc


@numba.njit(cache=True, nogil=True)
def _energy_2d(pos, r2m, pair, a, s_half, b):
    n = pos.shape[0]
    u = 0.0
    for i in range(n):
        r2 = pos[i, 0] ** 2 + pos[i, 1] ** 2
        u += a * r2**s_half
        if b != 0.0:
            u += 0.5 * b * np.log(r2)
        for j in range(i + 1, n):
            u -= 0.5 * pair * np.log(r2m[i, j])
    return u


@numba.njit(cache=True, nogil=True)
def _run_2d(pos, r2m, noise, unif, step, pair, a, s_half, b, start, origin, thin_moves,
            out_pos, out_u, n_out):
    n = pos.shape[0]
    xs = pos[:, 0].copy()
    ys = pos[:, 1].copy()
    tmp = np.empty(n)
    rat = np.ones(((n + 7) // 8) * 8)
    accepted = 0
    for t in range(unif.shape[0]):
        g = start + t
        i = g % n
        nx = xs[i] + step * noise[t, 0]
        ny = ys[i] + step * noise[t, 1]
        de = _delta_2d(xs, ys, r2m, i, nx, ny, pair, a, s_half, b, tmp, rat)
        if de <= 0.0 or unif[t] < np.exp(-de):
            xs[i] = nx
            ys[i] = ny
            for j in range(n):
                r2m[i, j] = tmp[j]
            for j in range(n):
                r2m[j, i] = tmp[j]
            accepted += 1
        if thin_moves > 0 and (g - origin + 1) % thin_moves == 0 and n_out < out_u.shape[0]:
            out_pos[n_out, :, 0] = xs
            out_pos[n_out, :, 1] = ys
            pos[:, 0] = xs
            pos[:, 1] = ys
            out_u[n_out] = _energy_2d(pos, r2m, pair, a, s_half, b)
            n_out += 1
    pos[:, 0] = xs
    pos[:, 1] = ys
    return accepted, n_out


@numba.njit(cache=True, nogil=True)
def _delta_3d(pos, rinv, i, nx, ny, nz, pair, a, s_half, b, tmp):
    n = pos.shape[0]
    old = pos[i, 0] ** 2 + pos[i, 1] ** 2 + pos[i, 2] ** 2
    new = nx * nx + ny * ny + nz * nz
    de = a * (new**s_half - old**s_half)
    if b != 0.0:
        de += 0.5 * b * (np.log(new) - np.log(old))
    acc = 0.0
    for j in range(n):
        if j == i:
            tmp[j] = 0.0
            continue
        dx = nx - pos[j, 0]
        dy = ny - pos[j, 1]
        dz = nz - pos[j, 2]
        v = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
        tmp[j] = v
        acc += v - rinv[i, j]
    return de + pair * acc


@numba.njit(cache=True, nogil=True)
def _energy_3d(pos, rinv, pair, a, s_half, b):
    n = pos.shape[0]
    u = 0.0
    for i in range(n):
        r2 = pos[i, 0] ** 2 + pos[i, 1] ** 2 + pos[i, 2] ** 2
        u += a * r2**s_half
        if b != 0.0:
            u += 0.5 * b * np.log(r2)
        for j in range(i + 1, n):
            u += pair * rinv[i, j]
    return u


@numba.njit(cache=True, nogil=True)
def _run_3d(pos, rinv, noise, unif, step, pair, a, s_half, b, start, origin, thin_moves,
            out_pos, out_u, n_out):
    n = pos.shape[0]
    tmp = np.empty(n)
    accepted = 0
    for t in range(unif.shape[0]):
        g = start + t
        i = g % n
        nx = pos[i, 0] + step * noise[t, 0]
        ny = pos[i, 1] + step * noise[t, 1]
        nz = pos[i, 2] + step * noise[t, 2]
        de = _delta_3d(pos, rinv, i, nx, ny, nz, pair, a, s_half, b, tmp)
        if de <= 0.0 or unif[t] < np.exp(-de):
            pos[i, 0] = nx
            pos[i, 1] = ny
            pos[i, 2] = nz
            for j in range(n):
                rinv[i, j] = tmp[j]
                rinv[j, i] = tmp[j]
            accepted += 1
        if thin_moves > 0 and (g - origin + 1) % thin_moves == 0 and n_out < out_u.shape[0]:
            out_pos[n_out] = pos
            out_u[n_out] = _energy_3d(pos, rinv, pair, a, s_half, b)
            n_out += 1
    return accepted, n_out


def _pair_matrix(pos):
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.sum(diff**2, axis=-1)
    if pos.shape[1] == 2:
        np.fill_diagonal(r2, 1.0)
        return r2
    with np.errstate(divide="ignore"):
        rinv = 1.0 / np.sqrt(r2)
    np.fill_diagonal(rinv, 0.0)
    return rinv


@dataclass
class GibbsChain:
    """State of one Metropolis chain targeting exp(-U); see the module docstring."""

    pair_coef: float
    external: PowerLogPotential  # one-body term already multiplied by its prefactor
    positions: np.ndarray
    seed: int | np.random.SeedSequence
    step: float
    energy_scale: float = 1.0  # physical energy = energy_scale * U
    moves_done: int = 0
    accepted: int = 0
    proposed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)
    _pairs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2 or self.positions.shape[1] not in (2, 3):
            raise DomainError("positions must be an (n, 2) or (n, 3) array")
        self.external.check_confining()
        self.rng = np.random.default_rng(self.seed)
        self._pairs = _pair_matrix(self.positions)

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def d(self):
        return self.positions.shape[1]

    @property
    def acceptance(self):
        return self.accepted / self.proposed if self.proposed else float("nan")

    def _params(self):
        e = self.external
        return float(self.pair_coef), float(e.a), float(e.s / 2), float(e.b)

    def log_target(self, points=None):
        """-U at ``points`` (defaults to the current state)."""
        x = self.positions if points is None else np.asarray(points, dtype=float)
        pair, a, s_half, b = self._params()
        if x.shape[1] == 2:
            return -float(_energy_2d(x, _pair_matrix(x), pair, a, s_half, b))
        return -float(_energy_3d(x, _pair_matrix(x), pair, a, s_half, b))

    def energy_change(self, i, new_point):
        """U(after moving particle i to new_point) - U(now), via the incremental kernel."""
        pair, a, s_half, b = self._params()
        tmp = np.empty(self.n)
        p = np.asarray(new_point, dtype=float)
        if self.d == 2:
            rat = np.ones(((self.n + 7) // 8) * 8)
            return float(_delta_2d(self.positions[:, 0].copy(), self.positions[:, 1].copy(),
                                   self._pairs, i, p[0], p[1], pair, a, s_half, b, tmp, rat))
        return float(_delta_3d(self.positions, self._pairs, i, p[0], p[1], p[2], pair, a,
                               s_half, b, tmp))

    def energy(self):
        return -self.energy_scale * self.log_target()

    def _advance(self, moves, thin_moves, out_pos, out_u, n_out):
        pair, a, s_half, b = self._params()
        kernel = _run_2d if self.d == 2 else _run_3d
        origin = self.moves_done
        done = 0
        acc_total = 0
        while done < moves:
            m = min(CHUNK_MOVES, moves - done)
            noise = self.rng.standard_normal((m, self.d))
            unif = self.rng.random(m)
            acc, n_out = kernel(self.positions, self._pairs, noise, unif, self.step, pair, a,
                                s_half, b, self.moves_done, origin, thin_moves, out_pos, out_u, n_out)
            self.moves_done += m
            done += m
            acc_total += acc
        return acc_total, n_out


def acceptance_probability(chain: GibbsChain, x, y):
    """Metropolis acceptance probability for the move x -> y (symmetric proposal)."""
    return min(1.0, float(np.exp(chain.log_target(y) - chain.log_target(x))))


@dataclass
class ChainSamples:
    samples: np.ndarray  # (count, n, d)
    energies: np.ndarray  # physical energy of each snapshot
    acceptance: float
    step: float

    @property
    def radii(self):
        return np.linalg.norm(self.samples, axis=-1).ravel()


def metropolis_chain(chain: GibbsChain, sweeps: int, thin: int = 1, warmup: int = 0) -> ChainSamples:
    """Run ``warmup`` tuning sweeps, then ``sweeps`` sweeps recording every ``thin``-th."""
    if sweeps < 0 or warmup < 0 or thin < 1:
        raise DomainError("need sweeps >= 0, warmup >= 0, thin >= 1")
    n, d = chain.n, chain.d
    dummy_pos = np.empty((0, n, d))
    dummy_u = np.empty(0)
    lo, hi = TARGET_ACCEPTANCE
    left = warmup
    while left > 0:
        block = min(WARMUP_BLOCK, left)
        acc, _ = chain._advance(block * n, 0, dummy_pos, dummy_u, 0)
        rate = acc / (block * n)
        if rate < lo:
            chain.step *= 0.8
        elif rate > hi:
            chain.step *= 1.25
        left -= block
    count = sweeps // thin
    out_pos = np.empty((count, n, d))
    out_u = np.empty(count)
    start = chain.moves_done
    acc, n_out = chain._advance(sweeps * n, thin * n, out_pos, out_u, 0)
    chain.moves_done = start + sweeps * n
    chain.accepted += acc
    chain.proposed += sweeps * n
    return ChainSamples(samples=out_pos[:n_out], energies=chain.energy_scale * out_u[:n_out],
                        acceptance=acc / max(sweeps * n, 1), step=chain.step)


def _uniform_ball(rng, n, d, r_in, r_out):
    u = rng.random(n)
    if d == 2:
        r = np.sqrt(r_in**2 + u * (r_out**2 - r_in**2))
    else:
        r = np.cbrt(r_in**3 + u * (r_out**3 - r_in**3))
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return r[:, None] * v


def coulomb_chain(n, beta, V: PowerLogPotential, d=2, seed=0, step=None) -> GibbsChain:
    """Chain for the Gibbs state exp(-beta H_n / 2)."""
    if n < 1 or not beta > 0:
        raise DomainError("need n >= 1 and beta > 0")
    V.check_confining()
    ext = PowerLogPotential(beta * n / 2 * V.a, V.s, beta * n / 2 * V.b)
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    init_rng = np.random.default_rng(ss.spawn(1)[0])
    try:
        mu = equilibrium_measure_radial(V, d, 1.0)
        r_in, r_out = mu.r_inner, mu.r_outer
    except DomainError:
        r_in, r_out = 0.0, 1.0
    pos = _uniform_ball(init_rng, n, d, r_in, r_out)
    if step is None:
        step = 0.5 * r_out / n ** (1 / d)
    return GibbsChain(pair_coef=beta, external=ext, positions=pos, seed=ss, step=step,
                      energy_scale=2 / beta)


@dataclass(frozen=True)
class LaughlinPlasmaSpec:
    N: int
    ell: int = 2
    m: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise DomainError("Laughlin plasma needs N >= 2")
        if self.ell < 1 or int(self.ell) != self.ell:
            raise DomainError("ell must be a positive integer")
        if self.m < 0 or int(self.m) != self.m:
            raise DomainError("m must be a non-negative integer")


def laughlin_chain(spec: LaughlinPlasmaSpec, seed=0, step=None) -> GibbsChain:
    """Chain for the scaled density exp(-N H_N) of the Laughlin quasi-hole state."""
    N, ell, m = spec.N, spec.ell, spec.m
    ext = PowerLogPotential(float(N), 2.0, -2.0 * m * N / (N - 1))
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    init_rng = np.random.default_rng(ss.spawn(1)[0])
    r_in = np.sqrt(m / (N - 1))
    r_out = np.sqrt(m / (N - 1) + ell)
    pos = _uniform_ball(init_rng, N, 2, r_in, r_out)
    if step is None:
        step = 0.5 * r_out / np.sqrt(N)
    return GibbsChain(pair_coef=2 * ell * N / (N - 1), external=ext, positions=pos, seed=ss,
                      step=step, energy_scale=1 / N)


def thread_count(threads=None):
    if threads is None:
        threads = int(os.environ.get("MEANFIELD_LAB_THREADS", "1"))
    return max(1, int(threads))


def run_chains(make_chain, master_seed, n_chains, sweeps, thin=1, warmup=0, threads=None):
    """Run independent chains with seeds SeedSequence(master_seed).spawn(n_chains).

    Each chain is a deterministic function of its own seed, so results do not depend on
    the thread count.
    """
    seeds = np.random.SeedSequence(master_seed).spawn(n_chains)
    chains = [make_chain(s) for s in seeds]
    work = lambda c: metropolis_chain(c, sweeps, thin, warmup)
    nt = thread_count(threads)
    if nt == 1 or n_chains == 1:
        return [work(c) for c in chains]
    with ThreadPoolExecutor(max_workers=nt) as ex:
        return list(ex.map(work, chains))


def write_samples(path, samples):
    samples = np.asarray(samples, dtype="<f8")
    count, n, d = samples.shape
    with open(path, "wb") as fh:
        fh.write(np.array([n, d, count], dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(samples).tobytes())


def read_samples(path):
    with open(path, "rb") as fh:
        n, d, count = np.frombuffer(fh.read(24), dtype="<i8")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(int(count), int(n), int(d))
