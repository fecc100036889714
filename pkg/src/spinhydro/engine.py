"""Infinite-temperature correlation dynamics.

Four routes to C(t) = Tr[A(t) B] / 2^L: dense exact diagonalization
(L <= 12), two stochastic trace estimators over random-phase vectors with
different propagators (an adaptive Lanczos stepper, and scipy's
expm_multiply), and a quadratic-fermion solution for the nearest-neighbor
double-quantum chain that reaches hundreds of sites.

Hamiltonians are expected in the units that make the time grid
dimensionless (t in 1/J when H is in units of J).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .linalg import apply_operator, to_dense, to_sparse
from .model import ChainModel
from .operators import OperatorSum, commutator
from .transport import CorrelationCurve

DENSE_LIMIT = 12
SPARSE_LIMIT = 24


class SizeLimitError(ValueError):
    """Chain too long for the requested method."""


@dataclass
class EvolutionJob:
    """One correlation-function computation Tr[A(t) B]/2^L on a time grid."""

    H: OperatorSum
    A: OperatorSum
    B: OperatorSum
    t_grid: np.ndarray
    method: str = "dense"  # dense | krylov | typicality | free_fermion
    n_vectors: int = 10
    tolerance: float = 1e-8
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if self.t_grid.ndim != 1 or len(self.t_grid) < 2:
            raise ValueError("t_grid must hold at least two times")
        if self.t_grid[0] != 0.0 or np.any(np.diff(self.t_grid) <= 0):
            raise ValueError("t_grid must increase strictly from 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def evolve_correlation(job: EvolutionJob) -> CorrelationCurve:
    """Dispatch to the requested evolution backend."""
    L = job.H.n_sites
    if job.method == "dense":
        if L > DENSE_LIMIT:
            raise SizeLimitError(f"dense method: L = {L} > {DENSE_LIMIT}")
        return _dense_correlation(job)
    if job.method in ("krylov", "typicality"):
        if L > SPARSE_LIMIT:
            raise SizeLimitError(f"{job.method} method: L = {L} > {SPARSE_LIMIT}")
        return _stochastic_correlation(job)
    if job.method == "free_fermion":
        raise ValueError(
            "free_fermion runs through free_fermion_autocorrelation(model, u, site, t_grid)")
    raise ValueError(f"unknown method {job.method!r}")


# ---- dense exact diagonalization ----

def dense_propagator(H: OperatorSum, t: float) -> np.ndarray:
    evals, evecs = np.linalg.eigh(to_dense(H))
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def _dense_correlation(job: EvolutionJob) -> CorrelationCurve:
    dim = 2 ** job.H.n_sites
    hm = to_dense(job.H)
    am = to_dense(job.A)
    bm = to_dense(job.B)
    # Hermitian operators with real matrices are symmetric, which kills the
    # sine part of the phase sum by (m, n) exchange
    real_path = (job.H.is_hermitian() and job.A.is_hermitian()
                 and job.B.is_hermitian()
                 and np.max(np.abs(hm.imag)) < 1e-14
                 and np.max(np.abs(am.imag)) < 1e-14
                 and np.max(np.abs(bm.imag)) < 1e-14)
    values = np.empty(len(job.t_grid))
    if real_path:
        # real-symmetric fast path: W real, so Tr[A(t)B] = sum W cos(dE t)
        evals, evecs = np.linalg.eigh(hm.real)
        a_t = evecs.T @ am.real @ evecs
        b_t = evecs.T @ bm.real @ evecs
        w = a_t * b_t.T
        de = evals[:, None] - evals[None, :]
        for i, t in enumerate(job.t_grid):
            values[i] = float(np.sum(w * np.cos(de * t))) / dim
    else:
        evals, evecs = np.linalg.eigh(hm)
        a_t = evecs.conj().T @ am @ evecs
        b_t = evecs.conj().T @ bm @ evecs
        w = a_t * b_t.T  # Tr[A(t) B] = sum_mn e^{i(Em-En)t} A_mn B_nm
        de = evals[:, None] - evals[None, :]
        for i, t in enumerate(job.t_grid):
            values[i] = float(np.real(np.sum(w * np.exp(1j * de * t)))) / dim
    return CorrelationCurve(times=job.t_grid.copy(), values=values,
                            stderrs=np.zeros_like(values),
                            label=job.label or "dense", n_samples=1)


# ---- stochastic trace estimation ----

def random_phase_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform-phase state: <psi|M|psi> is an unbiased estimate of Tr M / dim."""
    phases = rng.uniform(0.0, 2.0 * np.pi, size=dim)
    return np.exp(1j * phases) / math.sqrt(dim)


def lanczos_expm(hmat, psi: np.ndarray, dt: float, tol: float,
                 m_max: int = 40) -> np.ndarray:
    """exp(-i hmat dt) psi by adaptive Lanczos; splits dt when m_max is hit.

    The residual estimate is the weight leaked into the first vector outside
    the Krylov space; Hermitian hmat is assumed.
    """
    if dt == 0.0:
        return psi.copy()
    nrm = np.linalg.norm(psi)
    if nrm == 0.0:
        return psi.copy()
    v = psi / nrm
    basis = [v]
    alphas: list[float] = []
    betas: list[float] = []
    w = hmat @ v
    a = float(np.real(np.vdot(v, w)))
    w = w - a * v
    alphas.append(a)
    for m in range(1, m_max + 1):
        b = float(np.linalg.norm(w))
        if b < 1e-14:  # happy breakdown: exact in the current subspace
            return _krylov_apply(basis, alphas, betas, dt) * nrm
        v_next = w / b
        betas.append(b)
        basis.append(v_next)
        w = hmat @ v_next - b * basis[-2]
        a = float(np.real(np.vdot(v_next, w)))
        w = w - a * v_next
        alphas.append(a)
        if m >= 2:
            err = _krylov_error(alphas, betas, dt)
            if err < tol:
                return _krylov_apply(basis, alphas, betas, dt) * nrm
    half = dt / 2.0
    out = lanczos_expm(hmat, psi, half, tol / 2.0, m_max)
    return lanczos_expm(hmat, out, dt - half, tol / 2.0, m_max)


def _krylov_matrix(alphas, betas) -> np.ndarray:
    m = len(alphas)
    t = np.zeros((m, m))
    t[np.arange(m), np.arange(m)] = alphas
    if betas:
        t[np.arange(m - 1), np.arange(1, m)] = betas
        t[np.arange(1, m), np.arange(m - 1)] = betas
    return t

def _krylov_apply(basis, alphas, betas, dt) -> np.ndarray:
    from scipy.linalg import expm

    small = expm(-1j * dt * _krylov_matrix(alphas, betas))[:, 0]
    out = small[0] * basis[0]
    for c, vec in zip(small[1:], basis[1:]):
        out = out + c * vec
    return out


def _krylov_error(alphas, betas, dt) -> float:
    from scipy.linalg import expm

    col = expm(-1j * dt * _krylov_matrix(alphas, betas))[:, 0]
    return abs(betas[-1] * col[-1]) if betas else 0.0


def _stochastic_correlation(job: EvolutionJob) -> CorrelationCurve:
    return evolve_correlation_set(job.H, [(job.A, job.B)], job.t_grid,
                                  method=job.method, n_vectors=job.n_vectors,
                                  tolerance=job.tolerance, seed=job.seed,
                                  labels=[job.label or job.method])[0]


def evolve_correlation_set(H: OperatorSum, pairs, t_grid, method: str = "krylov",
                           n_vectors: int = 10, tolerance: float = 1e-8,
                           seed: int = 0, labels=None) -> list[CorrelationCurve]:
    """Stochastic Tr[A(t) B]/2^L for several (A, B) pairs at once.

    C(t) = <psi| e^{iHt} A e^{-iHt} B |psi> averaged over random-phase
    vectors; psi and one B-image per distinct B are co-propagated, so A(t)
    is never materialized and the propagation cost is shared across pairs.
    """
    if n_vectors < 1:
        raise ValueError("need at least one random vector")
    if method not in ("krylov", "typicality"):
        raise ValueError(f"unknown stochastic method {method!r}")
    pairs = list(pairs)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must increase strictly from 0")
    dim = 2 ** H.n_sites
    hmat = to_sparse(H)
    n_t = len(t_grid)
    step_tol = tolerance / n_t
    # share the propagated image between pairs with the same B operator
    b_index: dict[int, int] = {}
    b_ops = []
    for _, b in pairs:
        if id(b) not in b_index:
            b_index[id(b)] = len(b_ops)
            b_ops.append(b)
    samples = np.empty((len(pairs), n_vectors, n_t))
    samples_im = np.empty_like(samples)

    def step(vec, dt):
        if method == "krylov":
            return lanczos_expm(hmat, vec, dt, step_tol)
        return spla.expm_multiply(-1j * dt * hmat, vec)

    for v in range(n_vectors):
        rng = np.random.default_rng([int(seed), 211, v])
        psi = random_phase_vector(dim, rng)
        phis = [apply_operator(b, psi) for b in b_ops]
        t_prev = 0.0
        for i, t in enumerate(t_grid):
            dt = t - t_prev
            if dt > 0.0:
                psi = step(psi, dt)
                phis = [step(phi, dt) for phi in phis]
                t_prev = t
            for p, (a, b) in enumerate(pairs):
                val = np.vdot(psi, apply_operator(a, phis[b_index[id(b)]]))
                samples[p, v, i] = val.real
                samples_im[p, v, i] = val.imag
    curves = []
    for p in range(len(pairs)):
        values = samples[p].mean(axis=0)
        if n_vectors >= 2:
            stderrs = samples[p].std(axis=0, ddof=1) / math.sqrt(n_vectors)
        else:
            stderrs = np.zeros(n_t)
        label = labels[p] if labels else method
        curve = CorrelationCurve(times=t_grid.copy(), values=values,
                                 stderrs=stderrs, label=label,
                                 n_samples=n_vectors)
        curve.imag_residual = float(np.max(np.abs(samples_im[p].mean(axis=0))))
        curves.append(curve)
    return curves


def estimate_infinite_t_trace(A: OperatorSum, n_vectors: int,
                              seed: int = 0) -> tuple[float, float]:
    """Unbiased (Tr A / 2^L, stderr) from random-phase vectors."""
    if n_vectors < 2:
        raise ValueError("need n_vectors >= 2 for a standard error")
    dim = 2 ** A.n_sites
    vals = np.empty(n_vectors)
    for v in range(n_vectors):
        rng = np.random.default_rng([int(seed), 701, v])
        psi = random_phase_vector(dim, rng)
        vals[v] = np.real(np.vdot(psi, apply_operator(A, psi)))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_vectors))


# ---- quadratic-fermion route for the nearest-neighbor double-quantum chain ----

def free_fermion_autocorrelation(model: ChainModel, u: float, site: int,
                                 t_grid) -> CorrelationCurve:
    """Tr[S_z^site(t) S_z^site]/2^L for H = u sum_j J (SxSx - SySy)_{j,j+1}.

    A sublattice pi-rotation maps the double-quantum chain onto the XX chain,
    whose single-particle propagator G = exp(-i h t) gives
    C(t) = |G_site,site(t)|^2 / 4 at infinite temperature.  Times are in 1/J
    (the hopping matrix is built with J = 1); cost is polynomial in L.
    """
    if model.coupling_range != 1:
        raise ValueError("free-fermion route needs nearest-neighbor couplings only")
    if model.boundary != "open":
        raise ValueError("free-fermion route supports open chains")
    if u == 0.0:
        raise ValueError("coupling u must be nonzero")
    L = model.n_sites
    if not 0 <= site < L:
        raise ValueError(f"site {site} outside chain")
    t_grid = np.asarray(t_grid, dtype=float)
    hop = np.zeros((L, L))
    idx = np.arange(L - 1)
    hop[idx, idx + 1] = u / 2.0
    hop[idx + 1, idx] = u / 2.0
    evals, evecs = np.linalg.eigh(hop)
    weight = evecs[site, :] ** 2
    g = (weight[None, :] * np.exp(-1j * np.outer(t_grid, evals))).sum(axis=1)
    values = np.abs(g) ** 2 / 4.0
    return CorrelationCurve(times=t_grid.copy(), values=values,
                            stderrs=np.zeros_like(values),
                            label=f"free_fermion_z{site}", n_samples=1)


# ---- averaging over disorder realizations ----

def combine_curves(curves: list[CorrelationCurve], label: str = "") -> CorrelationCurve:
    """Mean over realizations; stderr adds scatter and per-curve errors in
    quadrature."""
    if not curves:
        raise ValueError("nothing to combine")
    times = curves[0].times
    for c in curves[1:]:
        if not np.array_equal(c.times, times):
            raise ValueError("curves live on different time grids")
    vals = np.stack([c.values for c in curves])
    errs = np.stack([c.stderrs for c in curves])
    n = len(curves)
    mean = vals.mean(axis=0)
    stat = np.sqrt((errs ** 2).sum(axis=0)) / n
    scatter = vals.std(axis=0, ddof=1) / math.sqrt(n) if n >= 2 else np.zeros_like(mean)
    return CorrelationCurve(times=times.copy(), values=mean,
                            stderrs=np.sqrt(stat ** 2 + scatter ** 2),
                            label=label or curves[0].label,
                            n_samples=sum(c.n_samples for c in curves))


# ---- conserved-quantity helpers ----

def is_conserved(H: OperatorSum, G: OperatorSum, tol: float = 1e-10) -> bool:
    return commutator(H, G).norm() < tol


def constant_global_curve(G: OperatorSum, t_grid, label: str = "") -> CorrelationCurve:
    """Autocorrelation of a conserved sum: constant Tr[G^2]/2^L."""
    from .operators import normalized_trace_product

    t_grid = np.asarray(t_grid, dtype=float)
    val = normalized_trace_product(G, G)
    return CorrelationCurve(times=t_grid.copy(),
                            values=np.full(len(t_grid), val),
                            stderrs=np.zeros(len(t_grid)),
                            label=label or "conserved", n_samples=1)
