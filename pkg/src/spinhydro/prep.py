"""Random-observable engineering from disorder dephasing.

Two routes produce the same objects: closed forms (site coefficients
sin(w_j tau / 3) after the 1/3 field scaling of the decoupling cycle) and a
step-by-step dense simulation of the full preparation sequence with phase
cycling, usable up to L ~ 12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.linalg import expm

from .linalg import to_dense
from .model import BathModel, ChainModel, DisorderRealization, build_dipolar, build_field
from .operators import OperatorSum, X, Y, Z, normalized_trace_product
from .sequence import US_TO_RAD, wahuha8, Pulse, Delay

FIELD_SCALE = 1.0 / 3.0  # longitudinal field surviving the decoupling cycle
REFOCUS_CYCLE_US = 60.0  # cycle time of the decoupling block at tau0 = 5 us

_AXIS_OF = {"x": X, "y": Y, "z": Z}


@dataclass(frozen=True)
class RandomObservable:
    """A random-coefficient local observable and its provenance.

    kind is one of rZ_x / rZ_y / rZ_z (single-site Zeeman type, operator
    sum_j alpha_j S_axis^j) or rDQ_y / rDQ_z (two-site double-quantum type,
    (3/4) sum_j alpha'_j pair_j).  Coefficients are reproducible from the
    realization and encoding time.
    """

    kind: str
    coeffs: np.ndarray
    operator: OperatorSum
    tau_ms: float
    realization: DisorderRealization

    def norm(self) -> float:
        return self.operator.norm()


def _axis_from_kind(kind: str) -> int:
    return _AXIS_OF[kind.rsplit("_", 1)[1]]


def _pair_axes(kind: str) -> tuple[int, int]:
    # rDQ_y pairs (SzSz - SxSx); rDQ_z pairs (SxSx - SySy)
    return {"rDQ_y": (Z, X), "rDQ_z": (X, Y)}[kind]


def closed_form_rz(dis: DisorderRealization, tau_ms: float, axis: str = "z") -> RandomObservable:
    """Random Zeeman observable sum_j sin(w_j tau / 3) S_axis^j."""
    if tau_ms <= 0:
        raise ValueError("encoding time must be positive")
    ax = _AXIS_OF[axis]
    alphas = np.sin(dis.w * tau_ms * FIELD_SCALE)
    L = len(dis.w)
    terms = {((j, ax),): alphas[j] / 2.0 for j in range(L)}
    return RandomObservable(kind=f"rZ_{axis}", coeffs=alphas,
                            operator=OperatorSum(L, terms), tau_ms=tau_ms,
                            realization=dis)


def closed_form_rdq(dis: DisorderRealization, tau_ms: float, axis: str = "y",
                    model: ChainModel | None = None,
                    long_range: bool = False) -> RandomObservable:
    """Random double-quantum observable.

    Nearest-neighbor mode: (3/4) sum_j sin((w_j + w_{j+1}) tau / 3) *
    (S_a S_a - S_b S_b) on bonds (j, j+1).  Long-range mode keeps every pair
    with the 1/|k-j|^3 weight (needs a model for distances/boundary).
    """
    if tau_ms <= 0:
        raise ValueError("encoding time must be positive")
    kind = f"rDQ_{axis}"
    a_ax, b_ax = _pair_axes(kind)
    L = len(dis.w)
    omega_tau = dis.w * tau_ms * FIELD_SCALE
    terms: dict = {}
    if long_range:
        if model is None:
            raise ValueError("long-range mode needs a ChainModel for distances")
        coeffs = np.zeros(L)
        for j, k, r in model.pairs():
            amp = 0.75 * math.sin(omega_tau[j] + omega_tau[k]) / r ** 3
            terms[((j, a_ax), (k, a_ax))] = terms.get(((j, a_ax), (k, a_ax)), 0.0) + amp / 4.0
            terms[((j, b_ax), (k, b_ax))] = terms.get(((j, b_ax), (k, b_ax)), 0.0) - amp / 4.0
            if r == 1:
                coeffs[min(j, k)] = math.sin(omega_tau[j] + omega_tau[k])
    else:
        periodic = model is not None and model.boundary == "periodic"
        n_bonds = L if periodic else L - 1
        coeffs = np.zeros(n_bonds)
        for j in range(n_bonds):
            k = (j + 1) % L
            coeffs[j] = math.sin(omega_tau[j] + omega_tau[k])
            lo, hi = (j, k) if j < k else (k, j)
            amp = 0.75 * coeffs[j]
            terms[((lo, a_ax), (hi, a_ax))] = terms.get(((lo, a_ax), (hi, a_ax)), 0.0) + amp / 4.0
            terms[((lo, b_ax), (hi, b_ax))] = terms.get(((lo, b_ax), (hi, b_ax)), 0.0) - amp / 4.0
    return RandomObservable(kind=kind, coeffs=coeffs,
                            operator=OperatorSum(L, terms), tau_ms=tau_ms,
                            realization=dis)


def thermalization_projection(rho: OperatorSum, H: OperatorSum) -> OperatorSum:
    """Energy-conserving endpoint of free thermalization: rho -> H Tr(rho H)/Tr(H^2).

    Idempotent; orthogonal inputs map to zero.
    """
    h2 = normalized_trace_product(H, H)
    if h2 <= 0.0:
        raise ValueError("cannot project onto a zero Hamiltonian")
    return H * (normalized_trace_product(rho, H) / h2)


def observable_to_json(obs: RandomObservable, include_operator: bool = False) -> dict:
    """Compact record: kind, encoding time, seed and fields reproduce the
    closed-form observable; the full operator dump is optional."""
    from .operators import to_text

    out = {
        "kind": obs.kind,
        "tau_ms": obs.tau_ms,
        "seed": obs.realization.seed,
        "w_krad": [float(x) for x in obs.realization.w],
        "coeffs": [float(x) for x in obs.coeffs],
    }
    if include_operator:
        out["operator"] = to_text(obs.operator)
    return out


def observable_from_json(data: dict) -> RandomObservable:
    dis = DisorderRealization(w=np.asarray(data["w_krad"], dtype=float),
                              seed=int(data["seed"]))
    kind = data["kind"]
    axis = kind.rsplit("_", 1)[1]
    if kind.startswith("rZ"):
        obs = closed_form_rz(dis, float(data["tau_ms"]), axis=axis)
    elif kind.startswith("rDQ"):
        obs = closed_form_rdq(dis, float(data["tau_ms"]), axis=axis)
    else:
        raise ValueError(f"unknown observable kind {kind!r}")
    if "coeffs" in data and not np.allclose(obs.coeffs, data["coeffs"],
                                            atol=1e-12):
        raise ValueError("stored coefficients disagree with the closed form")
    return obs


# ---- spatial statistics of the random coefficients ----

def spatial_correlation_analytic(bath: BathModel, tau_ms: float, j: int, k: int,
                                 n_sites: int) -> float:
    """E[alpha_j alpha_k] for the geometric bath, via the product formula

    (1/2) prod_k cos[(J_j,k - J_k,k) tau/6] - (1/2) prod_k cos[(J_j,k + J_k,k) tau/6].

    The tau/6 combines the 1/3 field scaling with the +-1/2 bath spins.
    """
    if bath.mode != "geometric":
        raise ValueError("analytic spatial correlation needs the geometric bath")
    mat = bath.coupling_matrix(n_sites)
    jj, kk = mat[j], mat[k]
    arg = tau_ms / 6.0
    return 0.5 * float(np.prod(np.cos((jj - kk) * arg))
                       - np.prod(np.cos((jj + kk) * arg)))


def spatial_correlation_mc(bath: BathModel, tau_ms: float, j: int, k: int,
                           n_sites: int, n_samples: int,
                           seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo E[alpha_j alpha_k] over bath configurations; (mean, stderr)."""
    mat = bath.coupling_matrix(n_sites)
    rng = np.random.default_rng([int(seed), 97])
    spins = rng.choice([-0.5, 0.5], size=(n_samples, mat.shape[1]))
    wj = spins @ mat[j]
    wk = spins @ mat[k]
    prod = np.sin(wj * tau_ms * FIELD_SCALE) * np.sin(wk * tau_ms * FIELD_SCALE)
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(n_samples))


# ---- dense step-by-step sequence simulation ----

def _kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats)


def _collective_rotation(L: int, nx: float, ny: float, nz: float, angle: float) -> np.ndarray:
    sx = np.array([[0, 1], [1, 0]], dtype=complex) / 2
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
    sz = np.array([[1, 0], [0, -1]], dtype=complex) / 2
    u2 = expm(-1j * angle * (nx * sx + ny * sy + nz * sz))
    return _kron_all([u2] * L)


def _field_unitary(w: np.ndarray, t_us: float, scale: float = 1.0) -> np.ndarray:
    """Diagonal evolution exp(-i sum_j scale w_j S_z^j t)."""
    L = len(w)
    dim = 2 ** L
    idx = np.arange(dim)
    phase = np.zeros(dim)
    for j in range(L):
        bit = (idx >> (L - 1 - j)) & 1
        # S_z eigenvalue is +1/2 on the cleared bit (first basis state)
        phase = phase + np.where(bit, -0.5, 0.5) * (scale * w[j] * t_us * US_TO_RAD)
    return np.exp(-1j * phase)  # diagonal only


@dataclass
class PrepSimulation:
    """Outcome of the dense preparation-sequence simulation."""

    kind: str
    rho: np.ndarray
    coeffs: np.ndarray
    tau_ms: float
    n_cycles: int
    observable: RandomObservable

    def magnitude(self) -> float:
        """Normalized Frobenius magnitude of the engineered deviation."""
        dim = self.rho.shape[0]
        return float(np.sqrt(max(np.real(np.trace(self.rho @ self.rho)), 0.0) / dim))

    def signal_with(self, other: OperatorSum) -> float:
        return float(np.real(np.trace(self.rho @ to_dense(other))) / self.rho.shape[0])

    def overlap_with(self, other: OperatorSum) -> float:
        om = to_dense(other)
        dim = self.rho.shape[0]
        num = np.real(np.trace(self.rho @ om)) / dim
        den = self.magnitude() * math.sqrt(
            max(np.real(np.trace(om @ om)) / dim, 1e-300))
        return float(num / den)


class _Encoder:
    """One decoupling-plus-field cycle, either idealized or pulse-resolved."""

    def __init__(self, model: ChainModel, dis: DisorderRealization, mode: str,
                 include_couplings: bool, tau0_us: float, pi_control: bool):
        if mode not in ("ideal", "wahuha"):
            raise ValueError(f"unknown encode mode {mode!r}")
        self.L = model.n_sites
        self.cycle_us = 12.0 * tau0_us
        dim = 2 ** self.L
        if mode == "ideal":
            diag = _field_unitary(dis.w, self.cycle_us, scale=FIELD_SCALE)
            u = np.zeros((dim, dim), dtype=complex)
            np.fill_diagonal(u, diag)
            self.u_cycle = u
        else:
            H = build_field(model, dis.w)
            if include_couplings:
                H = H + build_dipolar(model)
            Hm = to_dense(H)
            u = np.eye(dim, dtype=complex)
            for event in wahuha8(tau0_us).events:
                if isinstance(event, Delay):
                    u = expm(-1j * Hm * (event.duration_us * US_TO_RAD)) @ u
                else:
                    ax = {"x": (1, 0, 0), "-x": (-1, 0, 0),
                          "y": (0, 1, 0), "-y": (0, -1, 0)}[event.axis]
                    u = _collective_rotation(self.L, *ax, event.angle) @ u
            self.u_cycle = u
        if pi_control:
            self.u_cycle = _collective_rotation(self.L, 0, 1, 0, math.pi) @ self.u_cycle

    def apply(self, rho: np.ndarray, n_cycles: int) -> np.ndarray:
        u = np.linalg.matrix_power(self.u_cycle, n_cycles)
        return u @ rho @ u.conj().T


def _z_cycle(rho: np.ndarray, L: int, signs=(1, 1, 1, 1)) -> np.ndarray:
    """Four-fold z phase cycle: signed average over 90-degree z rotations."""
    out = np.zeros_like(rho)
    for n, sign in enumerate(signs):
        u = _collective_rotation(L, 0, 0, 1, n * math.pi / 2)
        out += sign * (u @ rho @ u.conj().T)
    return out / len(signs)


def simulate_prep_sequence(kind: str, model: ChainModel, dis: DisorderRealization,
                           n_cycles: int, with_pi_control: bool = False,
                           encode: str = "ideal", include_couplings: bool = False,
                           tau0_us: float = 5.0, jb_t_e_us: float | None = None,
                           apply_z_cycle: bool = True,
                           dense_limit: int = 12) -> PrepSimulation:
    """Dense simulation of the random-state preparation with phase cycling.

    encode = 'ideal' applies the scaled field exp(-i sum (w_j/3) S_z t_cycle)
    per cycle; 'wahuha' plays the actual eight-pulse cycle against the chosen
    encoding Hamiltonian (disorder field alone, or with the full dipolar
    coupling when include_couplings is set).  with_pi_control flips the chain
    after every cycle, which refocuses the disorder field and suppresses the
    random state.
    """
    if model.n_sites > dense_limit:
        raise ValueError(f"L = {model.n_sites} exceeds the dense limit {dense_limit}")
    if n_cycles < 1:
        raise ValueError("need at least one preparation cycle")
    L = model.n_sites
    enc = _Encoder(model, dis, encode, include_couplings, tau0_us, with_pi_control)
    tau_ms = n_cycles * enc.cycle_us * 1e-3

    rho = to_dense(OperatorSum(L, {((j, Z),): 0.5 for j in range(L)}))  # Z
    if kind.startswith("rZ"):
        rho = _rotate(rho, L, (0, 1, 0), math.pi / 2)  # Z -> X
        rho = enc.apply(rho, n_cycles)
        plus = _rotate(rho, L, (1, 0, 0), math.pi / 2)
        minus = _rotate(rho, L, (-1, 0, 0), math.pi / 2)
        rho4 = 0.5 * (plus - minus)
        if apply_z_cycle:
            rho4 = _z_cycle(rho4, L)
        coeffs = _extract_site_coeffs(rho4, L, Z)
        axis = kind.rsplit("_", 1)[1]
        if axis == "y":
            rho4 = _rotate(rho4, L, (1, 0, 0), -math.pi / 2)  # z -> y
            coeffs = _extract_site_coeffs(rho4, L, Y)
        elif axis == "x":
            rho4 = _rotate(rho4, L, (0, 1, 0), math.pi / 2)  # z -> x
            coeffs = _extract_site_coeffs(rho4, L, X)
        obs_terms = {((j, _AXIS_OF[axis]),): coeffs[j] / 2.0 for j in range(L)}
        obs = RandomObservable(kind=kind, coeffs=coeffs,
                               operator=OperatorSum(L, obs_terms),
                               tau_ms=tau_ms, realization=dis)
        return PrepSimulation(kind=kind, rho=rho4, coeffs=coeffs, tau_ms=tau_ms,
                              n_cycles=n_cycles, observable=obs)

    if not kind.startswith("rDQ"):
        raise ValueError(f"unknown preparation kind {kind!r}")

    # two-body route: Jeener-Broekaert pair, thermalization, coherence filter
    H_dip = build_dipolar(model) + build_field(model, dis.w)
    Hm = to_dense(H_dip)
    if jb_t_e_us is None:
        jb_t_e_us = optimal_jb_delay_us(model, dis)
    rho = _rotate(rho, L, (0, 1, 0), math.pi / 2)  # Z -> X
    u_e = expm(-1j * Hm * (jb_t_e_us * US_TO_RAD))
    rho = u_e @ rho @ u_e.conj().T
    rho = _rotate(rho, L, (1, 0, 0), math.pi / 4)
    # thermalization endpoint: project onto H_dip with the energy-conserving weight
    dim = 2 ** L
    lam = np.real(np.trace(rho @ Hm)) / np.real(np.trace(Hm @ Hm))
    rho = lam * Hm
    # pi/2 about (x - y)/sqrt(2), two-fold cycled with the reversed axis
    inv2 = 1.0 / math.sqrt(2.0)
    b1 = _rotate(rho, L, (inv2, -inv2, 0), math.pi / 2)
    b2 = _rotate(rho, L, (-inv2, inv2, 0), math.pi / 2)
    rho = 0.5 * (b1 + b2)
    rho = _z_cycle(rho, L, signs=(1, -1, 1, -1))
    rho = enc.apply(rho, n_cycles)
    plus = _rotate(rho, L, (1, 0, 0), math.pi / 2)
    minus = _rotate(rho, L, (-1, 0, 0), math.pi / 2)
    rho8 = 0.5 * (plus + minus)
    axis = kind.rsplit("_", 1)[1]
    if axis == "z":
        rho8 = _rotate(rho8, L, (0, 1, 0), math.pi / 2)
    coeffs = _extract_bond_coeffs(rho8, L, *_pair_axes(kind))
    a_ax, b_ax = _pair_axes(kind)
    obs_terms: dict = {}
    for j in range(L - 1):
        obs_terms[((j, a_ax), (j + 1, a_ax))] = 0.75 * coeffs[j] / 4.0
        obs_terms[((j, b_ax), (j + 1, b_ax))] = -0.75 * coeffs[j] / 4.0
    obs = RandomObservable(kind=kind, coeffs=coeffs,
                           operator=OperatorSum(L, obs_terms),
                           tau_ms=tau_ms, realization=dis)
    return PrepSimulation(kind=kind, rho=rho8, coeffs=coeffs, tau_ms=tau_ms,
                          n_cycles=n_cycles, observable=obs)


def _rotate(rho: np.ndarray, L: int, axis, angle: float) -> np.ndarray:
    u = _collective_rotation(L, *axis, angle)
    return u @ rho @ u.conj().T


def _extract_site_coeffs(rho: np.ndarray, L: int, axis: int) -> np.ndarray:
    dim = 2 ** L
    out = np.zeros(L)
    for j in range(L):
        sig = to_dense(OperatorSum(L, {((j, axis),): 1.0}))
        out[j] = 2.0 * np.real(np.trace(rho @ sig)) / dim
    return out


def _extract_bond_coeffs(rho: np.ndarray, L: int, a_ax: int, b_ax: int) -> np.ndarray:
    """Coefficients alpha'_j of (3/4) (S_a S_a - S_b S_b) on bonds (j, j+1)."""
    dim = 2 ** L
    out = np.zeros(L - 1)
    for j in range(L - 1):
        bond = to_dense(OperatorSum(L, {
            ((j, a_ax), (j + 1, a_ax)): 0.25,
            ((j, b_ax), (j + 1, b_ax)): -0.25,
        }))
        # Tr[bond^2]/2^L = 1/8; amplitude carries the 3/4 convention
        out[j] = np.real(np.trace(rho @ bond)) / dim / (0.75 / 8.0)
    return out


def optimal_jb_delay_us(model: ChainModel, dis: DisorderRealization,
                        t_max_us: float = 60.0, n_grid: int = 60) -> float:
    """Evolution delay of the two-pulse pair that maximizes the dipolar-state
    fidelity Tr(rho4 H)/sqrt(Tr rho4^2 Tr H^2), found by a dense grid scan."""
    L = model.n_sites
    H = build_dipolar(model) + build_field(model, dis.w)
    Hm = to_dense(H)
    dim = 2 ** L
    rho0 = to_dense(OperatorSum(L, {((j, X),): 0.5 for j in range(L)}))
    h_norm = math.sqrt(np.real(np.trace(Hm @ Hm)) / dim)
    evals, evecs = np.linalg.eigh(Hm)
    rho_t = evecs.conj().T @ rho0 @ evecs
    best_t, best_f = 0.0, -np.inf
    for t in np.linspace(t_max_us / n_grid, t_max_us, n_grid):
        phases = np.exp(-1j * evals * (t * US_TO_RAD))
        rho = evecs @ (rho_t * np.outer(phases, phases.conj())) @ evecs.conj().T
        rho = _rotate(rho, L, (1.0, 0, 0), math.pi / 4)
        fid = np.real(np.trace(rho @ Hm)) / dim
        fid /= h_norm * math.sqrt(max(np.real(np.trace(rho @ rho)) / dim, 1e-300))
        if fid > best_f:
            best_t, best_f = float(t), float(fid)
    return best_t
