"""Chain Hamiltonians and the on-site disorder bath.

The chain carries spin-1/2 sites coupled by a secular dipolar interaction
with a 1/r^3 tail, plus a static on-site field generated by randomly
oriented bath spins.  Builders return :class:`~spinhydro.operators.OperatorSum`
values; spin operators S = sigma/2 are converted to the Pauli basis here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .operators import OperatorSum, X, Y, Z

DEFAULT_J_KRAD = 30.4
DEFAULT_FP_KRAD = 6.12
DEFAULT_FIELD_WIDTH_KRAD = 7.0
DEFAULT_LATTICE_ANGSTROM = 3.442


@dataclass(frozen=True)
class ChainModel:
    """Geometry and coupling scale of one spin chain.

    coupling_range is the largest |j-k| kept in the 1/r^3 sum; None keeps
    every pair.  Periodic chains measure distance with the minimum image.
    """

    n_sites: int
    J: float = DEFAULT_J_KRAD
    coupling_range: int | None = 1
    boundary: str = "open"
    lattice_constant_angstrom: float = DEFAULT_LATTICE_ANGSTROM

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("need at least 2 sites")
        if self.coupling_range is not None and self.coupling_range < 1:
            raise ValueError("coupling_range must be >= 1 (or None for full range)")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    def distance(self, j: int, k: int) -> int:
        d = abs(j - k)
        if self.boundary == "periodic":
            d = min(d, self.n_sites - d)
        return d

    def pairs(self):
        """All coupled (j, k, r) with j < k and r within the coupling range."""
        rng = self.coupling_range
        for j in range(self.n_sites):
            for k in range(j + 1, self.n_sites):
                r = self.distance(j, k)
                if rng is None or r <= rng:
                    yield j, k, r


@dataclass(frozen=True)
class HamiltonianParams:
    """Dimensionless weights of the tunable chain Hamiltonian.

    u scales the double-quantum coupling (SxSx - SySy), v the Ising-like
    coupling (SzSz - SySy) and h the on-site disorder field.
    """

    u: float = 0.0
    v: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        for name in ("u", "v", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def build_dipolar(model: ChainModel) -> OperatorSum:
    """Secular dipolar coupling sum_{j<k} J/(2 r^3) (2 SzSz - SxSx - SySy)."""
    terms: dict = {}
    for j, k, r in model.pairs():
        w = model.J / (2.0 * r ** 3)
        # S = sigma/2 gives a 1/4 per pair
        terms[((j, Z), (k, Z))] = 2.0 * w / 4.0
        terms[((j, X), (k, X))] = -w / 4.0
        terms[((j, Y), (k, Y))] = -w / 4.0
    return OperatorSum(model.n_sites, terms)


def build_field(model: ChainModel, w: np.ndarray, scale: float = 1.0) -> OperatorSum:
    """On-site field sum_j scale * w_j S_z^j."""
    if len(w) != model.n_sites:
        raise ValueError(f"field has {len(w)} entries for {model.n_sites} sites")
    terms = {((j, Z),): scale * float(w[j]) / 2.0 for j in range(model.n_sites)}
    return OperatorSum(model.n_sites, terms)


def build_tunable(model: ChainModel, params: HamiltonianParams,
                  dis: "DisorderRealization | None" = None) -> OperatorSum:
    """Tunable Hamiltonian u*(SxSx - SySy) + v*(SzSz - SySy) + h*field.

    The two-body parts carry the full J/r^3 weight per pair (no factor 1/2).
    A disorder realization is required whenever h is nonzero.
    """
    terms: dict = {}
    for j, k, r in model.pairs():
        w = model.J / r ** 3 / 4.0
        xx = params.u * w
        yy = -(params.u + params.v) * w
        zz = params.v * w
        if xx:
            terms[((j, X), (k, X))] = xx
        if yy:
            terms[((j, Y), (k, Y))] = yy
        if zz:
            terms[((j, Z), (k, Z))] = zz
    out = OperatorSum(model.n_sites, terms)
    if params.h != 0.0:
        if dis is None:
            raise ValueError("h != 0 requires a disorder realization")
        if len(dis.w) != model.n_sites:
            raise ValueError("disorder realization length does not match the chain")
        out = out + build_field(model, dis.w, scale=params.h)
    return out


def local_energy_density(model: ChainModel, params: HamiltonianParams,
                         dis: "DisorderRealization | None", bond: int) -> OperatorSum:
    """Energy density on bond (j, j+1) for the nearest-neighbor tunable chain.

    Each site's field term is split evenly between its two bonds (on open
    chains, edge sites give full weight to their only bond), so the bond
    densities sum to the full Hamiltonian.  Periodic chains include the wrap
    bond (L-1, 0).
    """
    if model.coupling_range != 1:
        raise ValueError("energy density is defined for nearest-neighbor chains")
    L = model.n_sites
    periodic = model.boundary == "periodic"
    n_bonds = L if periodic else L - 1
    if not 0 <= bond < n_bonds:
        raise ValueError(f"bond {bond} outside chain with {n_bonds} bonds")
    j, k = bond, (bond + 1) % L
    lo, hi = (j, k) if j < k else (k, j)
    w = model.J / 4.0
    terms = {
        ((lo, X), (hi, X)): params.u * w,
        ((lo, Y), (hi, Y)): -(params.u + params.v) * w,
        ((lo, Z), (hi, Z)): params.v * w,
    }
    out = OperatorSum(L, terms)
    if params.h != 0.0:
        if dis is None:
            raise ValueError("h != 0 requires a disorder realization")
        for site in (j, k):
            if periodic or site not in (0, L - 1):
                share = 0.5
            else:
                share = 1.0
            out = out + OperatorSum(L, {
                ((site, Z),): share * params.h * float(dis.w[site]) / 2.0})
    return out


# ---- bath spins and disorder draws ----

@dataclass(frozen=True)
class GeometryEntry:
    """One coupling tap of a bath-spin column.

    A column places one bath spin per chain cell; the spin in cell c couples
    to the fluorine-like site at c + f_site_offset with coupling_krad.  Taps
    at several offsets make one physical spin act on several chain sites,
    which is what produces inter-site field correlations.
    """

    f_site_offset: int
    coupling_krad: float


def dipolar_tap_profile(fp_coupling_krad: float, radial_distance: float,
                        max_offset: int = 7) -> list[GeometryEntry]:
    """Axial coupling taps of an off-chain spin at a given radial distance.

    Uses the secular angular factor (1 - 3 cos^2 theta)/r^3 along the chain
    axis, normalized so the in-plane tap equals fp_coupling_krad.  Distances
    are in lattice units.
    """
    taps = []
    norm = radial_distance ** 3
    for o in range(-max_offset, max_offset + 1):
        r2 = o * o + radial_distance ** 2
        ang = 1.0 - 3.0 * o * o / r2
        taps.append(GeometryEntry(o, fp_coupling_krad * norm * ang / r2 ** 1.5))
    return taps


# Radial distance of the idealized bath columns, in lattice units.  Chosen so
# the nearest-neighbor field correlation of the three-column bath lands near
# the -0.2 produced by the full crystal environment.
DEFAULT_RADIAL_DISTANCE = 1.10


def default_geometry(fp_coupling_krad: float = DEFAULT_FP_KRAD,
                     max_offset: int = 7) -> list[GeometryEntry]:
    return dipolar_tap_profile(fp_coupling_krad, DEFAULT_RADIAL_DISTANCE, max_offset)


@dataclass(frozen=True)
class BathModel:
    """Source of the static on-site disorder field.

    modes:
      geometric     signed half-strength sums over shared bath-spin columns
      gaussian      i.i.d. normal fields of the given width
      four_gaussian centers +-fp/2 (weight 3) and +-3fp/2 (weight 1), each
                    broadened by component_width_krad
    """

    mode: str = "gaussian"
    fp_coupling_krad: float = DEFAULT_FP_KRAD
    width_krad: float = DEFAULT_FIELD_WIDTH_KRAD
    component_width_krad: float = 2.0
    n_columns: int = 3
    geometry: tuple = field(default_factory=lambda: tuple(default_geometry()))

    def __post_init__(self):
        if self.mode not in ("geometric", "gaussian", "four_gaussian"):
            raise ValueError(f"unknown bath mode {self.mode!r}")
        if self.mode == "gaussian" and self.width_krad <= 0:
            raise ValueError("gaussian mode needs width_krad > 0")
        if self.mode == "geometric":
            if not self.geometry:
                raise ValueError("geometric mode needs a non-empty geometry")
            if self.n_columns < 1:
                raise ValueError("need n_columns >= 1")

    @property
    def n_neighbors(self) -> int:
        """Bath spins coupled to each chain site."""
        if self.mode == "geometric":
            return self.n_columns * len(self.geometry)
        return 1

    def coupling_matrix(self, n_sites: int) -> np.ndarray:
        """Couplings J[j, kappa] of every chain site to every bath spin.

        Bath spins are indexed by (column, cell) with cells extended past the
        chain ends so edge sites see a full environment.
        """
        if self.mode != "geometric":
            raise ValueError("coupling matrix exists only in geometric mode")
        offs = [e.f_site_offset for e in self.geometry]
        lo = min(offs)
        hi = max(offs)
        cells = range(-hi, n_sites - lo)  # cells whose taps can reach the chain
        n_cells = len(cells)
        mat = np.zeros((n_sites, self.n_columns * n_cells))
        for m in range(self.n_columns):
            for ci, c in enumerate(cells):
                kappa = m * n_cells + ci
                for e in self.geometry:
                    j = c + e.f_site_offset
                    if 0 <= j < n_sites:
                        mat[j, kappa] = e.coupling_krad
        return mat


@dataclass(frozen=True)
class DisorderRealization:
    """One draw of the on-site fields w_j (krad/s), reproducible from seed."""

    w: np.ndarray
    seed: int
    bath_spins: np.ndarray | None = None  # +-1/2 orientations in geometric mode

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))


def _rng(seed, *stream) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, stream)])


def draw_disorder(bath: BathModel, model: ChainModel, seed: int) -> DisorderRealization:
    """Draw one disorder realization; deterministic function of the seed."""
    rng = _rng(seed)
    L = model.n_sites
    if bath.mode == "gaussian":
        w = rng.normal(0.0, bath.width_krad, size=L)
        return DisorderRealization(w=w, seed=seed)
    if bath.mode == "four_gaussian":
        half = 0.5 * bath.fp_coupling_krad
        centers = np.array([-3 * half, -half, half, 3 * half])
        weights = np.array([1.0, 3.0, 3.0, 1.0]) / 8.0
        picks = rng.choice(4, size=L, p=weights)
        w = centers[picks] + rng.normal(0.0, bath.component_width_krad, size=L)
        return DisorderRealization(w=w, seed=seed)
    # geometric
    mat = bath.coupling_matrix(L)
    spins = rng.choice([-0.5, 0.5], size=mat.shape[1])
    w = mat @ spins
    return DisorderRealization(w=w, seed=seed, bath_spins=spins)


def draw_many(bath: BathModel, model: ChainModel, seed: int, n: int) -> np.ndarray:
    """n independent field realizations as an (n, L) array (vectorized)."""
    rng = _rng(seed, 1)
    L = model.n_sites
    if bath.mode == "gaussian":
        return rng.normal(0.0, bath.width_krad, size=(n, L))
    if bath.mode == "four_gaussian":
        half = 0.5 * bath.fp_coupling_krad
        centers = np.array([-3 * half, -half, half, 3 * half])
        weights = np.array([1.0, 3.0, 3.0, 1.0]) / 8.0
        picks = rng.choice(4, size=(n, L), p=weights)
        return centers[picks] + rng.normal(0.0, bath.component_width_krad, size=(n, L))
    mat = bath.coupling_matrix(L)
    spins = rng.choice([-0.5, 0.5], size=(n, mat.shape[1]))
    return spins @ mat.T


@dataclass
class BathReport:
    """Summary statistics of the disorder field distribution."""

    histogram_counts: np.ndarray
    histogram_edges: np.ndarray
    neighbor_correlation: float
    dephasing_tau_ms: np.ndarray
    dephasing: np.ndarray
    field_std_krad: float


def bath_statistics(bath: BathModel, model: ChainModel, n_samples: int,
                    seed: int = 0, tau_max_ms: float = 1.0,
                    n_tau: int = 60) -> BathReport:
    """Histogram, neighbor correlation <w_j w_{j+1}>/<w_j^2> and the
    dephasing profile <cos(w_j tau)> of the configured bath."""
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    w = draw_many(bath, model, seed, n_samples)
    mid = model.n_sites // 2
    wj = w[:, mid]
    wk = w[:, mid + 1] if mid + 1 < model.n_sites else w[:, mid - 1]
    corr = float(np.mean(wj * wk) / np.mean(wj ** 2))
    counts, edges = np.histogram(w.ravel(), bins=80)
    taus = np.linspace(0.0, tau_max_ms, n_tau)
    deph = np.cos(np.outer(taus, wj)).mean(axis=1)
    return BathReport(
        histogram_counts=counts,
        histogram_edges=edges,
        neighbor_correlation=corr,
        dephasing_tau_ms=taus,
        dephasing=deph,
        field_std_krad=float(np.std(w)),
    )


# ---- geometry file I/O ----

def load_geometry_csv(path) -> list[GeometryEntry]:
    """Read bath geometry rows (f_site_offset, coupling_krad)."""
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip().lower() == "f_site_offset":
                continue
            entries.append(GeometryEntry(int(row[0]), float(row[1])))
    if not entries:
        raise ValueError(f"no geometry rows in {path}")
    return entries


def save_geometry_csv(path, entries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["f_site_offset", "coupling_krad"])
        for e in entries:
            writer.writerow([e.f_site_offset, repr(e.coupling_krad)])
