"""Rotation-scan tomography of random observables.

A scan samples I(phi, theta, gamma) = Tr[U O U^dag O]/2^L on the 45-degree
Euler grid.  Because same-site tensor families are orthonormal, the expected
scan of a statistically translation-invariant random observable is

    I = L sum_l sum_{m,m'} c_lmm' e^{-i m' phi} d_lmm'(theta) e^{-i m gamma},

with c_lmm' = E[a_lm a_lm'^*] the (positive semidefinite) coefficient
correlation per l.  Extraction inverts this: discrete double Fourier
transform over phi and gamma, per-(m, m') least squares over the eight theta
values, block assembly, PSD projection and principal-component readout.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .operators import (IstoLabel, OperatorSum, isto, normalized_trace_product,
                        rotate_axis, Z as AXIS_Z, Y as AXIS_Y)

GRID_STEP_DEG = 45.0
GRID_POINTS = 8


def wigner_d(l: int, m: int, mp: int, theta: float) -> float:
    """Little Wigner d_lmm'(theta) in the convention of the tensor family
    returned by :func:`spinhydro.operators.isto`:

        U(phi,theta,gamma) T_lm U^dag = sum_m' e^{-i m' phi} d_lmm'(theta)
                                         e^{-i m gamma} T_lm'.

    Explicit factorial summation; exact for the small l used here.
    """
    if abs(m) > l or abs(mp) > l:
        raise ValueError(f"|m| indices must not exceed l = {l}")
    pre = math.sqrt(math.factorial(l + m) * math.factorial(l - m)
                    * math.factorial(l + mp) * math.factorial(l - mp))
    c = math.cos(theta / 2.0)
    s = math.sin(theta / 2.0)
    total = 0.0
    for k in range(max(0, mp - m), min(l + mp, l - m) + 1):
        denom = (math.factorial(l + mp - k) * math.factorial(k)
                 * math.factorial(m - mp + k) * math.factorial(l - m - k))
        total += ((-1.0) ** (m - mp + k) / denom
                  * c ** (2 * l + mp - m - 2 * k) * s ** (m - mp + 2 * k))
    return pre * total


def wigner_d_matrix(l: int, theta: float) -> np.ndarray:
    """(2l+1)x(2l+1) matrix d[m+l, m'+l]."""
    dim = 2 * l + 1
    out = np.empty((dim, dim))
    for m in range(-l, l + 1):
        for mp in range(-l, l + 1):
            out[m + l, mp + l] = wigner_d(l, m, mp, theta)
    return out


@dataclass
class RotationScan:
    """I(phi, theta, gamma) on the complete 8x8x8 Euler grid (45-deg steps)."""

    values: np.ndarray  # shape (8, 8, 8), axes (phi, theta, gamma)
    n_sites: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (GRID_POINTS,) * 3:
            raise ValueError(f"scan grid must be {(GRID_POINTS,)*3}, "
                             f"got {self.values.shape}")

    @staticmethod
    def angles_rad() -> np.ndarray:
        return np.radians(GRID_STEP_DEG * np.arange(GRID_POINTS))

    def to_csv(self, path) -> None:
        angles = GRID_STEP_DEG * np.arange(GRID_POINTS)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["phi_deg", "theta_deg", "gamma_deg", "signal"])
            for i, p in enumerate(angles):
                for j, th in enumerate(angles):
                    for k, g in enumerate(angles):
                        writer.writerow([p, th, g, repr(float(self.values[i, j, k]))])

    @classmethod
    def from_csv(cls, path, n_sites: int) -> "RotationScan":
        vals = np.full((GRID_POINTS,) * 3, np.nan)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["phi_deg", "theta_deg", "gamma_deg", "signal"]:
                raise ValueError(f"unexpected scan CSV header {header!r}")
            for row in reader:
                p, th, g = (int(round(float(x) / GRID_STEP_DEG)) % GRID_POINTS
                            for x in row[:3])
                vals[p, th, g] = float(row[3])
        if np.any(np.isnan(vals)):
            raise ValueError("scan CSV does not cover the full 8x8x8 grid")
        return cls(values=vals, n_sites=n_sites)


def synthesize_scan(obs) -> RotationScan:
    """Exact rotation scan of one observable (symbolic, no 2^L objects).

    Accepts an OperatorSum or anything with an ``operator`` attribute.
    Rotations are nested innermost-gamma first so partial results are reused
    across the grid.
    """
    op = getattr(obs, "operator", obs)
    angles = RotationScan.angles_rad()
    vals = np.empty((GRID_POINTS,) * 3)
    for k, gamma in enumerate(angles):
        a1 = rotate_axis(op, AXIS_Z, gamma)
        for j, theta in enumerate(angles):
            a2 = rotate_axis(a1, AXIS_Y, theta)
            for i, phi in enumerate(angles):
                a3 = rotate_axis(a2, AXIS_Z, phi)
                vals[i, j, k] = normalized_trace_product(a3, op)
    return RotationScan(values=vals, n_sites=op.n_sites)


@dataclass
class MqcComponent:
    """One principal component: weight, tensor rank and m-space vector."""

    eigenvalue: float
    l: int
    coeffs: np.ndarray  # length 2l+1, index m+l
    operator: OperatorSum | None = None


@dataclass
class MqcSpectrum:
    """Extracted coefficient correlations and their principal components."""

    l_max: int
    n_sites: int
    c: dict  # (l, m, m') -> float
    eigenvalues: np.ndarray  # normalized, descending
    components: list[MqcComponent] = field(default_factory=list)
    clipped_weight: float = 0.0  # negative weight removed by the PSD projection
    max_imag: float = 0.0  # largest imaginary part (kept in blocks, not in c)
    total_weight: float = 1.0  # raw positive weight; c values are divided by it
    blocks: dict = field(default_factory=dict)  # l -> complex Hermitian matrix

    def to_json(self, path=None) -> str:
        from .operators import to_text

        payload = {
            "l_max": self.l_max,
            "n_sites": self.n_sites,
            "c": [{"l": l, "m": m, "mp": mp, "value": val}
                  for (l, m, mp), val in sorted(self.c.items())],
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "clipped_weight": self.clipped_weight,
            "components": [
                {"eigenvalue": comp.eigenvalue, "l": comp.l,
                 "coeffs_real": [float(x) for x in np.real(comp.coeffs)],
                 "coeffs_imag": [float(x) for x in np.imag(comp.coeffs)],
                 "operator": to_text(comp.operator) if comp.operator is not None else None}
                for comp in self.components],
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def psd_project(mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Zero out negative eigenvalues; returns (projected, clipped weight)."""
    evals, evecs = np.linalg.eigh(mat)
    clipped = float(-evals[evals < 0].sum())
    evals = np.clip(evals, 0.0, None)
    return (evecs * evals) @ evecs.conj().T, clipped


class RankDeficientError(ValueError):
    """Theta design matrix cannot separate the requested l values."""


def extract_correlation(scan: RotationScan, l_max: int = 3) -> MqcSpectrum:
    """Invert a rotation scan into coefficient correlations c_lmm'.

    l_max must stay <= 3: the 8-point phi/gamma grids resolve coherence
    orders -3..4 and order +-4 aliases onto itself.
    """
    if not 0 <= l_max <= 3:
        raise ValueError("l_max must be between 0 and 3 on the 45-degree grid")
    L = scan.n_sites
    angles = RotationScan.angles_rad()
    # double Fourier transform over phi (order m') and gamma (order m)
    orders = range(-l_max, l_max + 1)
    four = {}
    for m in orders:
        eg = np.exp(1j * m * angles)
        for mp in orders:
            ep = np.exp(1j * mp * angles)
            four[(m, mp)] = np.einsum("p,ptg,g->t", ep, scan.values, eg) / GRID_POINTS ** 2
    # per-(m, m') least squares over theta
    c: dict = {}
    max_imag = 0.0
    blocks = {l: np.zeros((2 * l + 1, 2 * l + 1), dtype=complex)
              for l in range(l_max + 1)}
    for m in orders:
        for mp in orders:
            l_min = max(abs(m), abs(mp))
            ls = list(range(l_min, l_max + 1))
            design = np.array([[L * wigner_d(l, m, mp, th) for l in ls]
                               for th in angles])
            sol, _, rank, _ = np.linalg.lstsq(design, four[(m, mp)], rcond=None)
            if rank < len(ls):
                raise RankDeficientError(
                    f"theta grid cannot separate l = {ls} at (m, m') = ({m}, {mp})")
            for l, val in zip(ls, sol):
                max_imag = max(max_imag, abs(val.imag))
                blocks[l][m + l, mp + l] = val
    # Hermitize, project each block to PSD, collect spectra
    total = 0.0
    clipped = 0.0
    eigs = []
    for l, mat in blocks.items():
        mat = 0.5 * (mat + mat.conj().T)
        proj, clip = psd_project(mat)
        blocks[l] = proj
        clipped += clip
        evals, evecs = np.linalg.eigh(proj)
        for idx in range(len(evals)):
            if evals[idx] > 1e-14:
                vec = evecs[:, idx]
                # fix the arbitrary eigenvector phase: largest entry real positive
                pivot = vec[np.argmax(np.abs(vec))]
                vec = vec * (abs(pivot) / pivot)
                eigs.append((float(evals[idx]), l, vec))
        total += float(evals.clip(0).sum())
    if total <= 0.0:
        raise ValueError("scan carries no extractable weight")
    eigs.sort(key=lambda item: -item[0])
    components = []
    for val, l, vec in eigs:
        op = None
        if 1 <= l <= 2:
            op = _family_operator(l, vec, L)
        components.append(MqcComponent(eigenvalue=val / total, l=l,
                                       coeffs=vec, operator=op))
    for (l, mat) in blocks.items():
        for m in range(-l, l + 1):
            for mp in range(-l, l + 1):
                val = mat[m + l, mp + l].real / total
                if abs(val) > 1e-14:
                    c[(l, m, mp)] = float(val)
    return MqcSpectrum(
        l_max=l_max, n_sites=L, c=c,
        eigenvalues=np.array([comp.eigenvalue for comp in components]),
        components=components, clipped_weight=clipped / total, max_imag=max_imag,
        total_weight=total, blocks=blocks)


def _family_operator(l: int, vec: np.ndarray, L: int) -> OperatorSum:
    """Translation-summed tensor family sum_m v_m (1/sqrt(L)) sum_j T_lm^(j)."""
    out = OperatorSum.zero(L)
    scale = 1.0 / math.sqrt(L)
    for m in range(-l, l + 1):
        amp = vec[m + l]
        if abs(amp) < 1e-14:
            continue
        for j in range(L):
            out = out + isto(IstoLabel(l, m, j), L, periodic=True) * (amp * scale)
    return out


def overlap(a: OperatorSum, b: OperatorSum) -> float:
    """Tr(a b) / sqrt(Tr(a a) Tr(b b)); inputs must have nonzero norm.

    Norms are taken as Tr(a^dag a) so the value stays in [-1, 1] for the
    Hermitian observables this is meant for.
    """
    na = a.norm()
    nb = b.norm()
    if na <= 0.0 or nb <= 0.0:
        raise ValueError("overlap of a zero-norm operator is undefined")
    return normalized_trace_product(a, b) / (na * nb)


def scan_fit_residual(scan: RotationScan, spectrum: MqcSpectrum) -> float:
    """Relative Frobenius mismatch between the scan and its fitted model.

    Reconstruction uses the full complex correlation blocks; the imaginary
    (antisymmetric) part contributes a real signal component of its own.
    """
    L = scan.n_sites
    angles = RotationScan.angles_rad()
    model = np.zeros_like(scan.values, dtype=complex)
    for l, mat in spectrum.blocks.items():
        for m in range(-l, l + 1):
            for mp in range(-l, l + 1):
                val = mat[m + l, mp + l]
                if abs(val) < 1e-15:
                    continue
                d_th = np.array([wigner_d(l, m, mp, th) for th in angles])
                ep = np.exp(-1j * mp * angles)
                eg = np.exp(-1j * m * angles)
                model += L * val * np.einsum("p,t,g->ptg", ep, d_th, eg)
    num = float(np.linalg.norm(scan.values - model.real))
    den = float(np.linalg.norm(scan.values))
    return num / den if den > 0 else num
