"""Sparse Pauli-string operator algebra on chains of spin-1/2 sites.

Operators are stored as weighted sums of Pauli strings, where a string is a
tuple of (site, axis) pairs with strictly increasing sites and axis codes
1=X, 2=Y, 3=Z (identity = empty tuple).  The Pauli convention is
``sigma = 2 S``, so every string is Hermitian, squares to the identity and
satisfies Tr(sigma_s sigma_s') = 2^L delta_ss'.  Normalized traces therefore
reduce to coefficient sums and no 2^L-dimensional object is ever built here.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator

X, Y, Z = 1, 2, 3
_AXIS_NAME = {X: "X", Y: "Y", Z: "Z"}
_AXIS_CODE = {"X": X, "Y": Y, "Z": Z}

# sigma_a sigma_b = delta_ab I + i eps_abc sigma_c
_SINGLE_PROD = {
    (X, X): (0, 1.0), (Y, Y): (0, 1.0), (Z, Z): (0, 1.0),
    (X, Y): (Z, 1j), (Y, X): (Z, -1j),
    (Y, Z): (X, 1j), (Z, Y): (X, -1j),
    (Z, X): (Y, 1j), (X, Z): (Y, -1j),
}

# cyclic partners for rotations: conjugation by exp(-i t sum_j S_a^j) maps
#   sigma_b -> cos(t) sigma_b + sin(t) sigma_c
#   sigma_c -> cos(t) sigma_c - sin(t) sigma_b
# with (a, b, c) a cyclic permutation of (X, Y, Z).
_CYCLIC = {X: (Y, Z), Y: (Z, X), Z: (X, Y)}

PRUNE_EPS = 1e-14

PauliString = tuple  # tuple of (site, axis) pairs, sites strictly increasing


class LengthMismatchError(ValueError):
    """Raised when combining operators defined on different chain lengths."""


def _check_string(string: PauliString, n_sites: int) -> None:
    prev = -1
    for site, axis in string:
        if not 0 <= site < n_sites:
            raise ValueError(f"site {site} outside chain of length {n_sites}")
        if site <= prev:
            raise ValueError(f"sites not strictly increasing in {string!r}")
        if axis not in (X, Y, Z):
            raise ValueError(f"bad axis code {axis!r}")
        prev = site


def _mul_strings(s1: PauliString, s2: PauliString) -> tuple[PauliString, complex]:
    """Product of two Pauli strings: merged string and accumulated phase."""
    out = []
    phase = 1.0 + 0j
    i1, i2 = 0, 0
    n1, n2 = len(s1), len(s2)
    while i1 < n1 and i2 < n2:
        site1, ax1 = s1[i1]
        site2, ax2 = s2[i2]
        if site1 == site2:
            ax, ph = _SINGLE_PROD[(ax1, ax2)]
            phase *= ph
            if ax != 0:
                out.append((site1, ax))
            i1 += 1
            i2 += 1
        elif site1 < site2:
            out.append((site1, ax1))
            i1 += 1
        else:
            out.append((site2, ax2))
            i2 += 1
    out.extend(s1[i1:])
    out.extend(s2[i2:])
    return tuple(out), phase


class OperatorSum:
    """Weighted sum of Pauli strings on a fixed number of sites.

    Instances are treated as immutable: every public operation returns a new
    object, so values can be freely shared between threads.
    """

    __slots__ = ("n_sites", "terms")

    def __init__(self, n_sites: int, terms: dict | None = None, prune: bool = True):
        if n_sites < 1:
            raise ValueError("n_sites must be positive")
        self.n_sites = n_sites
        self.terms = {} if terms is None else terms
        if prune:
            self._prune()

    def _prune(self) -> None:
        dead = [s for s, c in self.terms.items() if abs(c) < PRUNE_EPS]
        for s in dead:
            del self.terms[s]

    # ---- constructors ----

    @classmethod
    def zero(cls, n_sites: int) -> "OperatorSum":
        return cls(n_sites, {})

    @classmethod
    def identity(cls, n_sites: int) -> "OperatorSum":
        return cls(n_sites, {(): 1.0 + 0j})

    @classmethod
    def from_terms(cls, n_sites: int, terms: Iterable[tuple[PauliString, complex]]) -> "OperatorSum":
        d: dict = {}
        for string, coeff in terms:
            _check_string(string, n_sites)
            d[string] = d.get(string, 0.0) + coeff
        return cls(n_sites, d)

    # ---- basic queries ----

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[tuple[PauliString, complex]]:
        return iter(self.terms.items())

    def coefficient(self, string: PauliString) -> complex:
        return self.terms.get(tuple(string), 0.0 + 0j)

    def is_zero(self, tol: float = PRUNE_EPS) -> bool:
        return all(abs(c) < tol for c in self.terms.values())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        # Pauli strings are Hermitian, so Hermiticity == real coefficients.
        return all(abs(c.imag) < tol for c in self.terms.values())

    def norm(self) -> float:
        """Normalized Frobenius norm sqrt(Tr[A^dag A] / 2^L)."""
        return math.sqrt(sum(abs(c) ** 2 for c in self.terms.values()))

    def _require_same_length(self, other: "OperatorSum") -> None:
        if self.n_sites != other.n_sites:
            raise LengthMismatchError(
                f"operators act on {self.n_sites} vs {other.n_sites} sites")

    # ---- linear structure ----

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        self._require_same_length(other)
        out = dict(self.terms)
        for s, c in other.terms.items():
            out[s] = out.get(s, 0.0) + c
        return OperatorSum(self.n_sites, out)

    def __sub__(self, other: "OperatorSum") -> "OperatorSum":
        self._require_same_length(other)
        out = dict(self.terms)
        for s, c in other.terms.items():
            out[s] = out.get(s, 0.0) - c
        return OperatorSum(self.n_sites, out)

    def __neg__(self) -> "OperatorSum":
        return OperatorSum(self.n_sites, {s: -c for s, c in self.terms.items()}, prune=False)

    def __mul__(self, scalar: complex) -> "OperatorSum":
        if scalar == 0:
            return OperatorSum.zero(self.n_sites)
        return OperatorSum(self.n_sites, {s: c * scalar for s, c in self.terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "OperatorSum":
        return self * (1.0 / scalar)

    # ---- product algebra ----

    def __matmul__(self, other: "OperatorSum") -> "OperatorSum":
        self._require_same_length(other)
        out: dict = {}
        for s1, c1 in self.terms.items():
            for s2, c2 in other.terms.items():
                string, phase = _mul_strings(s1, s2)
                out[string] = out.get(string, 0.0) + c1 * c2 * phase
        return OperatorSum(self.n_sites, out)

    def dagger(self) -> "OperatorSum":
        return OperatorSum(self.n_sites,
                           {s: c.conjugate() for s, c in self.terms.items()}, prune=False)

    def __repr__(self) -> str:
        if not self.terms:
            return f"OperatorSum(L={self.n_sites}, 0)"
        body = " + ".join(f"({c:.4g})*{string_label(s)}" for s, c in
                          sorted(self.terms.items())[:6])
        more = "" if len(self.terms) <= 6 else f" ... [{len(self.terms)} terms]"
        return f"OperatorSum(L={self.n_sites}, {body}{more})"


def multiply(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    """Exact operator product a.b."""
    return a @ b


def commutator(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    return a @ b - b @ a


def normalized_trace_product(a: OperatorSum, b: OperatorSum) -> float:
    """Tr(a.b)/2^L, evaluated on coefficients via string orthogonality.

    Both inputs are expected Hermitian; the value is then real and equals
    the sum of coefficient products over shared strings.
    """
    a._require_same_length(b)
    if len(b.terms) < len(a.terms):
        a, b = b, a
    acc = 0.0 + 0j
    for s, c in a.terms.items():
        cb = b.terms.get(s)
        if cb is not None:
            acc += c * cb
    return acc.real


def trace_inner_product(a: OperatorSum, b: OperatorSum) -> complex:
    """Tr(a^dag b)/2^L for general (possibly non-Hermitian) operators."""
    a._require_same_length(b)
    if len(b.terms) < len(a.terms):
        return trace_inner_product(b.dagger(), a.dagger()).conjugate()
    acc = 0.0 + 0j
    for s, c in a.terms.items():
        cb = b.terms.get(s)
        if cb is not None:
            acc += c.conjugate() * cb
    return acc


# ---- elementary operators ----

def pauli(axis: int, site: int, n_sites: int) -> OperatorSum:
    """Single-site Pauli sigma_axis^site (unit trace norm)."""
    if axis not in (X, Y, Z):
        raise ValueError(f"bad axis {axis!r}")
    _check_string(((site, axis),), n_sites)
    return OperatorSum(n_sites, {((site, axis),): 1.0 + 0j}, prune=False)


def spin(axis: int, site: int, n_sites: int) -> OperatorSum:
    """Spin-1/2 operator S_axis^site = sigma_axis^site / 2."""
    return pauli(axis, site, n_sites) * 0.5


def collective_spin(axis: int, n_sites: int) -> OperatorSum:
    """sum_j S_axis^j."""
    return OperatorSum(n_sites, {((j, axis),): 0.5 + 0j for j in range(n_sites)}, prune=False)


# ---- collective rotations ----

def _snap(x: float) -> float:
    # exact right angles: cos(pi/2) etc. land at +-1e-16 and must not leak
    # spurious terms into delta-pulse toggling frames
    if abs(x) < 1e-12:
        return 0.0
    for v in (1.0, -1.0):
        if abs(x - v) < 1e-12:
            return v
    return x


def rotate_axis(a: OperatorSum, axis: int, angle: float) -> OperatorSum:
    """Conjugate by the collective rotation U = exp(-i angle sum_j S_axis^j).

    Returns U a U^dag.  Each single-site Pauli maps onto a fixed linear
    combination, so the result is exact (up to the pruning cutoff).
    """
    c = _snap(math.cos(angle))
    s = _snap(math.sin(angle))
    if c == 1.0 and s == 0.0:
        return a
    b_ax, c_ax = _CYCLIC[axis]
    out: dict = {}
    for string, coeff in a.terms.items():
        # expand site by site; sites aligned with the rotation axis pass through
        expansion = [([], coeff)]
        for site, ax in string:
            if ax == axis:
                for prefix, _ in expansion:
                    prefix.append((site, ax))
            elif ax == b_ax:
                new = []
                for prefix, w in expansion:
                    if c != 0.0:
                        new.append((prefix + [(site, b_ax)], w * c))
                    if s != 0.0:
                        new.append((prefix + [(site, c_ax)], w * s))
                expansion = new
            else:  # ax == c_ax
                new = []
                for prefix, w in expansion:
                    if c != 0.0:
                        new.append((prefix + [(site, c_ax)], w * c))
                    if s != 0.0:
                        new.append((prefix + [(site, b_ax)], w * -s))
                expansion = new
        for sites, w in expansion:
            key = tuple(sites)
            out[key] = out.get(key, 0.0) + w
    return OperatorSum(a.n_sites, out)


def rotate_collective(a: OperatorSum, phi: float, theta: float, gamma: float) -> OperatorSum:
    """Conjugate by U(phi, theta, gamma) = e^{-i phi Z} e^{-i theta Y} e^{-i gamma Z}.

    Z and Y denote the collective spin sums; returns U a U^dag.  The gamma
    rotation is applied innermost.
    """
    out = rotate_axis(a, Z, gamma)
    out = rotate_axis(out, Y, theta)
    return rotate_axis(out, Z, phi)


def rotate_about_xy(a: OperatorSum, azimuth: float, angle: float) -> OperatorSum:
    """Conjugate by exp(-i angle sum_j (cos(az) S_x^j + sin(az) S_y^j))."""
    out = rotate_axis(a, Z, -azimuth)
    out = rotate_axis(out, X, angle)
    return rotate_axis(out, Z, azimuth)


# ---- irreducible spherical tensor operators ----

_SQRT2 = math.sqrt(2.0)
_SQRT6 = math.sqrt(6.0)


class IstoLabel:
    """Index (l, m, j) of a spherical tensor on the nearest-neighbor pair family."""

    __slots__ = ("l", "m", "j")

    def __init__(self, l: int, m: int, j: int):
        if l < 0 or abs(m) > l:
            raise ValueError(f"invalid (l, m) = ({l}, {m})")
        self.l = l
        self.m = m
        self.j = j

    def __repr__(self) -> str:
        return f"IstoLabel(l={self.l}, m={self.m}, j={self.j})"


def _sigma_plus(site: int, n_sites: int) -> OperatorSum:
    # (sigma_x + i sigma_y)/sqrt(2): normalized so Tr[s+ s+^dag] = 2^L
    return OperatorSum(n_sites, {((site, X),): 1.0 / _SQRT2,
                                 ((site, Y),): 1j / _SQRT2}, prune=False)


def isto(label: IstoLabel, n_sites: int, periodic: bool = True) -> OperatorSum:
    """Spherical tensor T_lm on site j (l<=1) or the pair (j, j+1) (l=2).

    The family is orthonormal under Tr[T (T')^dag] = 2^L delta and transforms
    under collective rotations through the Wigner matrices of
    :func:`spinhydro.mqc.wigner_d`.  Raising operators use the convention
    sigma_+ = (sigma_x + i sigma_y)/sqrt(2); tensors with m < 0 follow from
    T_{l,-m} = (-1)^m T_{lm}^dag.
    """
    l, m, j = label.l, label.m, label.j
    if l > 2:
        raise NotImplementedError(
            f"l = {l} tensors (correlated triplets and beyond) are not implemented; "
            "only l <= 2 is supported")
    if not 0 <= j < n_sites:
        raise ValueError(f"site {j} outside chain of length {n_sites}")
    if m < 0:
        pos = isto(IstoLabel(l, -m, j), n_sites, periodic=periodic)
        return pos.dagger() * ((-1.0) ** m)

    if l == 0:
        return OperatorSum.identity(n_sites)
    if l == 1:
        if m == 0:
            return pauli(Z, j, n_sites)
        return _sigma_plus(j, n_sites)

    # l == 2 lives on the bond (j, j+1)
    if j == n_sites - 1:
        if not periodic:
            raise ValueError(
                f"pair tensor at j = {j} needs the wrap-around bond; chain is open")
        k = 0
    else:
        k = j + 1
    lo, hi = (j, k) if j < k else (k, j)
    if m == 0:
        return OperatorSum(n_sites, {
            ((lo, Z), (hi, Z)): 2.0 / _SQRT6,
            ((lo, X), (hi, X)): -1.0 / _SQRT6,
            ((lo, Y), (hi, Y)): -1.0 / _SQRT6,
        }, prune=False)
    if m == 1:
        zj = pauli(Z, j, n_sites)
        zk = pauli(Z, k, n_sites)
        pj = _sigma_plus(j, n_sites)
        pk = _sigma_plus(k, n_sites)
        return (zj @ pk + pj @ zk) / _SQRT2
    # m == 2
    return _sigma_plus(j, n_sites) @ _sigma_plus(k, n_sites)


# ---- textual serialization ----

def string_label(string: PauliString) -> str:
    if not string:
        return "I"
    return " ".join(f"{_AXIS_NAME[ax]}{site}" for site, ax in string)


def to_text(a: OperatorSum) -> str:
    """One term per line: ``coeff * X0 Y3 Z5`` (identity spelled ``I``)."""
    lines = [f"# L={a.n_sites}"]
    for string, coeff in sorted(a.terms.items()):
        c = complex(coeff)
        sign = "+" if c.imag >= 0 else "-"
        lines.append(f"({c.real!r}{sign}{abs(c.imag)!r}j) * {string_label(string)}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> OperatorSum:
    n_sites = None
    terms: dict = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "L=" in line:
                n_sites = int(line.split("L=")[1])
            continue
        coeff_part, _, ops_part = line.partition("*")
        coeff = complex(coeff_part.strip().replace(" ", ""))
        sites = []
        for token in ops_part.split():
            if token == "I":
                continue
            axis = _AXIS_CODE[token[0].upper()]
            sites.append((int(token[1:]), axis))
        sites.sort()
        key = tuple(sites)
        terms[key] = terms.get(key, 0.0) + coeff
    if n_sites is None:
        raise ValueError("missing '# L=' header line")
    return OperatorSum(n_sites, terms)
