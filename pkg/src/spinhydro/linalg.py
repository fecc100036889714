"""Matrix backends for OperatorSum values (dense and sparse)."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .operators import OperatorSum, X, Y, Z

_PAULI = {
    0: np.eye(2, dtype=complex),
    X: np.array([[0, 1], [1, 0]], dtype=complex),
    Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Z: np.array([[1, 0], [0, -1]], dtype=complex),
}


def to_dense(a: OperatorSum) -> np.ndarray:
    """Dense 2^L x 2^L matrix (site 0 = most significant factor)."""
    dim = 2 ** a.n_sites
    out = np.zeros((dim, dim), dtype=complex)
    for string, coeff in a.terms.items():
        mat = np.array([[coeff]])
        pos = 0
        for site, axis in string:
            for _ in range(site - pos):
                mat = np.kron(mat, _PAULI[0])
            mat = np.kron(mat, _PAULI[axis])
            pos = site + 1
        for _ in range(a.n_sites - pos):
            mat = np.kron(mat, _PAULI[0])
        out += mat
    return out


def to_sparse(a: OperatorSum) -> sp.csr_matrix:
    """Sparse CSR matrix; every Pauli string contributes one entry per row."""
    dim = 2 ** a.n_sites
    out = sp.csr_matrix((dim, dim), dtype=complex)
    id2 = sp.identity(2, dtype=complex, format="csr")
    for string, coeff in a.terms.items():
        mat = sp.csr_matrix(np.array([[coeff]]))
        pos = 0
        for site, axis in string:
            gap = site - pos
            if gap:
                mat = sp.kron(mat, sp.identity(2 ** gap, dtype=complex, format="csr"), format="csr")
            mat = sp.kron(mat, sp.csr_matrix(_PAULI[axis]), format="csr")
            pos = site + 1
        gap = a.n_sites - pos
        if gap:
            mat = sp.kron(mat, sp.identity(2 ** gap, dtype=complex, format="csr"), format="csr")
        out = out + mat
    del id2
    out.sum_duplicates()
    return out.tocsr()


def apply_operator(a: OperatorSum, psi: np.ndarray) -> np.ndarray:
    """Apply an operator to a state vector without materializing a matrix.

    Pauli strings act as a bit-flip permutation times a diagonal phase, so
    each term costs one fancy-indexing pass over the vector.
    """
    n = a.n_sites
    dim = psi.shape[0]
    idx = np.arange(dim)
    out = np.zeros_like(psi, dtype=complex)
    for string, coeff in a.terms.items():
        flip = 0
        for site, axis in string:
            if axis in (X, Y):
                flip |= 1 << (n - 1 - site)
        phase = np.full(dim, coeff, dtype=complex)
        for site, axis in string:
            bit = ((idx >> (n - 1 - site)) & 1).astype(bool)
            if axis == Z:
                phase = np.where(bit, -phase, phase)
            elif axis == Y:
                # sigma_y matrix element from the source bit: |0> -> +i|1>, |1> -> -i|0>
                phase = np.where(bit, phase * -1j, phase * 1j)
        if flip:
            out[idx ^ flip] += phase * psi
        else:
            out += phase * psi
    return out
