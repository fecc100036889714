"""Shared test helpers: an independent dense-matrix oracle for operator sums.

The oracle builds matrices by explicit Kronecker products straight from the
term dictionaries, on purpose not reusing the package's own matrix backend.
"""

import numpy as np
import pytest

SIGMA = {
    0: np.eye(2, dtype=complex),
    1: np.array([[0, 1], [1, 0]], dtype=complex),
    2: np.array([[0, -1j], [1j, 0]], dtype=complex),
    3: np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_oracle(op):
    """2^L x 2^L matrix of an OperatorSum, built independently."""
    L = op.n_sites
    out = np.zeros((2 ** L, 2 ** L), dtype=complex)
    for string, coeff in op.terms.items():
        axes = {site: ax for site, ax in string}
        mat = np.array([[1.0 + 0j]])
        for site in range(L):
            mat = np.kron(mat, SIGMA[axes.get(site, 0)])
        out += coeff * mat
    return out


def random_operator(L, n_terms, rng, hermitian=False, max_weight=None):
    """Random sparse operator sum for property tests."""
    from spinhydro.operators import OperatorSum

    terms = {}
    for _ in range(n_terms):
        k = int(rng.integers(1, (max_weight or L) + 1))
        sites = np.sort(rng.choice(L, size=k, replace=False))
        string = tuple((int(s), int(rng.integers(1, 4))) for s in sites)
        if hermitian:
            coeff = complex(rng.standard_normal(), 0.0)
        else:
            coeff = complex(rng.standard_normal(), rng.standard_normal())
        terms[string] = terms.get(string, 0.0) + coeff
    return OperatorSum(L, terms)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
