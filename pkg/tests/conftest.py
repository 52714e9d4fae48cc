"""Shared helpers: random states and brute-force twins used as oracles."""

import itertools

import numpy as np
import pytest

from qpq.quantum import DensityMatrix, MeasurementBasis, PureState, SargSymbol, sarg_state


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_pure(rng, dim=2) -> PureState:
    v = rng.normal(size=dim)
    return PureState(v / np.linalg.norm(v))


def random_density(rng, dim=2, rank=None) -> DensityMatrix:
    rank = rank or dim
    weights = rng.dirichlet(np.ones(rank))
    m = np.zeros((dim, dim))
    for w in weights:
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        m += w * np.outer(v, v)
    return DensityMatrix(m)


def random_basis(rng, dim=2) -> MeasurementBasis:
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    return MeasurementBasis(tuple(PureState(q[:, i]) for i in range(dim)))


def parity_mixtures_bruteforce(k: int):
    """Enumeration twin of the production Kronecker-power construction."""
    up = sarg_state(SargSymbol.UP).amplitudes
    right = sarg_state(SargSymbol.RIGHT).amplitudes
    dim = 2 ** k
    even = np.zeros((dim, dim))
    odd = np.zeros((dim, dim))
    for bits in itertools.product((0, 1), repeat=k):
        v = np.ones(1)
        for b in bits:
            v = np.kron(v, up if b == 0 else right)
        if sum(bits) % 2 == 0:
            even += np.outer(v, v)
        else:
            odd += np.outer(v, v)
    scale = 2.0 ** (k - 1)
    return DensityMatrix(even / scale), DensityMatrix(odd / scale)


def xor_error_bruteforce(eps: float, k: int) -> float:
    """Convolution oracle for the error rate of a k-fold XOR of noisy bits."""
    dist = np.zeros(k + 1)
    dist[0] = 1.0
    for _ in range(k):
        nxt = np.zeros(k + 1)
        nxt[1:] += dist[:-1] * eps
        nxt += dist * (1.0 - eps)
        dist = nxt
    return float(dist[1::2].sum())
