"""Exact linear algebra for real-amplitude qubit states.

Everything the simulator needs from quantum mechanics lives here: the four
SARG signal states, Born-rule sampling, and the two-state discrimination
figures of merit (trace distance, fidelity, Helstrom guessing probability,
unambiguous-discrimination bound). All states carry real amplitudes; the
protocol never produces a complex coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import NamedTuple

import numpy as np

# Tolerances used by the state validators and the discrimination routines.
NORM_TOL = 1e-12        # unit norm / unit trace / symmetry
EIG_FLOOR = -1e-10      # eigenvalues below this are an error, above are clipped
SUPPORT_TOL = 1e-10     # eigenvalue threshold defining the support of a state
PROB_TOL = 1e-9         # measurement probabilities must sum to 1 within this

K_MAX = 16              # largest joint-state construction (dimension 2**16)


class SargSymbol(IntEnum):
    """The four signal states, ordered by Hilbert angle (multiples of pi/4).

    UP/DOWN span the vertical basis and code bit 0; RIGHT/LEFT span the
    diagonal basis and code bit 1. The integer value doubles as an index:
    angle = value * pi/4, orthogonal partner = (value + 2) % 4.
    """

    UP = 0
    RIGHT = 1
    DOWN = 2
    LEFT = 3

    @property
    def bit(self) -> int:
        """Key bit carried by this symbol (the basis codes the bit)."""
        return int(self) & 1

    @property
    def basis_index(self) -> int:
        """0 for the vertical basis (UP/DOWN), 1 for the diagonal one."""
        return int(self) & 1

    @property
    def orthogonal(self) -> "SargSymbol":
        return SargSymbol((int(self) + 2) % 4)

    @property
    def angle(self) -> float:
        return int(self) * np.pi / 4


@dataclass(frozen=True, eq=False)
class PureState:
    """State vector with real amplitudes on one or more qubits.

    Invariants: the length is a power of two and the Euclidean norm is 1
    within 1e-12.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        if amps.ndim != 1 or amps.size < 2 or amps.size & (amps.size - 1):
            raise ValueError(f"amplitude count {amps.size} is not a power of two >= 2")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm!r} differs from 1 beyond {NORM_TOL}")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def num_qubits(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    def overlap(self, other: "PureState") -> float:
        """Inner product <self|other>."""
        return float(self.amplitudes @ other.amplitudes)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Real symmetric density matrix: unit trace, eigenvalues >= -1e-10."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"not a square matrix: shape {m.shape}")
        n = m.shape[0]
        if n < 2 or n & (n - 1):
            raise ValueError(f"dimension {n} is not a power of two >= 2")
        if not np.allclose(m, m.T, rtol=0.0, atol=NORM_TOL):
            raise ValueError("matrix is not symmetric within 1e-12")
        tr = float(np.trace(m))
        if abs(tr - 1.0) > NORM_TOL * n:
            raise ValueError(f"trace {tr!r} differs from 1")
        low = float(np.linalg.eigvalsh(m)[0])
        if low < EIG_FLOOR:
            raise ValueError(f"negative eigenvalue {low!r} below the {EIG_FLOOR} floor")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_qubits(self) -> int:
        return int(self.matrix.shape[0]).bit_length() - 1


@dataclass(frozen=True, eq=False)
class MeasurementBasis:
    """Complete list of orthonormal rank-one projectors, one per outcome."""

    states: tuple[PureState, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        dims = {s.dim for s in self.states}
        if len(dims) != 1:
            raise ValueError("basis states have mixed dimensions")
        dim = dims.pop()
        if len(self.states) != dim:
            raise ValueError(f"{len(self.states)} projectors cannot span dimension {dim}")
        vecs = np.stack([s.amplitudes for s in self.states])
        gram = vecs @ vecs.T
        if not np.allclose(gram, np.eye(dim), rtol=0.0, atol=NORM_TOL):
            raise ValueError("projectors are not pairwise orthonormal within 1e-12")
        # Orthonormality of a full set implies completeness; check it anyway.
        if not np.allclose(vecs.T @ vecs, np.eye(dim), rtol=0.0, atol=NORM_TOL):
            raise ValueError("projectors do not sum to the identity")

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.states)


@lru_cache(maxsize=None)
def _cached_symbol_state(symbol: int) -> PureState:
    return state_at_angle(SargSymbol(symbol).angle)


@lru_cache(maxsize=4)
def _cached_sarg_basis(basis_index: int) -> MeasurementBasis:
    first = SargSymbol(basis_index)
    return MeasurementBasis((sarg_state(first), sarg_state(first.orthogonal)))


def state_at_angle(angle: float) -> PureState:
    """Single-qubit state (cos a, sin a) at Hilbert angle a."""
    return PureState(np.array([np.cos(angle), np.sin(angle)]))


def sarg_state(symbol: SargSymbol) -> PureState:
    """Signal state for a SARG symbol: UP=(1,0), RIGHT, DOWN, LEFT at pi/4 steps."""
    return _cached_symbol_state(int(symbol))


def sarg_basis(basis_index: int) -> MeasurementBasis:
    """Measurement basis 0 (UP/DOWN) or 1 (RIGHT/LEFT).

    Outcome i of `measure` corresponds to ``basis_outcome_symbols(basis_index)[i]``.
    """
    if basis_index not in (0, 1):
        raise ValueError(f"basis index must be 0 or 1, got {basis_index}")
    return _cached_sarg_basis(basis_index)


def basis_outcome_symbols(basis_index: int) -> tuple[SargSymbol, SargSymbol]:
    """Symbols reported by a measurement in the given basis, outcome order."""
    first = SargSymbol(basis_index)
    return (first, first.orthogonal)


def _check_same_dim(a: DensityMatrix, b: DensityMatrix) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def _clip_spectrum(eigenvalues: np.ndarray, context: str) -> np.ndarray:
    """Zero the round-off part of a PSD spectrum before square roots.

    Eigenvalues below -1e-10 are treated as real negativity and raise;
    anything within the relative noise floor of zero is truncated so that
    rank-deficient inputs do not leak O(sqrt(eps)) into trace roots.
    """
    low = float(eigenvalues.min()) if eigenvalues.size else 0.0
    if low < EIG_FLOOR:
        raise ValueError(f"{context}: eigenvalue {low!r} below the {EIG_FLOOR} floor")
    floor = eigenvalues.size * np.finfo(float).eps * max(float(eigenvalues.max()), 0.0)
    out = eigenvalues.copy()
    out[out < floor] = 0.0
    return out


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the sum of absolute eigenvalues of a - b. Lies in [0, 1]."""
    _check_same_dim(a, b)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a.matrix - b.matrix)).sum())


def fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Square-root fidelity trace sqrt(sqrt(a) b sqrt(a)).

    Equals the absolute overlap |<psi0|psi1>| on pure states; 1 iff a == b.
    Computed by two symmetric eigendecompositions with eigenvalue clipping.
    """
    _check_same_dim(a, b)
    w, u = np.linalg.eigh(a.matrix)
    w = _clip_spectrum(w, "fidelity: first argument")
    sqrt_a = (u * np.sqrt(w)) @ u.T
    inner = sqrt_a @ b.matrix @ sqrt_a
    inner = 0.5 * (inner + inner.T)
    w2 = _clip_spectrum(np.linalg.eigvalsh(inner), "fidelity: inner product")
    return float(np.sqrt(w2).sum())


def helstrom_guess(a: DensityMatrix, b: DensityMatrix, prior_a: float = 0.5) -> float:
    """Minimum-error guessing probability between a (prior p) and b (1 - p).

    Returns (1 + ||p a - (1-p) b||_1) / 2, which never falls below
    max(p, 1-p): ignoring the measurement and guessing the prior is always
    available.
    """
    _check_same_dim(a, b)
    if not 0.0 <= prior_a <= 1.0:
        raise ValueError(f"prior must lie in [0, 1], got {prior_a}")
    diff = prior_a * a.matrix - (1.0 - prior_a) * b.matrix
    return 0.5 * (1.0 + float(np.abs(np.linalg.eigvalsh(diff)).sum()))


class UsdBound(NamedTuple):
    """Equal-prior unambiguous-discrimination bound plus feasibility flag."""

    bound: float
    feasible: bool


def _has_support_outside(a: DensityMatrix, b: DensityMatrix) -> bool:
    """True if part of a's support lies outside b's support (threshold 1e-10)."""
    w, u = np.linalg.eigh(b.matrix)
    kernel = u[:, w <= SUPPORT_TOL]
    if kernel.shape[1] == 0:
        return False  # b has full support, nothing lies outside it
    leaked = float(np.einsum("ij,ik,kj->", kernel, a.matrix, kernel))
    return leaked > SUPPORT_TOL


def usd_bound(a: DensityMatrix, b: DensityMatrix) -> UsdBound:
    """Upper bound 1 - F(a, b) on the equal-prior unambiguous success rate.

    Unambiguously identifying both states is only possible when each state
    has support outside the other's support; the flag reports that
    feasibility via a rank/support comparison.
    """
    _check_same_dim(a, b)
    feasible = _has_support_outside(a, b) and _has_support_outside(b, a)
    return UsdBound(bound=1.0 - fidelity(a, b), feasible=feasible)


def measure(state: PureState | DensityMatrix, basis: MeasurementBasis,
            rng: np.random.Generator) -> int:
    """Sample one Born-rule outcome index; consumes one uniform draw.

    Outcome i occurs with probability <i|rho|i> (or |<i|psi>|^2). The
    probabilities must sum to 1 within 1e-9 and are renormalized before
    sampling, so the result is deterministic given the stream position.
    """
    if state.dim != basis.dim:
        raise ValueError(f"state dimension {state.dim} does not match basis {basis.dim}")
    vecs = np.stack([s.amplitudes for s in basis.states])
    if isinstance(state, PureState):
        probs = (vecs @ state.amplitudes) ** 2
    else:
        probs = np.einsum("ij,jk,ik->i", vecs, state.matrix, vecs)
    total = float(probs.sum())
    if abs(total - 1.0) > PROB_TOL:
        raise ValueError(f"outcome probabilities sum to {total!r}, not 1")
    edges = np.cumsum(probs / total)
    return int(np.searchsorted(edges, rng.random(), side="right").clip(0, len(basis) - 1))


def kron_power(m: np.ndarray, k: int) -> np.ndarray:
    """k-fold Kronecker power of a square matrix."""
    out = np.array([[1.0]])
    for _ in range(k):
        out = np.kron(out, m)
    return out


def parity_mixtures(k: int) -> tuple[DensityMatrix, DensityMatrix]:
    """Even- and odd-parity mixtures of k-fold UP/RIGHT signal products.

    Bit 0 maps to UP and bit 1 to RIGHT (the canonical announced pair); the
    returned pair are the uniform mixtures over all k-bit strings of even
    and odd parity. Grouping the 2**k product terms by parity collapses the
    sum to two Kronecker powers:

        rho_even/odd = (M^(x)k +/- D^(x)k) / 2**k,
        M = P_up + P_right,  D = P_up - P_right.
    """
    if not 1 <= k <= K_MAX:
        raise ValueError(f"k must lie in 1..{K_MAX}, got {k}")
    p_up = np.outer(*2 * (sarg_state(SargSymbol.UP).amplitudes,))
    p_right = np.outer(*2 * (sarg_state(SargSymbol.RIGHT).amplitudes,))
    total = kron_power(p_up + p_right, k) / 2.0 ** k
    signed = kron_power(p_up - p_right, k) / 2.0 ** k
    return DensityMatrix(total + signed), DensityMatrix(total - signed)
