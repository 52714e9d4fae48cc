"""Two-party oblivious-key protocol engine.

The flow per run: the provider (Bob) sends a long stream of signal qubits,
the user (Alice) measures each detected one in a random basis, Bob announces
a non-orthogonal state pair per kept qubit, Alice interprets her outcomes,
the raw string is XOR-folded into an N-bit oblivious key, and a single
database bit is retrieved through a user-chosen cyclic shift.

Scalar operations (`bob_prepare`, `transmit`, `alice_measure`,
`bob_announce`, `interpret`, ...) define the per-qubit contracts.
`run_protocol` drives whole runs on columnar numpy arrays for speed; its
lookup tables are tabulated from the scalar operations at import time, so
both paths share one source of truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .quantum import (
    SargSymbol,
    basis_outcome_symbols,
    measure,
    sarg_basis,
    sarg_state,
)

ANNOUNCEMENT_MODES = ("sarg", "bb84")


class ProtocolError(Exception):
    """Base class for protocol-level failures."""


class EmptyKnownSet(ProtocolError):
    """Alice finished an attempt without a single known key bit."""


class RestartLimitExceeded(ProtocolError):
    """Every allowed attempt ended with an empty known set."""

    def __init__(self, attempts: int):
        super().__init__(f"no known key bit after {attempts} attempt(s)")
        self.attempts = attempts


@dataclass(frozen=True)
class AnnouncedPair:
    """Unordered pair of one vertical-basis and one diagonal-basis symbol.

    Only adjacent symbols form valid pairs; `pair_id` p denotes the pair
    {p, (p+1) mod 4}, giving {UP,RIGHT}, {RIGHT,DOWN}, {DOWN,LEFT},
    {LEFT,UP} for p = 0..3.
    """

    pair_id: int

    def __post_init__(self):
        if self.pair_id not in range(4):
            raise ValueError(f"pair id must lie in 0..3, got {self.pair_id}")

    @classmethod
    def from_symbols(cls, a: SargSymbol, b: SargSymbol) -> "AnnouncedPair":
        if (int(b) - int(a)) % 4 == 1:
            return cls(int(a))
        if (int(a) - int(b)) % 4 == 1:
            return cls(int(b))
        raise ValueError(f"{a!r} and {b!r} do not form an announceable pair")

    @property
    def members(self) -> tuple[SargSymbol, SargSymbol]:
        return (SargSymbol(self.pair_id), SargSymbol((self.pair_id + 1) % 4))

    def __contains__(self, symbol: SargSymbol) -> bool:
        return symbol in self.members

    def member_in_basis(self, basis_index: int) -> SargSymbol:
        """The unique pair member measured by the given basis."""
        a, b = self.members
        return a if a.basis_index == basis_index else b


@dataclass(frozen=True)
class Interpretation:
    """Alice's knowledge about one raw bit: certain, or a posterior only."""

    conclusive: bool
    bit: int | None = None
    posterior_bit1: float | None = None

    def __post_init__(self):
        if self.conclusive:
            if self.bit not in (0, 1) or self.posterior_bit1 is not None:
                raise ValueError("conclusive interpretation needs a bit and no posterior")
        else:
            if self.bit is not None:
                raise ValueError("inconclusive interpretation carries no bit")
            if self.posterior_bit1 is None or not 0.0 <= self.posterior_bit1 <= 1.0:
                raise ValueError(f"posterior {self.posterior_bit1!r} outside [0, 1]")

    @classmethod
    def conclusive_bit(cls, bit: int) -> "Interpretation":
        return cls(conclusive=True, bit=int(bit))

    @classmethod
    def inconclusive(cls, posterior_bit1: float) -> "Interpretation":
        return cls(conclusive=False, posterior_bit1=float(posterior_bit1))


@dataclass(frozen=True, eq=False)
class ObliviousKey:
    """Bob's full N-bit key plus Alice's sparse view of it."""

    bob_key: np.ndarray
    alice_known: dict[int, int]

    def __post_init__(self):
        key = np.ascontiguousarray(self.bob_key, dtype=np.uint8)
        key.setflags(write=False)
        object.__setattr__(self, "bob_key", key)
        n = key.size
        for j, bit in self.alice_known.items():
            if not 0 <= j < n or bit not in (0, 1):
                raise ValueError(f"known entry {j}: {bit} outside the key")

    @property
    def size(self) -> int:
        return int(self.bob_key.size)

    def known_indices(self) -> list[int]:
        return sorted(self.alice_known)

    def mismatched_indices(self) -> list[int]:
        """Known positions where Alice's value disagrees with Bob's key."""
        return [j for j, bit in sorted(self.alice_known.items())
                if bit != int(self.bob_key[j])]


@dataclass(frozen=True)
class ProtocolConfig:
    """Run parameters: database size n, folding depth k, loss, restart cap.

    `announcement` selects the classical post-processing: "sarg" announces a
    state pair per qubit (the real protocol), "bb84" announces the
    preparation basis instead and is kept only as an insecure contrast mode.
    """

    n: int
    k: int
    eta: float = 1.0
    max_restarts: int = 20
    seed: int = 0
    announcement: str = "sarg"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"database size must be >= 1, got {self.n}")
        if self.k < 1:
            raise ValueError(f"security parameter must be >= 1, got {self.k}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"detection probability must lie in (0, 1], got {self.eta}")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be >= 0")
        if self.announcement not in ANNOUNCEMENT_MODES:
            raise ValueError(f"announcement must be one of {ANNOUNCEMENT_MODES}")

    @property
    def raw_length(self) -> int:
        return self.n * self.k

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "eta": self.eta,
                "max_restarts": self.max_restarts, "seed": self.seed,
                "announcement": self.announcement}


# --------------------------------------------------------------------------
# scalar per-qubit operations
# --------------------------------------------------------------------------

def bob_prepare(rng: np.random.Generator) -> SargSymbol:
    """Draw one signal symbol uniformly from the four."""
    return SargSymbol(int(rng.integers(4)))


def transmit(symbol: SargSymbol, eta: float, rng: np.random.Generator) -> bool:
    """Channel plus detector: True with probability eta, independent of the symbol."""
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"detection probability must lie in (0, 1], got {eta}")
    return bool(rng.random() < eta)


def alice_measure(symbol: SargSymbol, rng: np.random.Generator) -> tuple[int, SargSymbol]:
    """Measure the signal state in a uniformly random basis.

    Returns (basis index, outcome symbol); the outcome is Born-sampled from
    the exact state.
    """
    basis_index = int(rng.integers(2))
    outcome_idx = measure(sarg_state(symbol), sarg_basis(basis_index), rng)
    return basis_index, basis_outcome_symbols(basis_index)[outcome_idx]


def bob_announce(sent: SargSymbol, rng: np.random.Generator) -> AnnouncedPair:
    """Announce the sent symbol plus one adjacent other-basis symbol."""
    sent = SargSymbol(sent)
    return AnnouncedPair((int(sent) - int(rng.integers(2))) % 4)


def interpret(basis_index: int, outcome: SargSymbol, pair: AnnouncedPair) -> Interpretation:
    """Classify one measurement against the announced pair.

    The outcome either equals the pair member living in Alice's basis
    (inconclusive, posterior 2/3 on that member by Bayes with a uniform
    prior) or is orthogonal to it (conclusive: the other member was sent).
    """
    outcome = SargSymbol(outcome)
    if outcome.basis_index != basis_index:
        raise ValueError(f"outcome {outcome!r} cannot occur in basis {basis_index}")
    same_basis = pair.member_in_basis(basis_index)
    other = pair.member_in_basis(1 - basis_index)
    if outcome == same_basis.orthogonal:
        return Interpretation.conclusive_bit(other.bit)
    # outcome == same_basis: that member would produce it with certainty,
    # the other member only half the time.
    return Interpretation.inconclusive(2.0 / 3.0 if same_basis.bit == 1 else 1.0 / 3.0)


# --------------------------------------------------------------------------
# lookup tables tabulated from the scalar operations
# --------------------------------------------------------------------------

def _tabulate_outcome_probs() -> np.ndarray:
    """P(outcome is the second basis member | sent symbol, basis)."""
    table = np.zeros((4, 2))
    for s in SargSymbol:
        for basis in (0, 1):
            second = sarg_state(basis_outcome_symbols(basis)[1])
            table[int(s), basis] = sarg_state(s).overlap(second) ** 2
    return table


def _tabulate_interpretations() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per (pair, outcome): conclusive flag, bit (-1 if none), posterior (nan)."""
    conclusive = np.zeros((4, 4), dtype=bool)
    bits = np.full((4, 4), -1, dtype=np.int8)
    posterior = np.full((4, 4), np.nan)
    for pid in range(4):
        for outcome in SargSymbol:
            res = interpret(outcome.basis_index, outcome, AnnouncedPair(pid))
            conclusive[pid, int(outcome)] = res.conclusive
            if res.conclusive:
                bits[pid, int(outcome)] = res.bit
            else:
                posterior[pid, int(outcome)] = res.posterior_bit1
    return conclusive, bits, posterior


OUTCOME_SECOND_PROB = _tabulate_outcome_probs()
CONCLUSIVE_TABLE, BIT_TABLE, POSTERIOR_TABLE = _tabulate_interpretations()


# --------------------------------------------------------------------------
# vectorized strategy interface
# --------------------------------------------------------------------------

@dataclass(eq=False)
class BobRounds:
    """Columnar description of a batch of prepared qubits.

    `kind` indexes `kind_table`, whose row [p_v, p_h] gives the probability
    that Alice's outcome is the second member of her basis (DOWN or LEFT)
    for the state she received. `sent` is -1 when no definite symbol was
    prepared; `pair` is -1 when the announcement is a basis (bb84 mode).
    """

    sent: np.ndarray
    pair: np.ndarray
    kind: np.ndarray
    kind_table: np.ndarray

    def __len__(self) -> int:
        return self.sent.size


@dataclass(eq=False)
class AliceRecords:
    """Columnar measurement records for the kept qubits of one attempt."""

    basis: np.ndarray
    outcome: np.ndarray
    conclusive: np.ndarray
    bit: np.ndarray            # -1 where inconclusive
    posterior_bit1: np.ndarray  # nan where conclusive


@dataclass(frozen=True)
class HonestBob:
    """Protocol-following provider."""

    kind = "honest"

    def rounds(self, count: int, config: ProtocolConfig, rng: np.random.Generator) -> BobRounds:
        sent = rng.integers(0, 4, count).astype(np.int8)
        if config.announcement == "sarg":
            pair = ((sent - rng.integers(0, 2, count)) % 4).astype(np.int8)
        else:
            pair = np.full(count, -1, dtype=np.int8)
        return BobRounds(sent=sent, pair=pair, kind=sent, kind_table=OUTCOME_SECOND_PROB)

    def key_bits(self, rounds: BobRounds, kept: np.ndarray, alice: AliceRecords,
                 config: ProtocolConfig, rng: np.random.Generator) -> np.ndarray:
        sent = rounds.sent[kept]
        if config.announcement == "sarg":
            return (sent & 1).astype(np.uint8)
        return (sent >> 1).astype(np.uint8)


@dataclass(frozen=True)
class HonestAlice:
    """Protocol-following user: direct measurement, mechanical interpretation."""

    kind = "honest"

    def respond(self, rounds: BobRounds, kept: np.ndarray, config: ProtocolConfig,
                rng: np.random.Generator) -> AliceRecords:
        count = kept.size
        basis = rng.integers(0, 2, count).astype(np.int8)
        second = rng.random(count) < rounds.kind_table[rounds.kind[kept], basis]
        outcome = (basis + 2 * second).astype(np.int8)
        if config.announcement == "sarg":
            pair = rounds.pair[kept]
            conclusive = CONCLUSIVE_TABLE[pair, outcome]
            bit = BIT_TABLE[pair, outcome]
            posterior = POSTERIOR_TABLE[pair, outcome]
        else:
            announced = rounds.sent[kept] & 1
            conclusive = basis == announced
            bit = np.where(conclusive, outcome >> 1, -1).astype(np.int8)
            posterior = np.where(conclusive, np.nan, 0.5)
        return AliceRecords(basis=basis, outcome=outcome, conclusive=conclusive,
                            bit=bit, posterior_bit1=posterior)


# --------------------------------------------------------------------------
# key reduction and retrieval
# --------------------------------------------------------------------------

def _reduce_arrays(bob_bits: np.ndarray, conclusive: np.ndarray,
                   alice_bits: np.ndarray, n: int, k: int) -> ObliviousKey:
    bob_key = np.bitwise_xor.reduce(bob_bits.reshape(k, n).astype(np.uint8), axis=0)
    known_mask = conclusive.reshape(k, n).all(axis=0)
    vals = np.bitwise_xor.reduce(
        (alice_bits.reshape(k, n) & 1).astype(np.uint8), axis=0)
    alice_known = {int(j): int(vals[j]) for j in np.nonzero(known_mask)[0]}
    return ObliviousKey(bob_key=bob_key, alice_known=alice_known)


def reduce_key(raw_bits, raw_interpretations, n: int, k: int) -> ObliviousKey:
    """Fold k substrings of length n into the oblivious key.

    Raw position t belongs to substring t // n at key position t % n. Bob's
    key bit j is the XOR over the k substrings; Alice knows position j only
    when all k contributing interpretations are conclusive, in which case
    her value is the XOR of the conclusive bits.
    """
    bits = np.asarray(raw_bits, dtype=np.uint8)
    interps = list(raw_interpretations)
    if bits.size != n * k or len(interps) != n * k:
        raise ValueError(f"expected {n * k} raw bits and interpretations, "
                         f"got {bits.size} and {len(interps)}")
    conclusive = np.array([it.conclusive for it in interps])
    alice_bits = np.array([it.bit if it.conclusive else 0 for it in interps],
                          dtype=np.int8)
    return _reduce_arrays(bits, conclusive, alice_bits, n, k)


def query_shift(alice_known: dict[int, int], target_index: int, n: int,
                rng: np.random.Generator) -> tuple[int, int]:
    """Pick a known key position j uniformly and announce s = (j - i) mod n."""
    if not alice_known:
        raise EmptyKnownSet("cannot build a query without a known key bit")
    if not 0 <= target_index < n:
        raise ValueError(f"target index {target_index} outside [0, {n})")
    known = sorted(alice_known)
    j = known[int(rng.integers(len(known)))]
    return j, (j - target_index) % n


def encrypt_database(database: np.ndarray, bob_key: np.ndarray, shift: int) -> np.ndarray:
    """Ciphertext C[m] = X[m] XOR key[(m + s) mod n]."""
    x = np.asarray(database, dtype=np.uint8)
    key = np.asarray(bob_key, dtype=np.uint8)
    if x.shape != key.shape:
        raise ValueError(f"database/key length mismatch: {x.shape} vs {key.shape}")
    return x ^ np.roll(key, -shift % x.size)


def decrypt_bit(ciphertext: np.ndarray, target_index: int, known_bit: int) -> int:
    """Alice reads X[i] = C[i] XOR her known key bit."""
    return int(ciphertext[target_index]) ^ int(known_bit)


# --------------------------------------------------------------------------
# full runs
# --------------------------------------------------------------------------

@dataclass(eq=False)
class RawRecords:
    """Per-qubit record of one attempt, including undetected sends.

    Arrays are full length (one entry per prepared qubit); measurement
    fields hold -1/NaN where the qubit was not detected.
    """

    sent: np.ndarray
    detected: np.ndarray
    pair: np.ndarray
    basis: np.ndarray
    outcome: np.ndarray
    conclusive: np.ndarray
    alice_bit: np.ndarray
    posterior_bit1: np.ndarray
    bob_bit: np.ndarray

    def __len__(self) -> int:
        return self.sent.size

    @property
    def kept_count(self) -> int:
        return int(self.detected.sum())

    def iter_dicts(self) -> Iterator[dict]:
        for i in range(len(self)):
            det = bool(self.detected[i])
            yield {
                "sent": int(self.sent[i]) if self.sent[i] >= 0 else None,
                "detected": det,
                "pair": int(self.pair[i]) if det and self.pair[i] >= 0 else None,
                "basis": int(self.basis[i]) if det else None,
                "outcome": int(self.outcome[i]) if det else None,
                "conclusive": bool(self.conclusive[i]) if det else None,
                "bit": int(self.alice_bit[i]) if det and self.alice_bit[i] >= 0 else None,
                "posterior_bit1": (float(self.posterior_bit1[i])
                                   if det and np.isfinite(self.posterior_bit1[i]) else None),
                "bob_bit": int(self.bob_bit[i]) if det else None,
            }


@dataclass(eq=False)
class Transcript:
    """Everything one protocol run produced."""

    config: ProtocolConfig
    restarts: int
    records: RawRecords
    key: ObliviousKey
    target_index: int
    chosen_index: int
    shift: int
    ciphertext: np.ndarray
    retrieved_bit: int
    attempt_known_counts: list[int] = field(default_factory=list)
    attempt_conclusive_counts: list[int] = field(default_factory=list)

    def to_dict(self, verbose: bool = False) -> dict:
        doc = {
            "config": self.config.to_dict(),
            "restarts": self.restarts,
            "known_indices": self.key.known_indices(),
            "known_bits": {str(j): b for j, b in sorted(self.key.alice_known.items())},
            "target_index": self.target_index,
            "chosen_index": self.chosen_index,
            "shift": self.shift,
            "retrieved_bit": self.retrieved_bit,
            "attempt_known_counts": list(self.attempt_known_counts),
        }
        if verbose:
            doc["records"] = list(self.records.iter_dicts())
        return doc


@dataclass(eq=False)
class _Attempt:
    rounds: BobRounds
    detected: np.ndarray
    kept: np.ndarray
    alice: AliceRecords
    bob_bits: np.ndarray


def _run_attempt(config: ProtocolConfig, alice, bob, rng: np.random.Generator) -> _Attempt:
    """Send until n*k qubits are detected, then measure and announce."""
    need = config.raw_length
    chunks: list[BobRounds] = []
    detected_chunks: list[np.ndarray] = []
    have = 0
    while have < need:
        missing = need - have
        count = missing if config.eta == 1.0 else int(missing / config.eta * 1.05) + 16
        rounds = bob.rounds(count, config, rng)
        det = (rng.random(count) < config.eta) if config.eta < 1.0 \
            else np.ones(count, dtype=bool)
        chunks.append(rounds)
        detected_chunks.append(det)
        have += int(det.sum())
    sent = np.concatenate([c.sent for c in chunks])
    pair = np.concatenate([c.pair for c in chunks])
    kind = np.concatenate([c.kind for c in chunks])
    detected = np.concatenate(detected_chunks)
    # Drop everything after the qubit that completed the raw string.
    last = np.nonzero(detected)[0][need - 1]
    sent, pair, kind, detected = (a[:last + 1] for a in (sent, pair, kind, detected))
    rounds = BobRounds(sent=sent, pair=pair, kind=kind, kind_table=chunks[0].kind_table)
    kept = np.nonzero(detected)[0]
    alice_rec = alice.respond(rounds, kept, config, rng)
    bob_bits = bob.key_bits(rounds, kept, alice_rec, config, rng)
    return _Attempt(rounds=rounds, detected=detected, kept=kept,
                    alice=alice_rec, bob_bits=bob_bits)


def _scatter_records(att: _Attempt) -> RawRecords:
    total = len(att.rounds)
    basis = np.full(total, -1, dtype=np.int8)
    outcome = np.full(total, -1, dtype=np.int8)
    conclusive = np.zeros(total, dtype=bool)
    alice_bit = np.full(total, -1, dtype=np.int8)
    posterior = np.full(total, np.nan)
    bob_bit = np.full(total, -1, dtype=np.int8)
    basis[att.kept] = att.alice.basis
    outcome[att.kept] = att.alice.outcome
    conclusive[att.kept] = att.alice.conclusive
    alice_bit[att.kept] = att.alice.bit
    posterior[att.kept] = att.alice.posterior_bit1
    bob_bit[att.kept] = att.bob_bits
    return RawRecords(sent=att.rounds.sent, detected=att.detected,
                      pair=att.rounds.pair, basis=basis, outcome=outcome,
                      conclusive=conclusive, alice_bit=alice_bit,
                      posterior_bit1=posterior, bob_bit=bob_bit)


def run_protocol(config: ProtocolConfig, database, target_index: int,
                 alice=None, bob=None, rng: np.random.Generator | None = None) -> Transcript:
    """Execute attempts until Alice knows a key bit, then retrieve one database bit.

    Raises RestartLimitExceeded when max_restarts + 1 attempts all end with
    an empty known set. The returned transcript records the final attempt in
    full plus per-attempt summary counts.
    """
    alice = alice if alice is not None else HonestAlice()
    bob = bob if bob is not None else HonestBob()
    if getattr(alice, "kind", "honest") != "honest" and getattr(bob, "kind", "honest") != "honest":
        raise ValueError("simultaneous cheating on both sides is not modeled")
    x = np.asarray(database, dtype=np.uint8)
    if x.ndim != 1 or x.size != config.n:
        raise ValueError(f"database must hold {config.n} bits, got shape {x.shape}")
    if not np.isin(x, (0, 1)).all():
        raise ValueError("database entries must be 0 or 1")
    if not 0 <= target_index < config.n:
        raise ValueError(f"target index {target_index} outside [0, {config.n})")
    rng = rng if rng is not None else np.random.default_rng(config.seed)

    known_counts: list[int] = []
    conclusive_counts: list[int] = []
    att = None
    key = None
    for _ in range(config.max_restarts + 1):
        att = _run_attempt(config, alice, bob, rng)
        key = _reduce_arrays(att.bob_bits, att.alice.conclusive,
                             att.alice.bit, config.n, config.k)
        known_counts.append(len(key.alice_known))
        conclusive_counts.append(int(att.alice.conclusive.sum()))
        if key.alice_known:
            break
    else:
        raise RestartLimitExceeded(config.max_restarts + 1)

    chosen_j, shift = query_shift(key.alice_known, target_index, config.n, rng)
    ciphertext = encrypt_database(x, key.bob_key, shift)
    retrieved = decrypt_bit(ciphertext, target_index, key.alice_known[chosen_j])
    return Transcript(config=config, restarts=len(known_counts) - 1,
                      records=_scatter_records(att), key=key,
                      target_index=target_index, chosen_index=chosen_j,
                      shift=shift, ciphertext=ciphertext, retrieved_bit=retrieved,
                      attempt_known_counts=known_counts,
                      attempt_conclusive_counts=conclusive_counts)

