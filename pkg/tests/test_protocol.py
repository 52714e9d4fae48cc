"""Protocol-engine tests: per-qubit contracts, reduction, retrieval, full runs."""

import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from qpq.protocol import (
    AnnouncedPair,
    EmptyKnownSet,
    Interpretation,
    ObliviousKey,
    ProtocolConfig,
    RestartLimitExceeded,
    SargSymbol,
    alice_measure,
    bob_announce,
    bob_prepare,
    decrypt_bit,
    encrypt_database,
    interpret,
    query_shift,
    reduce_key,
    run_protocol,
    transmit,
)
from qpq.experiments import honest_category_counts


def three_sigma_count(p, n):
    return 3.0 * math.sqrt(p * (1.0 - p) * n)


class TestAnnouncedPair:
    def test_the_four_valid_pairs(self):
        expected = [{0, 1}, {1, 2}, {2, 3}, {3, 0}]
        for pid in range(4):
            assert {int(s) for s in AnnouncedPair(pid).members} == expected[pid]

    def test_from_symbols_rejects_same_basis(self):
        with pytest.raises(ValueError, match="announceable"):
            AnnouncedPair.from_symbols(SargSymbol.UP, SargSymbol.DOWN)

    def test_from_symbols_is_order_free(self):
        a = AnnouncedPair.from_symbols(SargSymbol.UP, SargSymbol.RIGHT)
        b = AnnouncedPair.from_symbols(SargSymbol.RIGHT, SargSymbol.UP)
        assert a == b == AnnouncedPair(0)

    def test_one_member_per_basis(self):
        for pid in range(4):
            pair = AnnouncedPair(pid)
            assert {m.basis_index for m in pair.members} == {0, 1}


class TestInterpretationType:
    def test_conclusive_requires_bit(self):
        with pytest.raises(ValueError):
            Interpretation(conclusive=True)

    def test_inconclusive_requires_posterior(self):
        with pytest.raises(ValueError):
            Interpretation(conclusive=False)

    def test_posterior_range_checked(self):
        with pytest.raises(ValueError):
            Interpretation.inconclusive(1.5)


class TestBobPrepare:
    def test_symbols_are_uniform(self, rng):
        n = 1_000_000
        counts = np.bincount([int(bob_prepare(rng)) for _ in range(n)], minlength=4)
        for c in counts:
            assert abs(c - n / 4) <= three_sigma_count(0.25, n)

    def test_bit_zero_symbols_are_half(self, rng):
        n = 200_000
        zeros = sum(bob_prepare(rng).bit == 0 for _ in range(n))
        assert abs(zeros - n / 2) <= three_sigma_count(0.5, n)

    def test_stream_determinism(self):
        a = [bob_prepare(np.random.default_rng(5)) for _ in range(32)]
        b = [bob_prepare(np.random.default_rng(5)) for _ in range(32)]
        assert a == b


class TestTransmit:
    def test_eta_one_always_detects(self, rng):
        assert all(transmit(SargSymbol.UP, 1.0, rng) for _ in range(1000))

    def test_detection_rate_matches_eta(self, rng):
        n = 1_000_000
        hits = sum(transmit(SargSymbol.LEFT, 0.1, rng) for _ in range(n))
        assert abs(hits - 0.1 * n) <= three_sigma_count(0.1, n)

    def test_invalid_eta_rejected(self, rng):
        with pytest.raises(ValueError, match="detection"):
            transmit(SargSymbol.UP, 0.0, rng)


class TestAliceMeasure:
    def test_eigenstate_in_own_basis(self, rng):
        for _ in range(500):
            basis, outcome = alice_measure(SargSymbol.UP, rng)
            if basis == 0:
                assert outcome == SargSymbol.UP

    def test_cross_basis_is_balanced(self, rng):
        rights = total = 0
        for _ in range(60_000):
            basis, outcome = alice_measure(SargSymbol.UP, rng)
            if basis == 1:
                total += 1
                rights += outcome == SargSymbol.RIGHT
        assert abs(rights - total / 2) <= three_sigma_count(0.5, total)

    def test_conclusive_marginal_is_quarter(self, rng):
        """Random symbol, announcement, measurement: 1/4 conclusive overall."""
        n = 40_000
        conclusive = 0
        for _ in range(n):
            sent = bob_prepare(rng)
            pair = bob_announce(sent, rng)
            basis, outcome = alice_measure(sent, rng)
            conclusive += interpret(basis, outcome, pair).conclusive
        assert abs(conclusive - n / 4) <= three_sigma_count(0.25, n)


class TestBobAnnounce:
    def test_pair_always_contains_sent(self, rng):
        for _ in range(2000):
            sent = bob_prepare(rng)
            assert sent in bob_announce(sent, rng)

    def test_right_yields_its_two_pairs_evenly(self, rng):
        n = 40_000
        counts = {0: 0, 1: 0}
        for _ in range(n):
            counts[bob_announce(SargSymbol.RIGHT, rng).pair_id] += 1
        assert set(counts) == {0, 1}
        assert abs(counts[0] - n / 2) <= three_sigma_count(0.5, n)

    def test_up_yields_adjacent_pairs(self, rng):
        ids = {bob_announce(SargSymbol.UP, rng).pair_id for _ in range(200)}
        assert ids == {0, 3}  # {UP,RIGHT} and {LEFT,UP}


class TestInterpret:
    def test_down_against_up_right_concludes_bit_one(self):
        res = interpret(0, SargSymbol.DOWN, AnnouncedPair(0))
        assert res.conclusive and res.bit == 1

    def test_left_against_up_right_concludes_bit_zero(self):
        res = interpret(1, SargSymbol.LEFT, AnnouncedPair(0))
        assert res.conclusive and res.bit == 0

    def test_right_against_up_right_is_two_thirds_bit_one(self):
        res = interpret(1, SargSymbol.RIGHT, AnnouncedPair(0))
        assert not res.conclusive
        assert res.posterior_bit1 == pytest.approx(2.0 / 3.0)

    def test_up_against_up_right_is_two_thirds_bit_zero(self):
        res = interpret(0, SargSymbol.UP, AnnouncedPair(0))
        assert not res.conclusive
        assert res.posterior_bit1 == pytest.approx(1.0 / 3.0)

    def test_outcome_must_match_basis(self):
        with pytest.raises(ValueError, match="basis"):
            interpret(1, SargSymbol.UP, AnnouncedPair(0))

    def test_conclusive_results_never_wrong(self, rng):
        """Honest-run soundness: a conclusive bit always equals the sent bit."""
        for _ in range(20_000):
            sent = bob_prepare(rng)
            pair = bob_announce(sent, rng)
            basis, outcome = alice_measure(sent, rng)
            res = interpret(basis, outcome, pair)
            if res.conclusive:
                assert res.bit == sent.bit

    def test_inconclusive_due_to_matching_basis_two_thirds(self, rng):
        """Given no conclusive result, the bases coincided with chance 2/3."""
        matched = total = 0
        for _ in range(60_000):
            sent = bob_prepare(rng)
            pair = bob_announce(sent, rng)
            basis, outcome = alice_measure(sent, rng)
            if not interpret(basis, outcome, pair).conclusive:
                total += 1
                matched += basis == sent.basis_index
        assert abs(matched - 2 * total / 3) <= three_sigma_count(2.0 / 3.0, total)


class TestReduceKey:
    def test_k1_is_the_identity_reduction(self):
        interps = [Interpretation.conclusive_bit(1),
                   Interpretation.inconclusive(2 / 3),
                   Interpretation.conclusive_bit(0)]
        key = reduce_key([1, 0, 0], interps, n=3, k=1)
        assert key.bob_key.tolist() == [1, 0, 0]
        assert key.alice_known == {0: 1, 2: 0}

    def test_two_by_two_worked_example(self):
        interps = [Interpretation.conclusive_bit(1),
                   Interpretation.inconclusive(1 / 3),
                   Interpretation.conclusive_bit(1),
                   Interpretation.inconclusive(2 / 3)]
        key = reduce_key([1, 0, 1, 1], interps, n=2, k=2)
        assert key.bob_key.tolist() == [0, 1]
        assert key.alice_known == {0: 0}

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError, match="raw bits"):
            reduce_key([0, 1], [Interpretation.conclusive_bit(0)], n=2, k=1)

    def test_alice_values_follow_conclusive_bits_not_bobs(self):
        """Reduction folds her conclusive bits even when they disagree with Bob."""
        interps = [Interpretation.conclusive_bit(0), Interpretation.conclusive_bit(0)]
        key = reduce_key([1, 1], interps, n=1, k=2)
        assert key.bob_key.tolist() == [0]
        assert key.alice_known == {0: 0}


class TestQueryShiftEncrypt:
    def test_simple_shift(self, rng):
        j, s = query_shift({5: 1}, target_index=2, n=10, rng=rng)
        assert (j, s) == (5, 3)

    def test_wrapping_shift(self, rng):
        j, s = query_shift({1: 0}, target_index=8, n=10, rng=rng)
        assert (j, s) == (1, 3)

    def test_tie_break_is_uniform(self, rng):
        n = 20_000
        picks = sum(query_shift({2: 0, 7: 1}, 0, 10, rng)[0] == 2 for _ in range(n))
        assert abs(picks - n / 2) <= three_sigma_count(0.5, n)

    def test_empty_known_set_raises(self, rng):
        with pytest.raises(EmptyKnownSet):
            query_shift({}, 0, 10, rng)

    def test_zero_shift_identity(self):
        x = np.array([1, 0, 1, 1], dtype=np.uint8)
        assert encrypt_database(x, np.zeros(4, dtype=np.uint8), 0).tolist() == x.tolist()

    def test_worked_example(self):
        c = encrypt_database(np.array([1, 0, 1]), np.array([1, 1, 0]), 1)
        assert c.tolist() == [0, 0, 0]

    def test_round_trip_recovers_target(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 40))
            x = rng.integers(0, 2, n, dtype=np.uint8)
            key = rng.integers(0, 2, n, dtype=np.uint8)
            j = int(rng.integers(n))
            i = int(rng.integers(n))
            s = (j - i) % n
            c = encrypt_database(x, key, s)
            assert decrypt_bit(c, i, int(key[j])) == int(x[i])

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError, match="mismatch"):
            encrypt_database(np.zeros(3, dtype=np.uint8), np.zeros(4, dtype=np.uint8), 0)


class TestObliviousKeyType:
    def test_rejects_out_of_range_known_index(self):
        with pytest.raises(ValueError, match="known entry"):
            ObliviousKey(bob_key=np.zeros(4, dtype=np.uint8), alice_known={4: 0})


class TestRunProtocol:
    def test_honest_runs_always_retrieve_the_target(self):
        for seed in range(60):
            config = ProtocolConfig(n=200, k=3, seed=seed)
            rng = np.random.default_rng([seed, 77])
            x = rng.integers(0, 2, 200, dtype=np.uint8)
            target = int(rng.integers(200))
            t = run_protocol(config, x, target, rng=rng)
            assert t.retrieved_bit == int(x[target])
            assert t.key.mismatched_indices() == []
            assert t.records.kept_count == config.raw_length

    def test_restart_fraction_near_two_percent(self):
        """First-attempt failure rate for n=1000, k=4 sits at 0.020."""
        restarts = 0
        runs = 400
        for seed in range(runs):
            config = ProtocolConfig(n=1000, k=4, seed=seed)
            t = run_protocol(config, np.zeros(1000, dtype=np.uint8), 0)
            restarts += t.restarts > 0
        p0 = (1.0 - 0.25 ** 4) ** 1000
        assert abs(restarts - p0 * runs) <= 3.0 * math.sqrt(p0 * (1 - p0) * runs)

    def test_restart_limit_exceeded_carries_attempts(self):
        config = ProtocolConfig(n=1, k=30, max_restarts=0, seed=3)
        with pytest.raises(RestartLimitExceeded) as err:
            run_protocol(config, np.array([1], dtype=np.uint8), 0)
        assert err.value.attempts == 1

    def test_seeded_runs_are_reproducible(self):
        config = ProtocolConfig(n=300, k=3, seed=99)
        x = np.random.default_rng(1).integers(0, 2, 300, dtype=np.uint8)
        a = run_protocol(config, x, 17)
        b = run_protocol(config, x, 17)
        assert a.key.alice_known == b.key.alice_known
        assert a.shift == b.shift
        assert np.array_equal(a.ciphertext, b.ciphertext)
        assert np.array_equal(a.records.sent, b.records.sent)

    def test_lossy_run_keeps_exactly_the_raw_length(self):
        config = ProtocolConfig(n=100, k=3, eta=0.3, seed=5)
        t = run_protocol(config, np.zeros(100, dtype=np.uint8), 1)
        assert t.records.kept_count == 300
        assert len(t.records) > 300  # undetected sends are on record
        assert t.retrieved_bit == 0

    def test_loss_independence_chi_square(self):
        """Kept-qubit statistics match between eta = 1 and eta = 0.1."""
        counts = []
        for eta in (1.0, 0.1):
            config = ProtocolConfig(n=500, k=2, eta=eta, seed=2026)
            counts.append(honest_category_counts(config, trials=150))
        table = np.stack(counts)
        assert table.sum() == 2 * 150 * 1000
        _, p_value, _, _ = chi2_contingency(table)
        assert p_value > 0.01

    def test_rejects_bad_inputs(self):
        config = ProtocolConfig(n=10, k=2, seed=0)
        with pytest.raises(ValueError, match="target"):
            run_protocol(config, np.zeros(10, dtype=np.uint8), 10)
        with pytest.raises(ValueError, match="database"):
            run_protocol(config, np.zeros(9, dtype=np.uint8), 0)
        with pytest.raises(ValueError, match="0 or 1"):
            run_protocol(config, np.full(10, 2, dtype=np.uint8), 0)

    def test_transcript_json_schema(self):
        config = ProtocolConfig(n=50, k=2, seed=8)
        t = run_protocol(config, np.zeros(50, dtype=np.uint8), 3)
        doc = t.to_dict()
        for field in ("config", "restarts", "known_indices", "shift",
                      "retrieved_bit", "target_index"):
            assert field in doc
        assert "records" not in doc
        verbose = t.to_dict(verbose=True)
        assert len(verbose["records"]) == len(t.records)
        kept = [r for r in verbose["records"] if r["detected"]]
        assert len(kept) == 100
        assert all(r["pair"] is not None for r in kept)


class TestConfigValidation:
    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            ProtocolConfig(n=0, k=1)
        with pytest.raises(ValueError):
            ProtocolConfig(n=1, k=0)
        with pytest.raises(ValueError):
            ProtocolConfig(n=1, k=1, eta=1.5)
        with pytest.raises(ValueError):
            ProtocolConfig(n=1, k=1, announcement="phase")
