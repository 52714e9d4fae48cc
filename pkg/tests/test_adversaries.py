"""Attack-strategy tests: discrimination attacks, register attacks, audits."""

import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from qpq.adversaries import (
    CANONICAL_PAIR,
    USD_SUCCESS,
    Bb84MemoryAlice,
    BiasedBob,
    EntangledBob,
    UsdAlice,
    alice_joint_helstrom,
    alice_usd_interpret,
    bb84_memory_attack,
    biased_analytics,
    biased_attack_report,
    biased_known_bit_mismatch,
    biased_round_trials,
    bob_biased_send,
    bob_entangled_round,
    cheat_detection,
    conclusiveness_guess_bound,
    conditional_register_mixtures,
    entangled_attack_report,
    entangled_outcome_counts,
    entangled_round_trials,
    helstrom_measurement_trials,
    honest_pair_round_trials,
    no_signaling_audit,
    usd_success_trials,
)
from qpq.experiments import monte_carlo
from qpq.protocol import AnnouncedPair, ProtocolConfig, SargSymbol, run_protocol
from qpq.quantum import usd_bound

from conftest import xor_error_bruteforce


def three_sigma(p, n):
    return 3.0 * math.sqrt(p * (1.0 - p) / n)


class TestUsdAttack:
    def test_success_rate_at_one_million_samples(self, rng):
        n = 1_000_000
        rate = usd_success_trials(n, rng).mean()
        assert abs(rate - USD_SUCCESS) <= three_sigma(USD_SUCCESS, n)
        assert USD_SUCCESS == pytest.approx(1.0 - 1.0 / math.sqrt(2.0), abs=1e-12)

    def test_scalar_interpret_matches_rate(self, rng):
        n = 30_000
        hits = sum(alice_usd_interpret(CANONICAL_PAIR, SargSymbol.UP, rng).conclusive
                   for _ in range(n))
        assert abs(hits / n - USD_SUCCESS) <= three_sigma(USD_SUCCESS, n)

    def test_conclusive_results_are_never_wrong(self, rng):
        for _ in range(5000):
            sent = SargSymbol(int(rng.integers(4)))
            pair = AnnouncedPair((int(sent) - int(rng.integers(2))) % 4)
            res = alice_usd_interpret(pair, sent, rng)
            if res.conclusive:
                assert res.bit == sent.bit
            else:
                assert res.posterior_bit1 == 0.5

    def test_sent_symbol_must_be_announced(self, rng):
        with pytest.raises(ValueError, match="pair"):
            alice_usd_interpret(AnnouncedPair(0), SargSymbol.DOWN, rng)

    def test_full_runs_reach_the_predicted_known_mean(self):
        config = ProtocolConfig(n=2000, k=3, seed=31)
        report = monte_carlo(config, alice=UsdAlice(), trials=300)
        assert report.passed["known_mean"]
        assert report.passed["conclusive_rate"]
        assert report.analytic["known_mean"] == pytest.approx(2000 * USD_SUCCESS ** 3)
        # her conclusive bits stay correct, so retrieval still works
        assert report.passed["retrieval_correct"]


class TestJointHelstrom:
    def test_reference_values(self):
        assert alice_joint_helstrom(7).closed_form == pytest.approx(0.5442, abs=5e-5)
        assert alice_joint_helstrom(1).closed_form == pytest.approx(0.8536, abs=5e-5)

    def test_large_k_approaches_coin_flipping(self):
        assert alice_joint_helstrom(200, matrix_max_k=0).closed_form == pytest.approx(0.5)

    @pytest.mark.parametrize("k", range(1, 11))
    def test_matrix_route_matches_closed_form(self, k):
        value = alice_joint_helstrom(k)
        assert abs(value.closed_form - value.matrix_value) <= 1e-9

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_simulated_measurement_reaches_the_bound(self, k, rng):
        n = 60_000
        rate = helstrom_measurement_trials(k, n, rng)
        expected = 0.5 + 0.5 * 2.0 ** (-k / 2.0)
        assert abs(rate - expected) <= three_sigma(expected, n)


class TestBb84Contrast:
    @pytest.mark.parametrize("n,k", [(60, 2), (500, 4), (120, 7)])
    def test_memory_attack_reads_the_whole_key(self, n, k):
        config = ProtocolConfig(n=n, k=k, seed=n + k, announcement="bb84")
        db = np.random.default_rng(n).integers(0, 2, n, dtype=np.uint8)
        t = bb84_memory_attack(config, db, 0)
        assert len(t.key.alice_known) == n
        assert t.key.mismatched_indices() == []
        assert t.retrieved_bit == int(db[0])

    def test_same_attack_against_pair_announcements_degrades(self):
        """With pair announcements the stored-qubit attack gets only USD rates."""
        config = ProtocolConfig(n=500, k=2, seed=9)
        report = monte_carlo(config, alice=Bb84MemoryAlice(), trials=200)
        assert report.analytic["conclusive_rate"] == pytest.approx(USD_SUCCESS)
        assert report.passed["conclusive_rate"]
        assert report.empirical["known_mean"] < 500 / 5  # nowhere near full knowledge

    def test_honest_alice_in_bb84_mode_learns_half_the_raw_bits(self):
        config = ProtocolConfig(n=400, k=1, seed=12, announcement="bb84")
        report = monte_carlo(config, trials=150)
        assert report.analytic["conclusive_rate"] == 0.5
        assert report.passed["conclusive_rate"]


class TestBiasedPreparation:
    def test_sent_state_and_pair(self):
        state, pair = bob_biased_send(math.pi / 8.0)
        np.testing.assert_allclose(state.amplitudes,
                                   [math.cos(math.pi / 8), math.sin(math.pi / 8)])
        assert pair == AnnouncedPair(0)

    def test_reference_angles(self):
        ne = biased_analytics(math.pi / 8.0)
        assert ne.p_c == pytest.approx(0.1464, abs=5e-5)
        assert ne.q_bit0 == pytest.approx(ne.q_bit1, abs=1e-12)
        assert ne.p_b == pytest.approx(0.5, abs=1e-12)
        sw = biased_analytics(5.0 * math.pi / 8.0)
        assert sw.p_c == pytest.approx(0.8536, abs=5e-5)
        honest = biased_analytics(0.0)
        assert honest.p_c == pytest.approx(0.25, abs=1e-12)
        assert honest.p_b == pytest.approx(1.0, abs=1e-12)

    def test_closed_form_oracle_over_a_grid(self):
        """p_c(phi) = 1/2 - (sqrt(2)/4) sin(2 phi + pi/4), by trigonometric reduction."""
        for phi in np.linspace(0.0, math.pi, 91):
            expected = 0.5 - math.sqrt(2.0) / 4.0 * math.sin(2.0 * phi + math.pi / 4.0)
            assert biased_analytics(phi).p_c == pytest.approx(expected, abs=1e-12)

    def test_conclusiveness_stays_within_the_bounds(self):
        lo, hi = math.sin(math.pi / 8) ** 2, math.cos(math.pi / 8) ** 2
        values = [biased_analytics(phi).p_c for phi in np.linspace(0, math.pi, 181)]
        assert min(values) >= lo - 1e-12
        assert max(values) <= hi + 1e-12

    def test_product_peaks_at_exactly_one_half(self):
        products = [biased_analytics(phi).p_c * biased_analytics(phi).p_b
                    for phi in np.linspace(0, math.pi, 181)]
        assert max(products) <= 0.5
        assert max(products) == pytest.approx(0.5, abs=1e-12)

    def test_round_trials_match_analytics(self, rng):
        n = 150_000
        res = biased_round_trials(math.pi / 8.0, n, rng)
        assert abs(res.conclusive_rate - 0.1464466) <= three_sigma(0.1464466, n)
        assert abs(res.bit_error_rate - 0.5) <= three_sigma(0.5, res.conclusive_count)
        assert abs(res.basis_guess_rate - 0.5) <= three_sigma(0.5, n)

    def test_full_run_conclusive_rate_tracks_phi(self):
        config = ProtocolConfig(n=300, k=2, seed=21)
        report = monte_carlo(config, bob=BiasedBob(5 * math.pi / 8), trials=100)
        assert report.analytic["conclusive_rate"] == pytest.approx(0.8536, abs=5e-5)
        assert report.passed["conclusive_rate"]

    def test_report_pass_flags(self):
        rep = biased_attack_report(math.pi / 8.0, trials=50_000, seed=4)
        assert rep.all_passed()
        assert rep.analytic["product"] <= 0.5


class TestEntangledRegister:
    def test_conditional_mixtures_match_the_exact_matrices(self):
        rho_c, rho_n = conditional_register_mixtures()
        np.testing.assert_allclose(rho_c.matrix, np.eye(2) / 2, atol=1e-12)
        np.testing.assert_allclose(rho_n.matrix,
                                   [[0.5, math.sqrt(2) / 3], [math.sqrt(2) / 3, 0.5]],
                                   atol=1e-12)

    def test_conclusiveness_guess_bound_value(self):
        assert conclusiveness_guess_bound() == pytest.approx(0.8536, abs=5e-5)
        assert conclusiveness_guess_bound() == pytest.approx(0.5 + math.sqrt(2) / 4,
                                                             abs=1e-12)

    def test_register_states_cannot_be_unambiguously_separated(self):
        rho_c, rho_n = conditional_register_mixtures()
        assert not usd_bound(rho_c, rho_n).feasible

    def test_scalar_round_is_self_consistent(self, rng):
        for _ in range(2000):
            r = bob_entangled_round("honest_basis", rng)
            assert r.alice_outcome.basis_index == r.alice_basis
            if r.interpretation.conclusive:
                # honest register measurement recovers exactly her conclusive bit
                assert r.bob_bit == r.interpretation.bit

    def test_scalar_conclusiveness_round_statistics(self, rng):
        n = 20_000
        correct = 0
        for _ in range(n):
            r = bob_entangled_round("conclusiveness_basis", rng)
            correct += r.conclusiveness_guess == r.interpretation.conclusive
        expected = conclusiveness_guess_bound()
        assert abs(correct / n - expected) <= three_sigma(expected, n)

    def test_bulk_trials_reach_the_reference_rates(self, rng):
        n = 200_000
        res = entangled_round_trials("conclusiveness_basis", n, rng)
        assert abs(res.conclusiveness_guess_rate - 0.8536) <= three_sigma(0.8536, n) + 1e-4
        assert abs(res.bit_guess_rate - 0.5) <= three_sigma(0.5, res.conclusive_count)
        assert abs(res.basis_guess_rate - 0.5) <= three_sigma(0.5, n)
        np.testing.assert_allclose(res.rho_conclusive, np.eye(2) / 2, atol=1e-2)
        np.testing.assert_allclose(res.rho_inconclusive,
                                   [[0.5, 0.4714], [0.4714, 0.5]], atol=1e-2)

    def test_honest_mode_keeps_full_bit_knowledge(self, rng):
        res = entangled_round_trials("honest_basis", 50_000, rng)
        assert res.bit_guess_rate == 1.0
        assert abs(res.conclusive_rate - 0.25) <= three_sigma(0.25, 50_000)

    def test_honest_mode_is_indistinguishable_for_alice(self, rng):
        """Outcome statistics match the honest protocol given the same pair."""
        n = 150_000
        table = np.stack([entangled_outcome_counts("honest_basis", n, rng),
                          honest_pair_round_trials(n, rng)])
        _, p_value, _, _ = chi2_contingency(table)
        assert p_value > 0.01

    def test_full_run_with_honest_register_mode_stays_sound(self):
        config = ProtocolConfig(n=300, k=2, seed=5)
        report = monte_carlo(config, bob=EntangledBob("honest_basis"), trials=120)
        assert report.passed["retrieval_correct"]
        assert report.passed["known_bits_sound"]
        assert report.passed["conclusive_rate"]

    def test_conclusiveness_mode_corrupts_his_key(self):
        """Erasing bit information costs him key knowledge: mismatches appear."""
        config = ProtocolConfig(n=200, k=1, seed=6)
        report = monte_carlo(config, bob=EntangledBob("conclusiveness_basis"), trials=60)
        assert report.empirical["known_mismatch_rate"] == pytest.approx(
            0.5, abs=3 * math.sqrt(0.25 / report.extra["known_bits_total"]))

    def test_report_pass_flags(self):
        rep = entangled_attack_report("conclusiveness_basis", trials=50_000, seed=2)
        assert rep.all_passed()
        rep = entangled_attack_report("honest_basis", trials=50_000, seed=2)
        assert rep.all_passed()

    def test_invalid_mode_rejected(self, rng):
        with pytest.raises(ValueError, match="mode"):
            bob_entangled_round("sideways", rng)
        with pytest.raises(ValueError, match="mode"):
            EntangledBob("sideways")


class TestNoSignalingAudit:
    def test_small_sweep_passes_and_caps_the_product(self):
        audit = no_signaling_audit(points=19, trials_per_point=4000, seed=7)
        assert audit.basis_guess_ok
        assert audit.product_ok
        assert audit.max_product_analytic <= 0.5
        assert len(audit.reports) == 21
        rows = audit.csv_rows()
        assert set(rows[0]) == {"phi", "p_c", "p_b", "product", "basis_guess", "ci"}

    def test_reference_products(self):
        ne = biased_analytics(math.pi / 8)
        assert ne.p_c * ne.p_b == pytest.approx(0.0732, abs=5e-5)
        honest = biased_analytics(0.0)
        assert honest.p_c * honest.p_b == pytest.approx(0.25, abs=1e-12)


class TestCheatDetection:
    @staticmethod
    def _transcripts(bob, n, k, runs, seed):
        out = []
        for run_idx in range(runs):
            rng = np.random.default_rng([seed, run_idx])
            config = ProtocolConfig(n=n, k=k, seed=seed, max_restarts=50)
            db = rng.integers(0, 2, n, dtype=np.uint8)
            out.append(run_protocol(config, db, int(rng.integers(n)), bob=bob, rng=rng))
        return out

    def test_honest_provider_is_never_caught(self):
        transcripts = self._transcripts(None, n=120, k=2, runs=40, seed=1)
        assert cheat_detection(transcripts, n_check=3) == 0.0

    def test_biased_provider_is_caught(self):
        transcripts = self._transcripts(BiasedBob(0.3), n=300, k=2, runs=60, seed=2)
        eps = 1.0 - biased_analytics(0.3).p_b
        expected = xor_error_bruteforce(eps, 2)
        rate = cheat_detection(transcripts, n_check=1)
        assert rate is not None
        assert rate > 0.2
        assert abs(rate - expected) < 0.2  # coarse; per-bit rate checked elsewhere

    def test_detection_grows_with_checked_bits(self):
        transcripts = self._transcripts(BiasedBob(0.3), n=300, k=2, runs=60, seed=3)
        rates = [cheat_detection(transcripts, n_check=m) for m in (1, 2, 4)]
        assert rates[0] <= rates[1] <= rates[2]

    def test_indeterminate_without_extra_bits(self):
        transcripts = self._transcripts(None, n=200, k=4, runs=6, seed=44)
        only_single = [t for t in transcripts if len(t.key.alice_known) == 1]
        if only_single:
            assert cheat_detection(only_single, n_check=1) is None

    def test_known_bit_mismatch_composition(self, rng):
        """Empirical known-final-bit error equals the XOR convolution oracle."""
        for phi, k in ((math.pi / 8, 7), (0.3, 2), (0.3, 4)):
            eps = 1.0 - biased_analytics(phi).p_b
            expected = xor_error_bruteforce(eps, k)
            n = 100_000
            emp = biased_known_bit_mismatch(phi, k, n, rng)
            assert abs(emp - expected) <= three_sigma(max(expected, 0.01), n) + 1e-3

    def test_bad_check_count_rejected(self):
        with pytest.raises(ValueError, match="checked bit"):
            cheat_detection([], 0)
