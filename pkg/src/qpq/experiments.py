"""Analytic key statistics, Monte Carlo drivers, and report assembly.

Every number the simulator claims is produced twice where possible: a
closed-form value and a seeded empirical estimate with a 99% interval. The
drivers here tie the protocol engine and the attack strategies together
into reproducible experiments.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import stats
from .adversaries import (
    USD_SUCCESS,
    Bb84MemoryAlice,
    UsdAlice,
    alice_joint_helstrom,
    helstrom_measurement_trials,
    usd_success_trials,
)
from .protocol import (
    ProtocolConfig,
    RestartLimitExceeded,
    run_protocol,
)
from .quantum import K_MAX, fidelity, parity_mixtures


@dataclass(frozen=True)
class KeyStats:
    """Expected known-bit count and restart probability for one (N, k) choice."""

    n_bar: float
    p0: float
    poisson_approx: float


def key_stats(n: int, k: int, p_conclusive: float = 0.25) -> KeyStats:
    """Closed-form key statistics after the k-fold XOR reduction.

    A final key bit is known only when all k contributing rounds were
    conclusive, so n_bar = n * p**k known bits on average and the whole
    attempt fails with probability p0 = (1 - p**k)**n, approximately
    exp(-n_bar) for large n.
    """
    if n < 1 or k < 1:
        raise ValueError(f"need n >= 1 and k >= 1, got {n}, {k}")
    if not 0.0 < p_conclusive <= 1.0:
        raise ValueError(f"conclusive probability must lie in (0, 1], got {p_conclusive}")
    p_known = p_conclusive ** k
    n_bar = n * p_known
    p0 = (1.0 - p_known) ** n
    return KeyStats(n_bar=n_bar, p0=p0, poisson_approx=math.exp(-n_bar))


class Table1Row(NamedTuple):
    n: int
    k: int
    stats: KeyStats
    p0_display: str
    n_bar_display: str


# Reference working points for six database sizes; the display strings are
# the acceptance targets the analytic values must round to.
TABLE1_REFERENCE: tuple[tuple[int, int, str, str], ...] = (
    (10**3, 4, "0.020", "3.91"),
    (5 * 10**3, 5, "0.008", "4.88"),
    (10**4, 6, "0.087", "2.44"),
    (5 * 10**4, 7, "0.047", "3.05"),
    (10**5, 7, "0.002", "6.10"),
    (10**6, 9, "0.022", "3.81"),
)


def table1() -> list[Table1Row]:
    """Key statistics for the six reference (N, k) working points."""
    rows = []
    for n, k, _, _ in TABLE1_REFERENCE:
        ks = key_stats(n, k)
        rows.append(Table1Row(n=n, k=k, stats=ks,
                              p0_display=f"{ks.p0:.3f}",
                              n_bar_display=f"{ks.n_bar:.2f}"))
    return rows


def table1_matches_reference() -> bool:
    return all(row.p0_display == ref[2] and row.n_bar_display == ref[3]
               for row, ref in zip(table1(), TABLE1_REFERENCE))


# --------------------------------------------------------------------------
# experiment reports
# --------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    """Analytic values, empirical values, intervals, and verdicts for one experiment.

    The serialized form deliberately omits the runtime so that report files
    are byte-identical for a fixed seed; the runtime is still available on
    the object and in the human-readable rendering.
    """

    experiment: str
    params: dict
    analytic: dict = field(default_factory=dict)
    empirical: dict = field(default_factory=dict)
    ci99: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "analytic": self.analytic,
            "empirical": self.empirical,
            "ci99": self.ci99,
            "passed": self.passed,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"experiment: {self.experiment}",
                 f"params: {json.dumps(self.params, sort_keys=True)}",
                 f"runtime: {self.runtime_s:.2f}s",
                 f"{'metric':<28}{'analytic':>14}{'empirical':>14}{'ci99':>12}  verdict"]
        keys = sorted(set(self.analytic) | set(self.empirical))
        for key in keys:
            ana = self.analytic.get(key)
            emp = self.empirical.get(key)
            ci = self.ci99.get(key)
            verdict = self.passed.get(key)
            lines.append(f"{key:<28}"
                         f"{'' if ana is None else format(ana, '.6g'):>14}"
                         f"{'' if emp is None else format(emp, '.6g'):>14}"
                         f"{'' if ci is None else format(ci, '.2g'):>12}"
                         f"  {'' if verdict is None else ('pass' if verdict else 'FAIL')}")
        for key, verdict in sorted(self.passed.items()):
            if key not in keys:
                lines.append(f"{key:<28}{'':>14}{'':>14}{'':>12}  "
                             f"{'pass' if verdict else 'FAIL'}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# Monte Carlo driver
# --------------------------------------------------------------------------

class TrialResult(NamedTuple):
    trial: int
    success: bool
    restarted: bool
    first_known: int
    final_known: int
    known_mismatches: int
    conclusive_total: int
    kept_total: int
    retrieved_correct: bool


def _run_trial(config: ProtocolConfig, alice, bob, trial: int) -> TrialResult:
    rng = np.random.default_rng([config.seed, trial])
    database = rng.integers(0, 2, config.n, dtype=np.uint8)
    target = int(rng.integers(config.n))
    try:
        t = run_protocol(config, database, target, alice=alice, bob=bob, rng=rng)
    except RestartLimitExceeded:
        return TrialResult(trial, False, True, 0, 0, 0, 0, 0, False)
    return TrialResult(
        trial=trial,
        success=True,
        restarted=t.restarts > 0,
        first_known=t.attempt_known_counts[0],
        final_known=len(t.key.alice_known),
        known_mismatches=len(t.key.mismatched_indices()),
        conclusive_total=sum(t.attempt_conclusive_counts),
        kept_total=config.raw_length * (t.restarts + 1),
        retrieved_correct=t.retrieved_bit == int(database[target]),
    )


def _trial_range(args) -> list[TrialResult]:
    config, alice, bob, lo, hi = args
    return [_run_trial(config, alice, bob, t) for t in range(lo, hi)]


def _expected_conclusive(alice, bob, config: ProtocolConfig) -> float | None:
    """Analytic per-round conclusive probability for supported strategy mixes."""
    alice_kind = getattr(alice, "kind", "honest") if alice is not None else "honest"
    bob_kind = getattr(bob, "kind", "honest") if bob is not None else "honest"
    if alice_kind == "honest" and bob_kind == "honest":
        return 0.5 if config.announcement == "bb84" else 0.25
    if alice_kind == "usd" and bob_kind == "honest":
        return USD_SUCCESS
    if alice_kind == "bb84_memory" and bob_kind == "honest":
        return 1.0 if config.announcement == "bb84" else USD_SUCCESS
    if bob_kind == "biased" and alice_kind == "honest":
        return bob.analytics().p_c
    if bob_kind == "entangled" and alice_kind == "honest":
        return 0.25
    return None


def monte_carlo(config: ProtocolConfig, alice=None, bob=None, trials: int = 2000,
                jobs: int = 1) -> ExperimentReport:
    """Run seeded protocol trials and compare the statistics to the closed forms.

    Each trial owns the stream derived from (config.seed, trial index), so
    results are identical for any job count. Known-bit statistics are taken
    from the first attempt of each run (the unconditioned distribution);
    restart exhaustion counts as a failed trial, not a crash.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    start = time.perf_counter()
    if jobs > 1:
        bounds = np.linspace(0, trials, jobs + 1, dtype=int)
        chunks = [(config, alice, bob, int(lo), int(hi))
                  for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        results: list[TrialResult] = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_trial_range, chunks):
                results.extend(part)
        results.sort(key=lambda r: r.trial)
    else:
        results = [_run_trial(config, alice, bob, t) for t in range(trials)]

    first_known = np.array([r.first_known for r in results], dtype=float)
    restarted = sum(r.restarted for r in results)
    kept_total = sum(r.kept_total for r in results)
    conclusive_total = sum(r.conclusive_total for r in results)
    successes = [r for r in results if r.success]
    known_total = sum(r.final_known for r in successes)
    mismatch_total = sum(r.known_mismatches for r in successes)

    p_conclusive = _expected_conclusive(alice, bob, config)
    analytic: dict = {}
    empirical: dict = {}
    ci99: dict = {}
    passed: dict = {}

    known_mean, known_hw = stats.mean_ci(first_known)
    empirical["known_mean"] = known_mean
    ci99["known_mean"] = known_hw
    rest_center, rest_hw = stats.rate_ci(restarted, trials)
    empirical["restart_fraction"] = restarted / trials
    ci99["restart_fraction"] = rest_hw
    if kept_total:
        conc_rate = conclusive_total / kept_total
        empirical["conclusive_rate"] = conc_rate
        ci99["conclusive_rate"] = stats.z_value(0.99) * stats.binomial_sigma(
            conc_rate if p_conclusive is None else p_conclusive, kept_total)

    if p_conclusive is not None:
        ks = key_stats(config.n, config.k, p_conclusive)
        analytic["known_mean"] = ks.n_bar
        analytic["restart_fraction"] = ks.p0
        analytic["conclusive_rate"] = p_conclusive
        passed["known_mean"] = abs(known_mean - ks.n_bar) <= known_hw
        # Wilson-style coverage: the analytic value must sit in the interval.
        passed["restart_fraction"] = abs(rest_center - ks.p0) <= max(rest_hw, 1e-12)
        if kept_total:
            sigma3 = 3.0 * stats.binomial_sigma(p_conclusive, kept_total)
            passed["conclusive_rate"] = abs(conc_rate - p_conclusive) <= sigma3
        if 0.0 < ks.n_bar and first_known.mean() > 0.0 and p_conclusive < 1.0:
            ratio, ratio_hw = stats.dispersion_ci(first_known)
            empirical["known_dispersion"] = ratio
            ci99["known_dispersion"] = ratio_hw
            analytic["known_dispersion"] = 1.0
            passed["known_dispersion"] = abs(ratio - 1.0) <= ratio_hw

    alice_kind = getattr(alice, "kind", "honest") if alice is not None else "honest"
    bob_kind = getattr(bob, "kind", "honest") if bob is not None else "honest"
    if successes:
        correct = sum(r.retrieved_correct for r in successes)
        empirical["retrieval_correct_rate"] = correct / len(successes)
        if bob_kind == "honest" or (bob_kind == "entangled" and bob.mode == "honest_basis"):
            analytic["retrieval_correct_rate"] = 1.0
            passed["retrieval_correct"] = correct == len(successes)
            passed["known_bits_sound"] = mismatch_total == 0
        if known_total:
            empirical["known_mismatch_rate"] = mismatch_total / known_total

    report = ExperimentReport(
        experiment="monte_carlo",
        params={"config": config.to_dict(), "trials": trials,
                "alice": alice_kind, "bob": bob_kind,
                **({"phi": bob.phi} if bob_kind == "biased" else {}),
                **({"mode": bob.mode} if bob_kind == "entangled" else {})},
        analytic=analytic, empirical=empirical, ci99=ci99, passed=passed,
        extra={"successes": len(successes), "failures": trials - len(successes),
               "known_bits_total": known_total},
        runtime_s=time.perf_counter() - start,
    )
    return report


def honest_category_counts(config: ProtocolConfig, trials: int) -> np.ndarray:
    """Counts over (outcome, conclusive) categories for kept qubits.

    Eight categories: outcome symbol (4) times conclusive flag (2). Used by
    the loss-invariance comparison, where the detected-qubit statistics must
    not depend on the detection probability.
    """
    counts = np.zeros(8, dtype=np.int64)
    for trial in range(trials):
        rng = np.random.default_rng([config.seed, trial])
        database = rng.integers(0, 2, config.n, dtype=np.uint8)
        target = int(rng.integers(config.n))
        t = run_protocol(config, database, target, rng=rng)
        kept = t.records.detected
        cat = (t.records.outcome[kept].astype(np.int64) * 2
               + t.records.conclusive[kept])
        counts += np.bincount(cat, minlength=8)
    return counts


# --------------------------------------------------------------------------
# discrimination-bound curve
# --------------------------------------------------------------------------

class CurvePoint(NamedTuple):
    k: int
    bound: float


def usd_curve(k_max: int = 10) -> list[CurvePoint]:
    """Joint unambiguous-discrimination bound 1 - F per folding depth k."""
    if not 1 <= k_max <= K_MAX:
        raise ValueError(f"k_max must lie in 1..{K_MAX}, got {k_max}")
    points = []
    for k in range(1, k_max + 1):
        even, odd = parity_mixtures(k)
        points.append(CurvePoint(k=k, bound=1.0 - fidelity(even, odd)))
    return points


def usd_curve_experiment(k_max: int = 10) -> ExperimentReport:
    """Curve report with the bound checks the values actually satisfy.

    The bound is non-increasing in k and drops strictly at every step from
    even to odd k; adjacent (odd, even) pairs are exactly equal, so no
    strict-decrease claim is made across those steps.
    """
    start = time.perf_counter()
    points = usd_curve(k_max)
    bounds = [p.bound for p in points]
    k1_expected = 1.0 - 1.0 / math.sqrt(2.0)
    non_increasing = all(b - a <= 1e-9 for a, b in zip(bounds, bounds[1:]))
    strict_at_odd = all(bounds[i] < bounds[i - 1] - 1e-9
                        for i in range(2, len(bounds), 2))
    return ExperimentReport(
        experiment="usd_curve",
        params={"k_max": k_max},
        analytic={"k1_bound": k1_expected},
        empirical={"k1_bound": bounds[0]},
        passed={"k1_value": abs(bounds[0] - k1_expected) <= 1e-9,
                "non_increasing": non_increasing,
                "strict_decrease_even_to_odd": strict_at_odd},
        extra={"points": [[p.k, p.bound] for p in points]},
        runtime_s=time.perf_counter() - start,
    )


def usd_attack_experiment(n: int = 50_000, k: int = 7, trials: int = 600,
                          qubit_samples: int = 10**6, seed: int = 0,
                          jobs: int = 1) -> ExperimentReport:
    """Perfect-memory discrimination attack: per-qubit rate plus full runs."""
    start = time.perf_counter()
    rng = np.random.default_rng([seed, 10**6])
    hits = int(usd_success_trials(qubit_samples, rng).sum())
    rate, _ = stats.rate_ci(hits, qubit_samples)
    sigma3 = 3.0 * stats.binomial_sigma(USD_SUCCESS, qubit_samples)
    config = ProtocolConfig(n=n, k=k, seed=seed)
    mc = monte_carlo(config, alice=UsdAlice(), trials=trials, jobs=jobs)
    report = ExperimentReport(
        experiment="usd_attack",
        params={"n": n, "k": k, "trials": trials,
                "qubit_samples": qubit_samples, "seed": seed},
        analytic={"qubit_success_rate": USD_SUCCESS,
                  **{f"run_{key}": v for key, v in mc.analytic.items()}},
        empirical={"qubit_success_rate": rate,
                   **{f"run_{key}": v for key, v in mc.empirical.items()}},
        ci99={"qubit_success_rate": sigma3,
              **{f"run_{key}": v for key, v in mc.ci99.items()}},
        passed={"qubit_success_rate": abs(rate - USD_SUCCESS) <= sigma3,
                **{f"run_{key}": v for key, v in mc.passed.items()}},
        runtime_s=time.perf_counter() - start,
    )
    return report


def helstrom_experiment(k: int = 7, trials: int = 100_000, seed: int = 0,
                        agreement_k_max: int = 10) -> ExperimentReport:
    """Joint minimum-error attack: closed form, matrix route, simulated rounds."""
    start = time.perf_counter()
    worst = 0.0
    for kk in range(1, agreement_k_max + 1):
        value = alice_joint_helstrom(kk)
        worst = max(worst, abs(value.closed_form - value.matrix_value))
    target = alice_joint_helstrom(k)
    rng = np.random.default_rng([seed, 42])
    emp = helstrom_measurement_trials(k, trials, rng)
    _, hw = stats.rate_ci(round(emp * trials), trials)
    report = ExperimentReport(
        experiment="helstrom_attack",
        params={"k": k, "trials": trials, "seed": seed,
                "agreement_k_max": agreement_k_max},
        analytic={"guess_rate": target.closed_form},
        empirical={"guess_rate": emp,
                   "matrix_guess_rate": target.matrix_value},
        ci99={"guess_rate": hw},
        passed={"routes_agree_1e9": worst <= 1e-9,
                "guess_rate": abs(emp - target.closed_form) <= hw},
        extra={"max_route_difference": worst},
        runtime_s=time.perf_counter() - start,
    )
    return report


def bb84_attack_experiment(n: int = 1000, k: int = 4, trials: int = 50,
                           seed: int = 0) -> ExperimentReport:
    """Memory attack under basis announcements, with the pair-announcement contrast."""
    start = time.perf_counter()
    full_known = 0
    mismatches = 0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        config = ProtocolConfig(n=n, k=k, seed=seed, announcement="bb84")
        database = rng.integers(0, 2, n, dtype=np.uint8)
        target = int(rng.integers(n))
        t = run_protocol(config, database, target, alice=Bb84MemoryAlice(), rng=rng)
        full_known += len(t.key.alice_known) == n
        mismatches += len(t.key.mismatched_indices())
    contrast = monte_carlo(ProtocolConfig(n=n, k=k, seed=seed),
                           alice=Bb84MemoryAlice(), trials=trials)
    report = ExperimentReport(
        experiment="bb84_memory_attack",
        params={"n": n, "k": k, "trials": trials, "seed": seed},
        analytic={"known_mean_bb84": float(n),
                  "known_mean_sarg": contrast.analytic["known_mean"]},
        empirical={"known_mean_sarg": contrast.empirical["known_mean"]},
        ci99={"known_mean_sarg": contrast.ci99["known_mean"]},
        passed={"whole_key_known": full_known == trials,
                "error_free": mismatches == 0,
                "sarg_mode_degrades": contrast.passed["known_mean"]},
        runtime_s=time.perf_counter() - start,
    )
    return report


# --------------------------------------------------------------------------
# multi-string combining
# --------------------------------------------------------------------------

def combine_known_sets(known_sets: Sequence[Sequence[int]], n: int) -> np.ndarray:
    """Greedy shift combination of known-index sets from independent keys.

    Each string is cyclically shifted so that its first known index lands at
    position 0; a position of the combined key is known only where every
    shifted string is known. Raises if any input set is empty.
    """
    aligned: list[np.ndarray] = []
    for idx, known in enumerate(known_sets):
        arr = np.unique(np.asarray(sorted(known), dtype=np.int64))
        if arr.size == 0:
            raise ValueError(f"input string {idx} has an empty known set")
        if arr[0] < 0 or arr[-1] >= n:
            raise ValueError(f"input string {idx} holds indices outside [0, {n})")
        aligned.append(np.sort((arr - arr[0]) % n))
    combined = aligned[0]
    for arr in aligned[1:]:
        combined = np.intersect1d(combined, arr, assume_unique=True)
    return combined


def _combine_trial(config: ProtocolConfig, m: int, trial: int) -> int:
    rng = np.random.default_rng([config.seed, trial])
    database = np.zeros(config.n, dtype=np.uint8)
    sets = []
    for _ in range(m):
        t = run_protocol(config, database, 0, rng=rng)
        sets.append(t.key.known_indices())
    return int(combine_known_sets(sets, config.n).size)


def _combine_range(args) -> list[tuple[int, int]]:
    config, m, lo, hi = args
    return [(t, _combine_trial(config, m, t)) for t in range(lo, hi)]


def multi_string_combine(m: int, n: int, k: int, trials: int = 200,
                         seed: int = 0, jobs: int = 1) -> ExperimentReport:
    """Distribution of the combined known-bit count over seeded trials.

    Generates m independent keys per trial with the honest protocol
    (restarting empty attempts) and combines them with the greedy shift
    rule. Reports the count distribution and the exactly-one probability.
    """
    if m < 1:
        raise ValueError("need at least one string")
    start = time.perf_counter()
    config = ProtocolConfig(n=n, k=k, seed=seed, max_restarts=200)
    if jobs > 1:
        bounds = np.linspace(0, trials, jobs + 1, dtype=int)
        chunks = [(config, m, int(lo), int(hi))
                  for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        pairs: list[tuple[int, int]] = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_combine_range, chunks):
                pairs.extend(part)
        pairs.sort()
        counts = [c for _, c in pairs]
    else:
        counts = [_combine_trial(config, m, t) for t in range(trials)]

    values, freqs = np.unique(np.asarray(counts), return_counts=True)
    distribution = {int(v): int(f) for v, f in zip(values, freqs)}
    exactly_one = distribution.get(1, 0) / trials
    p1, hw1 = stats.rate_ci(distribution.get(1, 0), trials)
    report = ExperimentReport(
        experiment="multi_string_combine",
        params={"m": m, "n": n, "k": k, "trials": trials, "seed": seed},
        empirical={"p_exactly_one": exactly_one, "mean_known": float(np.mean(counts)),
                   "min_known": int(min(counts))},
        ci99={"p_exactly_one": hw1},
        passed={"at_least_one_always": min(counts) >= 1},
        extra={"distribution": distribution},
        runtime_s=time.perf_counter() - start,
    )
    return report
