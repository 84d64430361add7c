"""Acceptance suite: one test per release criterion, one printed line each.

Run with output visible to see the criterion lines:

    pytest tests/test_acceptance.py -v -s
"""

import json
import math
import random
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

from dpledger.config import load_config
from dpledger.ledger import Ledger, make_record, read_records, verify_file
from dpledger.mechanism import (
    PrivacyParams,
    compute_sigma,
    epsilon_for_sigma,
    gaussian_mechanism,
    threshold_grid,
    verify_dp_guarantee,
)
from dpledger.queries import QueryDescriptor, QueryKind, canonical_key
from dpledger.reuse import (
    HistoryEntry,
    HistoryIndex,
    ReuseKind,
    decide,
    execute,
    partial_params,
)
from dpledger.service import QueryService

from conftest import ACCOUNT_A, make_config, write_config_file
from test_crash import CRASH_POINTS, replay, run_driver
from test_reuse import grid_search_fraction

KEY = b"\x42" * 32


@contextmanager
def criterion(name: str):
    notes: list[str] = []
    try:
        yield notes
    except BaseException:
        print(f"[acceptance] {name}: FAIL  {' '.join(notes)}")
        raise
    print(f"[acceptance] {name}: PASS  {' '.join(notes)}")


class TestAcceptance:
    def test_a1_cost_reduction_headline(self, tmp_path):
        with criterion("A1 cost-reduction headline") as notes:
            config_path = write_config_file(tmp_path)
            workload = tmp_path / "workload.csv"
            workload.write_text(
                "kind,column,comparator,constant,epsilon,delta,repeats\n"
                "COUNT,,,,1.0,1e-5,100\n",
                encoding="utf-8",
            )
            out = tmp_path / "sim.csv"
            started = time.monotonic()
            proc = subprocess.run(
                [sys.executable, "-m", "dpledger.cli", "simulate",
                 "--config", str(config_path), "--workload", str(workload),
                 "--out", str(out)],
                capture_output=True, text=True, timeout=60,
            )
            elapsed = time.monotonic() - started
            assert proc.returncode == 0, proc.stderr
            rows = out.read_text().strip().split("\n")
            assert len(rows) == 101
            final = rows[-1].split(",")
            cum_actual = float(final[3])
            cum_naive = float(final[4])
            assert cum_actual == 1.0  # exact
            assert cum_naive == 100.0  # exact
            assert cum_actual / cum_naive == 0.01
            assert elapsed < 5.0
            notes.append(
                f"actual={cum_actual} naive={cum_naive} ratio=0.01 in {elapsed:.2f}s"
            )

    def test_a2_sigma_calibration(self):
        with criterion("A2 sigma calibration") as notes:
            oracle = 4.84480526260538942125864215759  # precomputed at 30 digits
            sigma = compute_sigma(PrivacyParams(1.0, 1e-5), 1.0)
            assert abs(sigma - oracle) <= 1e-12 * oracle
            doubled = compute_sigma(PrivacyParams(2.0, 1e-5), 1.0)
            assert doubled == sigma / 2.0  # exact
            notes.append(f"sigma={sigma!r}, sigma(2eps)=sigma(eps)/2 exact")

    def test_a3_partial_reuse_accounting(self):
        with criterion("A3 partial-reuse accounting") as notes:
            f, extra, eff = partial_params(3.0, 5.0)
            assert abs(f - 0.36) <= 1e-9 * 0.36
            assert abs(extra - 2.4) <= 1e-9 * 2.4
            assert abs(eff - 3.75) <= 1e-9 * 3.75
            oracle_f = grid_search_fraction(3.0, 5.0)
            assert abs(f - oracle_f) <= 1e-6
            rng = np.random.default_rng(99)
            for _ in range(100):
                sigma_old = float(rng.uniform(0.1, 50.0))
                sigma_new = float(rng.uniform(0.05, 0.999)) * sigma_old
                _, _, eff_i = partial_params(sigma_new, sigma_old)
                charged = epsilon_for_sigma(eff_i, 1e-5, 1.0)
                fresh = epsilon_for_sigma(sigma_new, 1e-5, 1.0)
                assert charged < fresh
            notes.append(f"f={f} extra={extra} eff={eff}; 100/100 pairs cheaper than fresh")

    def test_a4_distributional_equivalence(self):
        with criterion("A4 distributional equivalence of reuse") as notes:
            started = time.monotonic()
            trials = 10_000
            true_value = 10.0
            params = PrivacyParams(1.0, 1e-5)
            rng = np.random.default_rng(424242)

            full = np.empty(trials)
            for i in range(trials):
                index = HistoryIndex()
                base = gaussian_mechanism(true_value, 3.0, rng)
                index.add(KEY, HistoryEntry(0, 3.0, base))
                decision = decide(KEY, 5.0, index)
                assert decision.kind is ReuseKind.FULL_REUSE
                full[i] = execute(decision, math.nan, params, 1.0, rng).answer
            fresh5 = np.array(
                [gaussian_mechanism(true_value, 5.0, rng) for _ in range(trials)]
            )
            _, p_full = scipy.stats.ks_2samp(full, fresh5)
            assert p_full > 0.01

            partial = np.empty(trials)
            for i in range(trials):
                index = HistoryIndex()
                base = gaussian_mechanism(true_value, 5.0, rng)
                index.add(KEY, HistoryEntry(0, 5.0, base))
                decision = decide(KEY, 3.0, index)
                assert decision.kind is ReuseKind.PARTIAL_REUSE
                partial[i] = execute(decision, true_value, params, 1.0, rng).answer
            fresh3 = np.array(
                [gaussian_mechanism(true_value, 3.0, rng) for _ in range(trials)]
            )
            _, p_partial = scipy.stats.ks_2samp(partial, fresh3)
            assert p_partial > 0.01

            elapsed = time.monotonic() - started
            assert elapsed < 30.0
            notes.append(
                f"KS p: full={p_full:.3f} partial={p_partial:.3f} in {elapsed:.1f}s"
            )

    def test_a5_dp_guarantee(self):
        with criterion("A5 numeric guarantee check") as notes:
            sensitivity = 1.0
            for epsilon in (0.1, 0.5, 1.0):
                for delta in (1e-5, 1e-3):
                    params = PrivacyParams(epsilon, delta)
                    sigma = compute_sigma(params, sensitivity)
                    grid = threshold_grid(sensitivity, sigma, points=10_000)
                    assert verify_dp_guarantee(params, sensitivity, grid) is True
            params = PrivacyParams(1.0, 1e-5)
            small = compute_sigma(params, sensitivity) / 10.0
            grid = threshold_grid(sensitivity, small, points=10_000)
            assert verify_dp_guarantee(params, sensitivity, grid, sigma=small) is False
            notes.append("6/6 calibrated pass; sigma/10 rejected")

    def test_a6_tamper_evidence(self, tmp_path):
        with criterion("A6 tamper evidence") as notes:
            path = tmp_path / "ledger.jsonl"
            led = Ledger.open(path)
            descriptor = QueryDescriptor(QueryKind.COUNT)
            for i in range(10):
                rec = make_record(
                    index=led.next_index,
                    query_id=f"Q{led.next_index:06d}",
                    query_key=canonical_key(descriptor),
                    descriptor=descriptor,
                    sigma=4.8448 + i,
                    noisy_answer=5.0 + i * 0.123456789012345,
                    reuse_kind="fresh",
                    base_record_index=None,
                    requested_epsilon=1.0,
                    requested_delta=1e-5,
                    charged_epsilon=1.0,
                    charged_delta=1e-5,
                    fee=0.0015,
                    account_id=ACCOUNT_A,
                    timestamp_ms=1_700_000_000_000 + i,
                    prev_hash=led.tip_hash,
                )
                led.append(rec)
            led.close()
            assert verify_file(path).ok
            pristine = path.read_bytes()
            line_spans = []
            offset = 0
            for line in pristine.split(b"\n")[:-1]:
                line_spans.append((offset, offset + len(line)))
                offset += len(line) + 1

            rng = random.Random(606)
            for trial in range(100):
                target = rng.randrange(len(line_spans))
                lo, hi = line_spans[target]
                pos = rng.randrange(lo, hi)
                flip = rng.randrange(1, 256)
                mutated = bytearray(pristine)
                mutated[pos] ^= flip
                path.write_bytes(bytes(mutated))
                result = verify_file(path)
                assert not result.ok, (
                    f"trial {trial}: flip 0x{flip:02x} at byte {pos} "
                    f"of record {target} went undetected"
                )
                assert result.first_bad_index == target
            path.write_bytes(pristine)
            assert verify_file(path).ok
            notes.append("100/100 single-byte flips detected at the right index")

    def test_a7_crash_consistency(self, tmp_path):
        with criterion("A7 crash consistency") as notes:
            config_path = write_config_file(tmp_path, balances={ACCOUNT_A: 100.0}, seed=7)
            config = load_config(config_path)
            rng = random.Random(31)
            # Ten kills: every commit point at least once, the rest random.
            rounds = [(p, rng.randrange(0, 3)) for p in CRASH_POINTS]
            rounds += [(rng.choice(CRASH_POINTS), rng.randrange(0, 3)) for _ in range(5)]
            rng.shuffle(rounds)
            for point, n_before in rounds:
                before = (
                    len(read_records(config.ledger_path))
                    if config.ledger_path.exists()
                    else 0
                )
                proc = run_driver(config_path, point, n_before)
                assert proc.returncode == 7, proc.stderr
                service = QueryService(config)
                assert service.verify_ledger().ok
                records = read_records(config.ledger_path)
                committed = before + n_before + (1 if point == "append" else 0)
                assert len(records) == committed
                balances, eps, delta, naive = replay(config, records)
                assert json.loads(config.accounts_path.read_text())["balances"] == balances
                budget = json.loads(config.budget_path.read_text())
                assert budget["epsilon_spent"] == eps
                assert budget["delta_spent"] == delta
                assert budget["naive_epsilon_total"] == naive
                service.close()
            notes.append(f"10 kills at {sorted(set(p for p, _ in rounds))}")

    def test_a8_exact_match_semantics(self, tmp_path):
        with criterion("A8 exact-match semantics") as notes:
            service = QueryService(make_config(tmp_path))
            descriptor = QueryDescriptor(QueryKind.COUNT)
            first = service.submit_query(ACCOUNT_A, descriptor, 1.0, 1e-5)
            remaining = service.get_budget()["epsilon_remaining"]
            second = service.submit_query(ACCOUNT_A, descriptor, 1.0, 1e-5)
            assert second.reuse_kind == "exact_match"
            assert second.noisy_response == first.noisy_response  # bit-identical
            assert second.privacy_cost_epsilon == 0.0
            assert service.get_budget()["epsilon_remaining"] == remaining
            service.close()
            notes.append("repeat bit-identical, charged 0, budget unchanged")
