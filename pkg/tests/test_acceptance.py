"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line (also repeated in the
terminal summary) before asserting. Runs shared between criteria 6 and 7 are
computed once per session.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from leaguelab import checkpoint
from leaguelab.config import ExperimentConfig
from leaguelab.experiments import asynchrony_run, coevolution_run, pbt_efficacy, preemption_run
from leaguelab.games import make_random_antisymmetric, make_rps, mixed_payoff, payoff_gradient
from leaguelab.gametheory import exploitability, fictitious_play, support_enum_oracle
from leaguelab.league import RatingBook, expected_score
from leaguelab.learner import finite_diff_gradient
from leaguelab.runtime import init_state, run_league, run_unit

SEEDS = range(10)


def _simplex(rng, k):
    return rng.dirichlet(np.ones(k))


@pytest.fixture(scope="session")
def coevolution():
    """Ten RPS_5 seeds with QD shaping on (beta 50) and off (beta 0)."""
    return {
        "on": [coevolution_run(s, beta=50.0) for s in SEEDS],
        "off": [coevolution_run(s, beta=0.0) for s in SEEDS],
    }


def test_c01_nash_correctness(acceptance):
    A = make_rps(3).payoff
    fictitious_play(A, 100, 0.01)  # JIT warm-up, excluded from the timing
    t0 = time.perf_counter()
    d = fictitious_play(A, 100_000, 0.01)
    dt = time.perf_counter() - t0
    linf = float(np.max(np.abs(d.probs - 1 / 3)))
    ok = linf <= 0.01 and d.exploitability <= 0.01 and dt < 1.0
    acceptance(1, ok, f"L_inf to uniform {linf:.4f}, exploitability {d.exploitability:.4f}, {dt * 1e3:.1f} ms")
    assert ok


def test_c02_oracle_equivalence(acceptance):
    fictitious_play(make_rps(3).payoff, 100, 0.01)
    t0 = time.perf_counter()
    worst_fp, worst_gap = 0.0, 0.0
    for seed in range(50):
        A = make_random_antisymmetric(4, seed).payoff
        fp = fictitious_play(A, 100_000, 1e-3)
        ex = support_enum_oracle(A)
        worst_fp = max(worst_fp, fp.exploitability)
        worst_gap = max(worst_gap, abs(fp.exploitability - ex.exploitability))
    dt = time.perf_counter() - t0
    ok = worst_fp <= 0.02 and worst_gap <= 0.02 and dt < 10.0
    acceptance(2, ok, f"max FP exploitability {worst_fp:.4f}, max gap to oracle {worst_gap:.4f}, {dt:.2f} s")
    assert ok


def test_c03_gradient_correctness(acceptance):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for n in range(100):
        k = int(rng.integers(2, 8))
        game = make_random_antisymmetric(k, 10_000 + n)
        x = rng.normal(0.0, 1.5, k)
        q = _simplex(rng, k)
        a = payoff_gradient(game, x, q)
        fd = finite_diff_gradient(game, x, q, step=1e-5)
        worst = max(worst, float(np.linalg.norm(a - fd) / max(np.linalg.norm(a), 1e-12)))
    ok = worst < 1e-5
    acceptance(3, ok, f"max relative error {worst:.2e} over 100 triples")
    assert ok


def test_c04_elo_conservation(acceptance):
    rng = np.random.default_rng(4)
    ids = [f"a{i}" for i in range(16)]
    book = RatingBook({i: float(rng.normal(1000, 200)) for i in ids}, K=32.0)
    start = book.total()
    for _ in range(10_000):
        a, b = rng.choice(len(ids), 2, replace=False)
        book.update(ids[a], ids[b], float(rng.choice([0.0, 0.5, 1.0, rng.random()])))
    drift = abs(book.total() - start)
    half = all(expected_score(r, r) == 0.5 for r in (-3000.0, 0.0, 1000.0, 1234.5678, 1e6))
    ok = drift < 1e-6 and half
    acceptance(4, ok, f"rating-sum drift {drift:.2e}; expected_score(r, r) == 0.5: {half}")
    assert ok


def test_c05_lamarckian_pbt(acceptance):
    t0 = time.perf_counter()
    on = [pbt_efficacy(s, 5000, pbt=True) for s in SEEDS]
    off = [pbt_efficacy(s, 5000, pbt=False) for s in SEEDS]
    dt = time.perf_counter() - t0
    med_on = float(np.median([r["best"] for r in on]))
    worst_off = max(r["best_bad_half"] for r in off)
    ok = med_on >= 0.9 and worst_off <= 0.5 and dt < 120
    acceptance(5, ok, f"median best with PBT {med_on:.3f}; best bad-half payoff without PBT "
                      f"{worst_off:.3f} (max over seeds); {dt:.0f} s")
    assert ok


def test_c06_coevolution_diversity(acceptance, coevolution):
    rows = coevolution["on"]
    cells = [r["distinct_support_cells"] for r in rows]
    diverse = sum(c >= 3 for c in cells)
    med_expl = float(np.median([r["game_exploitability"] for r in rows]))
    slowest = max(r["seconds"] for r in rows)
    ok = diverse >= 8 and med_expl <= 0.15 and slowest < 300
    acceptance(6, ok, f"support spans >= 3 BD cells in {diverse}/10 seeds (cells {cells}); "
                      f"median Nash-mixture exploitability {med_expl:.4f}; slowest seed {slowest:.0f} s")
    assert ok


def test_c07_qd_effect(acceptance, coevolution):
    on, off = coevolution["on"], coevolution["off"]
    cov_on = float(np.median([r["coverage"] for r in on]))
    cov_off = float(np.median([r["coverage"] for r in off]))
    ratio = cov_on / cov_off if cov_off > 0 else float("inf")
    higher = sum(a["qd_score"] > b["qd_score"] for a, b in zip(on, off))
    total = sum(r["seconds"] for r in on + off)
    ok = ratio >= 1.5 and higher >= 8 and total < 600
    acceptance(7, ok, f"median coverage {cov_on:.3f} vs {cov_off:.3f} (ratio {ratio:.2f}); "
                      f"qd_score higher in {higher}/10 paired seeds; {total:.0f} s total")
    assert ok


def test_c08_steady_state_asynchrony(acceptance):
    a = asynchrony_run(0, units=4000, workers=4)
    rhos = [preemption_run(s)["spearman"] for s in SEEDS]
    positive = sum(r > 0 for r in rhos)
    ok = a["max_spread"] > 1 and a["replay_equal"] and positive >= 8
    acceptance(8, ok, f"max unit spread {a['max_spread']} over {a['committing_threads']} committing threads; "
                      f"replay equal: {a['replay_equal']}; Spearman > 0 in {positive}/10 seeds "
                      f"({', '.join(f'{r:+.2f}' for r in rhos)})")
    assert ok


def test_c09_determinism_and_resume(acceptance):
    cfg = ExperimentConfig().replace(**{"game.k": 5, "runtime.total_units": 1000, "runtime.seed": 9,
                                        "runtime.checkpoint_every": 500, "output.metrics_every": 500})
    first = checkpoint.dumps(run_league(cfg).state)
    second = checkpoint.dumps(run_league(cfg).state)
    half = run_league(cfg, units=500).state
    resumed = checkpoint.loads(checkpoint.dumps(half))
    run_league(resumed.config, resumed, units=500)
    same = first == second
    resume = checkpoint.dumps(resumed) == first
    ok = same and resume
    acceptance(9, ok, f"same-seed checkpoints byte-identical: {same}; 500 + 500 resumed equals 1000: {resume}")
    assert ok


def test_c10_throughput(acceptance):
    game = make_rps(5)
    rng = np.random.default_rng(10)
    ps = rng.dirichlet(np.ones(5), size=1000)
    qs = rng.dirichlet(np.ones(5), size=1000)
    n = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < 1.0:
        for p, q in zip(ps, qs):
            mixed_payoff(game, p, q)
        n += len(ps)
    evals = n / (time.perf_counter() - t0)

    cfg = ExperimentConfig().replace(**{"game.k": 5, "runtime.total_units": 10**6, "runtime.seed": 10})
    state = init_state(cfg)
    for _ in range(200):  # warm-up: JIT and caches
        run_unit(state)
    done = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < 3.0:
        run_unit(state)
        done += 1
    units = done / (time.perf_counter() - t0)
    ok = evals >= 1e5 and units >= 1e3
    acceptance(10, ok, f"{evals:,.0f} mixed_payoff evaluations/s; {units:,.0f} scheduling units/s (RPS_5, 1 worker)")
    assert ok
