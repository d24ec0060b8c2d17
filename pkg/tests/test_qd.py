from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leaguelab.errors import NoDataError, NotFoundError
from leaguelab.games import make_rps
from leaguelab.league import MatchResult, PayoffTable, play_match
from leaguelab.population import Agent, HyperparamVector, League
from leaguelab.qd import (
    Archive, BDTarget, BeatAgent, BeatSet, Mixture, adapt_criterion, archive_insert, cell_target,
    check_targets, compute_bd, coverage, criterion_satisfaction, dangling, discretize, niche_terms,
    qd_score, random_bd_target, reachable_cells, retarget, shaped_fitness, targetable_cells,
)

RPS3 = make_rps(3)


def mk(id_, rating=1000.0, logits=(0.0, 0.0, 0.0), slot=0, bd=None):
    return Agent(id=id_, logits=np.array(logits, dtype=float), hypers=HyperparamVector(0.1, 0.0),
                 rating=rating, slot=slot, bd=bd)


def league_of(ratings, **first):
    """League of agents a0, a1, ...; keyword fields override a0 (agents are frozen)."""
    agents = [mk(f"a{i}", r, slot=i) for i, r in enumerate(ratings)]
    agents[0] = replace(agents[0], **first)
    return League(capacity=len(agents), active=agents, next_id=len(agents))


def table_with(pairs):
    t = PayoffTable()
    for a, b, v in pairs:
        t.record(MatchResult(a, b, v, (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0))
    return t


# descriptors and grid

def test_compute_bd_single_match_one_hot():
    r = MatchResult("x", "y", 0.0, (0.0, 1.0, 0.0), (1.0, 0.0, 0.0), 0)
    np.testing.assert_array_equal(compute_bd([r], "x", 10), [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(compute_bd([r], "y", 10), [1.0, 0.0, 0.0])


def test_compute_bd_uses_last_window():
    rs = [MatchResult("x", "y", 0.0, (1.0, 0.0, 0.0), (1.0, 0.0, 0.0), 0),
          MatchResult("x", "y", 0.0, (0.0, 0.0, 1.0), (1.0, 0.0, 0.0), 1)]
    np.testing.assert_array_equal(compute_bd(rs, "x", 1), [0.0, 0.0, 1.0])


def test_compute_bd_no_data():
    with pytest.raises(NoDataError):
        compute_bd([], "x", 5)


def test_compute_bd_uniform_agent_concentrates():
    rng = np.random.default_rng(3)
    a, b = mk("a"), mk("b")
    rs = [play_match(RPS3, a, b, 32, rng) for _ in range(1000)]
    bd = compute_bd(rs, "a", 1000)
    assert np.max(np.abs(bd - 1 / 3)) < 0.05


def test_compute_bd_pure_rock():
    rng = np.random.default_rng(0)
    rock = mk("r", logits=(60.0, 0.0, 0.0))
    rs = [play_match(RPS3, rock, mk("u"), 32, rng) for _ in range(5)]
    np.testing.assert_allclose(compute_bd(rs, "r", 5), [1.0, 0.0, 0.0])


def test_discretize_examples():
    assert discretize((1.0, 0.0, 0.0), 10) == (9, 0, 0)
    assert discretize(np.full(3, 1 / 3), 10) == (3, 3, 3)
    bd = (0.27, 0.5, 0.23)
    assert discretize(bd, 10) == discretize(bd, 10) == (2, 5, 2)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6), st.integers(1, 20))
def test_discretize_in_range(raw, R):
    cell = discretize(raw, R)
    assert all(0 <= c <= R - 1 for c in cell)


def _box_meets_simplex(cell, R):
    # independent check in integer units of 1/R: the box with half-open bins
    # [c, c+1), except the closed top bin, meets {x >= 0, sum x = R}
    lo = sum(cell)
    hi = sum(c + 1 for c in cell)
    top_closed = all(c == R - 1 for c in cell)
    return lo <= R and (hi > R or (hi == R and top_closed))


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_reachable_cells_match_box_oracle(dim):
    R = 10
    brute = {c for c in itertools.product(range(R), repeat=dim) if _box_meets_simplex(c, R)}
    assert set(reachable_cells(dim, R)) == brute


def test_reachable_cell_counts():
    assert len(reachable_cells(3, 10)) == 163
    assert len(reachable_cells(5, 10)) == 2746


@pytest.mark.parametrize("dim", [3, 5])
def test_sampled_descriptors_land_in_targetable_cells(dim):
    rng = np.random.default_rng(dim)
    pts = rng.dirichlet(np.full(dim, 0.7), size=20000)
    hit = {discretize(p, 10) for p in pts}
    assert hit <= set(targetable_cells(dim, 10))


@pytest.mark.parametrize("dim", [2, 3, 5])
def test_cell_target_discretises_to_own_cell(dim):
    for cell in targetable_cells(dim, 10):
        t = cell_target(cell, 10)
        assert t.min() >= 0 and abs(t.sum() - 1) < 1e-12
        assert discretize(t, 10) == cell


# archive

def test_archive_insert_rules():
    arc = Archive(3, 10)
    a = mk("a")
    arc, ok = archive_insert(arc, a, (1.0, 0.0, 0.0), 1000.0)
    assert ok
    before = arc.copy()
    arc, ok = archive_insert(arc, mk("b"), (1.0, 0.0, 0.0), 1000.0)
    assert not ok and arc == before
    arc, ok = archive_insert(arc, mk("c"), (0.95, 0.05, 0.0), 900.0)
    assert not ok and arc == before
    assert arc.cells[(9, 0, 0)] == ("a", 1000.0)


def test_archive_metrics():
    arc = Archive(3, 10)
    assert coverage(arc) == 0 and qd_score(arc) == 0
    arc.insert("a", (1.0, 0.0, 0.0), 1000.0)
    assert qd_score(arc) == 1000.0
    assert coverage(arc) == pytest.approx(1 / 163)
    arc.insert("b", (1.0, 0.0, 0.0), 1040.0)
    assert qd_score(arc) == 1040.0


@settings(max_examples=50)
@given(st.lists(st.tuples(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3),
                          st.floats(-3000, 3000)), max_size=40))
def test_archive_monotone(inserts):
    arc = Archive(3, 10)
    cov = 0.0
    for i, (raw, q) in enumerate(inserts):
        bd = np.asarray(raw) + 1e-9
        arc.insert(f"x{i}", bd / bd.sum(), q)
        assert coverage(arc) >= cov
        assert len(arc.cells) == len(set(arc.cells))
        cov = coverage(arc)
    # occupant quality is the max ever inserted into its cell
    best: dict = {}
    for raw, q in inserts:
        bd = np.asarray(raw) + 1e-9
        c = discretize(bd / bd.sum(), 10)
        best[c] = max(best.get(c, -np.inf), q)
    assert {c: q for c, (_, q) in arc.cells.items()} == best


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 9), st.floats(-3000, 3000)), max_size=40))
def test_qd_score_nondecreasing_for_fixed_occupied_set(inserts):
    arc = Archive(2, 10)
    for c, q in inserts[:1]:
        arc.insert("seed", (c / 10 + 0.05, 1 - c / 10 - 0.05), q)
    last_cov, last_score = coverage(arc), qd_score(arc)
    for i, (c, q) in enumerate(inserts):
        arc.insert(f"x{i}", (c / 10 + 0.05, 1 - c / 10 - 0.05), q)
        # a new cell may carry a negative quality; an existing cell only improves
        if coverage(arc) == last_cov:
            assert qd_score(arc) >= last_score - 1e-9
        last_cov, last_score = coverage(arc), qd_score(arc)


def test_archive_record_roundtrip():
    arc = Archive(3, 10)
    arc.insert("a", (0.2, 0.3, 0.5), 1010.0)
    arc.insert("b", (0.9, 0.05, 0.05), 980.0)
    assert Archive.from_records(3, 10, arc.records()) == arc


# criteria

def test_beat_agent_boundary_inclusive():
    lg = league_of([1000, 1000])
    t = table_with([("a0", "a1", 0.25)])
    assert criterion_satisfaction(lg.active[0], BeatAgent("a1", 0.25), t, lg) == 1.0
    assert criterion_satisfaction(lg.active[0], BeatAgent("a1", 0.3), t, lg) == 0.0


def test_beat_agent_no_data_is_zero():
    lg = league_of([1000, 1000])
    assert criterion_satisfaction(lg.active[0], BeatAgent("a1"), PayoffTable(), lg) == 0.0


def test_dangling_target_is_not_found():
    lg = league_of([1000, 1000])
    with pytest.raises(NotFoundError):
        criterion_satisfaction(lg.active[0], BeatAgent("ghost"), PayoffTable(), lg)
    with pytest.raises(NotFoundError):
        check_targets(BeatSet(("a1", "ghost")), lg)
    assert dangling(BeatSet(("a1", "ghost")), lg) == ["ghost"]


def test_mixture_weighted_sum():
    lg = league_of([1000, 1000])
    t = table_with([("a0", "a1", 0.5)])
    crit = Mixture(((BeatAgent("a1"), 0.5), (BeatAgent("a1", 0.9), 0.5)))
    assert criterion_satisfaction(lg.active[0], crit, t, lg) == 0.5


def test_beat_set_partial():
    lg = league_of([1000] * 5)
    t = table_with([("a0", "a1", 0.2), ("a0", "a2", -0.1), ("a0", "a3", 0.0)])
    crit = BeatSet(("a1", "a2", "a3", "a4"), 0.5)
    assert criterion_satisfaction(lg.active[0], crit, t, lg) == pytest.approx(0.5)


def test_bd_target_region():
    lg = league_of([1000, 1000])
    agent = replace(lg.active[0], bd=np.array([0.55, 0.25, 0.2]))
    assert criterion_satisfaction(agent, BDTarget((5, 2, 2), 0), PayoffTable(), lg) == 1.0
    assert criterion_satisfaction(agent, BDTarget((4, 3, 2), 1), PayoffTable(), lg) == 1.0
    assert criterion_satisfaction(agent, BDTarget((3, 3, 3), 1), PayoffTable(), lg) == 0.0
    agent = replace(agent, bd=None)
    assert criterion_satisfaction(agent, BDTarget((5, 2, 2), 3), PayoffTable(), lg) == 0.0


def _criteria(ids):
    leaf = st.one_of(
        st.builds(BDTarget, st.sampled_from(list(targetable_cells(3, 10))), st.integers(0, 3)),
        st.builds(BeatAgent, st.sampled_from(ids), st.floats(-1, 1)),
        st.builds(BeatSet, st.lists(st.sampled_from(ids), min_size=1, max_size=4).map(tuple),
                  st.floats(0, 1)),
    )

    def mixtures(children):
        def build(parts):
            w = np.array([x for _, x in parts]) + 1e-3
            w = w / w.sum()
            return Mixture(tuple((c, float(x)) for (c, _), x in zip(parts, w)))
        return st.lists(st.tuples(children, st.floats(0, 1)), min_size=1, max_size=3).map(build)

    return st.recursive(leaf, mixtures, max_leaves=6)


IDS = ["a1", "a2", "a3"]


@settings(max_examples=200)
@given(_criteria(IDS), st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_satisfaction_in_unit_interval(crit, payoffs, raw_bd):
    lg = league_of([1000, 1010, 990, 1005])
    t = table_with([("a0", i, v) for i, v in zip(IDS, payoffs)])
    bd = np.asarray(raw_bd) + 1e-9
    agent = replace(lg.active[0], bd=bd / bd.sum())
    s = criterion_satisfaction(agent, crit, t, lg)
    assert 0.0 <= s <= 1.0 + 1e-12


def test_shaped_fitness():
    lg = league_of([1000, 1000, 1000])
    t = table_with([("a0", "a2", 0.1)])
    crit = BeatAgent("a2")
    assert shaped_fitness(lg.active[0], crit, t, lg, 0.0) == 1000.0
    assert shaped_fitness(lg.active[0], crit, t, lg, 100.0) == 1100.0
    assert shaped_fitness(lg.active[0], crit, t, lg, 50.0) > shaped_fitness(lg.active[1], crit, t, lg, 50.0)


# adaptation

def test_adapt_escalates_beat_agent():
    lg = league_of([1000, 1100, 1050, 990, 700])
    agent = replace(lg.active[0], criterion=BeatAgent("a1"))
    crit, event = adapt_criterion(agent, lg, PayoffTable(), np.random.default_rng(0), [1.0] * 5, Archive(3))
    assert event == "escalate"
    assert crit == BeatSet(("a3", "a2", "a1"), 0.5)


def test_adapt_relaxes_beat_set():
    lg = league_of([1000] * 4)
    agent = replace(lg.active[0], criterion=BeatSet(("a1", "a2", "a3"), 0.75))
    crit, event = adapt_criterion(agent, lg, PayoffTable(), np.random.default_rng(0), [0.0] * 5, Archive(3))
    assert event == "relax" and crit.required_fraction == pytest.approx(0.5)


def test_adapt_hysteresis_band():
    lg = league_of([1000] * 4)
    agent = replace(lg.active[0], criterion=BeatAgent("a1"))
    hist = [0.0, 1.0, 0.5, 1.0, 0.0]
    crit, event = adapt_criterion(agent, lg, PayoffTable(), np.random.default_rng(0), hist, Archive(3))
    assert event is None and crit == agent.criterion


def test_adapt_waits_for_full_window():
    lg = league_of([1000] * 4)
    agent = replace(lg.active[0], criterion=BeatAgent("a1"))
    _, event = adapt_criterion(agent, lg, PayoffTable(), np.random.default_rng(0), [1.0] * 4, Archive(3))
    assert event is None


def test_escalated_bd_target_is_unoccupied():
    lg = league_of([1000] * 3)
    arc = Archive(3, 10)
    arc.insert("a1", (0.34, 0.33, 0.33), 1000.0)
    agent = replace(lg.active[0], criterion=BDTarget((3, 3, 3)))
    for seed in range(30):
        crit, event = adapt_criterion(agent, lg, PayoffTable(), np.random.default_rng(seed), [1.0] * 5, arc)
        assert event == "escalate" and crit.cell not in arc.cells
        assert crit.cell in targetable_cells(3, 10)


@settings(max_examples=100)
@given(_criteria(IDS), st.sampled_from([[1.0] * 5, [0.0] * 5]), st.integers(0, 2**32 - 1))
def test_adapt_never_dangles(crit, hist, seed):
    lg = league_of([1000, 1010, 990, 1005])
    agent = replace(lg.active[0], criterion=crit)
    new, _ = adapt_criterion(agent, lg, PayoffTable(), np.random.default_rng(seed), hist, Archive(3))
    assert dangling(new, lg) == []


def test_retarget_follows_renames_and_falls_back():
    lg = league_of([1000, 1020, 1200])
    agent = lg.active[0]
    crit = BeatSet(("gone", "old"), 0.5)
    new = retarget(crit, {"old": "a2"}, lg, agent)
    assert new.targets == ("a1", "a2")


def test_random_bd_target_falls_back_when_full():
    arc = Archive(2, 10)
    for c in targetable_cells(2, 10):
        arc.insert("x", cell_target(c, 10), 1.0)
    t = random_bd_target(arc, np.random.default_rng(0), 1)
    assert t.cell in targetable_cells(2, 10)


def test_niche_terms_beat_agent_column():
    lg = league_of([1000, 1000])
    lg.put(replace(lg.active[1], logits=np.array([5.0, 0.0, 0.0])))
    extra, pulls = niche_terms(BeatAgent("a1"), lg, RPS3, 1.0)
    q = np.exp([5.0, 0.0, 0.0]) / np.exp([5.0, 0.0, 0.0]).sum()
    np.testing.assert_allclose(extra, RPS3.payoff @ q)
    assert pulls is None


def test_niche_terms_bd_target_pull():
    lg = league_of([1000, 1000])
    extra, (features, target, w) = niche_terms(BDTarget((9, 0, 0)), lg, RPS3, 0.5)
    np.testing.assert_array_equal(extra, 0.0)
    assert w == 0.5 and discretize(target, 10) == (9, 0, 0)
