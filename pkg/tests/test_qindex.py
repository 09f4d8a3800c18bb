import numpy as np
import pytest

from qutedb.errors import NoIndex
from qutedb.models import SelectivitySpec
from qutedb.services.predicates import And, Eq, Or, Range
from qutedb.services.qindex import (
    BPlusTreeIndex,
    IndexManager,
    KdTreeIndex,
    ProbeResult,
    Strategy,
    classical_post_filter,
    disjunctive_probe,
    kd_candidates,
    kd_search,
    probe_dimension,
    select_strategy,
)
from qutedb.services.storage import Catalog, evaluate_predicate, generate_synthetic


def _random_range(rng, column, top):
    low, high = sorted(int(v) for v in rng.integers(0, top, size=2))
    return Range(column=column, low=low, high=high,
                 low_open=bool(rng.integers(0, 2)) and low < high,
                 high_open=False)


def test_btree_structure_and_lookup(rng):
    keys = rng.integers(0, 50, size=200).tolist()
    index = BPlusTreeIndex("v", keys, order=4)
    index.check()
    assert index.height > 1
    assert sum(len(leaf.keys) for leaf in index.leaves()) == 200
    values = np.asarray(keys)
    for _ in range(50):
        pred = _random_range(rng, "v", 50)
        expected = np.flatnonzero([pred.contains(k) for k in keys]).tolist()
        assert index.range_lookup(pred) == expected
    assert index.range_lookup(Range(column="v", high=-1)) == []
    assert index.range_lookup(Range(column="v", low=int(values.max()), low_open=True)) == []


def test_btree_text_keys(people_table):
    index = BPlusTreeIndex.from_table(people_table, "name")
    assert index.range_lookup(Range(column="name", low="d", high="f")) == [3, 4]


def test_btree_rejects_bad_inputs(people_table):
    with pytest.raises(ValueError):
        BPlusTreeIndex("v", [1, 2], order=2)
    assert BPlusTreeIndex("v", []).range_lookup(Range(column="v", low=0)) == []
    with pytest.raises(NoIndex):
        probe_dimension(None, Eq(column="age", value=3))
    with pytest.raises(NoIndex):
        probe_dimension(BPlusTreeIndex.from_table(people_table, "age"), Eq(column="dept", value=3))


def test_strategy_threshold():
    probes = [ProbeResult(dimension="d1", rids=[1, 2, 3, 4]), ProbeResult(dimension="d2", rids=list(range(12)))]
    decision = select_strategy(probes, 16, d=2, c=1.0)
    assert decision.chosen == Strategy.CLASSICAL_POST_FILTER
    assert (decision.k_s, decision.threshold, decision.dimension) == (4, 4.0, "d1")
    wider = [ProbeResult(dimension="d1", rids=list(range(5)))]
    assert select_strategy(wider, 16, c=1.0).chosen == Strategy.KD_TREE_SEARCH
    with pytest.raises(NoIndex):
        select_strategy([], 16)


def test_post_filter_counts_evaluations(people_table):
    residual = [Eq(column="dept", value=1), Range(column="age", low=34)]
    result = classical_post_filter([1, 5, 9, 13, 2], residual, people_table)
    assert result.rids == [1, 9, 13]
    assert result.evaluations == 5 + 4


def test_disjunctive_union():
    probes = [ProbeResult(dimension="a", rids=[5, 1]), ProbeResult(dimension="b", rids=[1, 9])]
    assert disjunctive_probe(probes) == [1, 5, 9]


def test_kd_search_matches_brute_force(rng):
    points = rng.integers(0, 64, size=(300, 3)).astype(float)
    tree = KdTreeIndex(["a", "b", "c"], points, leaf_capacity=4)
    for _ in range(100):
        ranges = {name: _random_range(rng, name, 64) for name in ("a", "b", "c") if rng.random() < 0.8}
        if not ranges:
            continue
        expected = [i for i, p in enumerate(points)
                    if all(r.contains(p["abc".index(n)]) for n, r in ranges.items())]
        assert kd_search(tree, ranges) == expected


def test_kd_candidates_split_contained_and_partial(rng):
    points = rng.integers(0, 100, size=(64, 2)).astype(float)
    tree = KdTreeIndex(["x", "y"], points, leaf_capacity=4)
    found = kd_candidates(tree, {"x": Range(column="x", low=20, high=80)})
    assert set(found.contained).isdisjoint(found.partial)
    assert all(20 <= points[r, 0] <= 80 for r in found.contained)
    everything = kd_candidates(tree, {"x": Range(column="x", low=0)})
    assert len(everything.contained) == 64 and not everything.partial


def test_kd_rejects_unknown_dimension(people_table):
    tree = KdTreeIndex.from_table(people_table, ["age", "dept"])
    with pytest.raises(NoIndex):
        tree.search({"id": Range(column="id", low=1)})


def test_probe_then_residual_on_people(catalog):
    manager = IndexManager(catalog)
    manager.create("people", "btree", ["age"])
    pred = And(items=(Range(column="age", low=40, high=50), Eq(column="dept", value=1)))
    answer = manager.answer("people", pred)
    assert answer.path == "post-filter"
    assert answer.decision.k_s == 4
    assert answer.decision.chosen == Strategy.CLASSICAL_POST_FILTER
    assert answer.rids == [13]
    assert answer.evaluations <= answer.decision.k_s * (2 - 1)


@pytest.fixture
def indexed_synthetic():
    data = generate_synthetic(256, SelectivitySpec(targets=[0.02, 0.02]), seed=11, bits=8, extra_columns=1)
    catalog = Catalog()
    catalog.add_table(data.table)
    manager = IndexManager(catalog)
    manager.create("synthetic", "btree", ["d0"])
    manager.create("synthetic", "btree", ["d1"])
    manager.create("synthetic", "kd", ["d0", "d1", "d2"])
    return data, manager


@pytest.mark.slow
def test_index_answers_match_brute_force(indexed_synthetic, rng):
    data, manager = indexed_synthetic
    table = data.table
    for _ in range(200):
        conjuncts = [_random_range(rng, f"d{i}", 256) for i in range(3) if rng.random() < 0.8]
        if not conjuncts:
            continue
        pred = conjuncts[0] if len(conjuncts) == 1 else And(items=tuple(conjuncts))
        answer = manager.answer("synthetic", pred)
        assert answer.rids == np.flatnonzero(evaluate_predicate(pred, table)).tolist()
        if answer.decision is not None and answer.decision.chosen == Strategy.CLASSICAL_POST_FILTER:
            assert answer.evaluations <= answer.decision.k_s * (len(conjuncts) - 1)


def test_generated_predicates_take_the_post_filter(indexed_synthetic):
    data, manager = indexed_synthetic
    pred = And(items=tuple(data.predicates))
    answer = manager.answer("synthetic", pred)
    assert answer.path == "post-filter"
    assert answer.rids == np.flatnonzero(evaluate_predicate(pred, data.table)).tolist()


def test_wide_ranges_use_the_kd_tree(indexed_synthetic):
    data, manager = indexed_synthetic
    pred = And(items=(Range(column="d0", low=0, high=200), Range(column="d2", low=50, high=120)))
    answer = manager.answer("synthetic", pred)
    assert answer.decision.chosen == Strategy.KD_TREE_SEARCH
    assert answer.path == "kd"
    assert answer.rids == np.flatnonzero(evaluate_predicate(pred, data.table)).tolist()


def test_disjunction_probes_each_branch(indexed_synthetic):
    data, manager = indexed_synthetic
    pred = Or(items=(Range(column="d0", high=10), Range(column="d1", low=240)))
    answer = manager.answer("synthetic", pred)
    assert answer.path == "disjunctive"
    assert len(answer.probes) == 2
    assert answer.rids == np.flatnonzero(evaluate_predicate(pred, data.table)).tolist()


def test_coverage(catalog):
    manager = IndexManager(catalog)
    assert not manager.covers("people", Eq(column="age", value=3))
    manager.create("people", "btree", ["age"])
    assert manager.covers("people", And(items=(Eq(column="age", value=3), Eq(column="dept", value=1))))
    assert not manager.covers("people", Or(items=(Eq(column="age", value=3), Eq(column="dept", value=1))))
    assert not manager.covers("people", None)


def test_indexes_rebuild_after_insert(catalog):
    manager = IndexManager(catalog)
    manager.create("people", "btree", ["age"])
    before = manager.btree("people", "age")
    catalog.insert_rows("people", [[16, 99, 0, "quinn", True]])
    after = manager.btree("people", "age")
    assert after is not before
    assert after.range_lookup(Range(column="age", low=90)) == [16]
