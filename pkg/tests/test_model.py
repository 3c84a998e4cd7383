"""Data model: construction, evaluation, forest detection, serialization."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sumbiv import bench
from sumbiv.model import (
    Instance,
    InvalidAssignmentError,
    ValidationError,
    evaluate,
    is_forest,
    load_instance,
    local_value,
    save_instance,
)

from _fixtures import INF, WORKED_ARGMIN, WORKED_MIN, gap_triangle, worked_example


class TestInstanceCreate:
    def test_normalizes_reversed_edges(self):
        table = np.arange(6.0).reshape(2, 3)
        inst = Instance.create(2, [3, 2], [(1, 0)], [table])
        assert inst.edges == ((0, 1),)
        np.testing.assert_array_equal(inst.tables[0], table.T)

    def test_sorts_edges_lexicographically(self):
        inst = Instance.create(
            3, [2, 2, 2], [(1, 2), (0, 1)], [np.zeros((2, 2)), np.ones((2, 2))]
        )
        assert inst.edges == ((0, 1), (1, 2))
        assert inst.tables[0][0, 0] == 1.0

    def test_rejects_duplicate_edges_even_across_orientations(self):
        with pytest.raises(ValidationError, match="duplicate"):
            Instance.create(
                2, [2, 2], [(0, 1), (1, 0)], [np.zeros((2, 2)), np.zeros((2, 2))]
            )

    def test_rejects_nan_and_neginf(self):
        with pytest.raises(ValidationError, match="NaN"):
            Instance.create(2, [2, 2], [(0, 1)], [[[0, float("nan")], [0, 0]]])
        with pytest.raises(ValidationError, match="-inf"):
            Instance.create(2, [2, 2], [(0, 1)], [[[0, -INF], [0, 0]]])

    def test_rejects_bad_shapes_and_ranges(self):
        with pytest.raises(ValidationError, match="shape"):
            Instance.create(2, [2, 3], [(0, 1)], [np.zeros((2, 2))])
        with pytest.raises(ValidationError):
            Instance.create(2, [2, 2], [(0, 2)], [np.zeros((2, 2))])
        with pytest.raises(ValidationError):
            Instance.create(2, [2, 2], [(1, 1)], [np.zeros((2, 2))])

    def test_tables_are_read_only(self):
        inst = worked_example()
        with pytest.raises(ValueError):
            inst.tables[0][0, 0] = 99.0


class TestEvaluate:
    def test_worked_example_optimum(self):
        assert evaluate(worked_example(), WORKED_ARGMIN) == WORKED_MIN

    def test_empty_edge_list_sums_to_zero(self):
        inst = Instance.create(3, [2, 2, 2], [], [])
        assert evaluate(inst, [1, 0, 1]) == 0.0

    def test_single_edge_is_table_lookup(self):
        table = np.array([[1.5, 2.5], [3.5, 4.5]])
        inst = Instance.create(2, [2, 2], [(0, 1)], [table])
        for a in range(2):
            for b in range(2):
                assert evaluate(inst, [a, b]) == table[a, b]

    def test_inf_summand_makes_result_inf(self):
        assert evaluate(gap_triangle(), [1, 0, 0]) == INF

    def test_dimension_mismatch_raises(self):
        with pytest.raises(InvalidAssignmentError):
            evaluate(worked_example(), [0, 0, 0])
        with pytest.raises(InvalidAssignmentError):
            evaluate(worked_example(), [0, 0, 0, 0, 3])

    def test_invariant_under_edge_reordering(self):
        rng = np.random.default_rng(0)
        inst = bench.gen_random(6, 1.0, 7, k_range=(2, 4))
        perm = rng.permutation(inst.num_edges)
        shuffled = Instance.create(
            inst.n,
            inst.domain_sizes,
            [inst.edges[e] for e in perm],
            [inst.tables[e] for e in perm],
        )
        for _ in range(20):
            x = [rng.integers(0, k) for k in inst.domain_sizes]
            assert evaluate(inst, x) == evaluate(shuffled, x)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_delta_evaluation_is_exact(self, seed):
        """Bit-exact delta updates on dyadic tables: changing one coordinate
        and correcting by the local-term difference equals re-evaluation."""
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        inst = bench.gen_random(n, 1.0, seed, k_range=(2, 4))
        # dyadic entries make float sums associative-exact
        inst = Instance.create(
            inst.n,
            inst.domain_sizes,
            inst.edges,
            [np.round(t * 8) / 8 for t in inst.tables],
        )
        adj = inst.adjacency()
        x = np.array([rng.integers(0, k) for k in inst.domain_sizes])
        value = evaluate(inst, x)
        for _ in range(5):
            i = int(rng.integers(0, n))
            new = int(rng.integers(0, inst.domain_sizes[i]))
            old_local = local_value(inst, adj, x, i)
            x[i] = new
            value = value - old_local + local_value(inst, adj, x, i)
            assert value == evaluate(inst, x)


class TestIsForest:
    def test_worked_example_elimination_order(self):
        ok, order = is_forest(worked_example())
        assert ok and order == [4, 3, 2, 1]

    def test_triangle_is_not_a_tree(self):
        assert is_forest(gap_triangle()) == (False, None)

    def test_edgeless_graph(self):
        inst = Instance.create(4, [2, 2, 2, 2], [], [])
        assert is_forest(inst) == (True, [])

    def test_disconnected_forest(self):
        inst = Instance.create(
            5, [2] * 5, [(0, 1), (2, 3)], [np.zeros((2, 2))] * 2
        )
        ok, order = is_forest(inst)
        assert ok and len(order) == 2

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_random_trees_are_forests(self, seed):
        inst = bench.gen_random_tree(int(np.random.default_rng(seed).integers(1, 10)), 2, seed)
        ok, order = is_forest(inst)
        assert ok
        assert len(order) == max(0, inst.num_edges)

    def test_cycle_detected(self):
        inst = Instance.create(
            4,
            [2] * 4,
            [(0, 1), (1, 2), (2, 3), (0, 3)],
            [np.zeros((2, 2))] * 4,
        )
        assert is_forest(inst)[0] is False


class TestSerialization:
    def test_round_trip_worked_example(self, tmp_path):
        inst = worked_example()
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        loaded = load_instance(path)
        assert loaded.n == inst.n
        assert loaded.domain_sizes == inst.domain_sizes
        assert loaded.edges == inst.edges
        for a, b in zip(loaded.tables, inst.tables):
            np.testing.assert_array_equal(a, b)

    def test_round_trip_preserves_inf_and_bits(self, tmp_path):
        rng = np.random.default_rng(5)
        tables = [rng.standard_normal((2, 3))]
        tables[0][0, 1] = INF
        inst = Instance.create(2, [2, 3], [(0, 1)], tables)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        loaded = load_instance(path)
        np.testing.assert_array_equal(loaded.tables[0], inst.tables[0])

    def test_nan_entry_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            '{"n": 2, "domains": [2, 2], "edges": [[0, 1]],'
            ' "tables": [[[0, "nan"], [0, 0]]]}'
        )
        with pytest.raises(ValidationError):
            load_instance(path)

    def test_duplicate_edge_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        doc = {
            "n": 2,
            "domains": [2, 2],
            "edges": [[0, 1], [0, 1]],
            "tables": [[[0, 0], [0, 0]], [[0, 0], [0, 0]]],
        }
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="duplicate"):
            load_instance(path)

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        doc = {"n": 1, "domains": [2], "edges": [], "tables": [], "extra": 1}
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="unknown"):
            load_instance(path)

    def test_parse_error_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"n": 2,\n  "domains": [2 2]}')
        with pytest.raises(ValidationError, match="line 2"):
            load_instance(path)
