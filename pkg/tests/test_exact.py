"""Exact solvers: brute-force oracle and the forest dynamic program."""

import numpy as np
import pytest

from sumbiv import bench
from sumbiv.exact import brute_force_min, objective_grid, tree_dp_min
from sumbiv.model import (
    Instance,
    InstanceTooLargeError,
    NotAForestError,
    evaluate,
    is_forest,
)

from _fixtures import (
    TRIANGLE_ARGMIN,
    TRIANGLE_MIN,
    WORKED_ARGMIN,
    WORKED_FOLDS,
    WORKED_MIN,
    WORKED_UNARY_AT_2,
    gap_triangle,
    worked_example,
)
from sumbiv.duals import big_m_substitute


class TestBruteForce:
    def test_worked_example(self):
        res = brute_force_min(worked_example())
        assert res.min_value == WORKED_MIN
        assert tuple(res.argmin) == WORKED_ARGMIN
        assert res.states_visited == 3**5

    def test_gap_triangle_with_big_m(self):
        finite, _ = big_m_substitute(gap_triangle())
        res = brute_force_min(finite)
        assert res.min_value == TRIANGLE_MIN
        assert tuple(res.argmin) == TRIANGLE_ARGMIN

    def test_edgeless_instance(self):
        res = brute_force_min(Instance.create(3, [2, 3, 2], [], []))
        assert res.min_value == 0.0
        assert tuple(res.argmin) == (0, 0, 0)

    def test_lexicographically_smallest_argmin(self):
        # constant objective: every assignment ties
        inst = Instance.create(3, [2, 2, 2], [(0, 1)], [np.zeros((2, 2))])
        res = brute_force_min(inst)
        assert tuple(res.argmin) == (0, 0, 0)

    def test_cap_enforced(self):
        inst = Instance.create(30, [4] * 30, [], [])
        with pytest.raises(InstanceTooLargeError):
            brute_force_min(inst)


class TestTreeDp:
    def test_worked_example_value_and_argmin(self):
        res = tree_dp_min(worked_example())
        assert res.min_value == WORKED_MIN
        assert tuple(res.argmin) == WORKED_ARGMIN

    def test_worked_example_stages_match_expected_vectors(self):
        _, stages = tree_dp_min(worked_example(), record_stages=True)
        folds = {(s.leaf, s.parent): list(s.fold) for s in stages}
        for key, expected in WORKED_FOLDS.items():
            np.testing.assert_allclose(folds[key], expected, atol=0)
        unary_at_2 = next(
            s.parent_unary for s in stages if (s.leaf, s.parent) == (3, 2)
        )
        np.testing.assert_allclose(unary_at_2, WORKED_UNARY_AT_2, atol=0)

    def test_cyclic_instance_rejected(self):
        with pytest.raises(NotAForestError):
            tree_dp_min(gap_triangle())

    def test_matches_brute_force_on_200_random_forests(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(2, 9))
            inst = bench.gen_random_tree(n, (2, 4), seed)
            res = tree_dp_min(inst)
            oracle = brute_force_min(inst)
            assert res.min_value == pytest.approx(oracle.min_value, abs=1e-9)
            assert evaluate(inst, res.argmin) == res.min_value

    def test_disconnected_forest_sums_component_minima(self):
        rng = np.random.default_rng(11)
        t1 = rng.standard_normal((2, 3))
        t2 = rng.standard_normal((2, 2))
        inst = Instance.create(6, [2, 3, 2, 2, 2, 3], [(0, 1), (2, 3)], [t1, t2])
        res = tree_dp_min(inst)
        assert res.min_value == pytest.approx(t1.min() + t2.min(), abs=1e-12)
        # isolated vertices take coordinate 0
        assert res.argmin[4] == 0 and res.argmin[5] == 0

    @pytest.mark.parametrize(
        "inst_factory",
        [worked_example, lambda: bench.gen_random_tree(5, (2, 3), 21),
         lambda: bench.gen_random_tree(6, 2, 22)],
    )
    def test_min_preserved_after_every_elimination_stage(self, inst_factory):
        """Folding a leaf never changes the minimum of the reduced objective."""
        inst = inst_factory()
        _, stages = tree_dp_min(inst, record_stages=True)
        ok, order = is_forest(inst)
        assert ok
        target = brute_force_min(inst).min_value
        for depth in range(1, len(order) + 1):
            removed = set(order[:depth])
            unary = {v: np.zeros(inst.domain_sizes[v]) for v in range(inst.n)}
            for s in stages[:depth]:
                unary[s.parent] = unary[s.parent] + s.fold
            alive = [v for v in range(inst.n) if v not in removed]
            live_edges = [
                (e, ij)
                for e, ij in enumerate(inst.edges)
                if ij[0] not in removed and ij[1] not in removed
            ]
            # brute-force the reduced objective (edges among survivors + unaries)
            best = np.inf
            shapes = [inst.domain_sizes[v] for v in alive]
            for flat in range(int(np.prod(shapes))):
                x = {}
                rem = flat
                for v, k in zip(alive, shapes):
                    x[v] = rem % k
                    rem //= k
                val = sum(inst.tables[e][x[i], x[j]] for e, (i, j) in live_edges)
                val += sum(unary[v][x[v]] for v in alive)
                best = min(best, val)
            assert best == pytest.approx(target, abs=1e-9)


class TestObjectiveGrid:
    def test_grid_agrees_with_evaluate(self):
        inst = bench.gen_random(5, 1.0, 3, k_range=(2, 3))
        grid = objective_grid(inst)
        rng = np.random.default_rng(0)
        for _ in range(25):
            x = tuple(int(rng.integers(0, k)) for k in inst.domain_sizes)
            assert grid[x] == evaluate(inst, x)
