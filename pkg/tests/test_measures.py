"""Measure families: consistency, reconstruction, entropy identities."""

import itertools
import math

import numpy as np
import pytest

from sumbiv.measures import (
    GlobalMeasure,
    MarginalFamily,
    check_consistency,
    entropy,
    family_from_global,
    kl,
    max_entropy_value,
    reconstruct_tree_measure,
)
from sumbiv.model import NotAForestError, ValidationError

from _fixtures import random_global_measure, random_tree_family


def product_family(vertex_measures, edges) -> MarginalFamily:
    sizes = [len(v) for v in vertex_measures]
    edge_measures = [
        np.outer(vertex_measures[i], vertex_measures[j]) for i, j in edges
    ]
    return MarginalFamily.create(sizes, edges, edge_measures, vertex_measures)


def triangle_relaxation_optimum() -> MarginalFamily:
    """The non-unique optimal coupled family of the gap fixture: diagonal mass
    on two edges, antidiagonal on the third; consistent yet inextensible."""
    half_diag = np.array([[0.5, 0.0], [0.0, 0.5]])
    half_anti = np.array([[0.0, 0.5], [0.5, 0.0]])
    uniform = np.array([0.5, 0.5])
    return MarginalFamily.create(
        [2, 2, 2],
        [(0, 1), (0, 2), (1, 2)],
        [half_diag, half_diag, half_anti],
        [uniform, uniform, uniform],
    )


class TestConsistency:
    def test_product_family_is_consistent(self):
        fam = product_family(
            [np.array([0.2, 0.8]), np.array([0.5, 0.5]), np.array([0.3, 0.7])],
            [(0, 1), (1, 2)],
        )
        assert check_consistency(fam)

    def test_triangle_optimum_is_consistent(self):
        assert check_consistency(triangle_relaxation_optimum())

    def test_perturbation_detected(self):
        fam = triangle_relaxation_optimum()
        bumped = [m.copy() for m in fam.edge_measures]
        bumped[0][0, 0] += 1e-3
        fam2 = MarginalFamily.create(
            fam.domain_sizes, fam.edges, bumped, fam.vertex_measures
        )
        assert not check_consistency(fam2, tol=1e-6)


class TestEntropyAndKl:
    def test_uniform_entropy_is_log_k(self):
        for k in (2, 3, 7):
            assert entropy(np.full(k, 1.0 / k)) == pytest.approx(math.log(k), abs=1e-12)

    def test_dirac_entropy_is_zero(self):
        assert entropy(np.array([0.0, 1.0, 0.0])) == 0.0

    def test_kl_self_is_zero(self):
        p = np.array([0.1, 0.4, 0.5])
        assert kl(p, p) == 0.0

    def test_kl_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = rng.uniform(0.01, 1, 5)
            q = rng.uniform(0.01, 1, 5)
            p, q = p / p.sum(), q / q.sum()
            assert kl(p, q) >= 0.0

    def test_kl_outside_support_is_inf(self):
        assert kl(np.array([0.5, 0.5]), np.array([1.0, 0.0])) == math.inf


class TestReconstruction:
    def test_single_edge_returns_the_edge_measure(self):
        rng = np.random.default_rng(1)
        m = rng.uniform(0.1, 1.0, (2, 3))
        m /= m.sum()
        fam = MarginalFamily.create(
            [2, 3], [(0, 1)], [m], [m.sum(axis=1), m.sum(axis=0)]
        )
        rec = reconstruct_tree_measure(fam)
        np.testing.assert_allclose(rec.values, m, atol=1e-12)

    def test_product_family_reconstructs_product_measure(self):
        vs = [np.array([0.25, 0.75]), np.array([0.5, 0.5]), np.array([0.1, 0.9])]
        fam = product_family(vs, [(0, 1), (1, 2)])
        rec = reconstruct_tree_measure(fam)
        expected = vs[0][:, None, None] * vs[1][None, :, None] * vs[2][None, None, :]
        np.testing.assert_allclose(rec.values, expected, atol=1e-12)

    def test_marginals_match_on_random_tree_families(self):
        for seed in range(40):
            fam = random_tree_family(seed)
            rec = reconstruct_tree_measure(fam)
            for (i, j), m in zip(fam.edges, fam.edge_measures):
                np.testing.assert_allclose(rec.marginal(i, j), m, atol=1e-10)

    def test_rejects_cyclic_graphs(self):
        with pytest.raises(NotAForestError):
            reconstruct_tree_measure(triangle_relaxation_optimum())

    def test_rejects_inconsistent_family(self):
        fam = random_tree_family(0)
        bumped = [m.copy() for m in fam.edge_measures]
        bumped[0][0, 0] += 0.05
        fam2 = MarginalFamily.create(
            fam.domain_sizes, fam.edges, bumped, fam.vertex_measures
        )
        with pytest.raises(ValidationError):
            reconstruct_tree_measure(fam2)

    def test_root_choice_does_not_matter(self):
        for seed in range(10):
            fam = random_tree_family(seed)
            base = reconstruct_tree_measure(fam).values
            for root in range(len(fam.domain_sizes)):
                rooted = reconstruct_tree_measure(fam, root=root).values
                np.testing.assert_allclose(rooted, base, atol=1e-12)

    def test_zero_vertex_mass_maps_to_zero_mass(self):
        # vertex 1 concentrated on its first value
        v0 = np.array([0.5, 0.5])
        v1 = np.array([1.0, 0.0])
        edge = np.array([[0.5, 0.0], [0.5, 0.0]])
        fam = MarginalFamily.create([2, 2], [(0, 1)], [edge], [v0, v1])
        rec = reconstruct_tree_measure(fam)
        assert rec.values[0, 1] == 0.0 and rec.values[1, 1] == 0.0

    def test_maximality_among_same_marginal_measures(self):
        """Perturbing the reconstruction inside the marginal-map null space
        never increases entropy."""
        for seed in range(10):
            fam = random_tree_family(seed, n_max=4, k_max=3)
            rec = reconstruct_tree_measure(fam)
            flat = rec.values.reshape(-1)
            n = len(fam.domain_sizes)
            # rows: all edge-marginal constraints (vertex marginals follow)
            rows = []
            grid_points = list(
                itertools.product(*[range(k) for k in fam.domain_sizes])
            )
            for (i, j) in fam.edges:
                for a in range(fam.domain_sizes[i]):
                    for b in range(fam.domain_sizes[j]):
                        rows.append(
                            [1.0 if (x[i] == a and x[j] == b) else 0.0 for x in grid_points]
                        )
            rows.append([1.0] * len(grid_points))
            mat = np.array(rows)
            _, s, vt = np.linalg.svd(mat)
            null = vt[np.searchsorted(-s, -1e-10):]
            rng = np.random.default_rng(seed)
            h_max = entropy(rec)
            for _ in range(10):
                if null.shape[0] == 0:
                    break
                direction = null.T @ rng.standard_normal(null.shape[0])
                step = 0.25 * flat[flat > 0].min() / (np.abs(direction).max() + 1e-30)
                candidate = flat + step * direction
                if (candidate < 0).any():
                    continue
                candidate = candidate / candidate.sum()
                other = GlobalMeasure.create(fam.domain_sizes, candidate)
                assert entropy(other) <= h_max + 1e-9


class TestMaxEntropyValue:
    def test_single_edge_equals_edge_entropy(self):
        rng = np.random.default_rng(2)
        m = rng.uniform(0.1, 1.0, (3, 2))
        m /= m.sum()
        fam = MarginalFamily.create(
            [3, 2], [(0, 1)], [m], [m.sum(axis=1), m.sum(axis=0)]
        )
        assert max_entropy_value(fam) == pytest.approx(entropy(m), abs=1e-12)

    def test_product_family_on_path_adds_vertex_entropies(self):
        vs = [np.array([0.25, 0.75]), np.array([0.5, 0.5]), np.array([0.1, 0.9])]
        fam = product_family(vs, [(0, 1), (1, 2)])
        expected = sum(entropy(v) for v in vs)
        assert max_entropy_value(fam) == pytest.approx(expected, abs=1e-12)

    def test_matches_direct_entropy_of_reconstruction(self):
        for seed in range(40):
            fam = random_tree_family(seed)
            rec = reconstruct_tree_measure(fam)
            assert max_entropy_value(fam) == pytest.approx(entropy(rec), abs=1e-9)

    def test_isolated_vertices_contribute_their_entropy(self):
        measure = random_global_measure(3, n_max=3, k_max=3)
        fam = family_from_global(measure, [])
        expected = sum(entropy(v) for v in fam.vertex_measures)
        assert max_entropy_value(fam) == pytest.approx(expected, abs=1e-12)
