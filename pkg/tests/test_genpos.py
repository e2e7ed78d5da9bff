import itertools
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))
from _corpus import contracted_square, random_graph  # noqa: E402

from plembed import (PLMap, PreconditionError, build_complex, epsilon_at,  # noqa: E402
                     is_general_position, perturb_prefix_general_position,
                     perturb_to_embedding, shell_index, shortness_margin, verify_embedding)
from plembed.genpos import _gap_lower  # noqa: E402
from plembed.intersect import affine_gap  # noqa: E402


def glued_triangles(N=5, coincide=True):
    lengths = {"a|b": 1, "a|c": 1, "b|c": 1, "b|d": 1, "c|d": 1}
    cx = build_complex("abcd", [["a", "b", "c"], ["b", "c", "d"]], lengths)
    h = np.sqrt(3) / 2
    X = np.zeros((4, N))
    X[:, :2] = 0.5 * np.array([[0, 0], [1, 0], [0.5, h], [1.5, h]])
    if coincide:
        X[3] = X[0]  # a and d share an image
    return PLMap(cx, X)


class TestGeneralPosition:
    def test_triangle_k2(self):
        assert is_general_position([[0, 0], [1, 0], [0, 1]], 2).holds

    def test_collinear_witness(self):
        rep = is_general_position([[0, 0], [1, 0], [0, 1], [2, 0]], 2)
        assert not rep.holds and set(rep.witness) == {0, 1, 3}

    def test_single_point(self):
        assert is_general_position([[1.0, 2.0, 3.0]], 3).holds

    def test_duplicate_points(self):
        rep = is_general_position([[0, 0], [1, 1], [0, 0]], 1)
        assert not rep.holds and set(rep.witness) == {0, 2}

    def test_k_above_dimension(self):
        with pytest.raises(PreconditionError):
            is_general_position(np.zeros((3, 2)), 3)

    def test_tolerance_above_certificate_threshold(self):
        # ratio about 5e-4: independent at 1e-9, dependent at 1e-3
        P = [[0, 0], [1, 0], [0.5, 5e-4]]
        assert is_general_position(P, 2).holds
        assert not is_general_position(P, 2, rank_tol=1e-3).holds

    def test_moved_restriction_sees_only_moved(self):
        rng = np.random.default_rng(0)
        P = rng.standard_normal((20, 3))  # over 2000 subsets, so the restriction applies
        P[3] = P[0] + 0.3 * (P[1] - P[0]) + 0.5 * (P[2] - P[0])  # coplanar quadruple
        rep = is_general_position(P, 3, full=True)
        assert not rep.holds and set(rep.witness) == {0, 1, 2, 3}
        assert is_general_position(P, 3, moved=19).holds
        assert not is_general_position(P[:8], 3, moved=7).holds

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 7), st.sampled_from([1.0, 1e-2, 1e-5, 1e-8]))
    def test_certified_ratio_is_a_lower_bound(self, seed, m, squash):
        rng = np.random.default_rng(seed)
        P = rng.standard_normal((64, m, 6))
        P[:, :, 2:] *= squash
        g = _gap_lower(P, 1e-6)
        exact = affine_gap(P)
        assert np.all(g <= exact * (1 + 1e-9) + 1e-15)
        small = exact <= 1e-6
        np.testing.assert_allclose(g[small], exact[small], rtol=1e-12, atol=1e-15)
        assert np.all(g[~small] > 1e-6)

    def test_agrees_with_svd_on_random_sets(self):
        rng = np.random.default_rng(1)
        P = rng.integers(-2, 3, size=(14, 3)).astype(float)
        for k in (1, 2, 3):
            brute = all(affine_gap(P[list(c)][None])[0] > 1e-9
                        for m in range(2, k + 2) for c in itertools.combinations(range(14), m))
            assert is_general_position(P, k).holds == brute


class TestPerturb:
    def test_glued_triangles_become_injective(self):
        f = glued_triangles()
        assert not verify_embedding(f, "exact").embedding
        g = perturb_to_embedding(f, [0.05], seed=3)
        assert verify_embedding(g, "exact").embedding
        assert verify_embedding(g, "genpos").embedding
        assert shortness_margin(g).margin > 0
        assert np.linalg.norm(g.images - f.images, axis=1).max() < 0.05

    def test_already_generic_stays_close(self):
        rng = np.random.default_rng(2)
        f = glued_triangles(coincide=False)
        f = f.with_images(f.images + 0.01 * rng.standard_normal(f.images.shape))
        assert shortness_margin(f).margin > 0
        g = perturb_to_embedding(f, [0.02], seed=0)
        assert np.linalg.norm(g.images - f.images, axis=1).max() < 0.02
        assert is_general_position(g.images, 5).holds

    def test_not_strictly_short(self):
        cx = build_complex("ab", [["a", "b"]], {"a|b": 1.0})
        with pytest.raises(PreconditionError):
            perturb_to_embedding(PLMap(cx, [[0, 0, 0], [1, 0, 0]]), [0.1])

    def test_seed_determinism(self):
        f = glued_triangles()
        a = perturb_to_embedding(f, [0.05], seed=11)
        b = perturb_to_embedding(f, [0.05], seed=11)
        c = perturb_to_embedding(f, [0.05], seed=12)
        assert np.array_equal(a.images, b.images)
        assert not np.array_equal(a.images, c.images)

    @pytest.mark.parametrize("method", ["sequential", "batch"])
    def test_shell_budgets_on_graph(self, method):
        rng = np.random.default_rng(4)
        cx = random_graph(rng, 10, extra_edges=2)
        f = PLMap(cx, 0.01 * rng.standard_normal((cx.n_vertices, 3)))
        sched = [0.05, 0.02, 0.01]
        base = cx.vertices[4]
        g = perturb_to_embedding(f, sched, base, seed=1, method=method)
        move = np.linalg.norm(g.images - f.images, axis=1)
        for s, k in shell_index(cx, base).items():
            assert move[[cx.index[v] for v in s]].max() < epsilon_at(sched, k)
        assert verify_embedding(g, "exact").embedding

    def test_unknown_method(self):
        with pytest.raises(PreconditionError):
            perturb_to_embedding(glued_triangles(), [0.05], method="magic")


class TestPrefix:
    def test_first_coordinates_separate(self):
        f = contracted_square(0.5, N=3)
        # a and d share their first coordinate
        assert f.images[0, 0] == f.images[3, 0]
        g = perturb_prefix_general_position(f, [0.05], seed=0)
        assert len(set(g.images[:, 0].tolist())) == 4
        assert is_general_position(g.images[:, :2], 2).holds
        assert shortness_margin(g).margin > 0

    def test_moves_along_axes_within_budget(self):
        f = contracted_square(0.5, N=3)
        g = perturb_prefix_general_position(f, [0.05], seed=0)
        assert np.abs(g.images - f.images).max() < 0.05 / (4 * 3)

    def test_needs_three_n(self):
        f = glued_triangles(N=5)
        with pytest.raises(PreconditionError):
            perturb_prefix_general_position(f, [0.05])


class TestVerify:
    def test_collapsed_edge(self):
        cx = build_complex("abc", [["a", "b"], ["b", "c"]], {"a|b": 1, "b|c": 1})
        f = PLMap(cx, [[0, 0, 0], [0, 0, 0], [1, 0, 0]])
        assert not verify_embedding(f, "exact").embedding
        assert not verify_embedding(f, "genpos").embedding

    def test_genpos_needs_room(self):
        f = glued_triangles(N=4)
        with pytest.raises(PreconditionError):
            verify_embedding(f, "genpos")

    def test_unknown_mode(self):
        with pytest.raises(PreconditionError):
            verify_embedding(glued_triangles(), "guess")

    def test_verdict_serializes(self):
        d = verify_embedding(glued_triangles(), "exact").to_dict()
        assert d["embedding"] is False and d["mode"] == "exact"
        assert isinstance(d["witness"], dict)
