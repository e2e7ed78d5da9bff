import itertools
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from _corpus import planar_complex, random_graph  # noqa: E402

from plembed import (PreconditionError, build_complex, epsilon_at, gram_form,  # noqa: E402
                     shell, shell_index, simplex_budgets, star, subdivide, subdivide_edges,
                     validate_metric, vertex_budgets)


def triangle(ab, ac, bc):
    return build_complex("abc", [["a", "b", "c"]], {"a|b": ab, "a|c": ac, "b|c": bc})


def path(*lengths):
    ids = [f"v{i}" for i in range(len(lengths) + 1)]
    return build_complex(ids, [[ids[i], ids[i + 1]] for i in range(len(lengths))],
                         {f"{ids[i]}|{ids[i + 1]}": L for i, L in enumerate(lengths)})


class TestBuild:
    def test_face_closure(self):
        cx = triangle(1, 1, 1)
        assert cx.dim == 2
        assert [len(cx.rows(d)) for d in range(3)] == [3, 3, 1]

    def test_path(self):
        cx = build_complex("abc", [["a", "b"], ["b", "c"]], {"a|b": 1, "b|c": 2})
        assert cx.dim == 1 and len(cx.rows(1)) == 2
        assert cx.edge_lengths[("b", "c")] == 2.0

    def test_missing_length(self):
        with pytest.raises(PreconditionError):
            build_complex("abc", [["a", "b", "c"]], {"a|c": 1, "b|c": 1})

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
    def test_nonpositive_length(self, bad):
        with pytest.raises(PreconditionError):
            build_complex("ab", [["a", "b"]], {"a|b": bad})

    def test_unknown_vertex(self):
        with pytest.raises(PreconditionError):
            build_complex("ab", [["a", "z"]], {"a|z": 1})

    def test_key_order_irrelevant(self):
        a = build_complex("ab", [["b", "a"]], {"b|a": 2.0})
        assert a.edge_lengths[("a", "b")] == 2.0

    def test_components(self):
        cx = build_complex("abcd", [["a", "b"], ["c", "d"]], {"a|b": 1, "c|d": 1})
        assert cx.components.tolist() == [0, 0, 2, 2]


class TestGram:
    def test_equilateral(self):
        np.testing.assert_allclose(gram_form(triangle(1, 1, 1), "abc"), [[1, 0.5], [0.5, 1]])

    def test_right_angle_at_base(self):
        np.testing.assert_allclose(gram_form(triangle(3, 4, 5), "abc"), [[9, 0], [0, 16]])

    def test_degenerate(self):
        G = gram_form(triangle(1, 2, 1), "abc")
        np.testing.assert_allclose(G, [[1, 2], [2, 4]])
        assert abs(np.linalg.det(G)) < 1e-12

    def test_symmetric_under_listing_order(self):
        cx = triangle(3, 4, 5)
        np.testing.assert_array_equal(gram_form(cx, "cab"), gram_form(cx, "abc"))


class TestValidate:
    def test_345(self):
        rep = validate_metric(triangle(3, 4, 5))
        assert rep.valid and not rep.failures

    def test_121_reported(self):
        rep = validate_metric(triangle(1, 2, 1))
        assert not rep.valid
        assert rep.to_dict()["failures"][0]["simplex"] == ["a", "b", "c"]

    def test_regular_tetrahedron(self):
        ids = "abcd"
        cx = build_complex(ids, [list(ids)], {f"{a}|{b}": 1 for a, b in itertools.combinations(ids, 2)})
        assert validate_metric(cx).valid
        np.testing.assert_allclose(np.linalg.eigvalsh(gram_form(cx, ids)), [0.5, 0.5, 2.0])

    def test_triangle_inequality_violation(self):
        assert not validate_metric(triangle(1, 1, 3)).valid


class TestStarsAndShells:
    def test_star_one(self):
        st = star(path(1, 1, 1), "v0", 1)
        assert st.simplices == {("v0",), ("v1",), ("v0", "v1")}

    def test_star_two(self):
        st = star(path(1, 1, 1), "v0", 2)
        assert st.simplices == {("v0",), ("v1",), ("v2",), ("v0", "v1"), ("v1", "v2")}

    def test_shell_two_is_half_open(self):
        sh = shell(path(1, 1, 1), "v0", 2)
        assert sh.open_simplices == {("v2",), ("v1", "v2")}
        assert sh.excluded == {("v1",)}

    def test_shell_index_matches_shells(self):
        cx = path(1, 1, 1)
        idx = shell_index(cx, "v0")
        for k in (1, 2, 3):
            assert {s for s, j in idx.items() if j == k} == set(shell(cx, "v0", k).open_simplices)

    def test_other_components_use_own_root(self):
        cx = build_complex("abcde", [["a", "b"], ["c", "d"], ["d", "e"]],
                           {"a|b": 1, "c|d": 1, "d|e": 1})
        idx = shell_index(cx, "a")
        assert idx[("c",)] == 1 and idx[("d", "e")] == 2

    def test_star_needs_positive_k(self):
        with pytest.raises(PreconditionError):
            star(path(1), "v0", 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_stars_nested(self, seed):
        rng = np.random.default_rng(seed)
        cx = random_graph(rng, 12)
        v = cx.vertices[3]
        prev = frozenset()
        for k in range(1, 6):
            cur = star(cx, v, k).simplices
            assert prev <= cur
            prev = cur


class TestBudgets:
    def test_epsilon_at_repeats_last(self):
        assert epsilon_at([0.3, 0.2], 1) == 0.3
        assert epsilon_at([0.3, 0.2], 5) == 0.2

    def test_empty_schedule(self):
        with pytest.raises(PreconditionError):
            epsilon_at([], 1)

    def test_vertex_budget_is_min_over_cofaces(self):
        cx = path(1, 1, 1)
        b = vertex_budgets(cx, [0.4, 0.2, 0.1], "v0")
        # v1 touches edge v1v2 (shell 2); v2 touches edge v2v3 (shell 3)
        np.testing.assert_allclose(b, [0.4, 0.2, 0.1, 0.1])

    def test_simplex_budget_closed_min(self):
        cx = path(1, 1, 1)
        b = simplex_budgets(cx, cx.rows(1), [0.4, 0.2, 0.1], "v0")
        np.testing.assert_allclose(b, [0.4, 0.2, 0.1])

    def test_budgets_follow_root_after_subdivision(self):
        cx = path(1, 1)
        sub, _ = subdivide(cx, 2)
        b = vertex_budgets(sub, [0.4, 0.2], "v0")
        assert b.max() == 0.4 and b.min() == 0.2
        assert len(b) == sub.n_vertices


class TestSubdivide:
    def test_edge_halves(self):
        sub, _ = subdivide(path(1), 1)
        assert sub.n_vertices == 3
        np.testing.assert_allclose(sub.lengths, [0.5, 0.5])

    def test_barycentric_triangle(self):
        sub, _ = subdivide(triangle(1, 1, 1), 1)
        assert len(sub.rows(2)) == 6
        c = [v for v in sub.vertices if v.count("~") == 2][0]
        lengths = [L for (a, b), L in sub.edge_lengths.items() if c in (a, b) and "@" not in
                   (b if a == c else a)]
        np.testing.assert_allclose(lengths, [1 / math.sqrt(3)] * 3)

    def test_level_zero_identity(self):
        cx = triangle(3, 4, 5)
        sub, corr = subdivide(cx, 0)
        assert sub.vertices == cx.vertices
        np.testing.assert_array_equal(corr.matrix().toarray(), np.eye(3))

    def test_negative_level(self):
        with pytest.raises(PreconditionError):
            subdivide(path(1), -1)

    @pytest.mark.parametrize("level", [1, 2])
    def test_subdivision_stays_flat(self, level):
        cx, _ = planar_complex(np.random.default_rng(level), 8)
        sub, corr = subdivide(cx, level)
        assert validate_metric(sub).valid
        rows = corr.matrix().toarray()
        np.testing.assert_allclose(rows.sum(axis=1), 1.0)
        assert sub.root is cx

    def test_total_length_preserved(self):
        rng = np.random.default_rng(0)
        cx = random_graph(rng, 10)
        sub, _ = subdivide(cx, 3)
        assert sub.lengths.sum() == pytest.approx(cx.lengths.sum(), rel=1e-12)
        assert sub.mesh == pytest.approx(cx.lengths.max() / 8)

    def test_edges_at_breakpoints(self):
        cx = path(2)
        sub, _ = subdivide_edges(cx, [[0.25, 0.5]])
        np.testing.assert_allclose(sorted(sub.lengths), [0.5, 0.5, 1.0])
