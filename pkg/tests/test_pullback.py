import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from _corpus import contracted_square, square_circle  # noqa: E402

from plembed import (PLMap, PreconditionError, build_complex, contract_toward_point,  # noqa: E402
                     intrinsic_distance, isometrize_graph, isometry_defect, pair_table,
                     pullback_estimate, sample_graph)


def unit_edge(X=((0.0, 0.0), (1.0, 0.0))):
    cx = build_complex("ab", [["a", "b"]], {"a|b": 1.0})
    return PLMap(cx, np.array(X, dtype=float))


def equilateral():
    cx = build_complex("abc", [list("abc")], {"a|b": 1, "a|c": 1, "b|c": 1})
    return PLMap(cx, [[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])


class TestSampleGraph:
    def test_unit_edge_level3(self):
        G = sample_graph(unit_edge().domain, 3)
        assert G.n_nodes == 9
        # nine collinear nodes: consecutive steps of 1/8 plus longer chords
        steps = np.sort(G.weights)[:8]
        np.testing.assert_allclose(steps, 0.125)
        assert G.mesh == pytest.approx(0.125)

    def test_centroid_weight(self):
        G = sample_graph(equilateral().domain, 1)
        c = [i for i, v in enumerate(G.nodes) if v.count("~") == 2][0]
        corners = [G.node(v) for v in "abc"]
        w = {tuple(sorted(e)): x for e, x in zip(G.edges.tolist(), G.weights)}
        for v in corners:
            assert w[tuple(sorted((c, v)))] == pytest.approx(1 / math.sqrt(3))

    def test_level_zero_graph_is_skeleton(self):
        cx = square_circle()
        G = sample_graph(cx, 0)
        assert G.nodes == cx.vertices
        np.testing.assert_array_equal(G.edges, cx.rows(1))
        np.testing.assert_allclose(G.weights, 1.0)

    def test_max_step_prunes(self):
        G = sample_graph(unit_edge().domain, 3, max_step=0.125)
        assert len(G.edges) == 8

    def test_unknown_node(self):
        G = sample_graph(unit_edge().domain, 1)
        with pytest.raises(PreconditionError):
            G.node("zz")


class TestIntrinsic:
    def test_segment(self):
        G = sample_graph(unit_edge().domain, 2)
        assert intrinsic_distance(G, "a", "b") == pytest.approx(1.0)

    def test_antipodal_on_square(self):
        G = sample_graph(square_circle(), 3)
        assert intrinsic_distance(G, "a", "c") == pytest.approx(2.0)

    def test_unreachable(self):
        cx = build_complex("abcd", [["a", "b"], ["c", "d"]], {"a|b": 1, "c|d": 1})
        G = sample_graph(cx, 1)
        assert intrinsic_distance(G, "a", "d") == math.inf

    def test_flat_triangle_is_straight(self):
        G = sample_graph(equilateral().domain, 2)
        mids = [v for v in G.nodes if v.count("~") == 1 and "a" in v and "b" in v]
        # vertex c to the midpoint of ab, across the face
        m = [v for v in mids if "0.5" in v][0]
        assert intrinsic_distance(G, "c", m) == pytest.approx(math.sqrt(3) / 2)


class TestPullback:
    def test_isometric_segment(self):
        f = unit_edge()
        G = sample_graph(f.domain, 3)
        assert pullback_estimate(f, G, "a", "b", G.mesh) == pytest.approx(1.0)

    def test_constant_map(self):
        f = unit_edge(((1.0, 1.0), (1.0, 1.0)))
        G = sample_graph(f.domain, 3)
        assert pullback_estimate(f, G, "a", "b", G.mesh) == 0.0

    def test_chain_eps_below_mesh(self):
        f = unit_edge()
        G = sample_graph(f.domain, 2)
        with pytest.raises(PreconditionError):
            pullback_estimate(f, G, "a", "b", 0.1)

    def test_coarse_chains_cut_corners(self):
        # a folded segment looks shorter to chains that skip its corners
        f = unit_edge(((0.0, 0.0), (0.5, 0.0)))
        h = isometrize_graph(f, [0.05])
        fine = sample_graph(f.domain, 6)
        est = pullback_estimate(h, fine, "a", "b", fine.mesh)
        assert est == pytest.approx(1.0, rel=0.01)
        coarse = pullback_estimate(h, fine, "a", "b", 0.5)
        assert coarse < est

    def test_folded_segment_converges(self):
        f = unit_edge(((0.0, 0.0), (0.5, 0.0)))
        h = isometrize_graph(f, [0.05])
        ests = []
        for level in (6, 7, 8):
            G = sample_graph(f.domain, level)
            ests.append(pullback_estimate(h, G, "a", "b", G.mesh))
        assert abs(ests[0] - 1.0) <= 0.01
        assert abs(ests[2] - ests[1]) <= 1e-9


class TestDefect:
    def test_isometric(self):
        f = equilateral()
        G = sample_graph(f.domain, 2)
        assert isometry_defect(f, G, G.mesh).defect <= 1e-9

    def test_contracted_segment(self):
        f = unit_edge(((0.0, 0.0), (0.5, 0.0)))
        G = sample_graph(f.domain, 4)
        d = isometry_defect(f, G, G.mesh)
        assert d.defect == pytest.approx(0.5)
        assert set(d.pair) == {"a", "b"}

    def test_contracted_square(self):
        f = contracted_square(0.5)
        G = sample_graph(f.domain, 3)
        assert isometry_defect(f, G, G.mesh).defect == pytest.approx(1.0)

    def test_explicit_pairs_and_table(self):
        f = contract_toward_point(equilateral(), None, 0.5)
        G = sample_graph(f.domain, 1)
        d = isometry_defect(f, G, G.mesh, pairs=[("a", "b")])
        assert d.defect == pytest.approx(0.5)
        rows = pair_table(f, G, G.mesh, [("a", "b"), ("a", "c")])
        assert [r[0] for r in rows] == ["a|b", "a|c"]
        assert rows[0][1:] == pytest.approx((1.0, 0.5, 0.5))

    def test_cross_component_pairs_skipped(self):
        cx = build_complex("abcd", [["a", "b"], ["c", "d"]], {"a|b": 1, "c|d": 1})
        f = PLMap(cx, [[0, 0], [1, 0], [0, 5], [1, 5]])
        G = sample_graph(cx, 2)
        assert isometry_defect(f, G, G.mesh).defect <= 1e-12
        row = pair_table(f, G, G.mesh, [("a", "c")])[0]
        assert row[1] == math.inf and math.isnan(row[3])

    def test_wrong_complex(self):
        G = sample_graph(square_circle(), 1)
        with pytest.raises(PreconditionError):
            isometry_defect(unit_edge(), G, G.mesh)
