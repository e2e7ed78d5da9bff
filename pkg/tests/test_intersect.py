import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plembed import PLMap, build_complex, find_intersection, segment_distance

coords = st.floats(-5, 5, allow_nan=False, width=64)


def segments(N):
    return st.lists(st.lists(coords, min_size=N, max_size=N), min_size=4, max_size=4)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4).flatmap(segments))
def test_segment_distance_against_sampling(pts):
    p0, p1, q0, q1 = (np.array(x) for x in pts)
    d = segment_distance(p0, p1, q0, q1)[0]
    t = np.linspace(0, 1, 201)
    P = p0 + t[:, None] * (p1 - p0)
    Q = q0 + t[:, None] * (q1 - q0)
    sampled = np.linalg.norm(P[:, None] - Q[None], axis=2).min()
    span = np.linalg.norm(p1 - p0) + np.linalg.norm(q1 - q0)
    assert d <= sampled + 1e-9
    assert sampled <= d + span / 200 + 1e-9


def test_segment_distance_crossing_and_parallel():
    assert segment_distance([0, 0], [2, 2], [0, 2], [2, 0])[0] == pytest.approx(0, abs=1e-15)
    assert segment_distance([0, 0], [1, 0], [0, 1], [1, 1])[0] == pytest.approx(1)
    assert segment_distance([0, 0], [1, 0], [2, 0], [3, 0])[0] == pytest.approx(1)


def graph_map(edges, X):
    ids = sorted({v for e in edges for v in e})
    cx = build_complex(ids, [list(e) for e in edges],
                       {f"{a}|{b}": 10.0 for a, b in edges})
    return PLMap(cx, X)


class TestGraphs:
    def test_square_is_embedded(self):
        f = graph_map(["ab", "bc", "cd", "ad"], [[0, 0], [1, 0], [1, 1], [0, 1]])
        assert find_intersection(f) is None

    def test_figure_eight_crossing(self):
        f = graph_map(["ab", "bc", "cd", "ad"], [[0, 0], [1, 1], [1, 0], [0, 1]])
        hit = find_intersection(f)
        assert hit is not None and {hit.first, hit.second} == {("a", "b"), ("c", "d")}

    def test_collapsed_edge(self):
        f = graph_map(["ab", "bc"], [[0, 0], [0, 0], [1, 0]])
        assert find_intersection(f) is not None

    def test_backtracking_overlap(self):
        f = graph_map(["ab", "bc"], [[0, 0], [1, 0], [0.5, 0]])
        assert find_intersection(f).kind == "overlap"

    def test_touching_at_shared_vertex_only(self):
        f = graph_map(["ab", "bc", "bd"], [[0, 0], [1, 0], [2, 0.5], [2, -0.5]])
        assert find_intersection(f) is None

    @pytest.mark.parametrize("seed", [0, 1])
    def test_grid_matches_brute_force(self, seed):
        # enough edges to leave the all-pairs path
        rng = np.random.default_rng(seed)
        n = 600
        a = rng.random((n, 2)) * 10
        b = a + rng.normal(scale=0.25, size=(n, 2))
        X = np.empty((2 * n, 2))
        X[0::2], X[1::2] = a, b
        edges = [(f"v{2 * i:04d}", f"v{2 * i + 1:04d}") for i in range(n)]
        f = graph_map(edges, X)
        i, j = np.triu_indices(n, 1)
        d = segment_distance(a[i], b[i], a[j], b[j])
        hit = find_intersection(f)
        assert (hit is None) == (d.min() > 1e-12 * np.ptp(X, axis=0).max())


def two_triangles(A, B):
    cx = build_complex("abcdef", [list("abc"), list("def")],
                       {f"{u}|{v}": 10.0 for t in ("abc", "def")
                        for u, v in itertools.combinations(t, 2)})
    return PLMap(cx, np.vstack([A, B]))


class TestTriangles:
    @pytest.mark.parametrize("seed", range(20))
    def test_constructed_crossing(self, seed):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(2, 5))
        x = rng.standard_normal(N)
        tris = []
        for _ in range(2):
            T = rng.standard_normal((3, N))
            w = rng.dirichlet(np.ones(3))
            tris.append(T + (x - w @ T))  # x sits at weights w
        f = two_triangles(*tris)
        assert find_intersection(f) is not None
        assert find_intersection(f, shortcut=False) is not None

    @pytest.mark.parametrize("seed", range(20))
    def test_separated_by_hyperplane(self, seed):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(2, 5))
        A = rng.standard_normal((3, N))
        B = rng.standard_normal((3, N))
        A[:, -1] = np.abs(A[:, -1]) + 0.1
        B[:, -1] = -np.abs(B[:, -1]) - 0.1
        assert find_intersection(two_triangles(A, B)) is None
        assert find_intersection(two_triangles(A, B), shortcut=False) is None

    def test_generic_in_r5(self):
        rng = np.random.default_rng(0)
        f = two_triangles(rng.standard_normal((3, 5)), rng.standard_normal((3, 5)))
        assert find_intersection(f) is None

    def test_shared_edge_folded_onto_itself(self):
        cx = build_complex("abcd", [list("abc"), list("abd")],
                           {f"{u}|{v}": 10.0 for u, v in
                            ["ab", "ac", "bc", "ad", "bd"]})
        f = PLMap(cx, [[0, 0], [1, 0], [0.3, 1], [0.6, 1]])
        hit = find_intersection(f)
        assert hit is not None and hit.kind == "crossing"

    def test_shared_edge_opened(self):
        cx = build_complex("abcd", [list("abc"), list("abd")],
                           {f"{u}|{v}": 10.0 for u, v in
                            ["ab", "ac", "bc", "ad", "bd"]})
        f = PLMap(cx, [[0, 0], [1, 0], [0.3, 1], [0.6, -1]])
        assert find_intersection(f) is None

    def test_degenerate_triangle(self):
        f = two_triangles([[0, 0, 0], [1, 0, 0], [2, 0, 0]], np.eye(3) + 5)
        assert find_intersection(f).kind == "degenerate"
