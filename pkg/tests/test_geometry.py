import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saccadet.geometry import (
    Rect,
    containment_fraction,
    fringe_set,
    intersection_area,
    iou,
    subregion_set,
)


def mc_intersection(a: Rect, b: Rect, n=1_000_000, seed=123):
    """Monte-Carlo point-in-both-rects oracle over a's area."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(a.x1, a.x2, n)
    ys = rng.uniform(a.y1, a.y2, n)
    inside = (b.x1 <= xs) & (xs <= b.x2) & (b.y1 <= ys) & (ys <= b.y2)
    return a.area * inside.mean()


coords = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


@st.composite
def rects(draw):
    x1, x2 = sorted(draw(st.tuples(coords, coords)))
    y1, y2 = sorted(draw(st.tuples(coords, coords)))
    if x2 - x1 < 1e-3 or y2 - y1 < 1e-3:
        x2, y2 = x1 + 0.5, y1 + 0.5
    return Rect(x1, y1, x2, y2)


class TestRect:
    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            Rect(0, 0, 0, 1)
        with pytest.raises(ValueError):
            Rect(0.5, 0, 0.2, 1)
        with pytest.raises(ValueError):
            Rect(0, 0, float("nan"), 1)

    def test_contains_point_is_closed(self):
        r = Rect(0, 0, 1, 1)
        assert r.contains_point(0.0, 1.0)
        assert not r.contains_point(1.0001, 0.5)


class TestScalarOps:
    def test_identity(self):
        r = Rect(0, 0, 1, 1)
        assert intersection_area(r, r) == 1.0
        assert iou(r, r) == 1.0

    def test_disjoint(self):
        a, b = Rect(0, 0, 0.5, 0.5), Rect(0.6, 0.6, 1, 1)
        assert intersection_area(a, b) == 0.0
        assert iou(a, b) == 0.0
        assert containment_fraction(a, b) == 0.0

    def test_half_overlap_matches_rasterization_oracle(self):
        a, b = Rect(0, 0, 1, 1), Rect(0.5, 0, 1.5, 1)
        assert intersection_area(a, b) == pytest.approx(0.5, abs=1e-12)
        assert abs(intersection_area(a, b) - mc_intersection(a, b)) <= 1e-2
        assert iou(a, b) == pytest.approx(0.5 / 1.5, abs=1e-12)
        assert containment_fraction(a, b) == pytest.approx(0.5, abs=1e-12)

    def test_full_containment(self):
        outer, inner = Rect(0, 0, 1, 1), Rect(0.2, 0.2, 0.6, 0.6)
        assert containment_fraction(outer, inner) == 1.0

    @settings(max_examples=200, deadline=None)
    @given(rects(), rects())
    def test_symmetry_and_bounds(self, a, b):
        assert intersection_area(a, b) == intersection_area(b, a)
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0
        assert 0.0 <= containment_fraction(a, b) <= 1.0
        assert intersection_area(a, b) <= min(a.area, b.area) + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(rects(), rects())
    def test_scalar_ops_match_oracle(self, a, b):
        approx = mc_intersection(a, b, n=200_000)
        assert abs(intersection_area(a, b) - approx) <= 2e-2 * max(1.0, a.area)


class TestRegionSets:
    def test_self_excluded(self):
        pool = {0: Rect(0, 0, 1, 1)}
        assert subregion_set(0, pool, 0.5) == set()
        assert fringe_set(0, pool, 0.5) == set()

    def test_contained_region_found(self):
        pool = {0: Rect(0, 0, 1, 1), 1: Rect(0.1, 0.1, 0.4, 0.4)}
        assert subregion_set(0, pool, 0.5) == {1}

    def test_container_not_a_subregion(self):
        # the small reference covers only 9% of the big one
        pool = {0: Rect(0, 0, 0.3, 0.3), 1: Rect(0, 0, 1, 1)}
        assert subregion_set(0, pool, 0.5) == set()

    def test_fringe_overlap(self):
        pool = {0: Rect(0, 0, 1, 1), 1: Rect(0, 0, 0.9, 1)}
        assert iou(pool[0], pool[1]) == pytest.approx(0.9)
        assert fringe_set(0, pool, 0.2) == {1}

    def test_fringe_disjoint(self):
        pool = {0: Rect(0, 0, 0.2, 0.2), 1: Rect(0.8, 0.8, 1, 1)}
        assert fringe_set(0, pool, 0.2) == set()

    def test_threshold_validation(self):
        pool = {0: Rect(0, 0, 1, 1)}
        for bad in (0.0, -1.0, 1.5):
            with pytest.raises(ValueError):
                subregion_set(0, pool, bad)
            with pytest.raises(ValueError):
                fringe_set(0, pool, bad)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(rects(), min_size=2, max_size=40), st.integers(0, 1))
    def test_matches_pairwise_brute_force(self, pool_rects, pick_first):
        pool = dict(enumerate(pool_rects))
        ref = 0 if pick_first else len(pool) - 1
        t = 0.3
        brute_sub = {
            rid for rid, r in pool.items()
            if rid != ref and containment_fraction(pool[ref], r) >= t
        }
        brute_fri = {
            rid for rid, r in pool.items() if rid != ref and iou(pool[ref], r) >= t
        }
        assert subregion_set(ref, pool, t) == brute_sub
        assert fringe_set(ref, pool, t) == brute_fri
        assert ref not in subregion_set(ref, pool, t)
        assert ref not in fringe_set(ref, pool, t)


def test_large_pool_brute_force_agreement():
    rng = np.random.default_rng(5)
    pool = {}
    for rid in range(200):
        x1, y1 = rng.uniform(0, 0.7, 2)
        w, h = rng.uniform(0.05, 0.3, 2)
        pool[rid] = Rect(x1, y1, x1 + w, y1 + h)
    for ref in (0, 57, 199):
        for t in (0.2, 0.5, 1.0):
            brute_sub = {
                rid for rid, r in pool.items()
                if rid != ref and containment_fraction(pool[ref], r) >= t
            }
            brute_fri = {
                rid for rid, r in pool.items()
                if rid != ref and iou(pool[ref], r) >= t
            }
            assert subregion_set(ref, pool, t) == brute_sub
            assert fringe_set(ref, pool, t) == brute_fri
