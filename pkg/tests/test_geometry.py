import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lgcert.geometry import (DegenerateEdge, EmptyErosion, GeometryError, GridSpec, GridTooSmall,
                             NonConvex, NotNested, OutOfRange, TooFewVertices, boundary_distance,
                             boundary_point_at, boundary_points, build_convex_polygon, chord_lengths,
                             contains, diamond_domain, erode, inradius, rasterize, regular_hexagon,
                             unit_square)


def test_square_perimeter():
    d = build_convex_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert d.total_arc_length == pytest.approx(4.0)
    assert d.area == pytest.approx(1.0)


def test_diamond_perimeter_and_area(diamond):
    assert diamond.total_arc_length == pytest.approx(4 * math.sqrt(2), abs=1e-12)
    assert diamond.area == pytest.approx(2.0)
    assert diamond.to_list() == [[0, 0], [1, -1], [2, 0], [1, 1]]


def test_clockwise_input_is_reoriented():
    d = build_convex_polygon([(0, 1), (1, 1), (1, 0), (0, 0)])
    assert d.area == pytest.approx(1.0)


@pytest.mark.parametrize("pts, err", [
    ([(0, 0), (1, 1), (2, 2)], (DegenerateEdge, NonConvex)),
    ([(0, 0), (1, 0)], TooFewVertices),
    ([(0, 0), (2, 0), (1, 0.2), (1, 2)], NonConvex),
    ([(0, 0), (1, 0), (1, 0), (0, 1)], DegenerateEdge),
])
def test_invalid_polygons(pts, err):
    with pytest.raises(err):
        build_convex_polygon(pts)


def test_contains(diamond, square):
    assert contains(diamond, (1, 0))
    assert not contains(diamond, (0.5, 0.9))
    assert not contains(diamond, (0, 0))
    assert not contains(square, (2, 2))


def test_boundary_point_square(square):
    bp = boundary_point_at(square, 0.5)
    assert np.allclose(bp.position, (0.5, 0))
    assert np.allclose(bp.outward_normal, (0, -1))
    with pytest.raises(OutOfRange):
        boundary_point_at(square, 4.0)
    with pytest.raises(OutOfRange):
        boundary_point_at(square, -0.1)


def test_boundary_point_diamond(diamond):
    bp = boundary_point_at(diamond, math.sqrt(2) / 2)
    assert np.allclose(bp.position, (0.5, -0.5))
    assert np.allclose(bp.outward_normal, (-1 / math.sqrt(2), -1 / math.sqrt(2)))


def test_vertex_normal_uses_outgoing_edge(square):
    bp = boundary_point_at(square, 1.0)
    assert np.allclose(bp.position, (1, 0))
    assert np.allclose(bp.outward_normal, (1, 0))


def test_boundary_walk_reproduces_length(diamond):
    s = np.linspace(0, diamond.total_arc_length, 1001)[:-1]
    pos, _, _ = boundary_points(diamond, s)
    closed = np.vstack([pos, pos[:1]])
    steps = np.hypot(*np.diff(closed, axis=0).T)
    # the partition contains every vertex, so polygonal length is exact
    assert steps.sum() == pytest.approx(diamond.total_arc_length, rel=1e-12)


def test_erode_square(square):
    e = erode(square, 0.25)
    assert e.isclose(build_convex_polygon([(0.25, 0.25), (0.75, 0.25), (0.75, 0.75),
                                           (0.25, 0.75)]))
    with pytest.raises(EmptyErosion):
        erode(square, 0.6)


def test_erode_diamond_vertex(diamond):
    e = erode(diamond, 0.25)
    assert e.points[:, 0].min() == pytest.approx(0.25 * math.sqrt(2), abs=1e-12)


def test_boundary_distance(square, diamond):
    assert boundary_distance(square, erode(square, 0.25)) == pytest.approx(0.25)
    assert boundary_distance(diamond, erode(diamond, 0.1)) == pytest.approx(0.1, abs=1e-9)
    shifted = build_convex_polygon([(0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5)])
    with pytest.raises(NotNested):
        boundary_distance(square, shifted)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.01, 0.3), b=st.floats(0.01, 0.3),
       which=st.sampled_from(["diamond", "square", "hexagon"]))
def test_erosions_compose(a, b, which):
    d = {"diamond": diamond_domain(), "square": unit_square(),
         "hexagon": regular_hexagon()}[which]
    if a + b >= inradius(d) - 1e-6:
        return
    assert erode(erode(d, a), b).isclose(erode(d, a + b), tol=1e-9)
    assert boundary_distance(d, erode(d, a)) == pytest.approx(a, abs=1e-9)


@pytest.mark.parametrize("h", [0.05, 0.02, 0.01, 0.005])
def test_rasterized_area_converges(diamond, h):
    m = rasterize(diamond, GridSpec.covering(diamond, h))
    assert abs(m.area - diamond.area) <= 2 * h * diamond.perimeter
    assert np.all(contains(diamond, m.centers()))


def test_rasterize_coarse_square(square):
    m = rasterize(square, GridSpec(0.5, (-1.0, -1.0), 6, 6))
    assert 0.5 <= m.area <= 1.5


def test_rasterize_diamond_fine_band(diamond):
    m = rasterize(diamond, GridSpec.covering(diamond, 0.01))
    assert abs(m.area - 2) <= 0.12


def test_grid_too_small(diamond):
    with pytest.raises(GridTooSmall):
        rasterize(diamond, GridSpec(0.1, (0.0, 0.0), 3, 3))


def test_grid_spec_rejects_bad_spacing():
    with pytest.raises(GeometryError):
        GridSpec(-0.1, (0.0, 0.0), 4, 4)


def test_chord_lengths_diamond(diamond):
    # vertical chords of |x-1|+|y|<=1 have length 2 min(x, 2-x)
    s = np.array([0.25, 0.5, 1.0, 1.5])
    assert np.allclose(chord_lengths(diamond, (1, 0), s), 2 * np.minimum(s, 2 - s))


def test_hexagon_is_regular():
    d = regular_hexagon()
    assert np.allclose(d.edge_lengths, 1.0)
    assert d.area == pytest.approx(1.5 * math.sqrt(3))
