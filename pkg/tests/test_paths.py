import numpy as np
import pytest

from commfact.expr import BranchAssignment, MatrixFunction, parse_expression
from commfact.paths import (
    Arc,
    Line,
    PathSpec,
    TrackingError,
    continue_value,
    identify_branches,
    track,
)


def test_pathspec_geometry():
    p = PathSpec.polyline(0, 1, 1 + 1j)
    assert p.start == 0 and p.end == 1 + 1j
    assert p.length == pytest.approx(2)
    r = p.reversed()
    assert r.start == 1 + 1j and r.end == 0
    c = PathSpec.circle(0, 2)
    assert c.end == pytest.approx(2)
    assert c.length == pytest.approx(4 * np.pi)
    assert (p + PathSpec.polyline(1 + 1j, 2)).end == 2
    assert len(p.sample(4)) == 9


def test_segments():
    line = Line(0, 2j)
    assert line.point(0.5) == 1j
    arc = Arc(0, 1, 0, np.pi)
    assert arc.point(1) == pytest.approx(-1)
    assert arc.reversed().point(0) == pytest.approx(-1)


def test_loop_around_simple_root_flips_sign():
    e = parse_expression("sqrt(k - 1)")
    value, branches = continue_value(e, PathSpec.circle(1, 1.5))
    assert value == pytest.approx(-np.sqrt(0.5))
    assert branches == (-1,)


def test_loop_not_enclosing_root_is_trivial():
    e = parse_expression("sqrt(k - 1)")
    value, branches = continue_value(e, PathSpec.circle(3, 3.5))
    assert branches == (1,)


def test_double_loop_returns():
    e = parse_expression("sqrt(k - 1)")
    _, branches = continue_value(e, PathSpec.circle(1, 1.5, turns=2))
    assert branches == (1,)


def test_nested_tower_loop():
    # inner radical flips around k=+-3; the outer radicand 2 - sqrt(9 - k^2) vanishes at k=+-sqrt(5)
    G = MatrixFunction.parse([["sqrt(2 - sqrt(9 - k^2))"]])
    y0 = G.radical_values(0.5j)
    y1 = track(G, PathSpec.polyline(0.5j, 2.236 + 0.5j) + PathSpec.circle(2.236, 2.236 + 0.5j)
               + PathSpec.polyline(2.236 + 0.5j, 0.5j), y0)
    assert identify_branches(G, 0.5j, y1) == (1, -1)


def test_matrix_continuation_matches_direct_evaluation():
    G = MatrixFunction.parse([["k", "sqrt(4 - k^2)"], ["1", "sqrt(4 - k^2)*k"]])
    path = PathSpec.polyline(0.1, 1 + 1j, -0.5 + 0.7j)
    value, branches = continue_value(G, path)
    np.testing.assert_allclose(value, G(path.end, branches), rtol=1e-12)


def test_batch_tracking():
    G = MatrixFunction.parse([["sqrt(k - 1)", "0"], ["0", "sqrt(k + 1)"]])
    starts = [(1, 1), (-1, 1), (1, -1)]
    y0 = np.array([G.radical_values(1 + 0.5j, BranchAssignment(b)) for b in starts]).T
    y1 = track(G, PathSpec.circle(1, 1 + 0.5j), y0)
    assert identify_branches(G, 1 + 0.5j, y1) == [(-1, 1), (1, 1), (-1, -1)]


def test_identify_branches_rejects_drift():
    G = MatrixFunction.parse([["sqrt(k)"]])
    with pytest.raises(TrackingError):
        identify_branches(G, 4, [1.5])


def test_vanishing_radicand_is_reported():
    G = MatrixFunction.parse([["sqrt(k)"]])
    with pytest.raises(TrackingError):
        identify_branches(G, 0, [0.0])


def test_track_validates_shape():
    G = MatrixFunction.parse([["sqrt(k)"]])
    with pytest.raises(ValueError):
        track(G, PathSpec.polyline(1, 2), [1, 1])
