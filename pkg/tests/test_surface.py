import numpy as np
import pytest

from commfact.expr import BranchAssignment
from commfact.surface import (
    CutGeometry,
    SurfaceConfig,
    UnsupportedSurfaceError,
    build_atlas,
    find_branch_affixes,
    fiber_values,
    is_balanced,
    monodromy_permutation,
    permutation_order,
)
from commfact.words import LOWER, UPPER, E

from conftest import ORACLES, UNNESTED, atlas_of, balanced_scalar, cplx, daniele, matrix, nested


def sign_flip_permutation(atlas, roots, affix):
    """Analytic monodromy of unnested radicals: flip every radical vanishing at ``affix``."""
    flips = np.array([-1 if any(abs(affix.value - r) < 1e-9 for r in roots.get(i, [])) else 1
                      for i in range(len(atlas.sheets[0]))])
    index = {tuple(s): j for j, s in enumerate(atlas.sheets)}
    return np.array([index[tuple(np.array(s) * flips)] for s in atlas.sheets])


@pytest.mark.parametrize("case", ORACLES["nested_affixes"], ids=lambda c: f"k1={c['k1']}")
def test_nested_affixes_match_oracle(case):
    G = nested(cplx(case["k1"]), cplx(case["k2"]))
    found = sorted((a.value for a in find_branch_affixes(G)), key=lambda z: (z.real, z.imag))
    expected = sorted(map(cplx, case["inner"] + case["outer"]), key=lambda z: (z.real, z.imag))
    np.testing.assert_allclose(found, expected, atol=1e-8)


def test_nested_real_affixes_rotate_frame():
    _, atlas = atlas_of("nested")
    assert atlas.geometry.rotation == pytest.approx(0.1)
    assert atlas.n_sheets == 4
    assert {a.order for a in atlas.affixes} == {2}
    assert sorted(a.radicals for a in atlas.affixes) == [(0,), (0,), (1,), (1,)]


def test_explicit_rotation_with_axis_affix_rejected():
    with pytest.raises(UnsupportedSurfaceError):
        build_atlas(nested(), SurfaceConfig(rotation=0.0))


def test_affix_at_origin_rejected():
    with pytest.raises(UnsupportedSurfaceError):
        build_atlas(matrix(["sqrt(k)"]))


def test_rational_matrix_has_one_sheet():
    _, atlas = atlas_of("rational")
    assert atlas.n_sheets == 1 and atlas.affixes == []
    assert atlas.representatives == [E]


def test_daniele_atlas():
    _, atlas = atlas_of("daniele")
    assert atlas.n_sheets == 2
    assert [a.name for a in atlas.affixes] == ["a1", "b1"]
    assert atlas.affixes[0].value == pytest.approx(1 + 0.5j)
    assert [str(w) for w in atlas.representatives] == ["e", "a1"]
    assert atlas.sheets[0] == BranchAssignment.principal(1)


def test_affix_naming_and_hemispheres():
    _, atlas = atlas_of("diagonal_radicals")
    for a in atlas.affixes:
        assert (a.value.imag > 0) == (a.hemisphere == UPPER)
    upper = [a for a in atlas.affixes if a.hemisphere == UPPER]
    assert [a.name for a in upper] == [f"a{i + 1}" for i in range(len(upper))]
    reals = [a.value.real for a in upper]
    assert reals == sorted(reals)


@pytest.mark.parametrize("name", list(UNNESTED))
@pytest.mark.parametrize("factor", [0.1, 0.25, 0.45])
def test_monodromy_equals_sign_flip_oracle(name, factor):
    _, roots = UNNESTED[name]
    G, atlas = atlas_of(name, factor)
    for affix in atlas.affixes:
        expected = sign_flip_permutation(atlas, roots, affix)
        np.testing.assert_array_equal(atlas.perms[(affix.hemisphere, affix.index)], expected)


@pytest.mark.parametrize("name", ["nested", "daniele", "balanced_scalar"])
def test_atlas_independent_of_loop_radius(name):
    _, ref = atlas_of(name, 0.25)
    for factor in (0.1, 0.45):
        _, other = atlas_of(name, factor)
        assert other.sheets == ref.sheets
        for key, perm in ref.perms.items():
            np.testing.assert_array_equal(other.perms[key], perm)


def test_monodromy_permutation_recomputed_at_other_radius():
    G, atlas = atlas_of("nested")
    for affix in atlas.affixes:
        r = 0.5 * atlas.geometry.loop_radius(affix.value)
        np.testing.assert_array_equal(monodromy_permutation(G, affix, atlas, r),
                                      atlas.perms[(affix.hemisphere, affix.index)])


def test_permutations_have_affix_order():
    _, atlas = atlas_of("nested")
    for a in atlas.affixes:
        perm = atlas.perms[(a.hemisphere, a.index)]
        assert permutation_order(perm) == a.order
        assert sorted(perm) == list(range(atlas.n_sheets))


def test_permutation_order():
    assert permutation_order([0, 1, 2]) == 1
    assert permutation_order([1, 2, 0, 4, 3]) == 6


def test_sheet_of_consistent_with_representatives():
    for name in ("nested", "diagonal_radicals", "balanced_scalar"):
        _, atlas = atlas_of(name)
        for s, w in enumerate(atlas.representatives):
            assert atlas.sheet_of(w) == s


def test_sheet_values_agree_with_word_tracking():
    from commfact.continuation import continue_along_word
    G, atlas = atlas_of("nested")
    k = 0.8 + 1.1j
    vals = atlas.sheet_values(k)
    for s, w in enumerate(atlas.representatives):
        np.testing.assert_allclose(continue_along_word(G, atlas, w, k), vals[s], rtol=1e-9)


def test_balanced_controls():
    G, atlas = atlas_of("balanced_scalar")
    assert atlas.n_sheets == 4
    assert is_balanced(G, atlas).balanced
    G, atlas = atlas_of("unbalanced_scalar")
    verdict = is_balanced(G, atlas)
    assert not verdict.balanced
    w = verdict.witness
    assert w["sheet"] in range(atlas.n_sheets)
    assert w["unreachable_from"] in ("upper", "lower")
    orbit = verdict.upper_orbit if w["unreachable_from"] == "upper" else verdict.lower_orbit
    assert w["sheet"] not in orbit


def test_orbits_use_single_hemisphere():
    _, atlas = atlas_of("nested")
    for s, w in atlas.orbit(LOWER).items():
        assert w.in_lower() and atlas.sheet_of(w) == s
    for s, w in atlas.orbit(UPPER).items():
        assert w.in_upper() and atlas.sheet_of(w) == s


def test_transport_path_avoids_cuts():
    _, atlas = atlas_of("daniele")
    geo = atlas.geometry
    for k in (0.3, 2 + 1j, -1.5 - 2j, 0.9 + 0.1j):
        pts = geo.transport_path(k).sample(64)
        assert all(geo.is_clear(p, 0.0) for p in pts)


def test_points_on_cut_rejected():
    from commfact.surface import NearCutError
    _, atlas = atlas_of("daniele")
    with pytest.raises(NearCutError):
        atlas.geometry.check_clear(1 + 1.5j)


def test_collinear_affixes_tilt_cuts():
    geo = CutGeometry([1j, 2j], anchor=0.0)
    assert geo.tilt != 0.0
    assert CutGeometry([1j, 1 + 2j], anchor=0.0).tilt == 0.0


def test_fiber_values_shape_and_content():
    G = daniele()
    k = np.array([0.3, 0.5 + 0.2j])
    fv = fiber_values(G, k)
    assert fv.shape == (2, 2, 2, 2)
    np.testing.assert_allclose(fv[0, 1], G(k[1]), rtol=1e-14)
    np.testing.assert_allclose(fv[1, 1], G(k[1], (-1,)), rtol=1e-14)


def test_diagram_outputs():
    _, atlas = atlas_of("nested")
    text = atlas.diagram_text()
    assert "a1" in text and "b1" in text
    dot = atlas.diagram_dot()
    assert dot.startswith("digraph") or dot.startswith("graph")
    edges = [line for line in dot.splitlines() if "->" in line or "--" in line]
    assert len(edges) == len(set(edges))


def test_summary_is_plain_data():
    import json
    _, atlas = atlas_of("balanced_scalar")
    json.dumps(atlas.summary())


def test_scalar_tower_permutations():
    G = balanced_scalar()
    atlas = build_atlas(G)
    assert len(atlas.affixes) == 4
    assert all(a.order == 2 for a in atlas.affixes)
