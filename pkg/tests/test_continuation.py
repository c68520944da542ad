import numpy as np
import pytest

from commfact.continuation import (
    SheetValues,
    StructuralError,
    basic_bypass_matrices,
    basic_bypass_words,
    bypass_matrix,
    continue_along_word,
    qminus_chain,
    qplus_chain,
    value_on_sheet,
)
from commfact.words import E, Word, parse_word

from conftest import ORACLES, atlas_of, cplx


def test_chain_strings():
    assert str(qplus_chain(parse_word("b1"))) == "G{b1} G^-1{e}"
    assert str(qplus_chain(parse_word("a1"))) == "I"
    assert str(qplus_chain(parse_word("b1 a1 b2"))) == "G{b1 a1 b2} G^-1{a1 b2} G{b2} G^-1{e}"
    assert str(qminus_chain(parse_word("a1"))) == "G^-1{e} G{a1}"


def test_chain_lengths_bounded():
    w = parse_word("a1 b1 a2 b2 a1 b1")
    assert len(qplus_chain(w)) <= 2 * len(w)
    assert len(qminus_chain(w)) <= 2 * len(w)


def test_daniele_bypass_matches_oracle():
    case = ORACLES["daniele_bypass_b"]
    G, atlas = atlas_of("daniele")
    P = bypass_matrix(G, atlas.word("b1"), case["k"], atlas)
    expected = np.array([[cplx(x) for x in row] for row in case["P"]])
    np.testing.assert_allclose(P, expected, atol=1e-12)


def test_upper_letters_are_trivial_on_bypass():
    G, atlas = atlas_of("daniele")
    P = bypass_matrix(G, atlas.word("a1"), 0.3, atlas)
    np.testing.assert_allclose(P, np.eye(2), atol=1e-15)


def test_basic_bypass_words_and_matrices():
    G, atlas = atlas_of("nested")
    words = basic_bypass_words(atlas)
    assert len(words) == 3
    assert all(w.in_lower() for w in words)
    mats = basic_bypass_matrices(G, atlas, 0.4 + 0.3j)
    sv = SheetValues(atlas, 0.4 + 0.3j, G)
    for w, P in zip(words, mats):
        np.testing.assert_allclose(P, sv.on(w) @ np.linalg.inv(sv.on(E)), rtol=1e-12)


def test_basic_words_undefined_when_unbalanced():
    _, atlas = atlas_of("unbalanced_scalar")
    with pytest.raises(StructuralError):
        basic_bypass_words(atlas)


def _random_word(rng, atlas, length):
    letters = atlas.letters
    return Word([letters[i] for i in rng.integers(0, len(letters), length)], atlas.orders)


@pytest.mark.parametrize("name", ["daniele", "nested"])
def test_cocycle(name, rng):
    G, atlas = atlas_of(name)
    k = 0.35 + 0.45j
    sv = SheetValues(atlas, k, G)
    for _ in range(30):
        w = _random_word(rng, atlas, rng.integers(0, 4))
        v = _random_word(rng, atlas, rng.integers(0, 4))
        lhs = bypass_matrix(G, atlas.compose(w, v), k, atlas, sv)
        rhs = bypass_matrix(G, w, k, atlas, sv, shift=v) @ bypass_matrix(G, v, k, atlas, sv)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(lhs)


def test_qminus_is_inverse_of_qplus_on_lower_words():
    G, atlas = atlas_of("nested")
    sv = SheetValues(atlas, 0.2 + 0.7j, G)
    w = atlas.word("b1 b2")
    plus = qplus_chain(w).evaluate(sv.on, G.n)
    direct = sv.on(w) @ np.linalg.inv(sv.on(E))
    np.testing.assert_allclose(plus, direct, rtol=1e-12)


def test_word_path_agrees_with_sheet_lookup(rng):
    G, atlas = atlas_of("daniele")
    k = -0.4 + 0.6j
    for _ in range(5):
        w = _random_word(rng, atlas, rng.integers(1, 5))
        np.testing.assert_allclose(continue_along_word(G, atlas, w, k), value_on_sheet(G, k, w, atlas),
                                   rtol=1e-9)


def test_sheet_values_inverses():
    G, atlas = atlas_of("daniele")
    sv = SheetValues(atlas, 0.3, G)
    for s in range(atlas.n_sheets):
        np.testing.assert_allclose(sv.inverses[s] @ sv.values[s], np.eye(2), atol=1e-12)
