"""Values of ``G`` on arbitrary sheets, continuation chains and bypass matrices.

For a word ``w`` the plus chain unrolls

    Q+{w} = G{w+} G^-1{w+-} Q+{w+-}

until the truncated word reaches ``e``; the bypass matrix ``P_w`` is the
product of the chain factors, so ``Q+{w} = P_w Q+{e}``.  The minus chain is
the mirror image for ``Q-``.  Neither factor is ever evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .expr import MatrixFunction
from .paths import PathSpec, TrackingError, continue_value, track
from .surface import SheetAtlas
from .words import LOWER, E, Word, compose, truncate

__all__ = [
    "PathSpec",
    "TrackingError",
    "continue_value",
    "value_on_sheet",
    "SheetValues",
    "ContinuationChain",
    "qplus_chain",
    "qminus_chain",
    "bypass_matrix",
    "basic_bypass_words",
    "basic_bypass_matrices",
    "word_path",
    "continue_along_word",
    "SingularSampleError",
    "StructuralError",
]


class SingularSampleError(ArithmeticError):
    """A factor that must be inverted is singular at the sample; resample."""


class StructuralError(ValueError):
    """The surface lacks the structure an operation presupposes."""


def _check_tower(G: MatrixFunction, atlas: SheetAtlas) -> None:
    if G is not atlas.G and G.tower.radicals != atlas.G.tower.radicals:
        raise ValueError("matrix and atlas have different radical towers")


class SheetValues:
    """Values (and lazily inverses) of ``G`` on every atlas sheet at one ``k``."""

    def __init__(self, atlas: SheetAtlas, k: complex, G: MatrixFunction | None = None):
        self.atlas = atlas
        self.k = complex(k)
        self.G = G or atlas.G
        _check_tower(self.G, atlas)
        self.values = atlas.sheet_values(self.k, self.G)
        self._inv = None

    @property
    def inverses(self) -> np.ndarray:
        if self._inv is None:
            n = self.values.shape[-1]
            scale = np.abs(self.values).max(axis=(1, 2)) ** n
            det = np.abs(np.linalg.det(self.values))
            if np.any(det <= 1e-12 * np.maximum(scale, 1e-300)):
                raise SingularSampleError(f"G is singular on some sheet at k={self.k}")
            self._inv = np.linalg.inv(self.values)
        return self._inv

    def on(self, w: Word, inverted: bool = False) -> np.ndarray:
        s = self.atlas.sheet_of(w)
        return self.inverses[s] if inverted else self.values[s]


def value_on_sheet(G: MatrixFunction, k: complex, w: Word, atlas: SheetAtlas) -> np.ndarray:
    """``G(k){w}``: value of ``G`` at ``k`` on the sheet reached by ``w``."""
    _check_tower(G, atlas)
    s = atlas.sheet_of(w)
    return atlas.sheet_values(k, G)[s]


@dataclass(frozen=True)
class ContinuationChain:
    """Factors ``(word, inverted)`` whose ordered product is the bypass matrix."""

    word: Word
    variant: str
    factors: tuple[tuple[Word, bool], ...]

    def __len__(self):
        return len(self.factors)

    def shifted(self, v: Word, orders) -> "ContinuationChain":
        """Every factor word ``c`` replaced by ``c v`` (continuation along ``v``)."""
        return ContinuationChain(
            compose(self.word, v, orders),
            self.variant,
            tuple((compose(c, v, orders), inv) for c, inv in self.factors),
        )

    def evaluate(self, lookup: Callable[[Word, bool], np.ndarray], n: int) -> np.ndarray:
        out = np.eye(n, dtype=complex)
        for w, inv in self.factors:
            out = out @ lookup(w, inv)
        return out

    def __str__(self):
        if not self.factors:
            return "I"
        return " ".join(f"G{'^-1' if inv else ''}{{{w}}}" for w, inv in self.factors)


def qplus_chain(w: Word) -> ContinuationChain:
    """``[G{w+}, G^-1{w+-}, G{w+-+}, ...]`` down to ``e``."""
    factors = []
    u = w
    while True:
        up = truncate(u, "+")
        if not up:
            break
        upm = truncate(up, "-")
        factors += [(up, False), (upm, True)]
        u = upm
    return ContinuationChain(w, "plus", tuple(factors))


def qminus_chain(w: Word) -> ContinuationChain:
    """Mirror chain: ``Q-{w} = Q-{e} ... G^-1{w-+} G{w-}``."""
    factors: list[tuple[Word, bool]] = []
    u = w
    while True:
        um = truncate(u, "-")
        if not um:
            break
        ump = truncate(um, "+")
        factors = [(ump, True), (um, False)] + factors
        u = ump
    return ContinuationChain(w, "minus", tuple(factors))


def bypass_matrix(G: MatrixFunction, w: Word, k: complex, atlas: SheetAtlas,
                  values: SheetValues | None = None, shift: Word = E) -> np.ndarray:
    """``P_w(k)``, the product of the plus chain of ``w`` evaluated on the atlas.

    With ``shift=v`` the chain is continued along ``v`` first (``P_w{v}``).
    """
    sv = values if values is not None else SheetValues(atlas, k, G)
    chain = qplus_chain(w)
    if shift:
        chain = chain.shifted(shift, atlas.orders)
    return chain.evaluate(sv.on, G.n)


def basic_bypass_words(atlas: SheetAtlas) -> list[Word]:
    """Shortest lower-only word for each non-physical sheet, by sheet index."""
    orbit = atlas.orbit(LOWER)
    if len(orbit) != atlas.n_sheets:
        missing = min(set(range(atlas.n_sheets)) - set(orbit))
        raise StructuralError(
            f"basic bypass set undefined: sheet {missing} is not reachable by lower-only words"
        )
    return [orbit[s] for s in range(atlas.n_sheets) if s != atlas.physical]


def basic_bypass_matrices(G: MatrixFunction, atlas: SheetAtlas, k: complex,
                          values: SheetValues | None = None) -> list[np.ndarray]:
    """``G{w_j} G^-1{e}`` for the basic words ``w_j``."""
    words = basic_bypass_words(atlas)
    if not words:
        return []
    sv = values if values is not None else SheetValues(atlas, k, G)
    inv_e = sv.on(E, inverted=True)
    return [sv.on(w) @ inv_e for w in words]


def word_path(atlas: SheetAtlas, w: Word, k: complex) -> PathSpec:
    """Geometric realization of ``w``: letter loops from the anchor in order,
    then the transport path to ``k``."""
    geo = atlas.geometry
    path = None
    for hem, idx in Word(w, atlas.orders).expand():
        loop = geo.letter_loop(atlas.affix(hem, idx).value)
        path = loop if path is None else path + loop
    tail = geo.transport_path(k)
    return tail if path is None else path + tail


def continue_along_word(G: MatrixFunction, atlas: SheetAtlas, w: Word, k: complex) -> np.ndarray:
    """``G`` continued from the physical sheet along :func:`word_path`."""
    _check_tower(G, atlas)
    y = track(atlas.G, word_path(atlas, w, k), atlas.anchor_radicals()[:, 0])
    return G.values_from_radicals(complex(k), list(y)) if len(y) else G(k)

