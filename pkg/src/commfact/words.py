"""Bypass words: letters ``a_i`` (around upper branch affixes) and ``b_i``
(around lower ones) modulo ``a_i^{n_i} = e``, ``b_i^{n_i} = e``.

The group is the free product of the cyclic groups generated by the letters,
so every element has a unique reduced form: no two adjacent letters on the
same affix, every exponent in ``1..n-1``.  Words are always stored reduced.

Display and parsing use 1-based affix numbers (``a1 a2 b1^2``); internally
``Letter.index`` is 0-based.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

UPPER = "a"
LOWER = "b"

# (hemisphere, index) -> order n; missing keys mean "no relation"
AffixOrders = Mapping[tuple[str, int], int]


@dataclass(frozen=True, order=True)
class Letter:
    hemisphere: str
    index: int
    exponent: int = 1

    def __post_init__(self):
        if self.hemisphere not in (UPPER, LOWER):
            raise ValueError(f"hemisphere must be 'a' or 'b', not {self.hemisphere!r}")
        if self.index < 0:
            raise ValueError("affix index must be non-negative")
        if self.exponent == 0:
            raise ValueError("letter exponent must be non-zero")

    @property
    def affix(self) -> tuple[str, int]:
        return (self.hemisphere, self.index)

    def __str__(self):
        base = f"{self.hemisphere}{self.index + 1}"
        return base if self.exponent == 1 else f"{base}^{self.exponent}"


def _reduce_exponent(x: int, affix: tuple[str, int], orders: AffixOrders | None) -> int:
    n = (orders or {}).get(affix)
    if n is None:
        return x
    if n < 1:
        raise ValueError(f"affix order must be positive, got {n}")
    return x % n


class Word(tuple):
    """Reduced word, read left to right (leftmost bypass performed first)."""

    def __new__(cls, letters: Iterable[Letter] = (), orders: AffixOrders | None = None):
        stack: list[Letter] = []
        for letter in letters:
            x = _reduce_exponent(letter.exponent, letter.affix, orders)
            if x == 0:
                continue
            if stack and stack[-1].affix == letter.affix:
                top = stack.pop()
                x = _reduce_exponent(top.exponent + x, letter.affix, orders)
                if x == 0:
                    continue
            stack.append(Letter(letter.hemisphere, letter.index, x))
        return super().__new__(cls, stack)

    @classmethod
    def parse(cls, text: str, orders: AffixOrders | None = None) -> "Word":
        return parse_word(text, orders)

    def __str__(self):
        return " ".join(str(x) for x in self) if self else "e"

    def __repr__(self):
        return f"Word({str(self)!r})"

    def expand(self) -> Iterator[tuple[str, int]]:
        """Single-step bypasses, e.g. ``a1^2 b1`` -> a1, a1, b1."""
        for letter in self:
            if letter.exponent < 0:
                raise ValueError("cannot expand a negative exponent without affix orders")
            for _ in range(letter.exponent):
                yield letter.affix

    def in_upper(self) -> bool:
        return all(x.hemisphere == UPPER for x in self)

    def in_lower(self) -> bool:
        return all(x.hemisphere == LOWER for x in self)


E = Word()

_LETTER = re.compile(r"^([ab])(\d*)(?:\^(-?\d+))?$")


def parse_word(text: str, orders: AffixOrders | None = None) -> Word:
    """Parse ``"a1 a2 b1^2"``; ``e`` or an empty string is the identity.
    A bare ``a``/``b`` means affix 1."""
    letters = []
    for tok in text.split():
        if tok == "e":
            continue
        m = _LETTER.match(tok)
        if m is None:
            raise ValueError(f"bad letter {tok!r}")
        idx = int(m.group(2)) - 1 if m.group(2) else 0
        if idx < 0:
            raise ValueError(f"affix numbers start at 1: {tok!r}")
        exp = int(m.group(3)) if m.group(3) else 1
        if exp == 0:
            continue
        letters.append(Letter(m.group(1), idx, exp))
    return Word(letters, orders)


def compose(w: Word, v: Word, orders: AffixOrders | None = None) -> Word:
    """The bypass ``w`` followed by ``v``."""
    return Word(tuple(w) + tuple(v), orders)


def invert(w: Word, orders: AffixOrders) -> Word:
    """Inverse word: reversed, each exponent ``x`` replaced by ``n - x``."""
    out = []
    for letter in reversed(w):
        n = orders.get(letter.affix)
        if n is None:
            raise ValueError(f"order of affix {letter.hemisphere}{letter.index + 1} unknown")
        out.append(Letter(letter.hemisphere, letter.index, n - letter.exponent % n))
    return Word(out, orders)


def truncate(w: Word, side: str) -> Word:
    """``side='+'`` drops the maximal leading upper-only prefix (``w^+``);
    ``side='-'`` drops the maximal leading lower-only prefix (``w^-``)."""
    drop = {"+": UPPER, "plus": UPPER, "-": LOWER, "minus": LOWER}[side]
    i = 0
    while i < len(w) and w[i].hemisphere == drop:
        i += 1
    return tuple.__new__(Word, w[i:])


def truncation_chain(w: Word, start: str = "+") -> list[Word]:
    """``[w, w^+, w^{+-}, w^{+-+}, ...]`` (or minus first) ending at ``e``.

    Truncations alternate side; a truncation that leaves the word unchanged is
    still listed.  Two consecutive truncations always shorten a non-empty
    word, so the chain is finite.
    """
    side = "+" if start in ("+", "plus") else "-"
    chain = [w]
    while chain[-1]:
        chain.append(truncate(chain[-1], side))
        side = "-" if side == "+" else "+"
    return chain


def word_power(w: Word, n: int, orders: AffixOrders | None = None) -> Word:
    out = E
    for _ in range(n):
        out = compose(out, w, orders)
    return out
