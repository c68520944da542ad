"""Regenerate ``values.json`` with exact computer algebra (sympy).

Run by hand; the test suite only reads the frozen output so sympy is not a
test dependency.

    python tests/oracles/make_oracles.py
"""

import itertools
import json
from pathlib import Path

import sympy as sp

k = sp.symbols("k")


def cpair(z):
    z = complex(sp.N(z, 30))
    return [z.real, z.imag]


def poly_pairs(expr):
    """Ascending coefficients of a polynomial in k as [re, im] pairs."""
    return [cpair(c) for c in reversed(sp.Poly(sp.expand(expr), k).all_coeffs())]


def nested_symmetrizer(k1, k2):
    """sum over the four fiber points of inv(G) for G = [[s1, s2], [-s2, k s1]]."""
    a, b = sp.symbols("a b")  # a = s1, b = s2 with b^2 = k2^2 - a, a^2 = k1^2 - k^2
    G = sp.Matrix([[a, b], [-b, k * a]])
    inv = G.inv()
    total = sp.zeros(2, 2)
    for sa, sb in itertools.product((1, -1), repeat=2):
        av = sa * sp.sqrt(k1**2 - k**2)
        bv = sb * sp.sqrt(k2**2 - av)
        total += inv.subs({a: av, b: bv}, simultaneous=True)
    out = []
    for i in range(2):
        row = []
        for j in range(2):
            e = sp.cancel(sp.together(sp.radsimp(sp.simplify(total[i, j]))))
            num, den = sp.fraction(e)
            num, den = sp.Poly(num, k), sp.Poly(den, k)
            lead = den.LC()
            row.append({"numerator": poly_pairs(num.as_expr() / lead),
                        "denominator": poly_pairs(den.as_expr() / lead)})
        out.append(row)
    return out


def example_commutator(k0, kv):
    s = sp.sqrt(k0**2 - kv**2)
    def G(sv):
        return sp.Matrix([[kv, 2 * kv, sv], [2 * kv, kv, -sv], [-sv, sv, kv]])
    g1, g2 = G(s), G(-s)
    c = g1 * g2 - g2 * g1
    fro = lambda m: sp.sqrt(sum(abs(x) ** 2 for x in m))
    return float(sp.N(fro(c) / (fro(g1) * fro(g2)), 20))


def daniele_bypass(k0, k1, k2, kv, sign):
    """G{b}(k) G^{-1}{e}(k) with s on sheet e equal to sign * principal sqrt."""
    s = sign * sp.sqrt(k0**2 - kv**2)
    def G(sv):
        return sp.Matrix([[1, (k1 - sv) / (k2 + sv)], [(k2 - sv) / (k1 + sv), 1]])
    P = G(-s) * G(s).inv()
    return [[cpair(P[i, j]) for j in range(2)] for i in range(2)]


I = sp.I
nested_sets = [(5, 2), (3 + I, sp.Rational(6, 5) + sp.Rational(3, 10) * I),
               (4 - sp.Rational(1, 2) * I, sp.Rational(4, 5) + sp.Rational(3, 5) * I)]
daniele_sets = [(1 + I / 2, sp.Rational(1, 5), sp.Rational(7, 10)),
                (sp.Rational(13, 10) + sp.Rational(3, 5) * I, sp.Rational(2, 5) + I / 10,
                 sp.Rational(9, 10) - I / 5)]

values = {
    "nested_affixes": [
        {"k1": cpair(k1), "k2": cpair(k2),
         "inner": [cpair(k1), cpair(-k1)],
         "outer": [cpair(sp.sqrt(k1**2 - k2**4)), cpair(-sp.sqrt(k1**2 - k2**4))]}
        for k1, k2 in nested_sets
    ],
    "nested_symmetrizer": {"k1": 5, "k2": 2, "S": nested_symmetrizer(5, 2)},
    "daniele_eigen_affixes": [
        {"k0": cpair(k0), "k1": cpair(k1), "k2": cpair(k2),
         "affixes": [cpair(r * sp.sqrt(k0**2 - kk**2)) for kk in (k1, k2) for r in (1, -1)]}
        for k0, k1, k2 in daniele_sets
    ],
    "example_commutator": {"k0": [1, 1], "k": [0.37, 0.21],
                           "residual": example_commutator(1 + I, sp.Rational(37, 100) + sp.Rational(21, 100) * I)},
    # at k = 0.3 the physical sheet carries the principal root
    "daniele_bypass_b": {"k0": [1, 0.5], "k1": 0.2, "k2": 0.7, "k": 0.3,
                         "P": daniele_bypass(1 + I / 2, sp.Rational(1, 5), sp.Rational(7, 10), sp.Rational(3, 10), 1)},
}

Path(__file__).with_name("values.json").write_text(json.dumps(values, indent=2) + "\n")
print("wrote", Path(__file__).with_name("values.json"))
