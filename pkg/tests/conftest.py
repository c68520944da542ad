import json
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from commfact.expr import MatrixFunction, parse_expression
from commfact.surface import SurfaceConfig, build_atlas

ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())
SPECS = Path(__file__).resolve().parent.parent / "specs"


def cplx(pair):
    return complex(pair[0], pair[1])


def matrix(rows, constants=None, radicals=(), anchor=0.0):
    """Build a MatrixFunction from row strings, constants and (name, text) radicals."""
    sym = dict(constants or {})
    for name, text in radicals:
        sym[name] = parse_expression(text, sym)
    return MatrixFunction.parse([[c.strip() for c in r.split(",")] for r in rows], sym, anchor)


def example(k0=1 + 1j, corrected=False):
    last = "-k" if corrected else "k"
    return matrix(["k, 2*k, s", "2*k, k, -s", f"-s, s, {last}"], {"k0": k0},
                  [("s", "sqrt(k0^2 - k^2)")])


def daniele(k0=1 + 0.5j, k1=0.2, k2=0.7):
    return matrix(["1, (k1 - s)/(k2 + s)", "(k2 - s)/(k1 + s), 1"], {"k0": k0, "k1": k1, "k2": k2},
                  [("s", "sqrt(k0^2 - k^2)")])


def nested(k1=5, k2=2):
    return matrix(["s1, s2", "-s2, k*s1"], {"k1": k1, "k2": k2},
                  [("s1", "sqrt(k1^2 - k^2)"), ("s2", "sqrt(k2^2 - s1)")])


def balanced_scalar():
    return matrix(["sqrt(1 + sqrt(2 + k^2))"])


def unbalanced_scalar():
    return matrix(["sqrt(1i + k) + sqrt(-1i + k)"])


def diagonal_radicals():
    return matrix(["s1, 0", "0, s2"], {"t1": 1 + 2j, "t2": 2 + 0.5j},
                  [("s1", "sqrt(t1^2 - k^2)"), ("s2", "sqrt(t2^2 - k^2)")])


def ansatz_form():
    # G = g0 I + g1 A with rational A and algebraic g
    return matrix(["1 + s, s*k", "s, 1 + s*(k + 1)"], {"t": 0.5 + 1.5j},
                  [("s", "sqrt(t^2 - k^2)")])


def two_radical_ansatz():
    return matrix(["s1 + k, s2", "s2*(k - 1), s1 + k"], {"t1": 1.5 + 1j, "t2": 0.7 + 2j},
                  [("s1", "sqrt(t1^2 - k^2)"), ("s2", "sqrt(t2^2 - k^2)")])


def rational_matrix():
    return matrix(["k, 1", "2, k + 3"])


# matrices expected to be branch-commutative
BRANCH_COMMUTATIVE = {
    "example": example,
    "example_corrected": lambda: example(corrected=True),
    "daniele": daniele,
    "diagonal_radicals": diagonal_radicals,
    "ansatz_form": ansatz_form,
    "two_radical_ansatz": two_radical_ansatz,
    "balanced_scalar": balanced_scalar,
}

# unnested radicals given by known root lists: name -> (builder, {radical index: roots})
UNNESTED = {
    "example": (example, {0: [1 + 1j, -1 - 1j]}),
    "example_corrected": (lambda: example(corrected=True), {0: [1 + 1j, -1 - 1j]}),
    "ansatz_form": (ansatz_form, {0: [0.5 + 1.5j, -0.5 - 1.5j]}),
    "daniele": (daniele, {0: [1 + 0.5j, -1 - 0.5j]}),
    "unbalanced_scalar": (unbalanced_scalar, {0: [-1j], 1: [1j]}),
    "diagonal_radicals": (diagonal_radicals, {0: [1 + 2j, -1 - 2j], 1: [2 + 0.5j, -2 - 0.5j]}),
    "two_radical_ansatz": (two_radical_ansatz, {0: [1.5 + 1j, -1.5 - 1j], 1: [0.7 + 2j, -0.7 - 2j]}),
}


@lru_cache(maxsize=None)
def atlas_of(name: str, factor: float = 0.25):
    builders = {**BRANCH_COMMUTATIVE, "nested": nested, "unbalanced_scalar": unbalanced_scalar,
                "rational": rational_matrix}
    G = builders[name]()
    return G, build_atlas(G, SurfaceConfig(loop_radius_factor=factor))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
