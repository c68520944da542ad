"""Expression DAGs over the variable ``k`` with nested square roots.

Nodes are hash-consed: building the same structure twice returns the same
object, so identity comparison is structural comparison and radical ids are
canonical for a given input.

A *tower* is the ordered list of distinct ``sqrt`` nodes reachable from a set
of root expressions.  Radicals are numbered innermost first (nesting depth),
ties broken by first occurrence in a left-to-right pre-order walk, which for
parsed text coincides with textual order.

Branch choice is explicit: a :class:`BranchAssignment` holds one sign per
radical; the value of radical ``r`` is ``sign[r] * principal_sqrt(radicand)``
where the radicand is evaluated with the already resolved inner radicals.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expression",
    "BranchAssignment",
    "Tower",
    "Program",
    "MatrixFunction",
    "ParseError",
    "UnboundSymbolError",
    "TowerError",
    "EvaluationError",
    "var",
    "const",
    "sqrt",
    "parse_expression",
    "evaluate",
    "evaluate_matrix",
]


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class UnboundSymbolError(ParseError):
    pass


class TowerError(ValueError):
    """Radical definitions that do not form a well-ordered tower."""


class EvaluationError(ArithmeticError):
    """Division by zero (or a similar failure) while evaluating a DAG."""

    def __init__(self, message: str, node: "Expression | None" = None, entry=None):
        self.node = node
        self.entry = entry
        super().__init__(message)


# ---------------------------------------------------------------------------
# nodes

_KINDS = ("var", "const", "add", "sub", "mul", "div", "neg", "pow", "sqrt")
_intern_table: dict[tuple, "Expression"] = {}
_intern_lock = threading.Lock()


class Expression:
    """Immutable, interned DAG node.  Build with the module helpers or
    ordinary arithmetic operators."""

    __slots__ = ("kind", "children", "value", "_depth", "__weakref__")

    kind: str
    children: tuple["Expression", ...]
    value: complex | int | None

    def __new__(cls, *a, **kw):
        raise TypeError("use var(), const(), sqrt() or parse_expression()")

    @classmethod
    def _make(cls, kind: str, children: tuple = (), value=None) -> "Expression":
        if kind == "const":
            c = complex(value)
            # -0.0 and 0.0 must intern to one node
            value = complex(c.real + 0.0, c.imag + 0.0)
        key = (kind, tuple(id(c) for c in children), value)
        with _intern_lock:
            node = _intern_table.get(key)
            if node is None:
                node = object.__new__(cls)
                object.__setattr__(node, "kind", kind)
                object.__setattr__(node, "children", children)
                object.__setattr__(node, "value", value)
                if kind == "sqrt":
                    depth = 1 + children[0]._depth
                else:
                    depth = max((c._depth for c in children), default=0)
                object.__setattr__(node, "_depth", depth)
                _intern_table[key] = node
        return node

    def __setattr__(self, name, value):
        raise AttributeError("Expression nodes are immutable")

    # radical nesting level: 0 for radical-free, 1 for sqrt of radical-free ...
    @property
    def depth(self) -> int:
        return self._depth

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return Expression._make("add", (self, _lift(other)))

    def __radd__(self, other):
        return Expression._make("add", (_lift(other), self))

    def __sub__(self, other):
        return Expression._make("sub", (self, _lift(other)))

    def __rsub__(self, other):
        return Expression._make("sub", (_lift(other), self))

    def __mul__(self, other):
        return Expression._make("mul", (self, _lift(other)))

    def __rmul__(self, other):
        return Expression._make("mul", (_lift(other), self))

    def __truediv__(self, other):
        return Expression._make("div", (self, _lift(other)))

    def __rtruediv__(self, other):
        return Expression._make("div", (_lift(other), self))

    def __neg__(self):
        return Expression._make("neg", (self,))

    def __pow__(self, n: int):
        if int(n) != n:
            raise TypeError("only integer powers are supported")
        return Expression._make("pow", (self,), int(n))

    def __repr__(self):
        return f"Expression({self})"

    def __str__(self):
        return _to_text(self)

    def radicals(self) -> "Tower":
        return Tower.from_roots([self])


def _lift(x) -> Expression:
    if isinstance(x, Expression):
        return x
    return const(x)


def var() -> Expression:
    return Expression._make("var")


def const(c) -> Expression:
    return Expression._make("const", (), c)


def sqrt(x) -> Expression:
    return Expression._make("sqrt", (_lift(x),))


def _fmt_complex(c: complex) -> str:
    if c.imag == 0:
        return f"{c.real:g}"
    if c.real == 0:
        return f"{c.imag:g}i"
    sign = "+" if c.imag >= 0 else "-"
    return f"({c.real:g}{sign}{abs(c.imag):g}i)"


_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_OPS = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}


def _to_text(node: Expression, parent_prec: int = 0) -> str:
    kind = node.kind
    if kind == "var":
        return "k"
    if kind == "const":
        return _fmt_complex(node.value)
    if kind == "sqrt":
        return f"sqrt({_to_text(node.children[0])})"
    prec = _PREC[kind]
    if kind == "neg":
        text = "-" + _to_text(node.children[0], prec)
    elif kind == "pow":
        text = f"{_to_text(node.children[0], prec + 1)}^{node.value}"
    else:
        lhs = _to_text(node.children[0], prec)
        rhs = _to_text(node.children[1], prec + 1)
        text = lhs + _OPS[kind] + rhs
    return f"({text})" if prec < parent_prec else text


# ---------------------------------------------------------------------------
# towers and compiled programs


class BranchAssignment(tuple):
    """Tuple of +1/-1 signs, one per radical id."""

    def __new__(cls, signs: Iterable[int] = ()):
        signs = tuple(int(s) for s in signs)
        if any(s not in (1, -1) for s in signs):
            raise ValueError("branch signs must be +1 or -1")
        return super().__new__(cls, signs)

    @classmethod
    def principal(cls, n: int) -> "BranchAssignment":
        return cls((1,) * n)

    def flip(self, rid: int) -> "BranchAssignment":
        s = list(self)
        s[rid] = -s[rid]
        return BranchAssignment(s)

    def __repr__(self):
        return "BranchAssignment(" + "".join("+" if s > 0 else "-" for s in self) + ")"


def _preorder(roots: Iterable[Expression]) -> list[Expression]:
    seen: set[int] = set()
    out = []
    stack = list(reversed(list(roots)))
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        out.append(node)
        stack.extend(reversed(node.children))
    return out


def _postorder(roots: Iterable[Expression]) -> list[Expression]:
    seen: set[int] = set()
    out = []
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                out.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.children):
                if id(child) not in seen:
                    stack.append((child, False))
    return out


class Tower:
    """Ordered radicals of a set of expressions (innermost first)."""

    def __init__(self, radicals: Sequence[Expression]):
        self.radicals: tuple[Expression, ...] = tuple(radicals)
        self.index = {id(r): i for i, r in enumerate(self.radicals)}
        for r in self.radicals:
            for inner in _preorder([r.children[0]]):
                if inner.kind == "sqrt" and self.index.get(id(inner), len(self)) >= self.index[id(r)]:
                    raise TowerError(f"radical {inner} is not inner to {r}")
        # radicals each radicand depends on (transitively)
        self.inner: tuple[tuple[int, ...], ...] = tuple(
            tuple(sorted(self.index[id(n)] for n in _preorder([r.children[0]]) if n.kind == "sqrt"))
            for r in self.radicals
        )

    @classmethod
    def from_roots(cls, roots: Iterable[Expression]) -> "Tower":
        found = [n for n in _preorder(roots) if n.kind == "sqrt"]
        found.sort(key=lambda n: n.depth)  # stable: ties keep first occurrence
        return cls(found)

    def __len__(self):
        return len(self.radicals)

    def __iter__(self):
        return iter(self.radicals)

    def rid(self, node: Expression) -> int:
        return self.index[id(node)]


# A resolver picks the value of radical ``rid`` given its radicand value.
Resolver = Callable[[int, object], object]


class Program:
    """A DAG flattened into post-order for repeated evaluation.

    ``run`` works on Python complex scalars and on numpy arrays alike (the
    latter is used to carry several sheets in one pass).
    """

    def __init__(self, roots: Sequence[Expression], tower: Tower):
        self.roots = tuple(roots)
        self.tower = tower
        nodes = _postorder(self.roots)
        slot = {id(n): i for i, n in enumerate(nodes)}
        self.nodes = nodes
        self.ops = []
        for n in nodes:
            args = tuple(slot[id(c)] for c in n.children)
            rid = tower.index.get(id(n)) if n.kind == "sqrt" else None
            if n.kind == "sqrt" and rid is None:
                raise TowerError(f"radical {n} missing from tower")
            self.ops.append((n.kind, args, n.value, rid))
        self.root_slots = tuple(slot[id(r)] for r in self.roots)

    def run(self, k, resolve: Resolver, radical_out: list | None = None):
        vals: list = [None] * len(self.ops)
        for i, (kind, args, value, rid) in enumerate(self.ops):
            if kind == "var":
                v = k
            elif kind == "const":
                v = value
            elif kind == "add":
                v = vals[args[0]] + vals[args[1]]
            elif kind == "sub":
                v = vals[args[0]] - vals[args[1]]
            elif kind == "mul":
                v = vals[args[0]] * vals[args[1]]
            elif kind == "div":
                den = vals[args[1]]
                if np.any(den == 0):
                    raise EvaluationError(
                        f"division by zero in {self.nodes[i]}", node=self.nodes[i]
                    )
                v = vals[args[0]] / den
            elif kind == "neg":
                v = -vals[args[0]]
            elif kind == "pow":
                base = vals[args[0]]
                if value < 0:
                    if np.any(base == 0):
                        raise EvaluationError(
                            f"division by zero in {self.nodes[i]}", node=self.nodes[i]
                        )
                    v = (1 / base) ** (-value)
                else:
                    v = base**value
            else:  # sqrt
                v = resolve(rid, vals[args[0]])
                if radical_out is not None:
                    radical_out[rid] = v
            vals[i] = v
        return [vals[s] for s in self.root_slots]


def principal_sqrt(z):
    """Principal square root; the radicand's argument is taken in (-pi, pi]."""
    # adding +0j turns a -0.0 imaginary part into +0.0 so sqrt(-4) = 2i
    return np.sqrt(z + 0j)


def _sign_resolver(branches: Sequence[int]) -> Resolver:
    return lambda rid, radicand: branches[rid] * principal_sqrt(radicand)


def _values_resolver(values: Sequence) -> Resolver:
    return lambda rid, radicand: values[rid]


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z0-9_]))?"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        start = m.start(m.lastgroup if m.lastgroup != "imag" else "num")
        if m.group("num") is not None:
            toks.append(("num", m.group("num"), m.group("imag") is not None, start))
        elif m.group("name") is not None:
            toks.append(("name", m.group("name"), None, start))
        else:
            op = m.group("op")
            toks.append(("op", "^" if op == "**" else op, None, start))
        pos = m.end()
    toks.append(("end", None, None, len(text.rstrip())))
    return toks


class _Parser:
    def __init__(self, text: str, symbols: Mapping[str, object]):
        self.toks = _tokenize(text)
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        tok = self.take()
        if tok[0] != "op" or tok[1] != op:
            raise ParseError(f"expected {op!r}", tok[3])

    def parse(self) -> Expression:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", tok[3])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.unary()
            node = node * rhs if op == "*" else node / rhs
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            operand = self.unary()
            return -operand if tok[1] == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.take()
                sign = -1 if tok[1] == "-" else 1
            tok = self.take()
            if tok[0] != "num" or tok[2] or not tok[1].isdigit():
                raise ParseError("exponent must be an integer literal", tok[3])
            base = base ** (sign * int(tok[1]))
        return base

    def atom(self):
        tok = self.take()
        kind, text, imag, pos = tok
        if kind == "num":
            v = float(text)
            return const(1j * v if imag else v)
        if kind == "name":
            if text == "k":
                return var()
            if text == "i" and "i" not in self.symbols:
                return const(1j)
            if text == "sqrt":
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return sqrt(inner)
            if text not in self.symbols:
                raise UnboundSymbolError(f"unbound symbol {text!r}", pos)
            bound = self.symbols[text]
            return bound if isinstance(bound, Expression) else const(bound)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token {text!r}", pos)


def parse_expression(text: str, symbols: Mapping[str, object] | None = None) -> Expression:
    """Parse ``text`` into a hash-consed DAG.

    Names other than ``k``, ``i`` and ``sqrt`` must be bound in ``symbols``
    to a complex number or to an already built :class:`Expression` (used for
    named radical definitions).
    """
    symbols = dict(symbols or {})
    for reserved in ("k", "sqrt"):
        if reserved in symbols:
            raise ParseError(f"{reserved!r} is reserved")
    return _Parser(text, symbols).parse()


# ---------------------------------------------------------------------------
# evaluation


def _check_branches(tower: Tower, branches) -> BranchAssignment:
    if branches is None:
        return BranchAssignment.principal(len(tower))
    branches = BranchAssignment(branches)
    if len(branches) != len(tower):
        raise ValueError(f"expected {len(tower)} branch signs, got {len(branches)}")
    return branches


def evaluate(expr: Expression, k: complex, branches=None, tower: Tower | None = None) -> complex:
    """Value of ``expr`` at ``k`` with every radical on the given branch."""
    tower = tower or expr.radicals()
    branches = _check_branches(tower, branches)
    (value,) = Program([expr], tower).run(complex(k), _sign_resolver(branches))
    return complex(value)


@dataclass(frozen=True, eq=False)
class MatrixFunction:
    """Square matrix of expressions sharing one radical tower.

    ``anchor`` is the real point at which the all-plus branch assignment
    defines the physical sheet.
    """

    entries: tuple[tuple[Expression, ...], ...]
    anchor: float = 0.0

    def __post_init__(self):
        rows = tuple(tuple(_lift(e) for e in row) for row in self.entries)
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError("matrix must be square and non-empty")
        object.__setattr__(self, "entries", rows)
        flat = [e for row in rows for e in row]
        tower = Tower.from_roots(flat)
        object.__setattr__(self, "tower", tower)
        object.__setattr__(self, "program", Program(flat, tower))
        object.__setattr__(self, "anchor", float(self.anchor))

    @classmethod
    def parse(cls, rows: Sequence[Sequence[str]], symbols=None, anchor: float = 0.0) -> "MatrixFunction":
        return cls(tuple(tuple(parse_expression(t, symbols) for t in row) for row in rows), anchor)

    @property
    def n(self) -> int:
        return len(self.entries)

    def values_from_radicals(self, k, radical_values) -> np.ndarray:
        """Matrix value(s) given explicit radical values.

        ``radical_values`` has one entry per radical; each entry may be an
        array, in which case the result has shape ``(len, n, n)``.
        """
        n = self.n
        try:
            flat = self.program.run(k, _values_resolver(radical_values))
        except EvaluationError as exc:
            raise self._locate(exc) from None
        if radical_values is not None and len(radical_values) and np.ndim(radical_values[0]):
            m = np.shape(radical_values[0])[0]
            out = np.empty((m, n, n), dtype=complex)
            for idx, v in enumerate(flat):
                out[:, idx // n, idx % n] = v
            return out
        return np.array(flat, dtype=complex).reshape(n, n)

    def radical_values(self, k, branches=None) -> np.ndarray:
        """Radical values at ``k`` under a branch assignment (principal roots
        times signs, resolved innermost first)."""
        branches = _check_branches(self.tower, branches)
        out = [0j] * len(self.tower)
        resolver = _sign_resolver(branches)
        try:
            self.program.run(complex(k), resolver, radical_out=out)
        except EvaluationError as exc:
            raise self._locate(exc) from None
        return np.array(out, dtype=complex)

    def _locate(self, exc: EvaluationError) -> EvaluationError:
        n = self.n
        for idx, root in enumerate(self.program.roots):
            if exc.node is not None and any(node is exc.node for node in _preorder([root])):
                i, j = divmod(idx, n)
                return EvaluationError(f"entry ({i},{j}): {exc}", node=exc.node, entry=(i, j))
        return exc

    def __call__(self, k, branches=None) -> np.ndarray:
        return evaluate_matrix(self, k, branches)

    def check_determinant(self, rng: np.random.Generator | None = None, count: int = 3) -> None:
        """Raise ``ValueError`` if det G vanishes at ``count`` random points."""
        rng = rng or np.random.default_rng(12345)
        good = 0
        attempts = 0
        while good < count and attempts < 50:
            attempts += 1
            k = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
            try:
                g = self(k)
            except EvaluationError:
                continue
            scale = max(np.abs(g).max(), 1e-300) ** self.n
            if abs(np.linalg.det(g)) <= 1e-12 * scale:
                raise ValueError("det G(k) vanishes identically (numerically) at a random sample")
            good += 1


def evaluate_matrix(G: MatrixFunction, k: complex, branches=None) -> np.ndarray:
    """Entrywise :func:`evaluate`; errors carry the failing entry."""
    branches = _check_branches(G.tower, branches)
    try:
        flat = G.program.run(complex(k), _sign_resolver(branches))
    except EvaluationError as exc:
        raise G._locate(exc) from None
    return np.array(flat, dtype=complex).reshape(G.n, G.n)
