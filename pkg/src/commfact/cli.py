"""Command line interface: ``commfact run`` and ``commfact diagram``.

Problem files are plain text with four sections::

    [constants]
    k0 = 1+1i

    [radicals]
    s = sqrt(k0^2 - k^2)

    [matrix]
    k, 2*k, s
    2*k, k, -s
    -s, s, k

    [options]
    seed = 0

Radicals are listed innermost first and may use earlier radicals.  ``#``
starts a comment.  Exit codes: 0 classified, 2 input error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .classify import ClassificationReport, ClassifyConfig, classify
from .continuation import basic_bypass_words, StructuralError
from .expr import Expression, MatrixFunction, ParseError, TowerError, evaluate, parse_expression
from .surface import DegenerateInputError, SurfaceConfig, UnsupportedSurfaceError, build_atlas

FORMAT_VERSION = "1.0"

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

_OPTION_TYPES = {
    "anchor": float,
    "tol": float,
    "samples": int,
    "seed": int,
    "max_degree": int,
    "rotation": float,
    "single_valued_tol": float,
}


class InputError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class ProblemSpec:
    constants: dict[str, complex]
    radicals: dict[str, Expression]
    rows: list[list[str]]
    options: dict[str, float | int]
    text: str = ""
    matrix: MatrixFunction | None = field(default=None, repr=False)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


def _has_var(expr: Expression) -> bool:
    from .expr import _preorder

    return any(n.kind == "var" for n in _preorder([expr]))


def parse_spec(text: str) -> ProblemSpec:
    """Parse a problem file; raises :class:`InputError`."""
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in ("constants", "radicals", "matrix", "options"):
                raise InputError(f"unknown section [{current}]", lineno)
            if current in sections:
                raise InputError(f"duplicate section [{current}]", lineno)
            sections[current] = []
            continue
        if current is None:
            raise InputError("content before the first section", lineno)
        sections[current].append((lineno, line))
    if "matrix" not in sections or not sections["matrix"]:
        raise InputError("missing [matrix] section")

    symbols: dict[str, object] = {}
    constants: dict[str, complex] = {}
    for lineno, line in sections.get("constants", []):
        name, expr = _assignment(line, lineno)
        try:
            e = parse_expression(expr, symbols)
        except ParseError as exc:
            raise InputError(f"constant {name}: {exc}", lineno) from None
        if _has_var(e) or e.radicals().radicals:
            raise InputError(f"constant {name} must not depend on k or use sqrt", lineno)
        constants[name] = complex(evaluate(e, 0j))
        symbols[name] = constants[name]

    radicals: dict[str, Expression] = {}
    for lineno, line in sections.get("radicals", []):
        name, expr = _assignment(line, lineno)
        try:
            e = parse_expression(expr, symbols)
        except ParseError as exc:
            raise InputError(f"radical {name}: {exc}", lineno) from None
        if e.kind != "sqrt":
            raise InputError(f"radical {name} must be of the form sqrt(...)", lineno)
        radicals[name] = e
        symbols[name] = e

    options: dict[str, float | int] = {}
    for lineno, line in sections.get("options", []):
        name, value = _assignment(line, lineno)
        key = name.replace("-", "_")
        if key not in _OPTION_TYPES:
            raise InputError(f"unknown option {name!r}", lineno)
        try:
            options[key] = _OPTION_TYPES[key](value)
        except ValueError:
            raise InputError(f"bad value for option {name}: {value!r}", lineno) from None

    rows = [[c.strip() for c in line.split(",")] for _, line in sections["matrix"]]
    n = len(rows)
    for (lineno, _), row in zip(sections["matrix"], rows):
        if len(row) != n:
            raise InputError(f"matrix must be square: row has {len(row)} entries, expected {n}", lineno)
    spec = ProblemSpec(constants, radicals, rows, options, text)
    try:
        spec.matrix = MatrixFunction.parse(rows, symbols, options.get("anchor", 0.0))
    except (ParseError, TowerError) as exc:
        raise InputError(f"matrix entry: {exc}") from None
    return spec


def _assignment(line: str, lineno: int) -> tuple[str, str]:
    if "=" not in line:
        raise InputError("expected 'name = value'", lineno)
    name, value = (s.strip() for s in line.split("=", 1))
    if not name.isidentifier():
        raise InputError(f"bad name {name!r}", lineno)
    if name in ("k", "sqrt", "i"):
        raise InputError(f"{name!r} is reserved", lineno)
    return name, value


# ---------------------------------------------------------------------------
# report


def _c(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _sci(x: float) -> str:
    return f"{float(x):.6e}"


def _verdict_json(v) -> dict | None:
    if v is None:
        return None
    w = None
    if v.witness is not None:
        w = {key: (_c(val) if key == "k" else _sci(val) if key == "residual" else val)
             for key, val in v.witness.items()}
    return {"holds": bool(v.holds), "residual": _sci(v.residual), "tol": _sci(v.tol),
            "samples": v.samples, "pairs": v.pairs, "witness": w}


def _rational_matrix(mat) -> list | None:
    if mat is None:
        return None
    return [[rf.to_json() for rf in row] for row in mat]


def _single_valued(sv) -> dict:
    return {"holds": bool(sv.holds), "residual": _sci(sv.residual), "tol": _sci(sv.tol), "checks": sv.checks}


def report_to_json(report: ClassificationReport, spec: ProblemSpec, options: dict,
                   diagram: str | None = None, timing: dict | None = None) -> dict:
    atlas = report.atlas
    summary = atlas.summary()
    summary["rotation"] = _sci(summary["rotation"])
    summary["cut_tilt"] = _sci(summary["cut_tilt"])
    try:
        basic = [str(w) for w in basic_bypass_words(atlas)]
    except StructuralError:
        basic = None
    out = {
        "format_version": FORMAT_VERSION,
        "tool": {"name": "commfact", "version": __version__},
        "input": {"sha256": spec.sha256, "text": spec.text, "size": spec.matrix.n},
        "options": options,
        "seeds": {"sample": report.config.seed, "probe": report.config.seed},
        "verdict": report.verdict,
        "atlas": summary,
        "balanced": {"holds": report.balanced.balanced, "witness": report.balanced.witness,
                     "upper_orbit": report.balanced.upper_orbit,
                     "lower_orbit": report.balanced.lower_orbit},
        "basic_bypass_words": basic,
        "branch_commutativity": _verdict_json(report.branch),
        "bypass_commutativity": _verdict_json(report.bypass),
        "ansatz": None,
        "symmetrizer": None,
        "errors": report.errors,
    }
    if report.ansatz is not None:
        a = report.ansatz
        out["ansatz"] = {
            "A": _rational_matrix(a.A),
            "probe": a.probe.to_json(),
            "reconstruction_residual": _sci(a.reconstruction_residual),
            "roundtrip_residual": _sci(a.roundtrip_residual),
            "sheet_residual": _sci(a.sheet_residual),
            "single_valued": _single_valued(a.single_valued),
            "g_closed_forms": [None if g is None else g.to_json() for g in a.g_closed_forms],
            "g_samples": [{"k": _c(k), "g": [_c(x) for x in g]} for k, g in a.g_samples],
            "failed_entries": _failed(a.failed_entries),
        }
    if report.symmetrizer is not None:
        s = report.symmetrizer
        out["symmetrizer"] = {
            "S": _rational_matrix(s.S),
            "probe": s.probe.to_json(),
            "reconstruction_residual": _sci(s.reconstruction_residual),
            "heldout_residual": _sci(s.heldout_residual),
            "single_valued": _single_valued(s.single_valued),
            "det_degenerate": s.det_degenerate,
            "product_branch_commutativity": _verdict_json(s.product_verdict),
            "failed_entries": _failed(s.failed_entries),
        }
    if diagram is not None:
        out["diagram"] = diagram
    if timing is not None:
        out["timing"] = timing
    return out


def _failed(entries):
    return [{"entry": e["entry"], "best_residual": _sci(e["best_residual"])} for e in entries]


def error_report(message: str, kind: str, spec: ProblemSpec | None, options: dict) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "tool": {"name": "commfact", "version": __version__},
        "input": None if spec is None else {"sha256": spec.sha256, "text": spec.text,
                                            "size": spec.matrix.n if spec.matrix else 0},
        "options": options,
        "verdict": "error",
        "errors": [{"stage": kind, "error": kind, "message": message}],
    }


def load_schema() -> dict:
    return json.loads(resources.files("commfact").joinpath("report.schema.json").read_text())


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# commands


def _config(spec: ProblemSpec, args) -> tuple[ClassifyConfig, dict]:
    opts = dict(spec.options)
    for key in ("tol", "samples", "seed", "anchor", "max_degree"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if "anchor" in opts and opts["anchor"] != spec.matrix.anchor:
        spec.matrix = MatrixFunction(spec.matrix.entries, opts["anchor"])
    deg = int(opts.get("max_degree", 12))
    surface = SurfaceConfig(rotation=opts.get("rotation"))
    cfg = ClassifyConfig(
        tol=float(opts.get("tol", 1e-8)),
        samples=int(opts.get("samples", 16)),
        seed=int(opts.get("seed", 0)),
        caps=(deg, deg),
        single_valued_tol=float(opts.get("single_valued_tol", 1e-7)),
        surface=surface,
    )
    if cfg.samples < 1 or deg < 0 or cfg.tol <= 0:
        raise InputError("samples must be >= 1, max-degree >= 0 and tol > 0")
    return cfg, opts


def _read(path: str) -> ProblemSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return parse_spec(text)


_INPUT_ERRORS = (InputError, UnsupportedSurfaceError, DegenerateInputError)


def cmd_run(args) -> int:
    spec, opts = None, {}
    t0 = time.perf_counter()
    try:
        spec = _read(args.spec)
        cfg, opts = _config(spec, args)
        report = classify(spec.matrix, cfg)
    except _INPUT_ERRORS as exc:
        return _fail(args, EXIT_INPUT, "input", str(exc), spec, opts)
    except ValueError as exc:  # singular G and similar structural input problems
        return _fail(args, EXIT_INPUT, "input", str(exc), spec, opts)
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        return _fail(args, EXIT_NUMERIC, "numeric", f"{type(exc).__name__}: {exc}", spec, opts)
    diagram = report.atlas.diagram_text() if args.emit_diagram else None
    timing = {"seconds": round(time.perf_counter() - t0, 3)} if args.timing else None
    text = dumps(report_to_json(report, spec, opts, diagram, timing))
    _emit(args, text)
    print(f"verdict: {report.verdict}", file=sys.stderr)
    return EXIT_OK


def _fail(args, code: int, kind: str, message: str, spec, opts) -> int:
    print(f"commfact: {kind} error: {message}", file=sys.stderr)
    _emit(args, dumps(error_report(message, kind, spec, opts)))
    return code


def _emit(args, text: str) -> None:
    if args.json_out:
        Path(args.json_out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_diagram(args) -> int:
    try:
        spec = _read(args.spec)
        if args.anchor is not None:
            spec.matrix = MatrixFunction(spec.matrix.entries, args.anchor)
        atlas = build_atlas(spec.matrix, SurfaceConfig(rotation=spec.options.get("rotation")))
    except _INPUT_ERRORS as exc:
        print(f"commfact: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, RuntimeError) as exc:
        print(f"commfact: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(atlas.diagram_dot() if args.format == "dot" else atlas.diagram_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="commfact", description="Commutative factorization checks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="classify a matrix and write a JSON report")
    run.add_argument("spec")
    run.add_argument("--tol", type=float)
    run.add_argument("--samples", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--anchor", type=float)
    run.add_argument("--max-degree", dest="max_degree", type=int)
    run.add_argument("--emit-diagram", action="store_true")
    run.add_argument("--json-out")
    run.add_argument("--timing", action="store_true", help="include wall time (breaks byte-identity)")
    run.set_defaults(func=cmd_run)
    dia = sub.add_parser("diagram", help="print the sheet diagram")
    dia.add_argument("spec")
    dia.add_argument("--format", choices=("text", "dot"), default="text")
    dia.add_argument("--anchor", type=float)
    dia.set_defaults(func=cmd_diagram)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
