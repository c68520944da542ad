"""Commutativity tests and the constructions that follow from them.

* ``is_branch_commutative``: values of ``G`` on any two sheets commute.
* ``is_bypass_commutative``: the basic bypass matrices commute pairwise.
* ``build_ansatz``: for branch-commutative ``G``, a rational ``A`` and
  algebraic ``g_m`` with ``G = sum_m g_m A^m``.
* ``build_symmetrizer``: for bypass-commutative ``G``, a rational ``S`` with
  ``G S`` branch-commutative.

All verdicts are numeric: residuals are relative commutator norms at random
sample points, compared with a tolerance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .continuation import SheetValues, SingularSampleError, StructuralError, basic_bypass_words
from .expr import EvaluationError, MatrixFunction
from .paths import PathSpec, TrackingError, track
from .ratrecon import (
    RationalFunction,
    ReconstructionError,
    SingleValuedVerdict,
    circle_nodes,
    reconstruct_rational,
    verify_single_valued,
)
from .surface import (
    BalancedVerdict,
    NearCutError,
    SheetAtlas,
    SurfaceConfig,
    build_atlas,
    fiber_values,
    is_balanced,
)
from .words import Word

__all__ = [
    "CommutativityVerdict",
    "is_branch_commutative",
    "is_bypass_commutative",
    "EigenFrame",
    "eigen_frame",
    "eigenframe_branch_affixes",
    "ProbeFunction",
    "SamplingConfig",
    "AnsatzResult",
    "build_ansatz",
    "SymmetrizerResult",
    "build_symmetrizer",
    "ClassifyConfig",
    "ClassificationReport",
    "classify",
    "DegenerateSampleError",
    "NormalizationError",
    "PreconditionError",
    "ProbeSelectionError",
]

_RESAMPLE = (NearCutError, TrackingError, EvaluationError, SingularSampleError, ZeroDivisionError)


class DegenerateSampleError(ArithmeticError):
    """Eigenvalues (nearly) coincide at the sample."""


class NormalizationError(ArithmeticError):
    """An eigenvector has a vanishing entry in the normalization row."""


class PreconditionError(ValueError):
    pass


class ProbeSelectionError(ArithmeticError):
    """No admissible probe constants found after the allowed redraws."""


# ---------------------------------------------------------------------------
# commutativity


@dataclass
class CommutativityVerdict:
    holds: bool
    residual: float
    tol: float
    samples: int
    witness: dict | None = None
    pairs: int = 0


def _offdiag(d: np.ndarray) -> np.ndarray:
    d = d.copy()
    np.fill_diagonal(d, np.inf)
    return d


def _rel_commutator(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``|[X,Y]|_F / (|X|_F |Y|_F)`` over leading batch axes."""
    c = X @ Y - Y @ X
    num = np.linalg.norm(c, axis=(-2, -1))
    den = np.linalg.norm(X, axis=(-2, -1)) * np.linalg.norm(Y, axis=(-2, -1))
    return num / np.maximum(den, 1e-300)


def _sample_points(atlas: SheetAtlas, rng: np.random.Generator, count: int, fn, max_tries: int = 20):
    """Evaluate ``fn`` at ``count`` random points, resampling failures."""
    out = []
    tries = 0
    while len(out) < count:
        (k,) = atlas.geometry.random_points(rng, 1)
        try:
            out.append((k, fn(k)))
        except _RESAMPLE:
            tries += 1
            if tries > max_tries * count:
                raise
    return out


def _pairwise(mats: np.ndarray):
    """Max relative commutator over unordered pairs of ``mats`` (S, N, N)."""
    S = mats.shape[0]
    if S < 2:
        return 0.0, None, 0
    i, j = np.triu_indices(S, 1)
    res = _rel_commutator(mats[i], mats[j])
    best = int(np.argmax(res))
    return float(res[best]), (int(i[best]), int(j[best])), len(i)


def is_branch_commutative(G: MatrixFunction, atlas: SheetAtlas, samples: int = 16, tol: float = 1e-8,
                          seed: int = 0, values: Callable[[complex], np.ndarray] | None = None
                          ) -> CommutativityVerdict:
    """Do the values of ``G`` on every pair of sheets commute?

    ``values(k)`` may replace the sheet values (shape ``(S, N, N)``), e.g. to
    test a product ``G S``.
    """
    rng = np.random.default_rng(seed)
    fn = values or (lambda k: atlas.sheet_values(k, G))
    worst, witness, pairs = 0.0, None, 0
    for k, mats in _sample_points(atlas, rng, samples, fn):
        r, pair, pairs = _pairwise(np.asarray(mats))
        if pair is not None and (witness is None or r > worst):
            worst = r
            witness = {"k": k, "sheets": list(pair),
                       "words": [str(atlas.representatives[p]) for p in pair], "residual": r}
    holds = worst < tol
    return CommutativityVerdict(holds, worst, tol, samples, None if holds else witness, pairs)


def is_bypass_commutative(G: MatrixFunction, atlas: SheetAtlas, samples: int = 16, tol: float = 1e-8,
                          seed: int = 0) -> CommutativityVerdict:
    """Do the basic bypass matrices ``G{w_j} G^-1{e}`` commute pairwise?"""
    if not is_balanced(G, atlas).balanced:
        raise StructuralError("bypass-commutativity is defined for balanced surfaces only")
    words = basic_bypass_words(atlas)
    sheets = [atlas.sheet_of(w) for w in words]
    rng = np.random.default_rng(seed)

    def fn(k):
        sv = SheetValues(atlas, k, G)
        inv_e = sv.inverses[atlas.physical]
        return np.array([sv.values[s] @ inv_e for s in sheets]).reshape(len(sheets), G.n, G.n)

    worst, witness, pairs = 0.0, None, 0
    for k, mats in _sample_points(atlas, rng, samples, fn):
        r, pair, pairs = _pairwise(mats)
        if pair is not None and (witness is None or r > worst):
            worst = r
            witness = {"k": k, "words": [str(words[p]) for p in pair], "residual": r}
    holds = worst < tol
    return CommutativityVerdict(holds, worst, tol, samples, None if holds else witness, pairs)


# ---------------------------------------------------------------------------
# eigenframe


@dataclass
class EigenFrame:
    M: np.ndarray
    eigenvalues: np.ndarray
    k: complex | None = None
    sheet: int | None = None
    row: int = 0


def frame_of(value: np.ndarray, row: int = 0, gap_tol: float = 1e-8,
             normalizer: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvectors scaled to 1 in ``row``, columns sorted by eigenvalue.

    With ``normalizer=u`` each column ``v`` is scaled to ``u @ v = 1`` instead
    (the row normalization after the constant change of basis whose first
    row is ``u``).
    """
    lam, V = np.linalg.eig(value)
    order = np.lexsort((lam.imag, lam.real))
    lam, V = lam[order], V[:, order]
    n = len(lam)
    spread = max(float(np.abs(lam).max()), 1e-300)
    if n > 1:
        gaps = _offdiag(np.abs(lam[:, None] - lam[None, :]))
        if gaps.min() <= gap_tol * spread:
            raise DegenerateSampleError(f"eigenvalues coincide to {gaps.min():.2e}")
    lead = V[row] if normalizer is None else normalizer @ V
    if np.any(np.abs(lead) <= 1e-12 * np.linalg.norm(V, axis=0)):
        where = f"row {row}" if normalizer is None else "the normalizing direction"
        raise NormalizationError(f"eigenvector with zero component along {where}")
    return V / lead[None, :], lam


def eigen_frame(G: MatrixFunction, k: complex, w: Word, atlas: SheetAtlas, row: int = 0) -> EigenFrame:
    """``G{w}(k) = M diag(lambda) M^-1`` with ``M[row] == 1``."""
    s = atlas.sheet_of(w)
    value = atlas.sheet_values(k, G)[s]
    M, lam = frame_of(value, row)
    return EigenFrame(M, lam, complex(k), s, row)


def _match(prev: np.ndarray, new: np.ndarray):
    """Permutation p minimizing sum |prev[i] - new[p[i]]|, and its ambiguity."""
    n = len(prev)
    if n <= 6:
        best, perm = math.inf, None
        for p in itertools.permutations(range(n)):
            c = float(np.abs(prev - new[list(p)]).sum())
            if c < best:
                best, perm = c, p
        perm = np.array(perm)
    else:
        from scipy.optimize import linear_sum_assignment

        _, perm = linear_sum_assignment(np.abs(prev[:, None] - new[None, :]))
    moved = float(np.abs(prev - new[perm]).max())
    gap = float(_offdiag(np.abs(prev[:, None] - prev[None, :])).min()) if n > 1 else math.inf
    return perm, moved < 0.3 * gap


def _eigen_loop_permutation(G: MatrixFunction, center: complex, radius: float, y0: np.ndarray,
                            max_turns: int = 8) -> tuple[int, ...] | None:
    """Permutation of eigenvalues after looping until the radicals return."""
    base = center - 1j * radius
    y = y0.copy()
    lam0 = np.linalg.eigvals(G.values_from_radicals(base, list(y)) if len(y) else G(base))
    lam = lam0.copy()
    pieces = 96
    for _turn in range(max_turns):
        for j in range(pieces):
            t0 = 2 * math.pi * j / pieces
            stack = [(t0, t0 + 2 * math.pi / pieces, 0)]
            while stack:
                a, b, depth = stack.pop()
                za = center + radius * complex(math.cos(a - math.pi / 2), math.sin(a - math.pi / 2))
                zb = center + radius * complex(math.cos(b - math.pi / 2), math.sin(b - math.pi / 2))
                y_new = track(G, PathSpec.polyline(za, zb), y) if len(y) else y
                val = G.values_from_radicals(zb, list(y_new)) if len(y) else G(zb)
                lam_new = np.linalg.eigvals(val)
                perm, ok = _match(lam, lam_new)
                if not ok and depth < 20:
                    m = 0.5 * (a + b)
                    stack += [(m, b, depth + 1), (a, m, depth + 1)]
                    continue
                y, lam = y_new, lam_new[perm]
        back = not len(y) or np.abs(y - y0).max() <= 1e-8 * max(1.0, float(np.abs(y0).max()))
        if back:
            perm, _ = _match(lam0, lam)
            return tuple(int(x) for x in perm)
    return None


@dataclass
class EigenAffixResult:
    affixes: list[complex]
    candidates: list[complex]
    permutations: dict


def eigenframe_branch_affixes(G: MatrixFunction, atlas: SheetAtlas, caps: tuple[int, int] = (16, 16)
                              ) -> EigenAffixResult:
    """Branch points of the normalized eigenvector matrix ``M``.

    Candidates are the poles of the symmetric functions ``sum_s D{s}`` and
    ``sum_s 1/D{s}`` (``D`` the discriminant of the characteristic
    polynomial, summed over the whole fiber) together with the affixes of
    ``G``.  A candidate is kept when looping around it (as many times as
    needed for the radicals to return) permutes the eigenvalues on some
    fiber point.
    """
    n = G.n
    if n == 1:
        return EigenAffixResult([], [], {})
    scale = atlas.geometry.scale
    count = 4 * sum(caps) + 8
    ring = 1.3 * scale * np.exp(1j * (2 * np.pi * np.arange(count) / count + 0.2345))

    def disc(k):
        vals = fiber_values(G, k)
        lam = np.linalg.eigvals(vals)
        i, j = np.triu_indices(n, 1)
        return np.prod((lam[..., i] - lam[..., j]) ** 2, axis=-1)

    cands: list[complex] = [a.value for a in atlas.affixes]
    with np.errstate(all="ignore"):
        d = disc(ring)
    for f in (lambda d: d.sum(axis=0), lambda d: (1 / d).sum(axis=0)):
        vals = f(d)
        vmax = float(np.abs(vals).max())
        try:
            rf, _ = reconstruct_rational(ring, vals / vmax, caps, rtol=1e-9)
        except ReconstructionError:
            continue

        def inv(z, f=f):
            with np.errstate(all="ignore"):
                return complex(vmax / f(disc(np.array([z])))[0])

        for z in rf.poles():
            z = _newton(inv, complex(z))
            if all(abs(z - c) > 1e-6 * scale for c in cands):
                cands.append(z)
    keep, perms = [], {}
    for c in cands:
        others = [abs(c - o) for o in cands if o is not c and abs(c - o) > 0]
        r = 0.25 * min(others + [scale])
        base = c - 1j * r
        R = len(G.tower)
        found = False
        for signs in itertools.product((1, -1), repeat=R):
            try:
                y0 = G.radical_values(base, signs)
                p = _eigen_loop_permutation(G, c, r, y0)
            except _RESAMPLE:
                continue
            if p is not None and p != tuple(range(n)):
                perms[c] = p
                found = True
                break
        if found and not any(abs(c - a.value) <= 1e-6 * scale for a in atlas.affixes):
            keep.append(c)
    keep.sort(key=lambda z: (round(z.real, 9), round(z.imag, 9)))
    return EigenAffixResult(keep, cands, perms)


def _newton(f, z: complex, steps: int = 20) -> complex:
    h = 1e-7 * max(1.0, abs(z))
    best, fb = z, abs(f(z))
    for _ in range(steps):
        fz = f(z)
        df = (f(z + h) - f(z - h)) / (2 * h)
        if not np.isfinite(df) or df == 0:
            break
        z = z - fz / df
        v = abs(f(z))
        if not np.isfinite(v):
            break
        if v < fb:
            best, fb = z, v
        if v == 0:
            break
    return best


# ---------------------------------------------------------------------------
# probes and sampling


@dataclass
class ProbeFunction:
    """Probe constants drawn from the box ``[-1,1] x [-1,1]``.

    For the Ansatz ``beta`` has shape ``(N,)``; for the symmetrizer ``beta0``
    is the constant term and ``beta`` an ``(N, N)`` array of weights of the
    entries of ``G^-1``.
    """

    beta: np.ndarray
    beta0: complex = 0j
    seed: int | None = None
    draws: int = 1

    @classmethod
    def random(cls, shape, seed: int, with_constant: bool = False, draw: int = 0) -> "ProbeFunction":
        rng = np.random.default_rng([seed, draw])
        beta = rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape)
        beta0 = complex(rng.uniform(-1, 1), rng.uniform(-1, 1)) if with_constant else 0j
        return cls(beta, beta0, seed, draw + 1)

    @classmethod
    def constant_one(cls, n: int) -> "ProbeFunction":
        return cls(np.zeros((n, n), dtype=complex), 1 + 0j, None, 1)

    def redraw(self) -> "ProbeFunction":
        seed = 0 if self.seed is None else self.seed
        return ProbeFunction.random(self.beta.shape, seed, with_constant=True, draw=self.draws)

    def to_json(self) -> dict:
        return {
            "beta0": [self.beta0.real, self.beta0.imag],
            "beta": np.stack([self.beta.real, self.beta.imag], axis=-1).tolist(),
            "seed": self.seed,
            "draws": self.draws,
        }


@dataclass(frozen=True)
class SamplingConfig:
    caps: tuple[int, int] = (12, 12)
    seed: int = 0
    heldout: int = 10
    tol: float = 1e-7
    roundtrip_tol: float = 1e-6
    max_redraws: int = 5

    @property
    def count(self) -> int:
        return 4 * sum(self.caps)


def _nodes(atlas: SheetAtlas, cfg: SamplingConfig, rng) -> np.ndarray:
    geo = atlas.geometry
    return circle_nodes(0j, geo.ring_radii(), cfg.count, rng,
                        accept=lambda z: geo.is_clear(z, 0.02 * geo.scale))


def _reconstruct_matrix(points, values, caps):
    """Entrywise rational reconstruction; ``None`` entries failed."""
    n = values.shape[-1]
    out, worst, failed = [], 0.0, []
    # rounding noise in a vanishing entry is not a rational function
    floor = 1e-12 * float(np.abs(values).max())
    zero = RationalFunction(np.zeros(1, dtype=complex), np.ones(1, dtype=complex))
    for i in range(n):
        row = []
        for j in range(n):
            if float(np.abs(values[:, i, j]).max()) <= floor:
                row.append(zero)
                continue
            try:
                rf, res = reconstruct_rational(points, values[:, i, j], caps)
                worst = max(worst, res)
            except ReconstructionError as exc:
                rf = None
                failed.append({"entry": [i, j], "best_residual": exc.best_residual})
            row.append(rf)
        out.append(row)
    return out, worst, failed


def _eval_rational(mat, k) -> np.ndarray:
    return np.array([[complex(rf(k)) for rf in row] for row in mat])


def _sheet_cache(atlas: SheetAtlas, G: MatrixFunction, fn):
    cache: dict = {}

    def get(k, s):
        if k not in cache:
            cache.clear()
            cache[k] = fn(atlas.sheet_values(k, G))
        return cache[k][s]

    return get


# ---------------------------------------------------------------------------
# Ansatz


@dataclass
class AnsatzResult:
    A: list | None
    probe: ProbeFunction
    reconstruction_residual: float
    g_samples: list[tuple[complex, np.ndarray]]
    g_closed_forms: list
    roundtrip_residual: float
    sheet_residual: float
    single_valued: SingleValuedVerdict
    failed_entries: list = field(default_factory=list)
    discarded_samples: int = 0
    normalizer: np.ndarray | None = None

    def A_at(self, k: complex) -> np.ndarray:
        return _eval_rational(self.A, k)


def ansatz_matrix(value: np.ndarray, beta: np.ndarray,
                  normalizer: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``A = M diag(f) M^-1`` with ``f_m = sum_n beta_n M[n, m]``; returns (A, f)."""
    M, _ = frame_of(value, normalizer=normalizer)
    f = beta @ M
    return M @ np.diag(f) @ np.linalg.inv(M), f


def _g_coefficients(value: np.ndarray, A: np.ndarray):
    """Solve ``lambda_n = sum_m g_m f_n^m`` in the joint eigenframe."""
    lam, M = np.linalg.eig(value)
    f = np.diag(np.linalg.solve(M, A @ M))
    V = np.vander(f, len(f), increasing=True)
    cond = np.linalg.cond(V)
    g = np.linalg.lstsq(V, lam, rcond=None)[0]
    return g, cond


def matrix_polynomial(g, A) -> np.ndarray:
    out = np.zeros_like(A)
    P = np.eye(A.shape[0], dtype=complex)
    for c in g:
        out = out + c * P
        P = P @ A
    return out


def build_ansatz(G: MatrixFunction, atlas: SheetAtlas, probe: ProbeFunction | None = None,
                 sampling: SamplingConfig = SamplingConfig(),
                 verdict: CommutativityVerdict | None = None) -> AnsatzResult:
    """Rational ``A`` and coefficients ``g_m`` with ``G = sum_m g_m A^m``."""
    verdict = verdict or is_branch_commutative(G, atlas, seed=sampling.seed)
    if not verdict.holds:
        raise PreconditionError(f"G is not branch-commutative (residual {verdict.residual:.3e})")
    n = G.n
    rng = np.random.default_rng([sampling.seed, 1])
    probe = probe or ProbeFunction.random((n,), sampling.seed)
    normalizer = _choose_normalizer(atlas, G, sampling, rng)
    for _ in range(sampling.max_redraws + 1):
        pts, As, collided = [], [], False
        for k in _nodes(atlas, sampling, rng):
            try:
                A, f = ansatz_matrix(atlas.sheet_values(k, G)[atlas.physical], probe.beta, normalizer)
            except (DegenerateSampleError, NormalizationError, *_RESAMPLE):
                continue
            if n > 1:
                gaps = _offdiag(np.abs(f[:, None] - f[None, :]))
                if gaps.min() <= 1e-6 * np.abs(f).max():
                    collided = True
                    break
            pts.append(k)
            As.append(A)
        if not collided:
            break
        probe = ProbeFunction.random((n,), 0 if probe.seed is None else probe.seed, draw=probe.draws)
    else:
        raise ProbeSelectionError("probe values f collide after redraws")
    if len(pts) < 8:
        raise DegenerateSampleError(f"only {len(pts)} usable samples for the Ansatz")
    pts = np.array(pts)
    As = np.array(As).reshape(len(pts), n, n)
    Arec, rec_res, failed = _reconstruct_matrix(pts, As, sampling.caps)
    have_rec = not failed

    def A_sheet(vals):
        return np.array([ansatz_matrix(v, probe.beta, normalizer)[0] for v in vals])

    sv = verify_single_valued(_sheet_cache(atlas, G, A_sheet), atlas, sampling.tol)

    g_samples, discarded, rt, sheet_res = [], 0, 0.0, 0.0
    held = _sample_points_plain(atlas, rng, sampling.heldout)
    for k in held:
        vals = atlas.sheet_values(k, G)
        Gv = vals[atlas.physical]
        A = _eval_rational(Arec, k) if have_rec else ansatz_matrix(Gv, probe.beta, normalizer)[0]
        for v in vals:
            a_s = ansatz_matrix(v, probe.beta, normalizer)[0]
            sheet_res = max(sheet_res, float(np.linalg.norm(a_s - A) / np.linalg.norm(a_s)))
        g, cond = _g_coefficients(Gv, A)
        if cond > 1e10:
            discarded += 1
            continue
        g_samples.append((k, g))
        rt = max(rt, float(np.linalg.norm(matrix_polynomial(g, A) - Gv) / np.linalg.norm(Gv)))
    g_forms = _g_closed_forms(atlas, G, Arec, have_rec, probe, pts, sampling)
    return AnsatzResult(Arec if have_rec else None, probe, rec_res, g_samples, g_forms, rt, sheet_res,
                        sv, failed, discarded, normalizer)


def _choose_normalizer(atlas, G, sampling, rng) -> np.ndarray | None:
    """``None`` (first-row normalization) unless some eigenvector has a
    vanishing first entry at generic points; then a fixed generic vector."""
    for k in _sample_points_plain(atlas, np.random.default_rng([sampling.seed, 3]), 3):
        try:
            frame_of(atlas.sheet_values(k, G)[atlas.physical])
        except NormalizationError:
            u = np.random.default_rng([sampling.seed, 4]).uniform(0.5, 1.5, (2, G.n))
            return u[0] + 1j * u[1]
        except DegenerateSampleError:
            continue
    return None


def _sample_points_plain(atlas: SheetAtlas, rng, count: int) -> list[complex]:
    out = []
    while len(out) < count:
        (k,) = atlas.geometry.random_points(rng, 1)
        try:
            atlas.sheet_radicals(k)
        except _RESAMPLE:
            continue
        out.append(k)
    return out


def _g_closed_forms(atlas, G, Arec, have_rec, probe, pts, sampling):
    """Rational closed forms of ``g_m`` on the physical sheet where they exist."""
    if not have_rec:
        return [None] * G.n
    gs, ks = [], []
    for k in pts:
        try:
            g, cond = _g_coefficients(atlas.sheet_values(k, G)[atlas.physical], _eval_rational(Arec, k))
        except _RESAMPLE + (DegenerateSampleError, NormalizationError):
            continue
        if cond <= 1e10:
            gs.append(g)
            ks.append(k)
    gs = np.array(gs)
    out = []
    for m in range(G.n):
        try:
            rf, _ = reconstruct_rational(np.array(ks), gs[:, m], sampling.caps)
            out.append(rf)
        except ReconstructionError:
            out.append(None)
    return out


# ---------------------------------------------------------------------------
# symmetrizer


@dataclass
class SymmetrizerResult:
    S: list | None
    probe: ProbeFunction
    reconstruction_residual: float
    single_valued: SingleValuedVerdict
    heldout_residual: float
    det_degenerate: bool
    product_verdict: CommutativityVerdict
    failed_entries: list = field(default_factory=list)

    def S_at(self, k: complex) -> np.ndarray:
        return _eval_rational(self.S, k)


def symmetrizer_value(vals: np.ndarray, probe: ProbeFunction) -> np.ndarray:
    """``sum_s f{s} G^-1{s}`` with ``f = beta0 + sum_ij beta_ij (G^-1)_ij``."""
    inv = np.linalg.inv(vals)
    f = probe.beta0 + np.einsum("ij,sij->s", probe.beta, inv)
    return np.einsum("s,sij->ij", f, inv)


def build_symmetrizer(G: MatrixFunction, atlas: SheetAtlas, probe: ProbeFunction | None = None,
                      sampling: SamplingConfig = SamplingConfig(),
                      verdict: CommutativityVerdict | None = None,
                      tol: float = 1e-7, samples: int = 16) -> SymmetrizerResult:
    """Rational ``S`` making ``G S`` branch-commutative."""
    verdict = verdict or is_bypass_commutative(G, atlas, seed=sampling.seed)
    if not verdict.holds:
        raise PreconditionError(f"G is not bypass-commutative (residual {verdict.residual:.3e})")
    n = G.n
    rng = np.random.default_rng([sampling.seed, 2])
    probe = probe or ProbeFunction.constant_one(n)
    for attempt in range(sampling.max_redraws + 1):
        # det S must not vanish identically
        dets = []
        for k in _sample_points_plain(atlas, rng, 5):
            S = symmetrizer_value(atlas.sheet_values(k, G), probe)
            dets.append(abs(np.linalg.det(S)) / max(np.abs(S).max(), 1e-300) ** n)
        degenerate = max(dets) <= 1e-12
        if not degenerate:
            break
        if attempt == sampling.max_redraws:
            raise ProbeSelectionError("det S vanishes identically for every probe drawn")
        probe = ProbeFunction.random((n, n), sampling.seed if probe.seed is None else probe.seed,
                                     with_constant=True, draw=probe.draws)
    pts, Ss = [], []
    for k in _nodes(atlas, sampling, rng):
        try:
            Ss.append(symmetrizer_value(atlas.sheet_values(k, G), probe))
            pts.append(k)
        except _RESAMPLE + (np.linalg.LinAlgError,):
            continue
    pts = np.array(pts)
    Srec, rec_res, failed = _reconstruct_matrix(pts, np.array(Ss).reshape(len(pts), n, n), sampling.caps)
    have_rec = not failed

    def S_from(k, vals):
        return _eval_rational(Srec, k) if have_rec else symmetrizer_value(vals, probe)

    # single-valuedness: every sheet's share of the sum, continued around each
    # affix, must reassemble to the same matrix
    def per_sheet(vals):
        inv = np.linalg.inv(vals)
        f = probe.beta0 + np.einsum("ij,sij->s", probe.beta, inv)
        total = np.einsum("s,sij->ij", f, inv)
        return np.repeat(total[None], len(vals), axis=0)

    sv = verify_single_valued(_sheet_cache(atlas, G, per_sheet), atlas, tol)
    held = 0.0
    for k in _sample_points_plain(atlas, rng, sampling.heldout):
        vals = atlas.sheet_values(k, G)
        s_num = symmetrizer_value(vals, probe)
        held = max(held, float(np.linalg.norm(S_from(k, vals) - s_num) / np.linalg.norm(s_num)))

    prod = is_branch_commutative(
        G, atlas, samples=samples, tol=tol, seed=sampling.seed + 7,
        values=lambda k: (lambda v: v @ S_from(k, v))(atlas.sheet_values(k, G)),
    )
    return SymmetrizerResult(Srec if have_rec else None, probe, rec_res, sv, held, False, prod, failed)


# ---------------------------------------------------------------------------
# pipeline

VERDICTS = {
    "branch": "branch-commutative",
    "bypass": "bypass-commutative",
    "none": "not-commutatively-factorizable",
    "unbalanced": "unbalanced",
}


@dataclass(frozen=True)
class ClassifyConfig:
    tol: float = 1e-8
    samples: int = 16
    seed: int = 0
    caps: tuple[int, int] = (12, 12)
    single_valued_tol: float = 1e-7
    surface: SurfaceConfig = SurfaceConfig()


@dataclass
class ClassificationReport:
    verdict: str
    atlas: SheetAtlas
    balanced: BalancedVerdict
    branch: CommutativityVerdict | None = None
    bypass: CommutativityVerdict | None = None
    ansatz: AnsatzResult | None = None
    symmetrizer: SymmetrizerResult | None = None
    errors: list[dict] = field(default_factory=list)
    config: ClassifyConfig = ClassifyConfig()


def classify(G: MatrixFunction, config: ClassifyConfig = ClassifyConfig(),
             atlas: SheetAtlas | None = None) -> ClassificationReport:
    """Balanced? then branch-commutative (-> Ansatz) or bypass-commutative
    (-> symmetrizer)."""
    G.check_determinant(np.random.default_rng(config.seed))
    atlas = atlas or build_atlas(G, config.surface)
    bal = is_balanced(G, atlas)
    if not bal.balanced:
        return ClassificationReport(VERDICTS["unbalanced"], atlas, bal, config=config)
    sampling = SamplingConfig(caps=config.caps, seed=config.seed, tol=config.single_valued_tol)
    branch = is_branch_commutative(G, atlas, config.samples, config.tol, config.seed)
    report = ClassificationReport(VERDICTS["none"], atlas, bal, branch, config=config)
    if branch.holds:
        report.verdict = VERDICTS["branch"]
        try:
            report.ansatz = build_ansatz(G, atlas, sampling=sampling, verdict=branch)
        except (ProbeSelectionError, PreconditionError, *_RESAMPLE) as exc:
            report.errors.append({"stage": "ansatz", "error": type(exc).__name__, "message": str(exc)})
        return report
    bypass = is_bypass_commutative(G, atlas, config.samples, config.tol, config.seed)
    report.bypass = bypass
    if bypass.holds:
        report.verdict = VERDICTS["bypass"]
        try:
            report.symmetrizer = build_symmetrizer(G, atlas, sampling=sampling, verdict=bypass,
                                                   tol=config.single_valued_tol, samples=config.samples)
        except (ProbeSelectionError, PreconditionError, *_RESAMPLE) as exc:
            report.errors.append({"stage": "symmetrizer", "error": type(exc).__name__, "message": str(exc)})
    return report

