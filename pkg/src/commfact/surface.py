"""Riemann surface structure of a matrix function.

Branch affixes are found from elimination functions: for radical ``r`` the
product of its radicand over all sign choices of the radicals nested inside
it is single valued, hence rational in ``k``; its zeros and poles are the
candidate affixes.  Candidates are kept if monodromy around them moves some
sheet.

Sheets are named by their branch assignment at the anchor point.  A sheet is
extended to the whole plane minus the cuts by continuing from the anchor
along the real axis to the foot of the cut line through the target point,
then parallel to the cuts.  Cuts run from upper affixes to ``+i*inf`` and
from lower ones to ``-i*inf``; when two affixes of one half-plane share a
real part the cuts are tilted slightly so they stay disjoint.

If an affix lies on the real axis the contour is rotated by a small angle
(limiting absorption: positive real affixes count as upper) unless a fixed
``rotation`` is configured, in which case such surfaces are rejected.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .expr import BranchAssignment, EvaluationError, MatrixFunction, Program, principal_sqrt
from .paths import Line, PathSpec, TrackingError, identify_branches, track
from .ratrecon import ReconstructionError, reconstruct_rational
from .words import LOWER, UPPER, E, Letter, Word, compose

__all__ = [
    "BranchAffix",
    "SurfaceConfig",
    "CutGeometry",
    "SheetAtlas",
    "BalancedVerdict",
    "UnsupportedSurfaceError",
    "DegenerateInputError",
    "NearCutError",
    "find_branch_affixes",
    "monodromy_permutation",
    "build_atlas",
    "is_balanced",
    "permutation_order",
    "fiber_values",
]


class UnsupportedSurfaceError(ValueError):
    """A branch point lies on (or too close to) the real axis."""


class DegenerateInputError(ValueError):
    pass


class NearCutError(ValueError):
    """Evaluation point too close to a cut or a branch affix."""


@dataclass(frozen=True)
class SurfaceConfig:
    loop_radius_factor: float = 0.25
    cluster_tol: float = 1e-9
    verify_tol: float = 1e-7
    axis_tol: float = 1e-9
    rotation: float | None = None
    elimination_caps: tuple[int, int] = (24, 24)
    clearance: float = 1e-6


@dataclass(frozen=True)
class BranchAffix:
    value: complex
    hemisphere: str
    index: int
    order: int
    radicals: tuple[int, ...]

    @property
    def letter(self) -> Letter:
        return Letter(self.hemisphere, self.index)

    @property
    def name(self) -> str:
        return f"{self.hemisphere}{self.index + 1}"


def permutation_order(perm) -> int:
    perm = list(perm)
    seen = [False] * len(perm)
    order = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        n = 0
        j = i
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            n += 1
        order = order * n // math.gcd(order, n)
    return order


# ---------------------------------------------------------------------------
# geometry


class CutGeometry:
    """Cut system, access paths and loops.  Public methods take and return
    k-plane points; internally everything is done in the frame
    ``w = k * exp(i*rotation)`` where the contour is the real axis."""

    def __init__(self, affixes, anchor: float, rotation: float = 0.0,
                 loop_radius_factor: float = 0.25, scale: float = 1.0, clearance: float = 1e-6):
        self.rotation = float(rotation)
        self._rot = complex(math.cos(rotation), math.sin(rotation))
        self.anchor_frame = float(anchor)
        self.affixes = [complex(a) for a in affixes]
        self.frame_affixes = [self.to_frame(a) for a in self.affixes]
        self.loop_radius_factor = loop_radius_factor
        self.scale = float(scale)
        self.clearance = clearance * self.scale
        self.tilt = self._choose_tilt()
        st, ct = math.sin(self.tilt), math.cos(self.tilt)
        self._dir = {UPPER: complex(st, ct), LOWER: complex(st, -ct)}

    # frames
    def to_frame(self, k: complex) -> complex:
        return complex(k) * self._rot

    def from_frame(self, w: complex) -> complex:
        return complex(w) / self._rot

    @property
    def anchor(self) -> complex:
        return self.from_frame(self.anchor_frame)

    def hemisphere(self, k: complex) -> str | None:
        im = self.to_frame(k).imag
        return UPPER if im > 0 else LOWER if im < 0 else None

    def direction(self, hemisphere: str) -> complex:
        """Cut direction in k-plane coordinates."""
        return self.from_frame(self._dir[hemisphere])

    def _foot(self, w: complex, hem: str) -> complex:
        d = self._dir[hem]
        return complex((w - (w.imag / d.imag) * d).real, 0.0)

    def _choose_tilt(self) -> float:
        # vertical unless two affixes of one half-plane (nearly) share a real part
        bound = math.tan(0.3)
        collinear = False
        tol = 1e-6 * self.scale
        for hem, sgn in ((UPPER, 1), (LOWER, -1)):
            pts = [w for w in self.frame_affixes if sgn * w.imag > 0]
            for i, p in enumerate(pts):
                for q in pts[i + 1 :]:
                    dre, dim = q.real - p.real, q.imag - p.imag
                    if abs(dre) < tol:
                        collinear = True
                    elif abs(dim) > 0:
                        bound = min(bound, abs(dre / dim))
        if not collinear:
            return 0.0
        best, best_sep = 0.0, -1.0
        for sgn in (1, -1):
            theta = sgn * math.atan(0.5 * bound)
            sep = self._min_separation(theta)
            if sep > best_sep:
                best, best_sep = theta, sep
        return best

    def _min_separation(self, theta: float) -> float:
        st, ct = math.sin(theta), math.cos(theta)
        dirs = {UPPER: complex(st, ct), LOWER: complex(st, -ct)}
        sep = math.inf
        for hem, sgn in ((UPPER, 1), (LOWER, -1)):
            d = dirs[hem]
            feet = sorted((w - (w.imag / d.imag) * d).real for w in self.frame_affixes if sgn * w.imag > 0)
            for a, b in zip(feet, feet[1:]):
                sep = min(sep, (b - a) * ct)
        return sep

    # paths
    def transport_path(self, k: complex, check: bool = True) -> PathSpec:
        """Cut-avoiding path from the anchor to ``k``."""
        w = self.to_frame(k)
        if check:
            self.check_clear(k)
        hem = self.hemisphere(k)
        a = self.anchor_frame
        if hem is None:
            pts = [a, w]
        else:
            pts = [a, self._foot(w, hem), w]
        return PathSpec.polyline(*[self.from_frame(p) for p in pts])

    def loop_radius(self, affix: complex) -> float:
        w = self.to_frame(affix)
        others = [abs(w - v) for v in self.frame_affixes if abs(w - v) > 0]
        dist = min(others + [abs(w.imag)])
        return self.loop_radius_factor * dist

    def base_point(self, affix: complex, radius: float | None = None) -> complex:
        w = self.to_frame(affix)
        hem = UPPER if w.imag > 0 else LOWER
        r = self.loop_radius(affix) if radius is None else radius
        return self.from_frame(w - r * self._dir[hem])

    def letter_loop(self, affix: complex, radius: float | None = None) -> PathSpec:
        """Anchor -> base point below the affix -> positive circle -> back."""
        w = self.to_frame(affix)
        hem = UPPER if w.imag > 0 else LOWER
        r = self.loop_radius(affix) if radius is None else radius
        base = w - r * self._dir[hem]
        foot = self._foot(w, hem)
        access = PathSpec.polyline(*[self.from_frame(p) for p in (self.anchor_frame, foot, base)])
        circle = PathSpec.circle(affix, self.from_frame(base))
        return access + circle + access.reversed()

    def local_loops(self, affix, count: int = 3):
        """``count`` (base point, loop) pairs on a small circle around an affix,
        base points off every cut."""
        value = affix.value if isinstance(affix, BranchAffix) else complex(affix)
        w = self.to_frame(value)
        hem = UPPER if w.imag > 0 else LOWER
        r = self.loop_radius(value)
        down = -self._dir[hem]
        out = []
        for phi in np.linspace(-1.0, 1.0, 2 * count + 1):
            p = self.from_frame(w + r * down * complex(math.cos(phi), math.sin(phi)))
            if self.is_clear(p):
                out.append((p, PathSpec.circle(value, p)))
            if len(out) == count:
                break
        return out

    # clearance
    def cut_distance(self, k: complex) -> float:
        """Distance from ``k`` to the nearest affix or cut."""
        w = self.to_frame(k)
        best = math.inf
        for v in self.frame_affixes:
            hem = UPPER if v.imag > 0 else LOWER
            d = self._dir[hem]
            t = ((w - v) * d.conjugate()).real
            best = min(best, abs(w - v) if t <= 0 else abs(w - v - t * d))
        return best

    def is_clear(self, k: complex, clearance: float | None = None) -> bool:
        c = self.clearance if clearance is None else clearance
        return self.cut_distance(k) > c

    def check_clear(self, k: complex) -> None:
        if not self.is_clear(k):
            raise NearCutError(f"k={complex(k):.6g} lies within {self.clearance:.1e} of a cut or branch affix")

    def random_points(self, rng: np.random.Generator, count: int, clearance: float = 0.1) -> list[complex]:
        """Points uniform in an annulus around the origin, away from cuts."""
        r_in, r_out = 0.1 * self.scale, 1.5 * self.scale
        pts = []
        c = clearance * self.scale
        attempts = 0
        while len(pts) < count:
            attempts += 1
            if attempts % 2000 == 0:
                c *= 0.5
            r = math.sqrt(rng.uniform(r_in**2, r_out**2))
            z = self.from_frame(r * complex(math.cos(t := rng.uniform(0, 2 * math.pi)), math.sin(t)))
            if self.cut_distance(z) > c:
                pts.append(z)
        return pts

    def ring_radii(self) -> tuple[float, float]:
        return 0.7 * self.scale, 1.35 * self.scale


# ---------------------------------------------------------------------------
# affix detection


def _matrix_scale(G: MatrixFunction) -> float:
    consts = [abs(n.value) for row in G.entries for e in row for n in _walk(e) if n.kind == "const"]
    return max([1.0, abs(G.anchor)] + consts)


def _walk(expr):
    from .expr import _preorder

    return _preorder([expr])


class _Elimination:
    """Product of radicand ``r`` over all sign choices of its inner radicals."""

    def __init__(self, G: MatrixFunction, rid: int):
        self.G = G
        self.rid = rid
        radical = G.tower.radicals[rid]
        self.program = Program([radical.children[0]], G.tower)
        inner = G.tower.inner[rid]
        combos = np.array(list(product((1, -1), repeat=len(inner))), dtype=float).reshape(2 ** len(inner), len(inner))
        self.signs = {r: combos[:, j][:, None] for j, r in enumerate(inner)}
        self.ncombo = combos.shape[0]

    def fiber(self, k) -> np.ndarray:
        """Radicand values over all inner sign choices, shape ``(C, len(k))``."""
        k = np.atleast_1d(np.asarray(k, dtype=complex))[None, :]

        def resolve(rid, radicand):
            return self.signs[rid] * principal_sqrt(radicand)

        (val,) = self.program.run(k, resolve)
        return np.broadcast_to(val, (self.ncombo, k.shape[1]))

    def __call__(self, k) -> np.ndarray:
        return np.prod(self.fiber(k), axis=0)


def _polish(f, z: complex, steps: int = 12) -> complex:
    h = 1e-7 * max(1.0, abs(z))
    best, fbest = z, abs(f(z))
    for _ in range(steps):
        fz = f(z)
        dfz = (f(z + h) - f(z - h)) / (2 * h)
        if dfz == 0 or not np.isfinite(dfz):
            break
        z = z - fz / dfz
        fz_abs = abs(f(z))
        if not np.isfinite(fz_abs):
            break
        if fz_abs < fbest:
            best, fbest = z, fz_abs
        if fz_abs == 0:
            break
    return best


def _candidates(G: MatrixFunction, config: SurfaceConfig, scale: float):
    """Verified zeros/poles of every elimination function: list of (value, {rids})."""
    found: list[tuple[complex, set]] = []
    radius = 1.3 * scale
    m_cap, n_cap = config.elimination_caps
    count = 4 * (m_cap + n_cap) + 8
    ring = radius * np.exp(1j * (2 * np.pi * np.arange(count) / count + 0.1234))
    for rid in range(len(G.tower)):
        elim = _Elimination(G, rid)
        with np.errstate(all="ignore"):
            vals = elim(ring)
        vmax = float(np.abs(vals).max())
        if vmax == 0.0:
            raise DegenerateInputError(f"radicand of radical {rid} vanishes identically")
        try:
            rf, _ = reconstruct_rational(ring, vals / vmax, (m_cap, n_cap), rtol=1e-9)
        except ReconstructionError as exc:
            raise DegenerateInputError(
                f"elimination function of radical {rid} exceeds degree caps {config.elimination_caps}"
            ) from exc
        rho_scale = float(np.median(np.abs(elim.fiber(ring))))

        def f(z, elim=elim):
            with np.errstate(all="ignore"):
                return complex(elim(z)[0]) / vmax

        def finv(z, elim=elim):
            with np.errstate(all="ignore"):
                return vmax / complex(elim(z)[0])

        for z in rf.zeros():
            z = _polish(f, complex(z))
            with np.errstate(all="ignore"):
                fib = np.abs(elim.fiber(z)[:, 0])
            if np.nanmin(fib) <= config.verify_tol * rho_scale:
                found.append((z, {rid}))
        for z in rf.poles():
            z = _polish(finv, complex(z))
            try:
                with np.errstate(all="ignore"):
                    fib = np.abs(elim.fiber(z)[:, 0])
                is_pole = not np.all(np.isfinite(fib)) or np.nanmax(fib) >= rho_scale / config.verify_tol
            except EvaluationError:
                is_pole = True
            if is_pole:
                found.append((z, {rid}))
    # cluster
    tol = max(config.cluster_tol, 1e-6 * scale)
    merged: list[tuple[complex, set]] = []
    for z, rids in found:
        for i, (v, r) in enumerate(merged):
            if abs(z - v) <= tol:
                merged[i] = (v, r | rids)
                break
        else:
            merged.append((z, set(rids)))
    return merged


def _fiber_at(G: MatrixFunction, k: complex) -> np.ndarray:
    """Radical vectors of all sign assignments at ``k``, shape ``(R, 2**R)``."""
    R = len(G.tower)
    cols = [G.radical_values(k, s) for s in product((1, -1), repeat=R)]
    return np.array(cols).T


def _local_monodromy_nontrivial(G: MatrixFunction, center: complex, radius: float) -> bool:
    base = center - 1j * radius
    y0 = _fiber_at(G, base)
    y1 = track(G, PathSpec.circle(center, base), y0)
    scale = np.maximum(np.abs(y0), 1e-300)
    return bool(np.any(np.abs(y1 - y0) > 1e-6 * scale))


class _Analysis:
    """Shared state for affix detection and atlas construction."""

    def __init__(self, G: MatrixFunction, config: SurfaceConfig):
        self.G = G
        self.config = config
        self.scale = _matrix_scale(G)
        if len(G.tower) == 0:
            self.candidates = []
            self.geometry = CutGeometry([], G.anchor, config.rotation or 0.0,
                                        config.loop_radius_factor, self.scale, config.clearance)
            self.sheets = [BranchAssignment()]
            self.images = {}
            self.affixes = []
            self.perms = {}
            return
        cands = _candidates(G, config, self.scale)
        values = [z for z, _ in cands]
        axis_tol = config.axis_tol * self.scale

        def spacing(z):
            others = [abs(z - v) for v in values if v is not z and abs(z - v) > 0]
            return min(others + [self.scale])

        on_axis = [(z, r) for z, r in cands if abs(z.imag) <= axis_tol]
        off_axis = [(z, r) for z, r in cands if abs(z.imag) > axis_tol]
        genuine = [(z, r) for z, r in on_axis if _local_monodromy_nontrivial(G, z, 0.25 * spacing(z))]
        rotation = config.rotation
        if genuine:
            if rotation is None:
                if any(abs(z) <= axis_tol for z, _ in genuine):
                    raise UnsupportedSurfaceError("branch point at k=0 cannot be moved off the contour")
                angles = [min(abs(math.atan2(z.imag, z.real)), math.pi - abs(math.atan2(z.imag, z.real)))
                          for z, _ in off_axis]
                rotation = min([0.1] + [0.5 * a for a in angles])
            else:
                in_frame = [z * complex(math.cos(rotation), math.sin(rotation)) for z, _ in genuine]
                if any(abs(w.imag) <= axis_tol for w in in_frame):
                    raise UnsupportedSurfaceError(
                        "branch affix on the real axis: "
                        + ", ".join(f"{z:.6g}" for z, _ in genuine)
                    )
        rotation = rotation or 0.0
        kept = off_axis + genuine
        # after rotation every kept candidate must be off the contour
        rot = complex(math.cos(rotation), math.sin(rotation))
        for z, _ in kept:
            if abs((z * rot).imag) <= axis_tol:
                raise UnsupportedSurfaceError(f"branch affix {z:.6g} on the contour")
        self.candidates = kept
        self.geometry = CutGeometry([z for z, _ in kept], G.anchor, rotation,
                                    config.loop_radius_factor, self.scale, config.clearance)
        self._close()

    # sheets -----------------------------------------------------------------
    def _close(self):
        G, geo = self.G, self.geometry
        anchor = geo.anchor
        try:
            phys = BranchAssignment.principal(len(G.tower))
            G.radical_values(anchor, phys)
            identify_branches(G, anchor, G.radical_values(anchor, phys))
        except (EvaluationError, TrackingError) as exc:
            raise DegenerateInputError(f"anchor {anchor} is a pole or branch point; choose another anchor") from exc
        self.sheets = [phys]
        index = {phys: 0}
        self.images: dict[int, dict[int, int]] = {i: {} for i in range(len(self.candidates))}
        loops = [geo.letter_loop(z) for z, _ in self.candidates]
        frontier = [0]
        while frontier:
            new = []
            y0 = np.array([G.radical_values(anchor, self.sheets[s]) for s in frontier]).T
            for c, loop in enumerate(loops):
                y1 = track(G, loop, y0)
                for s, a in zip(frontier, identify_branches(G, anchor, y1)):
                    if a not in index:
                        index[a] = len(self.sheets)
                        self.sheets.append(a)
                        new.append(index[a])
                    self.images[c][s] = index[a]
            frontier = new
        n = len(self.sheets)
        perms = [np.array([self.images[c][s] for s in range(n)]) for c in range(len(self.candidates))]
        affixes = []
        self.perms = {}
        counters = {UPPER: 0, LOWER: 0}
        order_idx = sorted(
            range(len(self.candidates)),
            key=lambda c: (geo.hemisphere(self.candidates[c][0]) != UPPER,
                           geo.to_frame(self.candidates[c][0]).real,
                           geo.to_frame(self.candidates[c][0]).imag),
        )
        for c in order_idx:
            z, rids = self.candidates[c]
            order = permutation_order(perms[c])
            if order == 1:
                continue
            hem = geo.hemisphere(z)
            affix = BranchAffix(complex(z), hem, counters[hem], order, tuple(sorted(rids)))
            counters[hem] += 1
            affixes.append(affix)
            self.perms[(hem, affix.index)] = perms[c]
        self.affixes = affixes
        self.geometry = CutGeometry([a.value for a in affixes], G.anchor, geo.rotation,
                                    self.config.loop_radius_factor, self.scale, self.config.clearance)


def find_branch_affixes(G: MatrixFunction, config: SurfaceConfig | None = None) -> list[BranchAffix]:
    """Branch affixes of ``G`` with their orders (monodromy permutation orders)."""
    return _Analysis(G, config or SurfaceConfig()).affixes


def monodromy_permutation(G: MatrixFunction, affix: BranchAffix, atlas: "SheetAtlas | None" = None,
                          radius: float | None = None) -> np.ndarray:
    """Sheet permutation of a positive loop around ``affix``.

    With an atlas the permutation is recomputed by tracking on the atlas's
    sheets (optionally at a different loop ``radius``); unknown end sheets
    raise :class:`TrackingError`.
    """
    atlas = atlas or build_atlas(G)
    loop = atlas.geometry.letter_loop(affix.value, radius)
    anchor = atlas.geometry.anchor
    y0 = atlas.anchor_radicals()
    y1 = track(G, loop, y0)
    index = {a: i for i, a in enumerate(atlas.sheets)}
    out = []
    for a in identify_branches(G, anchor, y1) if len(G.tower) else [BranchAssignment()]:
        if a not in index:
            raise TrackingError(f"loop around {affix.name} reached a sheet outside the atlas: {a!r}")
        out.append(index[a])
    return np.array(out)


# ---------------------------------------------------------------------------
# atlas


@dataclass
class SheetAtlas:
    G: MatrixFunction
    geometry: CutGeometry
    affixes: list[BranchAffix]
    sheets: list[BranchAssignment]
    perms: dict[tuple[str, int], np.ndarray]
    representatives: list[Word]
    config: SurfaceConfig = field(default_factory=SurfaceConfig)
    physical: int = 0

    @property
    def n_sheets(self) -> int:
        return len(self.sheets)

    @property
    def orders(self) -> dict[tuple[str, int], int]:
        return {(a.hemisphere, a.index): a.order for a in self.affixes}

    @property
    def letters(self) -> list[Letter]:
        return [a.letter for a in self.affixes]

    def affix(self, hemisphere: str, index: int) -> BranchAffix:
        for a in self.affixes:
            if a.hemisphere == hemisphere and a.index == index:
                return a
        raise KeyError(f"no affix {hemisphere}{index + 1}")

    def sheet_of(self, w: Word, start: int = 0) -> int:
        s = start
        for letter in w:
            perm = self.perms[letter.affix]
            n = self.orders[letter.affix]
            for _ in range(letter.exponent % n):
                s = int(perm[s])
        return s

    def word(self, text: str) -> Word:
        return Word.parse(text, self.orders)

    def compose(self, w: Word, v: Word) -> Word:
        return compose(w, v, self.orders)

    # numerics
    @cached_property
    def _anchor_radicals(self) -> np.ndarray:
        a = self.geometry.anchor
        if not self.sheets[0]:
            return np.zeros((0, len(self.sheets)), dtype=complex)
        return np.array([self.G.radical_values(a, s) for s in self.sheets]).T

    def anchor_radicals(self) -> np.ndarray:
        return self._anchor_radicals.copy()

    def sheet_radicals(self, k: complex) -> np.ndarray:
        """Radical values of every sheet at ``k`` (shape ``(R, S)``)."""
        k = complex(k)
        if len(self.G.tower) == 0:
            return np.zeros((0, len(self.sheets)), dtype=complex)
        path = self.geometry.transport_path(k)
        return track(self.G, path, self._anchor_radicals)

    def sheet_values(self, k: complex, G: MatrixFunction | None = None) -> np.ndarray:
        """Values of ``G`` on every sheet at ``k``, shape ``(S, N, N)``."""
        G = G or self.G
        y = self.sheet_radicals(k)
        if len(G.tower) == 0:
            return np.repeat(G(k)[None], len(self.sheets), axis=0)
        return G.values_from_radicals(complex(k), list(y))

    def continue_radicals(self, path: PathSpec, y) -> np.ndarray:
        return track(self.G, path, y)

    def match_sheets(self, k: complex, y, reference=None, rtol: float = 1e-6) -> list[int]:
        """Atlas sheet index of each column of radical values ``y`` at ``k``."""
        ref = self.sheet_radicals(k) if reference is None else reference
        out = []
        for j in range(y.shape[1]):
            err = np.abs(ref - y[:, [j]]).max(axis=0) if ref.shape[0] else np.zeros(ref.shape[1])
            scale = max(float(np.abs(y[:, j]).max()) if y.shape[0] else 1.0, 1e-300)
            best = int(np.argmin(err))
            if err[best] > rtol * scale:
                raise TrackingError(f"continued values at k={k} match no atlas sheet")
            out.append(best)
        return out

    # combinatorics
    def orbit(self, hemisphere: str | None = None, start: int = 0) -> dict[int, Word]:
        """BFS over letters (optionally one hemisphere only): sheet -> shortest word.

        Ties are broken by letter order a1 < a2 < ... < b1 < ...
        """
        letters = [a.letter for a in sorted(self.affixes, key=lambda a: (a.hemisphere, a.index))
                   if hemisphere is None or a.hemisphere == hemisphere]
        words = {start: E}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            for letter in letters:
                t = int(self.perms[letter.affix][s])
                if t not in words:
                    words[t] = compose(words[s], Word([letter]), self.orders)
                    queue.append(t)
        return words

    def summary(self) -> dict:
        return {
            "rotation": self.geometry.rotation,
            "cut_tilt": self.geometry.tilt,
            "sheet_count": self.n_sheets,
            "affixes": [
                {"name": a.name, "value": [a.value.real, a.value.imag], "order": a.order,
                 "radicals": list(a.radicals),
                 "permutation": [int(x) for x in self.perms[(a.hemisphere, a.index)]]}
                for a in self.affixes
            ],
            "sheets": [
                {"index": i, "branches": list(s), "word": str(self.representatives[i])}
                for i, s in enumerate(self.sheets)
            ],
        }

    # diagrams
    def diagram_text(self) -> str:
        """Sheets as rows, affixes as columns; ``o`` where a sheet is moved by
        the affix's monodromy, ``|`` where a link passes between rows."""
        cols = self.affixes
        width = 14
        head = " " * 16 + "".join(f"{a.name:^{width}}" for a in cols)
        lines = [head]
        n = self.n_sheets
        for s in range(n):
            cells = []
            for a in cols:
                perm = self.perms[(a.hemisphere, a.index)]
                mark = "o" if perm[s] != s else "-"
                cells.append(f"{mark:-^{width}}")
            label = f"{s}:{self.representatives[s]}"
            lines.append(f"{label:<15} " + "".join(cells) + ("  (physical)" if s == 0 else ""))
            if s < n - 1:
                links = []
                for a in cols:
                    perm = self.perms[(a.hemisphere, a.index)]
                    spans = any(min(i, int(perm[i])) <= s < max(i, int(perm[i])) for i in range(n))
                    links.append(f"{'|' if spans else ' ':^{width}}")
                lines.append(" " * 16 + "".join(links))
        return "\n".join(lines) + "\n"

    def diagram_dot(self) -> str:
        n = self.n_sheets
        out = ["graph riemann_surface {", "  rankdir=TB;", "  node [shape=point];"]
        for s in range(n):
            names = [f"s{s}_{a.name}" for a in self.affixes]
            out.append(f'  sheet{s} [shape=plaintext, label="{s}: {self.representatives[s]}"];')
            chain = [f"sheet{s}"] + names + [f"s{s}_end"]
            out.append(f"  {{ rank=same; {' ; '.join(chain)} }}")
            out.append(f"  {' -- '.join(chain)};")
        for a in self.affixes:
            perm = self.perms[(a.hemisphere, a.index)]
            seen = set()
            for s in range(n):
                t = int(perm[s])
                if t != s and frozenset((s, t)) not in seen:
                    seen.add(frozenset((s, t)))
                    out.append(f'  s{s}_{a.name} -- s{t}_{a.name} [label="{a.name}"];')
        for s in range(n - 1):
            out.append(f"  sheet{s} -- sheet{s + 1} [style=invis];")
        out.append("}")
        return "\n".join(out) + "\n"


def build_atlas(G: MatrixFunction, config: SurfaceConfig | None = None) -> SheetAtlas:
    """Sheets reachable from the physical sheet, letter permutations and a
    shortest representative word per sheet."""
    config = config or SurfaceConfig()
    an = _Analysis(G, config)
    atlas = SheetAtlas(G, an.geometry, an.affixes, an.sheets, an.perms, [], config)
    words = atlas.orbit()
    if len(words) != len(an.sheets):
        raise TrackingError("atlas is not transitive")
    atlas.representatives = [words[s] for s in range(len(an.sheets))]
    return atlas


@dataclass
class BalancedVerdict:
    balanced: bool
    upper_orbit: list[int]
    lower_orbit: list[int]
    witness: dict | None = None


def is_balanced(G: MatrixFunction, atlas: SheetAtlas) -> BalancedVerdict:
    """Every sheet reachable both by upper-only and by lower-only words."""
    up = atlas.orbit(UPPER)
    lo = atlas.orbit(LOWER)
    all_sheets = set(range(atlas.n_sheets))
    witness = None
    for side, orb in (("upper", up), ("lower", lo)):
        missing = sorted(all_sheets - set(orb))
        if missing and witness is None:
            s = missing[0]
            witness = {
                "sheet": s,
                "branches": list(atlas.sheets[s]),
                "word": str(atlas.representatives[s]),
                "unreachable_from": side,
            }
    return BalancedVerdict(witness is None, sorted(up), sorted(lo), witness)


def fiber_values(G: MatrixFunction, k) -> np.ndarray:
    """``G`` at every point of the fiber over each ``k``: shape ``(2**R, m, N, N)``.

    Symmetric functions of these values are single valued, so no tracking is
    needed to evaluate them.
    """
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    R, n = len(G.tower), G.n
    combos = np.array(list(product((1, -1), repeat=R)), dtype=float).reshape(2**R, R)
    kk = k[None, :]

    def resolve(rid, radicand):
        return combos[:, rid][:, None] * principal_sqrt(radicand)

    flat = G.program.run(kk, resolve)
    out = np.empty((combos.shape[0], k.shape[0], n, n), dtype=complex)
    for idx, v in enumerate(flat):
        out[:, :, idx // n, idx % n] = v
    return out
