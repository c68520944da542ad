"""Paths in the k-plane and numeric analytic continuation of radical towers.

Continuation carries the vector of radical values along a path.  At every
step each radical is re-solved innermost first: both roots of its (already
continued) radicand are candidates and the one closest to the linear
prediction wins.  A step is accepted only when no radicand or radical moved
by more than half its size; otherwise the step is halved.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import BranchAssignment, Expression, MatrixFunction, principal_sqrt


class TrackingError(RuntimeError):
    """Step underflow or an ambiguous root choice while continuing."""


@dataclass(frozen=True)
class Line:
    a: complex
    b: complex

    def point(self, t: float) -> complex:
        return self.a + (self.b - self.a) * t

    @property
    def length(self) -> float:
        return abs(self.b - self.a)

    @property
    def max_step(self) -> float:
        return 0.25

    def reversed(self) -> "Line":
        return Line(self.b, self.a)


@dataclass(frozen=True)
class Arc:
    center: complex
    radius: float
    theta0: float
    sweep: float  # signed; positive is counter-clockwise

    def point(self, t: float) -> complex:
        return self.center + self.radius * cmath.exp(1j * (self.theta0 + self.sweep * t))

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    @property
    def max_step(self) -> float:
        # at least 64 steps per full turn
        return min(1.0, (2 * math.pi / 64) / max(abs(self.sweep), 1e-300))

    def reversed(self) -> "Arc":
        return Arc(self.center, self.radius, self.theta0 + self.sweep, -self.sweep)


class PathSpec:
    """Piecewise path made of :class:`Line` and :class:`Arc` pieces."""

    def __init__(self, segments: Sequence[Line | Arc]):
        self.segments = tuple(s for s in segments if s.length > 0)
        if not segments:
            raise ValueError("empty path")
        self._start = segments[0].point(0.0)
        self._end = segments[-1].point(1.0)

    @property
    def start(self) -> complex:
        return self._start

    @property
    def end(self) -> complex:
        return self._end

    @property
    def length(self) -> float:
        return sum(s.length for s in self.segments)

    def reversed(self) -> "PathSpec":
        p = PathSpec([s.reversed() for s in reversed(self.segments)] or [Line(self.end, self.end)])
        return p

    def __add__(self, other: "PathSpec") -> "PathSpec":
        if abs(self.end - other.start) > 1e-12 * max(1.0, abs(self.end)):
            raise ValueError("paths do not join")
        return PathSpec(list(self.segments) + list(other.segments) or [Line(self.start, other.end)])

    @classmethod
    def polyline(cls, *points: complex) -> "PathSpec":
        pts = [complex(p) for p in points]
        segs = [Line(a, b) for a, b in zip(pts, pts[1:])]
        return cls(segs or [Line(pts[0], pts[0])])

    @classmethod
    def circle(cls, center: complex, start: complex, turns: int = 1) -> "PathSpec":
        """Full positively oriented circle(s) around ``center`` through ``start``."""
        d = complex(start) - complex(center)
        return cls([Arc(complex(center), abs(d), cmath.phase(d), 2 * math.pi * turns)])

    def sample(self, n_per_segment: int = 16) -> np.ndarray:
        pts = [self.start]
        for s in self.segments:
            pts.extend(s.point(t) for t in np.linspace(0, 1, n_per_segment + 1)[1:])
        return np.array(pts)


_MAX_REL = 0.5  # relative change allowed per step, for radicands and radicals
_MARGIN = 0.25  # chosen root must be this much closer than the other (fraction of separation)
_MIN_STEP = 1e-12


def track(G: MatrixFunction, path: PathSpec, y0) -> np.ndarray:
    """Continue radical values ``y0`` (shape ``(R,)`` or ``(R, S)``) along ``path``."""
    y = np.array(y0, dtype=complex)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    R = len(G.tower)
    if R == 0:
        return y[:, 0] if squeeze else y
    if y.shape[0] != R:
        raise ValueError(f"expected {R} radical values, got {y.shape[0]}")
    program = G.program
    total = max(path.length, 1e-300)

    for seg in path.segments:
        t = 0.0
        dt = min(seg.max_step, 1 / 16)
        y_prev = None
        dt_prev = None
        rho = _radicands(program, seg.point(0.0), y)
        floor = 1e-12 * max(1.0, float(np.abs(y).max()))
        while t < 1.0:
            dt = min(dt, 1.0 - t)
            k_new = seg.point(t + dt)
            if y_prev is None:
                pred = y
            else:
                pred = y + (y - y_prev) * (dt / dt_prev)
            ok, y_new, rho_new = _step(program, k_new, pred, y, rho, floor, R)
            if ok:
                y_prev, y, rho = y, y_new, rho_new
                t += dt
                dt_prev = dt
                dt = min(dt * 1.5, seg.max_step)
            else:
                dt *= 0.5
                if dt * seg.length < _MIN_STEP * total:
                    raise TrackingError(
                        f"step underflow near k={k_new:.6g} on {seg}; "
                        "the path passes too close to a branch point or pole, perturb it"
                    )
    return y[:, 0] if squeeze else y


def _radicands(program, k, y) -> np.ndarray:
    out = np.empty_like(y)

    def resolve(rid, radicand):
        out[rid] = radicand
        return y[rid]

    program.run(k, resolve)
    return out


def _step(program, k, pred, y_old, rho_old, floor, R):
    y_new = np.empty_like(y_old)
    rho_new = np.empty_like(y_old)
    ok = True

    def resolve(rid, radicand):
        nonlocal ok
        radicand = np.broadcast_to(radicand, y_old[rid].shape)
        root = principal_sqrt(radicand)
        p = pred[rid]
        d_plus = np.abs(root - p)
        d_minus = np.abs(root + p)
        val = np.where(d_plus <= d_minus, root, -root)
        chosen = np.minimum(d_plus, d_minus)
        sep = 2 * np.abs(root)
        if np.any(chosen > _MARGIN * sep + floor):
            ok = False
        if np.any(np.abs(radicand - rho_old[rid]) > _MAX_REL * np.abs(rho_old[rid]) + floor):
            ok = False
        if np.any(np.abs(val - y_old[rid]) > _MAX_REL * np.abs(y_old[rid]) + floor):
            ok = False
        y_new[rid] = val
        rho_new[rid] = radicand
        return val

    program.run(k, resolve)
    return ok, y_new, rho_new


def identify_branches(G: MatrixFunction, k: complex, y, rtol: float = 1e-6):
    """Branch assignment(s) of radical values ``y`` at ``k``.

    Returns a :class:`BranchAssignment` for ``y`` of shape ``(R,)`` or a list
    of them for shape ``(R, S)``.  Raises :class:`TrackingError` when a value
    is not within ``rtol`` of either root (drift) or the radicand vanishes.
    """
    y = np.asarray(y, dtype=complex)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    signs = np.ones(y.shape, dtype=int)

    def resolve(rid, radicand):
        radicand = np.broadcast_to(radicand, y[rid].shape)
        p = principal_sqrt(radicand)
        scale = np.abs(p)
        if np.any(scale == 0):
            raise TrackingError(f"radical {rid} has a vanishing radicand at k={k}")
        plus = np.abs(y[rid] - p)
        minus = np.abs(y[rid] + p)
        s = np.where(plus <= minus, 1, -1)
        if np.any(np.minimum(plus, minus) > rtol * scale):
            raise TrackingError(f"radical {rid} drifted off both roots at k={k}")
        signs[rid] = s
        return y[rid]

    G.program.run(complex(k), resolve)
    out = [BranchAssignment(signs[:, j]) for j in range(y.shape[1])]
    return out[0] if squeeze else out


def _as_matrix_function(obj) -> MatrixFunction:
    if isinstance(obj, MatrixFunction):
        return obj
    if isinstance(obj, Expression):
        return MatrixFunction(((obj,),))
    raise TypeError("expected an Expression or MatrixFunction")


def continue_value(obj, path: PathSpec, start_branches=None):
    """Continue an expression or matrix along ``path``.

    Starts from the given branch assignment at ``path.start`` and returns
    ``(end_value, end_assignment)`` where the assignment is read off against
    principal roots at ``path.end``.
    """
    G = _as_matrix_function(obj)
    y0 = G.radical_values(path.start, start_branches)
    y1 = track(G, path, y0)
    value = G.values_from_radicals(path.end, y1)
    if isinstance(obj, Expression):
        value = value[0, 0]
    return value, identify_branches(G, path.end, y1) if len(G.tower) else BranchAssignment()
