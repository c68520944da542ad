"""Rational reconstruction from point samples, and single-valuedness checks.

``reconstruct_rational`` solves the linearized interpolation problem
``p(k_i) - v_i q(k_i) = 0`` by SVD for increasing degree pairs and accepts
the first pair whose fit reproduces held-out samples.  Degree pairs are
visited by total degree, so the accepted pair is the minimal one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

__all__ = [
    "RationalFunction",
    "ReconstructionError",
    "reconstruct_rational",
    "circle_nodes",
    "SingleValuedVerdict",
    "verify_single_valued",
]


class ReconstructionError(ValueError):
    """No degree pair within the caps reproduces the held-out samples."""

    def __init__(self, message, points=None, values=None, best_residual=np.inf):
        super().__init__(message)
        self.points = points
        self.values = values
        self.best_residual = best_residual


@dataclass(frozen=True, eq=False)
class RationalFunction:
    """``num(k) / den(k)``; coefficients ascending, ``den`` monic."""

    num: np.ndarray
    den: np.ndarray

    def __call__(self, k):
        k = np.asarray(k, dtype=complex)
        return P.polyval(k, self.num) / P.polyval(k, self.den)

    @property
    def degrees(self) -> tuple[int, int]:
        return len(self.num) - 1, len(self.den) - 1

    def zeros(self) -> np.ndarray:
        if len(self.num) <= 1:
            return np.empty(0, dtype=complex)
        return P.polyroots(self.num)

    def poles(self) -> np.ndarray:
        if len(self.den) <= 1:
            return np.empty(0, dtype=complex)
        return P.polyroots(self.den)

    def to_json(self) -> dict:
        return {
            "numerator": [[float(c.real), float(c.imag)] for c in self.num],
            "denominator": [[float(c.real), float(c.imag)] for c in self.den],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RationalFunction":
        num = np.array([complex(*c) for c in data["numerator"]])
        den = np.array([complex(*c) for c in data["denominator"]])
        return cls(num, den)


def _rescale(coeffs: np.ndarray, center: complex, radius: float) -> np.ndarray:
    """Coefficients in ``z = (k - center)/radius`` -> coefficients in ``k``."""
    out = np.zeros(1, dtype=complex)
    lin = np.array([-center / radius, 1 / radius], dtype=complex)
    for c in coeffs[::-1]:
        out = P.polyadd(P.polymul(out, lin), [c])
    return out


def _fit(zt, vt, m, n, Vz):
    A = np.hstack([Vz[:, : m + 1], -vt[:, None] * Vz[:, : n + 1]])
    norms = np.linalg.norm(A, axis=1)
    norms[norms == 0] = 1.0
    A = A / norms[:, None]
    _, _, vh = np.linalg.svd(A, full_matrices=True)
    x = vh[-1].conj()
    return x[: m + 1], x[m + 1 :]


def reconstruct_rational(
    points,
    values,
    caps: tuple[int, int] = (12, 12),
    rtol: float = 1e-8,
) -> tuple[RationalFunction, float]:
    """Fit a rational function of minimal degrees to ``values`` at ``points``.

    Every fourth sample is held out for validation.  Returns the function
    and its max relative error on the held-out samples.
    """
    k = np.asarray(points, dtype=complex).ravel()
    v = np.asarray(values, dtype=complex).ravel()
    if k.shape != v.shape:
        raise ValueError("points and values differ in length")
    if not np.all(np.isfinite(v)):
        raise ReconstructionError("non-finite sample values", k, v)
    m_cap, n_cap = caps
    vscale = float(np.abs(v).max()) if len(v) else 0.0
    if vscale == 0.0:
        return RationalFunction(np.zeros(1, dtype=complex), np.ones(1, dtype=complex)), 0.0

    hold = np.arange(len(k)) % 4 == 3
    kt, vt, kh, vh = k[~hold], v[~hold], k[hold], v[hold]
    if len(kh) == 0:
        raise ReconstructionError("need at least 4 samples", k, v)
    center = complex(kt.mean())
    radius = float(np.abs(kt - center).max()) or 1.0
    zt = (kt - center) / radius
    zh = (kh - center) / radius
    Vz = np.vander(zt, max(m_cap, n_cap) + 1, increasing=True)

    best = np.inf
    for total in range(m_cap + n_cap + 1):
        if total + 2 > len(kt) - 1:
            break
        for m in range(min(total, m_cap), max(0, total - n_cap) - 1, -1):
            n = total - m
            p, q = _fit(zt, vt, m, n, Vz)
            with np.errstate(divide="ignore", invalid="ignore"):
                approx = P.polyval(zh, p) / P.polyval(zh, q)
            res = float(np.max(np.abs(approx - vh)) / vscale)
            if not np.isfinite(res):
                continue
            best = min(best, res)
            if res < rtol and abs(q[-1]) > 1e-14 * np.abs(q).max() and (m == 0 or abs(p[-1]) > 1e-14 * np.abs(p).max()):
                num = _rescale(p, center, radius)
                den = _rescale(q, center, radius)
                lead = den[-1]
                return RationalFunction(num / lead, den / lead), res
    raise ReconstructionError(
        f"no degree pair within caps {caps} fits (best held-out residual {best:.3e})",
        k,
        v,
        best,
    )


def circle_nodes(
    center: complex,
    radii: Sequence[float],
    count: int,
    rng: np.random.Generator,
    accept: Callable[[complex], bool] | None = None,
) -> np.ndarray:
    """``count`` points spread over concentric circles, rejecting points for
    which ``accept`` is false (by nudging their angle)."""
    radii = list(radii)
    per = [count // len(radii) + (1 if i < count % len(radii) else 0) for i in range(len(radii))]
    pts = []
    for r, c in zip(radii, per):
        offset = rng.uniform(0, 2 * np.pi)
        for j in range(c):
            theta = offset + 2 * np.pi * j / c
            for attempt in range(32):
                z = center + r * np.exp(1j * (theta + attempt * 0.37 * np.pi / c))
                if accept is None or accept(z):
                    pts.append(z)
                    break
    return np.array(pts, dtype=complex)


@dataclass
class SingleValuedVerdict:
    holds: bool
    residual: float
    tol: float
    witness: dict | None = None
    checks: int = 0


def verify_single_valued(fn, atlas, tol: float = 1e-7, base_points: int = 3) -> SingleValuedVerdict:
    """Check that ``fn`` returns to its value after a loop around each affix.

    ``fn(k, sheet)`` evaluates a matrix function at ``k`` on atlas sheet
    ``sheet``.  For each affix and each of ``base_points`` points near it,
    every sheet's radical values are continued around a positive loop; the
    sheet reached is identified numerically and ``fn`` on the start and end
    sheets is compared.
    """
    worst = 0.0
    witness = None
    checks = 0
    for affix in atlas.affixes:
        for p, loop in atlas.geometry.local_loops(affix, base_points):
            start_vals = atlas.sheet_radicals(p)
            end_vals = atlas.continue_radicals(loop, start_vals)
            ends = atlas.match_sheets(p, end_vals, start_vals)
            for s, t in enumerate(ends):
                a = np.asarray(fn(p, s))
                b = np.asarray(fn(p, t))
                scale = max(float(np.abs(a).max()), float(np.abs(b).max()), 1e-300)
                r = float(np.abs(a - b).max()) / scale
                checks += 1
                if r > worst:
                    worst = r
                    witness = {"affix": affix.value, "base_point": p, "from_sheet": s, "to_sheet": t}
    holds = worst < tol
    return SingleValuedVerdict(holds, worst, tol, None if holds else witness, checks)
