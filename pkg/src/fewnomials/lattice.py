"""Lattice spectra for sparse polynomial ensembles.

A spectrum is a finite set of exponent multi-indices, drawn either from a
dilated standard simplex {a : a_j >= 0, |a| <= N} or from an explicit convex
polytope with rational vertices.  Sampling is exactly uniform over f-subsets
(partial Fisher-Yates over the enumerated index range), and polytope
membership is decided with exact rational arithmetic so boundary points are
never misclassified.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class EmptySpectrumError(ValueError):
    """Raised when a lattice region contains no integer points."""


@dataclass(frozen=True)
class LatticePoint:
    """One exponent multi-index together with the ambient degree bound."""

    coords: tuple[int, ...]
    ambient_degree: int

    def __post_init__(self):
        if any(c < 0 for c in self.coords):
            raise ValueError("exponents must be nonnegative")
        if sum(self.coords) > self.ambient_degree:
            raise ValueError("|alpha| exceeds the ambient degree")

    @property
    def m(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class NewtonPolytope:
    """Convex polytope with rational vertices inside scale * simplex.

    Supports m = 1 (an interval) and m = 2 (a polygon).  Vertices may be
    given in any order; the convex hull is taken.
    """

    vertices: tuple[tuple[Fraction, ...], ...]
    scale: int

    def __post_init__(self):
        verts = tuple(tuple(Fraction(c) for c in v) for v in self.vertices)
        if not verts:
            raise ValueError("a polytope needs at least one vertex")
        m = len(verts[0])
        if m not in (1, 2):
            raise ValueError("only m = 1 and m = 2 polytopes are supported")
        for v in verts:
            if len(v) != m:
                raise ValueError("inconsistent vertex dimensions")
            if any(c < 0 for c in v) or sum(v) > self.scale:
                raise ValueError("vertex outside the scaled simplex")
        if m == 2:
            verts = _convex_hull_2d(verts)
        else:
            verts = tuple(sorted(set(verts)))
        object.__setattr__(self, "vertices", verts)

    @property
    def m(self) -> int:
        return len(self.vertices[0])

    def contains(self, point) -> bool:
        """Exact membership test for a rational/integer point."""
        p = tuple(Fraction(c) for c in point)
        if self.m == 1:
            return self.vertices[0][0] <= p[0] <= self.vertices[-1][0]
        verts = self.vertices
        if len(verts) == 1:
            return p == verts[0]
        if len(verts) == 2:
            return _on_segment(verts[0], verts[1], p)
        for i in range(len(verts)):
            a, b = verts[i], verts[(i + 1) % len(verts)]
            if _cross(a, b, p) < 0:
                return False
        return True


def _cross(a, b, c) -> Fraction:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    if _cross(a, b, p) != 0:
        return False
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(
        a[1], b[1]
    )


def _convex_hull_2d(points):
    """Monotone-chain hull over exact rationals, counterclockwise."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return tuple(pts)
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:  # collinear input collapses to a segment
        return tuple(pts[:1] + pts[-1:])
    return tuple(hull)


@dataclass(frozen=True)
class Spectrum:
    """An ordered set of distinct exponents with its ambient degree.

    Points are stored lexicographically sorted, which makes equality and
    deduplication well defined.
    """

    points: tuple[tuple[int, ...], ...]
    degree: int
    polytope_tag: str = "simplex"

    def __post_init__(self):
        pts = tuple(tuple(int(c) for c in p) for p in self.points)
        if not pts:
            raise EmptySpectrumError("a spectrum needs at least one exponent")
        if len(set(pts)) != len(pts):
            raise ValueError("spectrum exponents must be distinct")
        m = len(pts[0])
        for p in pts:
            if len(p) != m:
                raise ValueError("inconsistent exponent dimensions")
            if any(c < 0 for c in p) or sum(p) > self.degree:
                raise ValueError("exponent outside the degree-N simplex")
        object.__setattr__(self, "points", tuple(sorted(pts)))

    @property
    def m(self) -> int:
        return len(self.points[0])

    @property
    def fewnomial_number(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=np.int64)


def enumerate_lattice(N: int, m: int, polytope: NewtonPolytope | None = None) -> list[LatticePoint]:
    """All exponents a with a_j >= 0 and |a| <= N, or a/N in the polytope.

    The simplex count is exactly binom(N+m, m).  An empty polytope
    intersection raises EmptySpectrumError.
    """
    if N < 0 or m < 1:
        raise ValueError("need N >= 0 and m >= 1")
    pts: list[tuple[int, ...]] = []
    if polytope is None:
        for alpha in _simplex_points(N, m):
            pts.append(alpha)
    else:
        if polytope.m != m:
            raise ValueError("polytope dimension mismatch")
        if N == 0:
            candidates = [(0,) * m]
        else:
            cap = N * polytope.scale
            if m == 1:
                candidates = [(a,) for a in range(cap + 1)]
            else:
                candidates = [
                    (a, b) for a in range(cap + 1) for b in range(cap - a + 1)
                ]
        for alpha in candidates:
            frac = tuple(Fraction(a, max(N, 1)) for a in alpha)
            if polytope.contains(frac):
                pts.append(alpha)
        if not pts:
            raise EmptySpectrumError("polytope contains no lattice points at this degree")
    degree = N if polytope is None else N * polytope.scale
    return [LatticePoint(p, degree) for p in sorted(pts)]


def _simplex_points(N: int, m: int):
    if m == 1:
        for a in range(N + 1):
            yield (a,)
        return
    for head in range(N + 1):
        for tail in _simplex_points(N - head, m - 1):
            yield (head,) + tail


def lattice_size(N: int, m: int) -> int:
    """binom(N+m, m), the simplex lattice point count."""
    return math.comb(N + m, m)


def count_spectra(N: int, m: int, f: int) -> int:
    """Number of f-element spectra inside the degree-N simplex (big integer)."""
    if f < 1:
        raise ValueError("fewnomial number must be >= 1")
    return math.comb(lattice_size(N, m), f)


def sample_spectrum_uniform(
    N: int,
    m: int,
    f: int,
    polytope: NewtonPolytope | None = None,
    rng: np.random.Generator | None = None,
) -> Spectrum:
    """Uniformly random f-subset of the lattice, deterministic given rng.

    Uses a partial Fisher-Yates shuffle over the enumerated lattice index
    range: draw f swap positions, no rejection loops, every f-subset equally
    likely.
    """
    if rng is None:
        raise ValueError("an explicitly seeded generator is required")
    points = enumerate_lattice(N, m, polytope)
    n = len(points)
    if f > n:
        raise ValueError(f"fewnomial number {f} exceeds lattice size {n}")
    idx = np.arange(n)
    for i in range(f):
        j = i + int(rng.integers(0, n - i))
        idx[i], idx[j] = idx[j], idx[i]
    chosen = [points[i].coords for i in idx[:f]]
    return Spectrum(
        points=tuple(chosen),
        degree=points[0].ambient_degree,
        polytope_tag="simplex" if polytope is None else "polytope",
    )


def dilate_spectrum(spectrum: Spectrum, N: int) -> Spectrum:
    """Scale every exponent by N; degree scales with it (S -> NS)."""
    if N < 1:
        raise ValueError("dilation factor must be >= 1")
    pts = tuple(tuple(N * c for c in p) for p in spectrum.points)
    return Spectrum(points=pts, degree=N * spectrum.degree, polytope_tag=spectrum.polytope_tag)


def spectrum_to_record(spectrum: Spectrum) -> str:
    """Text record "N m f; a1; a2; ..." with comma-separated multi-indices."""
    head = f"{spectrum.degree} {spectrum.m} {spectrum.fewnomial_number}"
    body = "; ".join(",".join(str(c) for c in p) for p in spectrum.points)
    return f"{head}; {body}"


def spectrum_from_record(record: str) -> Spectrum:
    """Inverse of spectrum_to_record."""
    parts = [p.strip() for p in record.split(";")]
    N, m, f = (int(x) for x in parts[0].split())
    pts = tuple(tuple(int(c) for c in p.split(",")) for p in parts[1:] if p)
    if len(pts) != f or (pts and len(pts[0]) != m):
        raise ValueError("malformed spectrum record")
    return Spectrum(points=pts, degree=N)
