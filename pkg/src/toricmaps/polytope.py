"""
Delzant polytopes described by facet inequalities.

A polytope P in R^m is stored as a list of facets, each with a primitive
integer inward normal v_r and a rational offset lambda_r, so that

    ell_r(x) = <x, v_r> + lambda_r >= 0  on P,  with equality on facet r.

Inward normals are used throughout so that ell_r > 0 in the interior and
log ell_r is defined there.  Vertices are derived from the facet data, never
supplied; the Delzant condition (the m facet normals meeting at each vertex
form a Z-basis) is verified at construction time with exact rational
arithmetic.  Lattice-point enumeration of the dilate kP is done with exact
integer/rational comparisons so boundary points are never misclassified.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "Facet",
    "DelzantPolytope",
    "LatticeSet",
    "facet_value",
    "lattice_points",
    "near_facets",
    "polytope_from_json",
    "polytope_to_json",
    "preset_polytope",
]


def _as_fraction(q) -> Fraction:
    """Coerce ints, strings like '1/3', and exact decimals to Fraction."""
    if isinstance(q, Fraction):
        return q
    if isinstance(q, int):
        return Fraction(q)
    if isinstance(q, str):
        return Fraction(q)
    if isinstance(q, float):
        # JSON floats: accept only values with a short exact decimal form.
        return Fraction(str(q))
    raise TypeError(f"cannot interpret offset {q!r} as a rational number")


@dataclass(frozen=True)
class Facet:
    """One facet inequality ell(x) = <x, normal> + offset >= 0."""

    normal: tuple[int, ...]
    offset: Fraction

    def __post_init__(self):
        normal = tuple(int(v) for v in self.normal)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", _as_fraction(self.offset))
        if all(v == 0 for v in normal):
            raise ValueError("facet normal must be nonzero")
        if math.gcd(*(abs(v) for v in normal)) != 1:
            raise ValueError(f"facet normal {normal} is not primitive")

    def value(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(x @ np.asarray(self.normal, dtype=float) + float(self.offset))

    def value_exact(self, x: Sequence[Fraction | int]) -> Fraction:
        acc = Fraction(0)
        for xi, vi in zip(x, self.normal):
            acc += Fraction(xi) * vi
        return acc + self.offset


def _solve_exact(rows: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction] | None:
    """Solve a square rational system by Gaussian elimination; None if singular."""
    m = len(rows)
    a = [row[:] + [rhs[i]] for i, row in enumerate(rows)]
    for col in range(m):
        piv = next((r for r in range(col, m) if a[r][col] != 0), None)
        if piv is None:
            return None
        a[col], a[piv] = a[piv], a[col]
        inv = Fraction(1) / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for r in range(m):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [vr - f * vc for vr, vc in zip(a[r], a[col])]
    return [a[r][m] for r in range(m)]


def _det_exact(rows: list[list[int]]) -> Fraction:
    m = len(rows)
    a = [[Fraction(v) for v in row] for row in rows]
    det = Fraction(1)
    for col in range(m):
        piv = next((r for r in range(col, m) if a[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        inv = Fraction(1) / a[col][col]
        for r in range(col + 1, m):
            if a[r][col] != 0:
                f = a[r][col] * inv
                a[r] = [vr - f * vc for vr, vc in zip(a[r], a[col])]
    return det


@dataclass(frozen=True)
class DelzantPolytope:
    """Bounded Delzant polytope cut out by facet inequalities ell_r >= 0."""

    dim: int
    facets: tuple[Facet, ...]
    vertices: tuple[tuple[Fraction, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        facets = tuple(self.facets)
        object.__setattr__(self, "facets", facets)
        if len(facets) < self.dim + 1:
            raise ValueError("a bounded polytope needs at least dim+1 facets")
        for f in facets:
            if len(f.normal) != self.dim:
                raise ValueError("facet normal dimension mismatch")
        self._check_bounded_with_interior()
        object.__setattr__(self, "vertices", self._enumerate_vertices())
        self._check_delzant()
        object.__setattr__(self, "_normals_f",
                           np.array([f.normal for f in facets], dtype=float))
        object.__setattr__(self, "_offsets_f",
                           np.array([float(f.offset) for f in facets]))

    # -- validation -------------------------------------------------------

    def _check_bounded_with_interior(self):
        normals = np.array([f.normal for f in self.facets], dtype=float)
        offsets = np.array([float(f.offset) for f in self.facets])
        # Recession cone {d : <d, v_r> >= 0 for all r} must be {0}.
        for i in range(self.dim):
            for sign in (+1.0, -1.0):
                c = np.zeros(self.dim)
                c[i] = -sign  # maximize sign * d_i
                res = linprog(c, A_ub=-normals, b_ub=np.zeros(len(self.facets)),
                              bounds=[(-1.0, 1.0)] * self.dim, method="highs")
                if res.status != 0 or -res.fun > 1e-9:
                    raise ValueError("polytope is unbounded (nontrivial recession cone)")
        # Nonempty interior: maximize s subject to ell_r(x) >= s.
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        A = np.hstack([-normals, np.ones((len(self.facets), 1))])
        res = linprog(c, A_ub=A, b_ub=offsets,
                      bounds=[(None, None)] * self.dim + [(None, 1e6)], method="highs")
        if res.status != 0 or -res.fun <= 1e-12:
            raise ValueError("polytope has empty interior")

    def _enumerate_vertices(self) -> tuple[tuple[Fraction, ...], ...]:
        verts: dict[tuple[Fraction, ...], None] = {}
        for subset in itertools.combinations(range(len(self.facets)), self.dim):
            rows = [[Fraction(v) for v in self.facets[r].normal] for r in subset]
            rhs = [-self.facets[r].offset for r in subset]
            x = _solve_exact(rows, rhs)
            if x is None:
                continue
            if all(f.value_exact(x) >= 0 for f in self.facets):
                verts[tuple(x)] = None
        if not verts:
            raise ValueError("no vertices found; facet data does not bound a polytope")
        return tuple(verts.keys())

    def _check_delzant(self):
        for v in self.vertices:
            active = [r for r, f in enumerate(self.facets) if f.value_exact(v) == 0]
            if len(active) != self.dim:
                raise ValueError(
                    f"vertex {v} lies on {len(active)} facets; polytope is not simple")
            det = _det_exact([list(self.facets[r].normal) for r in active])
            if abs(det) != 1:
                raise ValueError(
                    f"facet normals at vertex {v} have determinant {det}; "
                    "Delzant condition fails")

    # -- convenience ------------------------------------------------------

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    def ell(self, x) -> np.ndarray:
        """All facet values ell_r(x); x is a point or an array of points (..., dim).

        For dim-1 polytopes plain scalars/arrays of x values are accepted.
        """
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return x @ self._normals_f.T + self._offsets_f

    def contains(self, x, tol: float = 0.0) -> bool:
        return bool(np.all(self.ell(x) >= -tol))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        v = np.array([[float(c) for c in vert] for vert in self.vertices])
        return v.min(axis=0), v.max(axis=0)

    def vertex_array(self) -> np.ndarray:
        return np.array([[float(c) for c in vert] for vert in self.vertices])


@dataclass(frozen=True)
class LatticeSet:
    """Integer points of the dilate kP, each exactly once."""

    level: int
    points: np.ndarray  # shape (n, m), dtype int64, lexicographically sorted

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.int64))
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def index_of(self, alpha) -> int:
        alpha = tuple(int(a) for a in np.atleast_1d(alpha))
        matches = np.nonzero((self.points == alpha).all(axis=1))[0]
        if matches.size == 0:
            raise KeyError(f"lattice point {alpha} not in level-{self.level} set")
        return int(matches[0])


def facet_value(P: DelzantPolytope, r: int, x) -> float:
    """ell_r(x); nonnegative iff x lies on the inner side of facet r (0-based r)."""
    if not 0 <= r < P.n_facets:
        raise IndexError(f"facet index {r} out of range [0, {P.n_facets})")
    return P.facets[r].value(x)


def lattice_points(P: DelzantPolytope, k: int) -> LatticeSet:
    """Enumerate kP ∩ Z^m by a bounding-box scan with exact membership tests."""
    if k < 1:
        raise ValueError(f"level k must be >= 1, got {k}")
    lo, hi = P.bounding_box()
    lo_i = [math.floor(k * l - 1e-9) for l in lo]
    hi_i = [math.ceil(k * h + 1e-9) for h in hi]
    # Membership of alpha in kP: <alpha, v_r> + k*lambda_r >= 0 exactly.
    pts = []
    for alpha in itertools.product(*[range(a, b + 1) for a, b in zip(lo_i, hi_i)]):
        ok = True
        for f in P.facets:
            val = sum(a * v for a, v in zip(alpha, f.normal)) + k * f.offset
            if val < 0:
                ok = False
                break
        if ok:
            pts.append(alpha)
    pts.sort()
    return LatticeSet(level=k, points=np.array(pts, dtype=np.int64).reshape(len(pts), P.dim))


def near_facets(P: DelzantPolytope, x, delta: float, tol: float = 1e-9):
    """Facets with ell_r(x) < delta, and how many there are.

    Rejects x outside P beyond `tol`.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    ell = P.ell(x)
    if np.any(ell < -tol):
        raise ValueError(f"point {x} lies outside the polytope (min ell = {ell.min():.3g})")
    idx = tuple(int(r) for r in np.nonzero(ell < delta)[0])
    return idx, len(idx)


# -- serialization and presets ---------------------------------------------

def polytope_to_json(P: DelzantPolytope) -> str:
    doc = {
        "dim": P.dim,
        "facets": [
            {"normal": list(f.normal), "offset": str(f.offset)} for f in P.facets
        ],
    }
    return json.dumps(doc)


def polytope_from_json(doc) -> DelzantPolytope:
    """Build a polytope from {"dim": m, "facets": [{"normal": [...], "offset": q}]}."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    facets = tuple(
        Facet(tuple(f["normal"]), _as_fraction(f["offset"])) for f in doc["facets"]
    )
    return DelzantPolytope(dim=int(doc["dim"]), facets=facets)


_PRESETS = {
    "interval": {
        "dim": 1,
        "facets": [
            {"normal": [1], "offset": 0},   # ell_0 = x
            {"normal": [-1], "offset": 1},  # ell_1 = 1 - x
        ],
    },
    "simplex2": {
        "dim": 2,
        "facets": [
            {"normal": [1, 0], "offset": 0},
            {"normal": [0, 1], "offset": 0},
            {"normal": [-1, -1], "offset": 1},
        ],
    },
    "square": {
        "dim": 2,
        "facets": [
            {"normal": [1, 0], "offset": 0},
            {"normal": [0, 1], "offset": 0},
            {"normal": [-1, 0], "offset": 1},
            {"normal": [0, -1], "offset": 1},
        ],
    },
}


def preset_polytope(name: str) -> DelzantPolytope:
    """Built-in polytopes: "interval" ([0,1]), "simplex2", "square"."""
    try:
        doc = _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown polytope preset {name!r}; "
                       f"available: {sorted(_PRESETS)}") from None
    return polytope_from_json(json.dumps(doc))
