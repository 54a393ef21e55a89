"""Cube tiling by 24 congruent tetrahedra, mollifiers and smeared indicators.

Tile ``j`` of the unit cube ``(-1/2, 1/2)^3`` is the hull of the cube center,
one face center and the two endpoints of one edge of that face. Tiles are
ordered face by face (``+x, -x, +y, -y, +z, -z``); within a face with
remaining axes ``b < c`` the edges are ``c = -1/2, c = +1/2, b = -1/2,
b = +1/2``. The reference tetrahedron is tile 1 recentered at its barycenter.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, ndimage
from scipy.spatial import ConvexHull, QhullError

from .errors import InputError, PreconditionError

F = Fraction
HALF = F(1, 2)


# --------------------------------------------------------------------------
# exact tiling

@dataclass(frozen=True)
class Tetrahedron:
    """A tile with exact rational vertices.

    ``rotation`` and ``translation`` give the isometry ``mu_j = (z_j, R_j)``
    with ``tile_j = R_j Delta - z_j`` for the reference tetrahedron ``Delta``.
    """

    vertices: tuple
    rotation: tuple = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    translation: tuple = (F(0), F(0), F(0))

    def volume(self) -> Fraction:
        a, b, c, d = self.vertices
        m = [[b[i] - a[i] for i in range(3)], [c[i] - a[i] for i in range(3)],
             [d[i] - a[i] for i in range(3)]]
        return abs(_det3(m)) / 6

    def barycenter(self) -> tuple:
        return tuple(sum(v[i] for v in self.vertices) / 4 for i in range(3))

    def array(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for v in self.vertices])


def _det3(m) -> Fraction:
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def _face_edges():
    out = []
    for a in range(3):
        b, c = [x for x in range(3) if x != a]
        for s in (1, -1):
            for axis, t in ((c, -1), (c, 1), (b, -1), (b, 1)):
                out.append((a, s, axis, t))
    return out


FACE_EDGES = _face_edges()


def _raw_tiles():
    tiles = []
    for a, s, e, t in FACE_EDGES:
        fc = [F(0)] * 3
        fc[a] = s * HALF
        other = [x for x in range(3) if x not in (a, e)][0]
        p = list(fc)
        p[e] = t * HALF
        v1, v2 = list(p), list(p)
        v1[other], v2[other] = -HALF, HALF
        tiles.append(((F(0),) * 3, tuple(fc), tuple(v1), tuple(v2)))
    return tiles


def _proper_cube_rotations():
    rots = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            R = [[0] * 3 for _ in range(3)]
            for i in range(3):
                R[i][perm[i]] = signs[i]
            if _det3(R) == 1:
                rots.append(tuple(tuple(r) for r in R))
    return rots


def _apply(R, v):
    return tuple(sum(R[i][k] * v[k] for k in range(3)) for i in range(3))


@lru_cache(maxsize=1)
def base_tetrahedra() -> list:
    """The 24 tiles of the unit cube with exact vertices and isometries."""
    raw = _raw_tiles()
    ref = set(raw[0])
    c1 = tuple(sum(v[i] for v in raw[0]) / 4 for i in range(3))
    rots = _proper_cube_rotations()
    tiles = []
    for verts in raw:
        target = set(verts)
        R = next(R for R in rots if {_apply(R, v) for v in ref} == target)
        cj = _apply(R, c1)
        tiles.append(Tetrahedron(verts, R, tuple(-x for x in cj)))
    return tiles


@lru_cache(maxsize=1)
def reference_tetrahedron() -> np.ndarray:
    """Vertices of tile 1 shifted so its barycenter is the origin."""
    t = base_tetrahedra()[0]
    return t.array() - np.array([float(x) for x in t.barycenter()])


def tile_vertices(l: float, j: int, shrink: float = 1.0) -> np.ndarray:
    """Vertices of ``l * mu_j(shrink * Delta)`` for tile index ``j`` in 1..24."""
    t = base_tetrahedra()[j - 1]
    R = np.array(t.rotation, dtype=float)
    z = np.array([float(x) for x in t.translation])
    return l * ((shrink * reference_tetrahedron()) @ R.T - z)


def _planes_exact(verts):
    """Outward (normal, offset) pairs with ``n.x <= c`` inside, exact."""
    out = []
    for skip in range(4):
        p = [verts[i] for i in range(4) if i != skip]
        u = [p[1][i] - p[0][i] for i in range(3)]
        w = [p[2][i] - p[0][i] for i in range(3)]
        n = (u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0])
        c = sum(n[i] * p[0][i] for i in range(3))
        if sum(n[i] * verts[skip][i] for i in range(3)) > c:
            n, c = tuple(-x for x in n), -c
        out.append((n, c))
    return out


def _edges(verts):
    return [tuple(verts[j][k] - verts[i][k] for k in range(3))
            for i, j in itertools.combinations(range(4), 2)]


def interiors_disjoint(t1: Tetrahedron, t2: Tetrahedron) -> bool:
    """Exact separating-axis test: True iff the open tiles do not intersect."""
    axes = [n for n, _ in _planes_exact(t1.vertices)] + [n for n, _ in _planes_exact(t2.vertices)]
    for e1 in _edges(t1.vertices):
        for e2 in _edges(t2.vertices):
            n = (e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                 e1[0] * e2[1] - e1[1] * e2[0])
            if any(n):
                axes.append(n)
    for n in axes:
        p1 = [sum(n[i] * v[i] for i in range(3)) for v in t1.vertices]
        p2 = [sum(n[i] * v[i] for i in range(3)) for v in t2.vertices]
        if max(p1) <= min(p2) or max(p2) <= min(p1):
            return True
    return False


# --------------------------------------------------------------------------
# point location

def planes(verts: np.ndarray):
    """Unit outward normals ``N`` (4x3) and offsets ``c`` with ``N x <= c`` inside."""
    N = np.empty((4, 3))
    c = np.empty(4)
    for skip in range(4):
        p = verts[[i for i in range(4) if i != skip]]
        n = np.cross(p[1] - p[0], p[2] - p[0])
        n /= np.linalg.norm(n)
        off = n @ p[0]
        if n @ verts[skip] > off:
            n, off = -n, -off
        N[skip], c[skip] = n, off
    return N, c


def inside_tetra(points: np.ndarray, verts: np.ndarray, slack: float = 0.0) -> np.ndarray:
    """Membership test by signed plane distances (closed set grown by ``slack``)."""
    N, c = planes(verts)
    return np.all(points @ N.T <= c + slack, axis=-1)


def boundary_distance(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Signed distance to the nearest face plane, positive inside."""
    N, c = planes(verts)
    return np.min(c - points @ N.T, axis=-1)


_LOOKUP = {fe: i for i, fe in enumerate(FACE_EDGES)}


def locate_tile(points: np.ndarray) -> np.ndarray:
    """Index (0-based) of the base tile containing each point of the unit cube."""
    q = np.asarray(points, dtype=float)
    a = np.argmax(np.abs(q), axis=1)
    idx = np.arange(len(q))
    s = np.where(q[idx, a] >= 0, 1, -1)
    others = np.array([[1, 2], [0, 2], [0, 1]])[a]
    qb = q[idx, others[:, 0]]
    qc = q[idx, others[:, 1]]
    use_c = np.abs(qc) >= np.abs(qb)
    e = np.where(use_c, others[:, 1], others[:, 0])
    t = np.where(np.where(use_c, qc, qb) >= 0, 1, -1)
    table = np.full((3, 2, 3, 2), -1, dtype=int)
    for (fa, fs, fe, ft), i in _LOOKUP.items():
        table[fa, (1 - fs) // 2, fe, (1 - ft) // 2] = i
    return table[a, (1 - s) // 2, e, (1 - t) // 2]


# --------------------------------------------------------------------------
# mollifier

def _bump(s):
    s = np.asarray(s, dtype=float)
    inside = s < 1
    out = np.zeros_like(s)
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def mollifier_constant(dim: int = 3) -> float:
    """``c`` with ``int c exp(-1/(1-|x|^2)) dx = 1`` over the unit ball."""
    area = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    val, _ = integrate.quad(lambda r: r ** (dim - 1) * math.exp(-1 / (1 - r * r)), 0, 1,
                            epsabs=0, epsrel=1e-13, limit=200)
    return 1.0 / (area * val)


def mollifier(x, delta: float, dim: int = 3) -> np.ndarray:
    """``eta_delta(x) = (10/delta)^d eta_1(10 x / delta)``; ``x`` has shape (..., d)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1) if x.ndim and x.shape[-1] == dim else np.abs(x)
    return mollifier_constant(dim) * (10 / delta) ** dim * _bump(10 * r / delta)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (3 - math.sqrt(5)) * i
    rr = np.sqrt(1 - z * z)
    return np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=1)


@lru_cache(maxsize=32)
def _unit_nodes(dim: int, n_r: int, n_ang: int):
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (x + 1)
    wr = 0.5 * w * r ** (dim - 1) * _bump(r)
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif dim == 2:
        th = 2 * math.pi * (np.arange(n_ang) + 0.5) / n_ang
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        dirs = _fibonacci_sphere(n_ang)
    pts = (r[:, None, None] * dirs[None]).reshape(-1, dim)
    wts = np.repeat(wr, len(dirs))
    return pts, wts / wts.sum()


def mollifier_nodes(delta: float, dim: int = 3, n_r: int = 12, n_ang: int = 96):
    """Quadrature nodes and weights (summing to 1) for averages against ``eta_delta``."""
    pts, wts = _unit_nodes(dim, n_r, n_ang)
    return pts * (delta / 10), wts


@lru_cache(maxsize=4)
def _radial_inverse_cdf(dim: int = 3, n: int = 4001):
    r = np.linspace(0, 1, n)
    dens = r ** (dim - 1) * _bump(r)
    cdf = np.concatenate([[0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(r))])
    return cdf / cdf[-1], r


def sample_mollifier(rng: np.random.Generator, size: int, delta: float) -> np.ndarray:
    """Random vectors distributed with density ``eta_delta`` in three dimensions."""
    cdf, r = _radial_inverse_cdf(3)
    rad = np.interp(rng.random(size), cdf, r) * delta / 10
    v = rng.normal(size=(size, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return rad[:, None] * v


# --------------------------------------------------------------------------
# regions

@dataclass(frozen=True)
class Isometry:
    """Map ``x -> R x - tau`` (rotation then translation)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def pull_back(self, verts: np.ndarray) -> np.ndarray:
        """Points ``x`` with ``R x - tau`` equal to the given vertices."""
        R = np.asarray(self.rotation, dtype=float)
        return (verts + np.asarray(self.translation, dtype=float)) @ R


@dataclass
class Grid:
    """Uniform node grid ``origin + i h`` with ``shape`` nodes per axis.

    Node ``i`` owns the cell ``[x_i - h/2, x_i + h/2]^d``.
    """

    origin: np.ndarray
    h: float
    shape: tuple

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.shape = tuple(int(s) for s in self.shape)

    @property
    def dim(self) -> int:
        return len(self.shape)

    def axes(self):
        return [self.origin[a] + self.h * np.arange(n) for a, n in enumerate(self.shape)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def bounds(self):
        lo = self.origin - self.h / 2
        return lo, lo + self.h * np.array(self.shape)

    @classmethod
    def around(cls, lo, hi, h: float, margin: float):
        lo = np.asarray(lo, dtype=float) - margin
        hi = np.asarray(hi, dtype=float) + margin
        shape = np.ceil((hi - lo) / h).astype(int)
        return cls(lo + h / 2, h, tuple(shape))


class Region:
    dim = 3

    def contains(self, points):  # pragma: no cover - interface
        raise NotImplementedError

    def bbox(self):  # pragma: no cover - interface
        raise NotImplementedError

    def volume(self) -> float:  # pragma: no cover - interface
        raise NotImplementedError

    def cell_fractions(self, grid: Grid) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


def _halfspace_cube_fraction(n, d):
    """Volume of ``[0,1]^3 ∩ {n.u <= d}`` for one normal ``n`` and many ``d``."""
    n = np.asarray(n, dtype=float)
    d = np.asarray(d, dtype=float).copy()
    neg = n < 0
    d -= n[neg].sum()
    n = np.abs(n)
    nz = n[n > 0]
    k = len(nz)
    if k == 0:
        return (d >= 0).astype(float)
    total = np.zeros_like(d)
    for S in itertools.product((0, 1), repeat=k):
        shift = float(np.dot(S, nz))
        total += (-1) ** sum(S) * np.maximum(d - shift, 0.0) ** k
    return np.clip(total / (math.factorial(k) * np.prod(nz)), 0.0, 1.0)


def polytope_volume(N: np.ndarray, c: np.ndarray) -> float:
    """Volume of the bounded polytope ``{x : N x <= c}`` by vertex enumeration."""
    m = len(c)
    trip = np.array(list(itertools.combinations(range(m), 3)))
    A = N[trip]
    b = c[trip]
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-12
    if not np.any(ok):
        return 0.0
    X = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    scale = 1e-10 * max(1.0, float(np.max(np.abs(c))))
    feas = np.all(X @ N.T <= c + scale, axis=1)
    V = X[feas]
    if len(V) < 4:
        return 0.0
    V = np.unique(np.round(V, 13), axis=0)
    if len(V) < 4 or np.linalg.matrix_rank(V[1:] - V[0], tol=1e-12) < 3:
        return 0.0
    try:
        return float(ConvexHull(V).volume)
    except QhullError:
        return 0.0


class TetraRegion(Region):
    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=float)
        self.N, self.c = planes(self.vertices)

    def contains(self, points):
        return np.all(np.asarray(points) @ self.N.T <= self.c, axis=-1)

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def volume(self) -> float:
        a = self.vertices
        return abs(np.linalg.det(a[1:] - a[0])) / 6

    def cell_fractions(self, grid: Grid) -> np.ndarray:
        h = grid.h
        X = grid.points()
        S = X @ self.N.T - self.c                     # signed plane distances
        reach = 0.5 * h * np.abs(self.N).sum(axis=1)
        inside = S + reach <= 0
        outside = S - reach >= 0
        frac = np.zeros(len(X))
        full = np.all(inside, axis=1)
        frac[full] = 1.0
        cut = ~full & ~np.any(outside, axis=1)
        ncut = (~inside).sum(axis=1)
        single = cut & (ncut == 1)
        for f in range(4):
            sel = single & ~inside[:, f]
            if not np.any(sel):
                continue
            n = self.N[f]
            if np.min(np.abs(n[np.abs(n) > 1e-12]), initial=1.0) < 1e-3:
                ncut[sel] = 2                         # near-degenerate normal
                continue
            lo = X[sel] - h / 2
            d = (self.c[f] - lo @ n) / h
            frac[sel] = _halfspace_cube_fraction(n, d)
        multi = cut & (ncut >= 2)
        cubeN = np.vstack([np.eye(3), -np.eye(3)])
        for i in np.flatnonzero(multi):
            cc = np.concatenate([X[i] + h / 2, -(X[i] - h / 2)])
            N = np.vstack([cubeN, self.N])
            c = np.concatenate([cc, self.c])
            frac[i] = polytope_volume(N, c) / h ** 3
        return frac.reshape(grid.shape)


class CubeRegion(Region):
    def __init__(self, center, side: float):
        self.center = np.asarray(center, dtype=float)
        self.side = float(side)

    def contains(self, points):
        return np.all(np.abs(np.asarray(points) - self.center) <= self.side / 2, axis=-1)

    def bbox(self):
        return self.center - self.side / 2, self.center + self.side / 2

    def volume(self) -> float:
        return self.side ** 3

    def cell_fractions(self, grid: Grid) -> np.ndarray:
        lo, hi = self.bbox()
        parts = []
        for a, x in enumerate(grid.axes()):
            ov = np.minimum(x + grid.h / 2, hi[a]) - np.maximum(x - grid.h / 2, lo[a])
            parts.append(np.clip(ov / grid.h, 0, 1))
        return np.einsum("i,j,k->ijk", *parts)


class BallRegion(Region):
    """Ball; boundary cells are resolved by 16^3 sub-sampling (not exact)."""

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def contains(self, points):
        return np.linalg.norm(np.asarray(points) - self.center, axis=-1) <= self.radius

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def volume(self) -> float:
        return 4 / 3 * math.pi * self.radius ** 3

    def cell_fractions(self, grid: Grid) -> np.ndarray:
        X = grid.points()
        dist = np.linalg.norm(X - self.center, axis=1)
        half_diag = grid.h * math.sqrt(3) / 2
        frac = (dist + half_diag <= self.radius).astype(float)
        edge = np.flatnonzero(np.abs(dist - self.radius) < half_diag)
        m = 16
        sub = (np.arange(m) + 0.5) / m - 0.5
        offs = grid.h * np.stack(np.meshgrid(sub, sub, sub, indexing="ij"), -1).reshape(-1, 3)
        for chunk in np.array_split(edge, max(1, len(edge) // 2000)):
            P = X[chunk][:, None, :] + offs[None]
            frac[chunk] = np.mean(np.linalg.norm(P - self.center, axis=-1) <= self.radius, axis=1)
        return frac.reshape(grid.shape)


class Interval(Region):
    """One-dimensional interval ``[a, b]``."""

    dim = 1

    def __init__(self, a: float, b: float):
        self.a, self.b = float(a), float(b)

    def contains(self, points):
        p = np.asarray(points, dtype=float).reshape(-1)
        return (p >= self.a) & (p <= self.b)

    def bbox(self):
        return np.array([self.a]), np.array([self.b])

    def volume(self) -> float:
        return self.b - self.a

    def cell_fractions(self, grid: Grid) -> np.ndarray:
        x = grid.axes()[0]
        ov = np.minimum(x + grid.h / 2, self.b) - np.maximum(x - grid.h / 2, self.a)
        return np.clip(ov / grid.h, 0, 1)


# --------------------------------------------------------------------------
# smeared fields

@dataclass
class SmearedField:
    grid: Grid
    values: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    def integral(self) -> float:
        return float(self.values.sum()) * self.grid.h ** self.grid.dim


def _discrete_kernel(delta: float, h: float, dim: int) -> np.ndarray:
    m = int(math.floor(delta / 10 / h))
    ax = np.arange(-m, m + 1) * h
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    r = np.sqrt(sum(x * x for x in mesh))
    K = _bump(10 * r / delta)
    return K / K.sum()


def smear(region: Region, delta: float, grid: Grid, kind: str = "indicator_conv",
          scale: float = 1.0, params: Optional[dict] = None) -> SmearedField:
    """``scale * (1_region * eta_delta)`` on a node grid.

    The indicator is first averaged exactly over each grid cell (planar cuts in
    closed form, multi-plane cuts by vertex enumeration), then convolved with
    the normalized sampled mollifier. Mass is therefore conserved to rounding.
    Nodes deeper than ``delta/10 + h sqrt(d)/2`` inside the region carry the
    value ``scale`` exactly; nodes farther than that outside carry 0.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    if grid.h > delta / 30 * (1 + 1e-9):
        raise InputError(f"grid spacing {grid.h:g} does not resolve delta/30 = {delta / 30:g}")
    lo, hi = region.bbox()
    glo, ghi = grid.bounds()
    if np.any(lo - delta / 10 < glo - 1e-12) or np.any(hi + delta / 10 > ghi + 1e-12):
        raise InputError("region plus mollifier support leaves the grid")
    frac = region.cell_fractions(grid)
    K = _discrete_kernel(delta, grid.h, grid.dim)
    vals = ndimage.convolve(frac, K, mode="constant", cval=0.0)
    vals = np.clip(vals, 0.0, 1.0) * scale
    return SmearedField(grid, vals, kind, dict(params or {}, delta=delta))


def tile_region(l: float, j: int, shrink: float = 1.0,
                isometry: Optional[Isometry] = None) -> TetraRegion:
    verts = tile_vertices(l, j, shrink)
    if isometry is not None:
        verts = isometry.pull_back(verts)
    return TetraRegion(verts)


def chi_shrink(l: float, delta: float) -> float:
    return 1.0 - delta / l


def partition_field(kind: str, l: float, delta: float, j: int,
                    isometry: Optional[Isometry] = None,
                    grid: Optional[Grid] = None) -> SmearedField:
    """Smeared tile fields ``chi_{l,delta,j}`` or ``xi_{l,delta,j}``.

    ``chi`` uses the tile shrunk by ``1 - delta/l`` about its barycenter and
    the amplitude ``(1 - delta/l)^-3``; ``xi`` smears the full tile.
    """
    if kind not in ("chi", "xi"):
        raise InputError("kind must be 'chi' or 'xi'")
    if not 1 <= j <= 24:
        raise InputError("tile index must be in 1..24")
    if kind == "chi" and delta > l / 2:
        raise PreconditionError("chi needs delta <= l/2")
    shrink = chi_shrink(l, delta) if kind == "chi" else 1.0
    region = tile_region(l, j, shrink, isometry)
    if grid is None:
        lo, hi = tile_region(l, j, 1.0, isometry).bbox()
        grid = Grid.around(lo, hi, delta / 30, delta / 10 + delta / 15)
    amp = shrink ** -3 if kind == "chi" else 1.0
    return smear(region, delta, grid, kind="chi_upper" if kind == "chi" else "xi_lower",
                 scale=amp, params={"l": l, "j": j})


def smeared_at(points: np.ndarray, region: Region, delta: float,
               n_r: int = 12, n_ang: int = 96) -> np.ndarray:
    """Pointwise ``(1_region * eta_delta)(x)`` by mollifier-node quadrature."""
    pts = np.asarray(points, dtype=float)
    dim = region.dim
    pts = pts.reshape(-1, dim)
    Y, w = mollifier_nodes(delta, dim, n_r, n_ang)
    out = np.zeros(len(pts))
    for chunk in np.array_split(np.arange(len(pts)), max(1, len(pts) * len(w) // 2_000_000)):
        P = pts[chunk][:, None, :] - Y[None]
        inside = region.contains(P.reshape(-1, dim)).reshape(len(chunk), len(w))
        out[chunk] = inside @ w
    return out


def _xi_sum(points: np.ndarray, l: float) -> np.ndarray:
    """``sum_z sum_j 1_{l Delta_j}(p - l z)`` by independent membership tests."""
    total = np.zeros(len(points))
    base = np.floor(points / l + 0.5)
    tiles = [tile_vertices(l, j) for j in range(1, 25)]
    for dz in itertools.product((-1, 0, 1), repeat=3):
        q = points - l * (base + np.array(dz))
        near = np.all(np.abs(q) <= l / 2 + 1e-12, axis=1)
        if not np.any(near):
            continue
        qn = q[near]
        cnt = np.zeros(len(qn))
        for verts in tiles:
            cnt += inside_tetra(qn, verts)
        total[near] += cnt
    return total


def _column_lengths(qxy: np.ndarray, Ns: np.ndarray, cs: np.ndarray, l: float) -> np.ndarray:
    """Total length of ``{q_z in [-l/2, l/2) : (qx, qy, q_z) in some tile}``.

    Each tile is convex, so a vertical line meets it in one interval whose
    ends follow from the four face inequalities.
    """
    total = np.zeros(len(qxy))
    for N, c in zip(Ns, cs):
        rhs = c[None, :] - qxy @ N[:, :2].T          # n_z q_z <= rhs
        nz = N[:, 2]
        lo = np.full(len(qxy), -l / 2)
        hi = np.full(len(qxy), l / 2)
        for f in range(4):
            if nz[f] > 1e-14:
                hi = np.minimum(hi, rhs[:, f] / nz[f])
            elif nz[f] < -1e-14:
                lo = np.maximum(lo, rhs[:, f] / nz[f])
            else:
                hi = np.where(rhs[:, f] >= 0, hi, -np.inf)
        total += np.maximum(hi - lo, 0.0)
    return total


def partition_residual(kind: str, l: float, delta: float, sample_points,
                       quad_res: int = 32, n_r: int = 6, n_ang: int = 32,
                       method: str = "sobol", seed: int = 0) -> float:
    """Maximal deviation from 1 of a partition-of-unity identity.

    ``xi``: ``sum_z sum_j xi_j(x - l z)``, summed directly over tiles and
    neighbouring cells. ``chi_averaged``: the same sum for ``chi`` averaged over
    translations ``tau`` in the cube with ``quad_res^3`` translation nodes per
    mollifier node. ``method="sobol"`` draws an independently scrambled Sobol
    set for every mollifier node (randomized quasi-Monte Carlo);
    ``method="midpoint"`` uses the tensor midpoint rule, which is biased here
    because many tile faces are parallel to grid planes; ``method="lines"``
    integrates exactly along ``tau_z`` with a midpoint rule across.
    """
    x = np.atleast_2d(np.asarray(sample_points, dtype=float))
    Y, w = mollifier_nodes(delta, 3, n_r, n_ang)
    if kind == "xi":
        res = 0.0
        for xi in x:
            vals = _xi_sum(xi[None, :] - Y, l)
            res = max(res, abs(float(vals @ w) - 1.0))
        return res
    if kind != "chi_averaged":
        raise InputError("kind must be 'xi' or 'chi_averaged'")
    if delta > l / 2:
        raise PreconditionError("chi needs delta <= l/2")
    if method not in ("sobol", "lines", "midpoint"):
        raise InputError("method must be 'sobol', 'lines' or 'midpoint'")
    s = chi_shrink(l, delta)
    Ns, cs = zip(*[planes(tile_vertices(l, j, s)) for j in range(1, 25)])
    Ns, cs = np.array(Ns), np.array(cs)
    g = (np.arange(quad_res) + 0.5) / quad_res * l - l / 2

    def covered(p):
        q = p - l * np.floor(p / l + 0.5)
        j = locate_tile(q / l)
        return np.all(np.einsum("nij,nj->ni", Ns[j], q) <= cs[j], axis=1).mean()

    if method == "sobol":
        from scipy.stats import qmc
        n = quad_res ** 3
        m = int(math.ceil(math.log2(n)))
        taus = [qmc.Sobol(3, scramble=True, seed=seed * 100_003 + k).random_base2(m) * l
                for k in range(len(w))]
    elif method == "midpoint":
        taus = [np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)] * len(w)
    else:
        txy = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    res = 0.0
    for xi in x:
        acc = 0.0
        for k, (yk, wk) in enumerate(zip(Y, w)):
            if method == "lines":
                p = xi[:2] - yk[:2] - txy
                q = p - l * np.floor(p / l + 0.5)
                acc += wk * _column_lengths(q, Ns, cs, l).mean() / l
            else:
                acc += wk * covered(xi - yk - taus[k])
        res = max(res, abs(acc / s ** 3 - 1.0))
    return res


def gradient_surface_ratio(region: Region, l: float, delta: float,
                           grid: Optional[Grid] = None):
    """``int |grad sqrt(1_region * eta_delta)|^2`` and its ratio to ``|region|/(l delta)``."""
    if grid is None:
        lo, hi = region.bbox()
        grid = Grid.around(lo, hi, delta / 30, delta / 10 + delta / 15)
    fld = smear(region, delta, grid)
    s = np.sqrt(fld.values)
    total = 0.0
    for a in range(grid.dim):
        d = np.diff(s, axis=a)
        total += float(np.sum(d * d))
    integral = total * grid.h ** (grid.dim - 2)
    return integral, integral * l * delta / region.volume()


# --------------------------------------------------------------------------
# rotation-averaged tile autocorrelation

@lru_cache(maxsize=1)
def _tile_face_data():
    V = reference_tetrahedron()
    N, _ = planes(V)
    areas = np.empty(4)
    for skip in range(4):
        p = V[[i for i in range(4) if i != skip]]
        areas[skip] = 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]))
    vol = abs(np.linalg.det(V[1:] - V[0])) / 6
    return N, areas, vol


def tile_covariogram(t: np.ndarray) -> np.ndarray:
    """``|Delta ∩ (Delta + t)| / |Delta|`` for the reference tetrahedron.

    Two translates of a simplex meet in a homothetic copy of it; the scale
    factor follows from the face offsets, giving a closed form.
    """
    N, A, vol = _tile_face_data()
    t = np.asarray(t, dtype=float)
    neg = np.maximum(0.0, -(t @ N.T))
    lam = 1.0 - (neg @ A) / (3 * vol)
    return np.maximum(lam, 0.0) ** 3


def random_rotations(n: int, seed: int) -> np.ndarray:
    """Uniform rotations from unit quaternions (scrambled Sobol + Shoemake map)."""
    from scipy.stats import qmc

    u = qmc.Sobol(3, scramble=True, seed=seed).random(n)
    a, b = np.sqrt(1 - u[:, 0]), np.sqrt(u[:, 0])
    q = np.stack([a * np.sin(2 * np.pi * u[:, 1]), a * np.cos(2 * np.pi * u[:, 1]),
                  b * np.sin(2 * np.pi * u[:, 2]), b * np.cos(2 * np.pi * u[:, 2])], 1)
    x, y, z, w = q.T
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], 1)


def averaged_autocorrelation_samples(radii, l: float, delta: float,
                                     n_rotations: int = 512, seed: int = 0) -> np.ndarray:
    """Per-rotation samples of the smeared tile autocorrelation at ``|x| = r``.

    Returns an array of shape ``(n_rotations, len(radii))`` whose mean over
    rotations estimates ``h(r) = |l Delta|^-1 avg_R (xi * xi(-.))(R x)``, using
    ``xi * xi(-.) = E_W[|l Delta ∩ (l Delta + . + W)|]`` with ``W`` the
    difference of two mollifier-distributed vectors.
    """
    rng = np.random.default_rng(seed)
    R = random_rotations(n_rotations, seed)
    u = R[:, :, 2]                                        # R e_z
    W = sample_mollifier(rng, n_rotations, delta) - sample_mollifier(rng, n_rotations, delta)
    r = np.asarray(radii, dtype=float)
    t = (r[None, :, None] * u[:, None, :] + W[:, None, :]) / l
    return tile_covariogram(t)


def averaged_autocorrelation(points, l: float, delta: float, n_rotations: int = 512,
                             seed: int = 0) -> np.ndarray:
    """``h_{l,delta}(x)`` at arbitrary points (depends only on ``|x|``)."""
    r = np.linalg.norm(np.atleast_2d(points), axis=1)
    return averaged_autocorrelation_samples(r, l, delta, n_rotations, seed).mean(axis=0)
