"""Finite-lattice geometry on Z^(d+nu).

Sites carry a spatial coordinate j in Z^d and a frequency-mode coordinate
n in Z^nu.  Two region shapes are supported: boxes (sup-norm balls) and
elementary regions (a rectangle minus a translate of itself, possibly
L-shaped).  All distances are l1 unless stated otherwise; site lists are
kept in lexicographic order so that every matrix built downstream indexes
sites the same way.

Everything here is immutable after construction and safe to share between
workers.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BOX = "box"
ELEMENTARY = "elementary"


@dataclass(frozen=True)
class SitePoint:
    """A lattice site (j, n) with j in Z^d, n in Z^nu."""

    j: tuple[int, ...]
    n: tuple[int, ...]

    @property
    def coords(self) -> tuple[int, ...]:
        return self.j + self.n

    def l1(self) -> int:
        """l1 norm over all d+nu coordinates."""
        return int(sum(abs(c) for c in self.coords))


def _lex_sorted(points: Iterable[tuple[int, ...]]) -> np.ndarray:
    arr = np.array(sorted(set(points)), dtype=np.int64)
    return arr.reshape(len(arr), -1)


@dataclass(frozen=True, eq=False)
class Region:
    """Ordered finite site set in Z^(d+nu).

    `sites` is an (n_sites, d+nu) int array in lexicographic order; the
    descriptor is sufficient to rebuild the site list exactly, which is why
    serialization only stores the descriptor.
    """

    kind: str
    d: int
    nu: int
    descriptor: dict
    sites: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.sites.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.d + self.nu

    @property
    def n_sites(self) -> int:
        return int(self.sites.shape[0])

    def site_index(self) -> dict[tuple[int, ...], int]:
        return {tuple(row): i for i, row in enumerate(self.sites)}

    def site_points(self) -> list[SitePoint]:
        d = self.d
        return [SitePoint(tuple(int(c) for c in row[:d]), tuple(int(c) for c in row[d:]))
                for row in self.sites]

    def size(self) -> int:
        """l1 diameter of the site set.

        Computed through the support function: the l1 distance between two
        points is the maximum of s.(x - y) over sign vectors s, so the
        diameter is max_s (max s.x - min s.x).  Exact and O(2^dim * n).
        """
        best = 0
        for signs in itertools.product((-1, 1), repeat=self.dim):
            proj = self.sites @ np.array(signs, dtype=np.int64)
            best = max(best, int(proj.max() - proj.min()))
        return best

    def contains(self, other: "Region") -> bool:
        idx = self.site_index()
        return all(tuple(row) in idx for row in other.sites)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.sites.min(axis=0), self.sites.max(axis=0)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "descriptor": self.descriptor,
                           "d": self.d, "nu": self.nu}, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Region":
        obj = json.loads(text)
        desc = obj["descriptor"]
        if obj["kind"] == BOX:
            center = SitePoint(tuple(desc["center"][: obj["d"]]),
                               tuple(desc["center"][obj["d"]:]))
            return make_box(center, desc["radius"], d=obj["d"], nu=obj["nu"])
        if not {"halfwidths", "offset", "translate"} <= set(desc):
            raise ValueError("descriptor is derived (exhaustion term or subset) "
                             "and cannot be reconstructed standalone")
        return make_elementary_region(desc["halfwidths"], tuple(desc["offset"]),
                                      tuple(desc["translate"]),
                                      d=obj["d"], nu=obj["nu"])


@dataclass(frozen=True)
class BoundarySet:
    """Interior/exterior boundary sites of a subregion inside an ambient one."""

    interior: np.ndarray
    exterior: np.ndarray


def make_box(center: SitePoint | Sequence[int], radius: int, *, d: int, nu: int) -> Region:
    """Box of the given sup-norm radius around `center`, (2r+1)^(d+nu) sites."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    c = np.asarray(center.coords if isinstance(center, SitePoint) else center, dtype=np.int64)
    if c.size != d + nu:
        raise ValueError("center has wrong dimension")
    axes = [np.arange(ci - radius, ci + radius + 1) for ci in c]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d + nu)
    sites = _lex_sorted(map(tuple, grid))
    desc = {"center": [int(x) for x in c], "radius": int(radius)}
    return Region(kind=BOX, d=d, nu=nu, descriptor=desc, sites=sites)


def make_elementary_region(halfwidths: Sequence[int], offset: Sequence[int],
                           translate: Sequence[int], *, d: int, nu: int) -> Region:
    """Rectangle R = prod_i [-M_i, M_i] + offset, minus its translate R + m.

    A translate that clears the rectangle in some coordinate leaves R
    unchanged; a zero translate would empty the set and is rejected.
    """
    hw = [int(h) for h in halfwidths]
    if len(hw) != d + nu or any(h < 0 for h in hw):
        raise ValueError("halfwidths must be d+nu non-negative integers")
    off = np.asarray(offset, dtype=np.int64)
    m = np.asarray(translate, dtype=np.int64)
    axes = [np.arange(o - h, o + h + 1) for o, h in zip(off, hw)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d + nu)
    rect = set(map(tuple, grid))
    shifted = set(map(tuple, grid + m))
    remaining = rect - shifted
    if not remaining:
        raise ValueError("empty elementary region (translate must be nonzero)")
    sites = _lex_sorted(remaining)
    desc = {"halfwidths": hw, "offset": [int(x) for x in off],
            "translate": [int(x) for x in m]}
    return Region(kind=ELEMENTARY, d=d, nu=nu, descriptor=desc, sites=sites)


def boundaries(ambient: Region, sub: Region) -> BoundarySet:
    """Interior boundary of `sub` and exterior boundary of `sub`, both relative
    to `ambient` under l1 adjacency."""
    if not ambient.contains(sub):
        raise ValueError("sub must be contained in ambient")
    ambient_set = set(map(tuple, ambient.sites))
    sub_set = set(map(tuple, sub.sites))
    complement = ambient_set - sub_set
    dim = ambient.dim
    steps = []
    for axis in range(dim):
        for sgn in (-1, 1):
            e = [0] * dim
            e[axis] = sgn
            steps.append(tuple(e))

    def neighbors(p):
        return (tuple(a + b for a, b in zip(p, s)) for s in steps)

    interior = [p for p in sub_set if any(q in complement for q in neighbors(p))]
    exterior = [p for p in complement if any(q in sub_set for q in neighbors(p))]
    return BoundarySet(interior=_lex_sorted(interior) if interior else np.empty((0, dim), dtype=np.int64),
                       exterior=_lex_sorted(exterior) if exterior else np.empty((0, dim), dtype=np.int64))


def exhaustion(ambient: Region, center: SitePoint | Sequence[int], width: int) -> list[Region]:
    """Increasing sequence of truncated-box unions filling `ambient`.

    S_0 is the width-radius box at `center` clipped to the ambient region;
    S_j is the union of width-radius boxes centered on the sites of the
    previous term's interior boundary, again clipped.  Terms stop at the
    last proper subset of the ambient set; if S_0 already covers it, that
    single term is returned.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    c = tuple(center.coords if isinstance(center, SitePoint) else center)
    ambient_set = set(map(tuple, ambient.sites))
    if c not in ambient_set:
        raise ValueError("center must lie in ambient")
    d, nu, dim = ambient.d, ambient.nu, ambient.dim

    def clipped_box_union(centers: Iterable[tuple[int, ...]]) -> set:
        out = set()
        for ctr in centers:
            lo = [x - width for x in ctr]
            for delta in itertools.product(range(2 * width + 1), repeat=dim):
                p = tuple(l + dx for l, dx in zip(lo, delta))
                if p in ambient_set:
                    out.add(p)
        return out

    def as_region(pts: set, level: int) -> Region:
        return Region(kind=ELEMENTARY, d=d, nu=nu,
                      descriptor={"exhaustion_of": ambient.descriptor, "level": level,
                                  "center": list(c), "width": width},
                      sites=_lex_sorted(pts))

    current = clipped_box_union([c])
    terms = [as_region(current, 0)]
    if current == ambient_set:
        return terms
    steps = []
    for axis in range(dim):
        for sgn in (-1, 1):
            e = [0] * dim
            e[axis] = sgn
            steps.append(tuple(e))
    level = 1
    while True:
        shell = [p for p in current
                 if any(tuple(a + b for a, b in zip(p, s)) in ambient_set
                        and tuple(a + b for a, b in zip(p, s)) not in current
                        for s in steps)]
        nxt = current | clipped_box_union(shell)
        if nxt == ambient_set or nxt == current:
            return terms
        terms.append(as_region(nxt, level))
        current = nxt
        level += 1


def _hull_points(sites: np.ndarray) -> np.ndarray:
    """Vertex subset spanning the convex hull; falls back to all points when
    the set is degenerate (collinear etc.)."""
    from scipy.spatial import ConvexHull, QhullError

    if sites.shape[0] <= sites.shape[1] + 1:
        return sites
    try:
        hull = ConvexHull(sites.astype(float))
        return sites[hull.vertices]
    except QhullError:
        return sites


def _hulls_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """Exact-in-spirit test whether conv(a) and conv(b) meet, via an LP
    feasibility problem for a common point."""
    from scipy.optimize import linprog

    dim = a.shape[1]
    na, nb = a.shape[0], b.shape[0]
    # variables: lambda (na), mu (nb); sum lambda = 1, sum mu = 1, A^T l = B^T m
    a_eq = np.zeros((dim + 2, na + nb))
    b_eq = np.zeros(dim + 2)
    a_eq[:dim, :na] = a.T
    a_eq[:dim, na:] = -b.T
    a_eq[dim, :na] = 1.0
    a_eq[dim + 1, na:] = 1.0
    b_eq[dim] = 1.0
    b_eq[dim + 1] = 1.0
    res = linprog(c=np.zeros(na + nb), A_eq=a_eq, b_eq=b_eq,
                  bounds=[(0, None)] * (na + nb), method="highs")
    return res.status == 0


def disjoint(a: Region, b: Region) -> bool:
    """Disjointness in the sense used for resonance counting.

    Boxes are compared as site sets; elementary regions are compared through
    their convex envelopes (an L shape can wrap around another region without
    sharing sites).  A cheap bounding-box separation test runs first.
    """
    lo_a, hi_a = a.bounding_box()
    lo_b, hi_b = b.bounding_box()
    if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
        return True
    if a.kind == BOX and b.kind == BOX:
        # bounding boxes overlap on every axis => the boxes share a site
        return False
    if a is b:
        return False
    return not _hulls_intersect(_hull_points(a.sites).astype(float),
                                _hull_points(b.sites).astype(float))


def project(r: Region, axis: str) -> np.ndarray:
    """Coordinate projection of the site set: 'J' -> Z^d, 'N' -> Z^nu."""
    if axis.upper() == "J":
        cols = r.sites[:, : r.d]
    elif axis.upper() == "N":
        cols = r.sites[:, r.d:]
    else:
        raise ValueError("axis must be 'J' or 'N'")
    return _lex_sorted(map(tuple, cols))


def l1_distance_matrix(sites: np.ndarray) -> np.ndarray:
    """Pairwise l1 distances between rows (int16 to keep memory modest)."""
    diffs = np.abs(sites[:, None, :] - sites[None, :, :])
    return diffs.sum(axis=2).astype(np.int32)
