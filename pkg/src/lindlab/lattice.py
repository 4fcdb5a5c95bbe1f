"""Finite sublattice geometry of Z^D and the torus (Z/LZ)^D.

Sites are tuples of integers.  The metric is Chebyshev (l-infinity), so balls
are cubes and ``|ball(u, r)| = (2r+1)^D`` away from edges; on periodic axes
distances wrap modulo the extent.  Regions keep their sites in canonical
(lexicographic) order so that tensor-factor order and serialization are
reproducible across runs.

Open (non-periodic) geometries are finite windows of the infinite lattice:
complements for boundary layers are taken in Z^D, while region growth clips to
the window.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

Site = tuple[int, ...]


class LatticeError(ValueError):
    """Domain error for lattice operations (out-of-range sites, empty input)."""


@dataclass(frozen=True)
class LatticeGeometry:
    """A D-dimensional box of given extent, periodic per axis.

    ``extent[i]`` is the side length along axis i; ``periodic[i]`` selects the
    torus identification on that axis.
    """

    extent: tuple[int, ...]
    periodic: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        if len(self.extent) < 1 or any(L < 1 for L in self.extent):
            raise LatticeError(f"invalid extent {self.extent}")
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * len(self.extent))
        if len(self.periodic) != len(self.extent):
            raise LatticeError("extent/periodic length mismatch")

    @property
    def dim(self) -> int:
        return len(self.extent)

    @property
    def n_sites(self) -> int:
        out = 1
        for L in self.extent:
            out *= L
        return out

    def wrap(self, coords: Site) -> Site:
        """Wrap coordinates on periodic axes; open axes pass through unchanged."""
        return tuple(
            c % L if p else c
            for c, L, p in zip(coords, self.extent, self.periodic)
        )

    def contains(self, site: Site) -> bool:
        site = self.wrap(site)
        return all(0 <= c < L for c, L in zip(site, self.extent))

    def sites(self) -> list[Site]:
        """All sites in canonical (lexicographic) order."""
        return list(itertools.product(*(range(L) for L in self.extent)))

    def site_distance(self, a: Site, b: Site) -> int:
        """Chebyshev distance, wrapped per axis on periodic axes."""
        d = 0
        for x, y, L, p in zip(a, b, self.extent, self.periodic):
            axis = abs(x - y)
            if p:
                axis = min(axis % L, (L - axis % L) % L)
            d = max(d, axis)
        return d

    def to_json(self) -> str:
        return json.dumps(
            {"dim": self.dim, "extent": list(self.extent), "periodic": list(self.periodic)}
        )

    @staticmethod
    def from_json(text: str) -> "LatticeGeometry":
        data = json.loads(text)
        return LatticeGeometry(tuple(data["extent"]), tuple(bool(p) for p in data["periodic"]))


@dataclass(frozen=True)
class Region:
    """An ordered, duplicate-free set of sites of a geometry."""

    geometry: LatticeGeometry
    sites: tuple[Site, ...]
    shape_tag: str = "general"  # "ball" | "union-of-balls" | "general"

    def __post_init__(self) -> None:
        wrapped = tuple(self.geometry.wrap(s) for s in self.sites)
        for s in wrapped:
            if not self.geometry.contains(s):
                raise LatticeError(f"site {s} outside geometry {self.geometry.extent}")
        object.__setattr__(self, "sites", tuple(sorted(set(wrapped))))

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, site: Site) -> bool:
        return self.geometry.wrap(site) in set(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def index(self, site: Site) -> int:
        return self.sites.index(self.geometry.wrap(site))

    def union(self, other: "Region") -> "Region":
        return Region(self.geometry, self.sites + other.sites, "general")

    def issubset(self, other: "Region") -> bool:
        return set(self.sites) <= set(other.sites)

    def diameter(self) -> int:
        if not self.sites:
            return 0
        return max(
            self.geometry.site_distance(a, b)
            for a, b in itertools.combinations_with_replacement(self.sites, 2)
        )

    def to_json(self) -> str:
        return json.dumps([list(s) for s in self.sites])

    @staticmethod
    def from_json(geometry: LatticeGeometry, text: str) -> "Region":
        return Region(geometry, tuple(tuple(s) for s in json.loads(text)))


def full_region(geometry: LatticeGeometry) -> Region:
    return Region(geometry, tuple(geometry.sites()), "ball")


def ball(geometry: LatticeGeometry, center: Site, radius: int) -> Region:
    """The Chebyshev ball {y : dist(center, y) <= radius}, clipped to the geometry."""
    if radius < 0:
        raise LatticeError("radius must be nonnegative")
    if not geometry.contains(center):
        raise LatticeError(f"center {center} out of range")
    center = geometry.wrap(center)
    axes = []
    for c, L, p in zip(center, geometry.extent, geometry.periodic):
        if p:
            vals = sorted({(c + d) % L for d in range(-radius, radius + 1)})
        else:
            vals = [v for v in range(c - radius, c + radius + 1) if 0 <= v < L]
        axes.append(vals)
    return Region(geometry, tuple(itertools.product(*axes)), "ball")


def infinite_ball_inside(geometry: LatticeGeometry, center: Site, radius: int) -> bool:
    """Whether b_center(radius) taken in Z^D (no clipping) stays inside the window.

    On periodic axes the ball always "fits" as long as it does not wrap onto
    itself (2*radius + 1 <= extent).
    """
    for c, L, p in zip(geometry.wrap(center), geometry.extent, geometry.periodic):
        if p:
            if 2 * radius + 1 > L:
                return False
        elif c - radius < 0 or c + radius >= L:
            return False
    return True


def _components(region: Region) -> list[list[Site]]:
    # connected components under unit-distance adjacency
    remaining = set(region.sites)
    comps = []
    while remaining:
        seed = remaining.pop()
        comp, frontier = [seed], [seed]
        while frontier:
            x = frontier.pop()
            near = [y for y in remaining if region.geometry.site_distance(x, y) <= 1]
            for y in near:
                remaining.remove(y)
                comp.append(y)
                frontier.append(y)
        comps.append(comp)
    return comps


def _enclosing_ball_sites(geometry: LatticeGeometry, sites: set[Site]) -> tuple[Site, ...]:
    # smallest Chebyshev ball containing `sites`, computed in unwrapped
    # coordinates and clipped to the window
    lo = [min(s[a] for s in sites) for a in range(geometry.dim)]
    hi = [max(s[a] for s in sites) for a in range(geometry.dim)]
    center = tuple((l + h) // 2 for l, h in zip(lo, hi))
    radius = max(max(h - c, c - l) for l, h, c in zip(lo, hi, center))
    axes = []
    for c, L, p in zip(center, geometry.extent, geometry.periodic):
        if p:
            vals = sorted({(c + d) % L for d in range(-radius, radius + 1)})
        else:
            vals = [v for v in range(c - radius, c + radius + 1) if 0 <= v < L]
        axes.append(vals)
    return tuple(itertools.product(*axes))


def grow(geometry: LatticeGeometry, region: Region, s: int) -> Region:
    """A(s) = {x in the geometry : dist(x, A) <= s}, with the ball merge rule.

    When A splits into disjoint components whose s-fattenings intersect, the
    result is replaced by the smallest ball containing the fattened set.
    """
    if s < 0:
        raise LatticeError("growth must be nonnegative")
    if len(region) == 0:
        return region
    if s == 0:
        return region
    comps = _components(region)
    fattened = []
    for comp in comps:
        sites: set[Site] = set()
        for x in comp:
            sites.update(ball(geometry, x, s).sites)
        fattened.append(sites)
    merged = len(comps) > 1 and any(
        fattened[i] & fattened[j]
        for i in range(len(comps))
        for j in range(i + 1, len(comps))
    )
    all_sites = set().union(*fattened)
    if merged:
        return Region(geometry, _enclosing_ball_sites(geometry, all_sites), "ball")
    tag = "ball" if region.shape_tag == "ball" else "union-of-balls"
    return Region(geometry, tuple(all_sites), tag)


def _distance_to_exterior(geometry: LatticeGeometry, region: Region, x: Site) -> int:
    # distance from x to the complement of `region`; on open axes the
    # complement includes all of Z^D outside the window
    inside = set(region.sites)
    limit = max(geometry.extent) + 1
    for d in range(1, limit + 1):
        for y in itertools.product(*(range(c - d, c + d + 1) for c in x)):
            if max(abs(a - b) for a, b in zip(x, y)) != d:
                continue
            wrapped = geometry.wrap(y)
            if not geometry.contains(wrapped):
                return d  # outside the window on an open axis
            if wrapped not in inside:
                return d
    return limit + 1


def boundary_layer(geometry: LatticeGeometry, region: Region, depth: int) -> Region:
    """The boundary layer {x in A : dist(x, A^c) <= depth}.

    The complement is taken in Z^D on open axes (the region is a window of the
    infinite lattice) and on the torus on periodic axes; a full periodic torus
    has an empty complement and hence an empty boundary layer.
    """
    if depth < 1:
        raise LatticeError("depth must be positive")
    if all(geometry.periodic) and len(region) == geometry.n_sites:
        return Region(geometry, ())
    sites = tuple(
        x for x in region.sites if _distance_to_exterior(geometry, region, x) <= depth
    )
    return Region(geometry, sites)


def distance(geometry: LatticeGeometry, a: Region, b: Region) -> int:
    """min over site pairs of the metric; 0 iff the regions intersect."""
    if len(a) == 0 or len(b) == 0:
        raise LatticeError("distance of an empty region is undefined")
    return min(geometry.site_distance(x, y) for x in a.sites for y in b.sites)
