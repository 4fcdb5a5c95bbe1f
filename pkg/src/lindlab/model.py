"""Local Lindbladian models on finite lattices.

A model is a sum of local terms ``L_u(r)`` with declared center and radius,
each a GKLS generator (or a trace-dual-annihilating perturbation piece)
supported inside the ball ``b_u(r)``.  Uniform families pair a bulk rule that
does not depend on the system size with boundary conditions per region, giving
the open (``M_Lambda``) and closed (``M_Lambda + boundary``) generators.

Assembly semantics: a bulk term enters the open generator for ``Lambda`` iff
its *infinite-lattice* ball lies inside ``Lambda`` (bulk terms are
window-independent); truncating an already-built model to a subregion ``A``
uses the model geometry's (wrapped, clipped) balls.  Terms are summed in
sorted (center, radius) order so assembled matrices are bit-reproducible.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from . import linalg
from ._fitting import classify_decay
from .lattice import LatticeGeometry, Region, Site, ball, boundary_layer, full_region
from .linalg import SuperOp, diamond_norm_estimate, is_valid_lindbladian

DEFAULT_TOL = 1e-10
DIM_CEILING = 16384  # largest superoperator side length assembled densely


class ModelError(ValueError):
    pass


class ResourceError(RuntimeError):
    """Raised when an assembly would exceed the desk-scale dimension ceiling."""


# ---------------------------------------------------------------------------
# decay profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayProfile:
    """Normalized decay profile f with f(0) = 1, monotone non-increasing.

    Classes: ``finite-range`` (f = 1 up to R, then 0), ``exponential``
    (e^{-mu r}), ``quasi-local`` (e^{-mu sqrt r}, faster than any polynomial),
    ``power-law`` ((1+r)^{-alpha}).
    """

    kind: str
    parameter: float

    _KINDS = ("finite-range", "exponential", "quasi-local", "power-law")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ModelError(f"unknown decay class {self.kind!r}")
        if self.kind != "finite-range" and self.parameter <= 0:
            raise ModelError("decay parameter must be positive")
        if self.kind == "finite-range" and self.parameter < 0:
            raise ModelError("finite range must be nonnegative")

    def __call__(self, r):
        # numpy-safe: accepts scalars or arrays
        if self.kind == "finite-range":
            return np.where(np.asarray(r) <= self.parameter, 1.0, 0.0) + 0.0
        if self.kind == "exponential":
            return np.exp(-self.parameter * np.asarray(r, dtype=float))
        if self.kind == "quasi-local":
            return np.exp(-self.parameter * np.sqrt(np.asarray(r, dtype=float)))
        return (1.0 + np.asarray(r, dtype=float)) ** (-self.parameter)


def finite_range(R: int) -> DecayProfile:
    return DecayProfile("finite-range", R)


def exponential(mu: float) -> DecayProfile:
    return DecayProfile("exponential", mu)


def power_law(alpha: float) -> DecayProfile:
    return DecayProfile("power-law", alpha)


# ---------------------------------------------------------------------------
# local terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalTerm:
    """One local generator piece: ``op`` acts on ``support`` (sorted sites)."""

    center: Site
    radius: int
    support: tuple[Site, ...]
    op: SuperOp
    perturbation_only: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(self.center))
        object.__setattr__(self, "support", tuple(sorted(tuple(s) for s in self.support)))
        if len(self.op.dims) != len(self.support):
            raise ModelError("superoperator factor count != support size")

    def validate(self, geometry: LatticeGeometry, tol: float = DEFAULT_TOL) -> None:
        b = ball(geometry, self.center, self.radius)
        for s in self.support:
            if geometry.wrap(s) not in b:
                raise ModelError(f"support site {s} outside ball b_{self.center}({self.radius})")
        if self.perturbation_only:
            ident = np.eye(self.op.dim)
            resid = np.linalg.norm(self.op.dual().apply(ident))
            if resid > tol * max(1.0, float(np.linalg.norm(self.op.matrix))):
                raise ModelError(f"perturbation term does not annihilate identity in the dual (residual {resid:.2e})")
        else:
            report = is_valid_lindbladian(self.op, tol)
            if not report.overall:
                raise ModelError(f"local term at {self.center} is not a valid GKLS generator: {report}")


def gkls_term(
    center: Site,
    radius: int,
    support: Iterable[Site],
    H: np.ndarray | None,
    lindblads: Iterable[np.ndarray] = (),
    site_dim: int = 2,
) -> LocalTerm:
    support = tuple(sorted(tuple(s) for s in support))
    dims = (site_dim,) * len(support)
    op = linalg.from_gkls(H, list(lindblads), dims=dims)
    return LocalTerm(center, radius, support, op)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

def _sorted_terms(terms: Iterable[LocalTerm]) -> tuple[LocalTerm, ...]:
    return tuple(sorted(terms, key=lambda t: (t.center, t.radius, t.support)))


@dataclass
class LindbladianModel:
    """A concrete generator on a region: an ordered sum of local terms."""

    region: Region
    site_dim: int
    terms: tuple[LocalTerm, ...]
    _superop: SuperOp | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.terms = _sorted_terms(self.terms)
        sites = set(self.region.sites)
        for t in self.terms:
            if not set(t.support) <= sites:
                raise ModelError(f"term support {t.support} not inside the region")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.site_dim,) * len(self.region)

    @property
    def dim(self) -> int:
        return self.site_dim ** len(self.region)

    def _positions(self, term: LocalTerm) -> list[int]:
        return [self.region.sites.index(s) for s in term.support]

    def superop(self) -> SuperOp:
        """The dense generator on the region (cached)."""
        if self._superop is None:
            if self.dim ** 2 > DIM_CEILING:
                raise ResourceError(
                    f"superoperator side {self.dim ** 2} exceeds ceiling {DIM_CEILING}"
                )
            acc = linalg.zero_superop(self.dims)
            for t in self.terms:
                acc = acc + linalg.embed_superop(t.op, self._positions(t), self.dims)
            self._superop = acc
        return self._superop

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Termwise application, avoiding the dense global matrix."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for t in self.terms:
            out += linalg.apply_local(t.op.matrix, self._positions(t), self.dims, X)
        return out

    def dual_apply(self, O: np.ndarray) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for t in self.terms:
            out += linalg.apply_local(t.op.dual().matrix, self._positions(t), self.dims, O)
        return out

    def is_sitewise(self) -> bool:
        """True when every term acts on a single site (commuting tensor sum)."""
        return all(len(t.support) == 1 for t in self.terms)

    def site_generators(self) -> dict[Site, SuperOp]:
        """Per-site sums of single-site terms (requires ``is_sitewise``)."""
        if not self.is_sitewise():
            raise ModelError("model has multi-site terms")
        out: dict[Site, SuperOp] = {}
        for t in self.terms:
            s = t.support[0]
            out[s] = out.get(s, linalg.zero_superop((self.site_dim,))) + t.op
        return out

    def truncate(self, A: Region) -> "LindbladianModel":
        """Localized generator: keep terms with (wrapped, clipped) ball inside A."""
        kept = tuple(
            t for t in self.terms
            if ball(self.region.geometry, t.center, t.radius).issubset(A)
        )
        return LindbladianModel(A, self.site_dim, kept)

    def with_extra_terms(self, extra: Iterable[LocalTerm]) -> "LindbladianModel":
        return LindbladianModel(self.region, self.site_dim, self.terms + tuple(extra))

    def validate(self, tol: float = DEFAULT_TOL) -> None:
        for t in self.terms:
            t.validate(self.region.geometry, tol)


# ---------------------------------------------------------------------------
# boundary conditions and uniform families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryCondition:
    """Depth-tagged boundary terms: ``terms`` holds (d, piece of N_d)."""

    terms: tuple[tuple[int, LocalTerm], ...] = ()

    def audit(self, geometry: LatticeGeometry, region: Region, J: float,
              profile: DecayProfile, seed: int = 0) -> list[str]:
        """Check ||N_d|| <= J |boundary_d| f(d) per depth.

        The norm of a summed N_d is bounded by the triangle inequality over its
        pieces, each estimated by the diamond-norm ascent.
        """
        failures = []
        by_depth: dict[int, list[LocalTerm]] = {}
        for d, t in self.terms:
            by_depth.setdefault(d, []).append(t)
        for d, pieces in sorted(by_depth.items()):
            layer = boundary_layer(geometry, region, d)
            for t in pieces:
                if not set(t.support) <= set(layer.sites):
                    failures.append(f"depth {d}: support {t.support} outside the boundary layer")
            total = sum(
                diamond_norm_estimate(t.op, restarts=24, seed=seed).value for t in pieces
            )
            budget = J * len(layer) * profile(d)
            if total > budget + 1e-9:
                failures.append(f"depth {d}: norm bound {total:.6g} exceeds budget {budget:.6g}")
        return failures


@dataclass
class UniformFamily:
    """A size-independent bulk rule plus a boundary rule and declared strength.

    ``bulk(u)`` returns the local terms centered at ``u`` with supports in
    infinite-lattice coordinates.  ``boundary`` is "open", "periodic", or a
    callable ``(family, region) -> BoundaryCondition``.
    """

    site_dim: int
    bulk: Callable[[Site], list[LocalTerm]]
    strength_j: float
    profile: DecayProfile
    boundary: str | Callable = "open"
    translation_invariant: bool = True

    def boundary_condition(self, region: Region) -> BoundaryCondition:
        if callable(self.boundary):
            return self.boundary(self, region)
        if self.boundary == "open":
            return BoundaryCondition(())
        if self.boundary == "periodic":
            return periodic_boundary(self, region)
        raise ModelError(f"unknown boundary rule {self.boundary!r}")


def _unclipped_ball_fits(geometry: LatticeGeometry, region: Region, center: Site, radius: int) -> bool:
    # infinite-lattice ball containment: the ball must not leave the window on
    # open axes nor self-wrap on periodic ones, and must sit inside `region`
    region_sites = set(region.sites)
    for c, L, p in zip(center, geometry.extent, geometry.periodic):
        if p:
            if 2 * radius + 1 > L:
                return False
        elif c - radius < 0 or c + radius >= L:
            return False
    for y in itertools.product(*(range(c - radius, c + radius + 1) for c in center)):
        if geometry.wrap(y) not in region_sites:
            return False
    return True


def assemble_open(family: UniformFamily, region: Region) -> LindbladianModel:
    """Open-boundary generator: all bulk terms whose ball lies inside the region."""
    geometry = region.geometry
    if family.site_dim ** (2 * len(region)) > DIM_CEILING:
        raise ResourceError("region exceeds the desk-scale dimension ceiling")
    terms = []
    for u in region.sites:
        for t in family.bulk(u):
            if _unclipped_ball_fits(geometry, region, t.center, t.radius):
                wrapped = tuple(geometry.wrap(s) for s in t.support)
                terms.append(replace(t, support=wrapped))
    return LindbladianModel(region, family.site_dim, tuple(terms))


def periodic_boundary(family: UniformFamily, region: Region) -> BoundaryCondition:
    """Wrap-around terms for a full rectangular window, one per bulk term whose
    infinite ball crosses the boundary; each is assigned the minimal depth d
    whose layer contains its wrapped support."""
    geometry = region.geometry
    if len(region) != geometry.n_sites:
        raise ModelError("periodic closure is defined for the full window")
    torus = LatticeGeometry(geometry.extent, (True,) * geometry.dim)
    terms: list[tuple[int, LocalTerm]] = []
    for u in region.sites:
        for t in family.bulk(u):
            if _unclipped_ball_fits(geometry, region, t.center, t.radius):
                continue
            if any(2 * t.radius + 1 > L for L in geometry.extent):
                raise ModelError("wrap-around term larger than the window")
            wrapped = tuple(torus.wrap(s) for s in t.support)
            if len(set(wrapped)) != len(wrapped):
                raise ModelError("wrap-around support self-intersects")
            depth = max(
                _depth_in_window(geometry, region, s) for s in wrapped
            )
            terms.append((depth, replace(t, support=wrapped)))
    return BoundaryCondition(tuple(terms))


def _depth_in_window(geometry: LatticeGeometry, region: Region, x: Site) -> int:
    # dist(x, complement of the region in Z^D)
    from .lattice import _distance_to_exterior

    return _distance_to_exterior(geometry, region, x)


def assemble_closed(family: UniformFamily, region: Region) -> LindbladianModel:
    """Closed-boundary generator: the open generator plus the boundary terms."""
    open_model = assemble_open(family, region)
    bc = family.boundary_condition(region)
    return open_model.with_extra_terms(t for _, t in bc.terms)


def truncate(family: UniformFamily, A: Region) -> LindbladianModel:
    """The localized generator ``sum over balls inside A`` (open assembly on A)."""
    return assemble_open(family, A)


# ---------------------------------------------------------------------------
# perturbations
# ---------------------------------------------------------------------------

class PerturbationError(ValueError):
    pass


@dataclass(frozen=True)
class Perturbation:
    terms: tuple[LocalTerm, ...]
    epsilon: float
    profile: DecayProfile

    def validate(self, geometry: LatticeGeometry, tol: float = DEFAULT_TOL, seed: int = 0) -> None:
        for t in self.terms:
            ident = np.eye(t.op.dim)
            resid = float(np.linalg.norm(t.op.dual().apply(ident)))
            if resid > tol * max(1.0, float(np.linalg.norm(t.op.matrix))):
                raise PerturbationError(
                    f"E at {t.center}: dual does not annihilate the identity (residual {resid:.2e})"
                )
            est = diamond_norm_estimate(t.op, restarts=16, seed=seed).value
            budget = self.epsilon * self.profile(t.radius)
            if est > budget * (1 + 1e-6) + 1e-12:
                raise PerturbationError(
                    f"E at {t.center}: norm estimate {est:.6g} exceeds epsilon*e(r) = {budget:.6g}"
                )


def apply_perturbation(
    base: LindbladianModel,
    pert: Perturbation,
    probe_contractivity: bool = False,
    probe_times: tuple[float, ...] = (0.1, 1.0, 10.0),
) -> tuple[LindbladianModel, list[str]]:
    """Overlay perturbation terms on a model.

    Returns the perturbed model and a list of warnings from the optional
    semigroup-contractivity probe (CPTP checks of exp(t(L+E)) on a small
    t-grid); probe failures are reported, not fatal.
    """
    pert.validate(base.region.geometry)
    perturbed = base.with_extra_terms(
        replace(t, perturbation_only=True) for t in pert.terms
    )
    warnings: list[str] = []
    if probe_contractivity:
        import scipy.linalg as sla

        G = perturbed.superop().matrix
        for t in probe_times:
            E = sla.expm(t * G)
            if not linalg.is_cptp(E):
                warnings.append(f"exp({t}*(L+E)) failed the CPTP probe")
    return perturbed, warnings


# ---------------------------------------------------------------------------
# strength estimation
# ---------------------------------------------------------------------------

def strength_estimate(
    family: UniformFamily,
    sample_radius: int,
    sample_centers: tuple[Site, ...] = ((0,),),
    seed: int = 0,
) -> tuple[float, DecayProfile, dict]:
    """Estimate (J, f): J as the max sampled term norm, f by decay-class fit."""
    by_radius: dict[int, float] = {}
    for u in sample_centers:
        for t in family.bulk(u):
            if t.radius > sample_radius:
                continue
            est = diamond_norm_estimate(t.op, restarts=24, seed=seed).value
            by_radius[t.radius] = max(by_radius.get(t.radius, 0.0), est)
    if not by_radius:
        return 0.0, finite_range(0), {"samples": {}}
    J = max(by_radius.values())
    radii = sorted(by_radius)
    values = [by_radius[r] / J for r in radii]
    nonzero = [r for r in radii if by_radius[r] > 1e-12 * J]
    if len(nonzero) < 4:
        profile = finite_range(max(nonzero) if nonzero else 0)
        return J, profile, {"samples": by_radius}
    fit = classify_decay(np.array(radii, dtype=float), np.array(values))
    if fit["class"] == "exponential":
        profile = exponential(fit["rate"])
    else:
        profile = power_law(fit["rate"])
    return J, profile, {"samples": by_radius, "fit": fit}


# ---------------------------------------------------------------------------
# JSON description
# ---------------------------------------------------------------------------

def model_to_json(model: LindbladianModel) -> str:
    data = {
        "geometry": json.loads(model.region.geometry.to_json()),
        "region": [list(s) for s in model.region.sites],
        "site_dim": model.site_dim,
        "terms": [
            {
                "center": list(t.center),
                "radius": t.radius,
                "support": [list(s) for s in t.support],
                "matrix": linalg.matrix_to_json(t.op.matrix),
                "perturbation_only": t.perturbation_only,
            }
            for t in model.terms
        ],
    }
    return json.dumps(data)


def model_from_json(text: str) -> LindbladianModel:
    data = json.loads(text)
    geom = LatticeGeometry(
        tuple(data["geometry"]["extent"]),
        tuple(bool(p) for p in data["geometry"]["periodic"]),
    )
    region = Region(geom, tuple(tuple(s) for s in data["region"]))
    site_dim = int(data["site_dim"])
    terms = []
    for td in data["terms"]:
        support = tuple(tuple(s) for s in td["support"])
        mat = linalg.matrix_from_json(td["matrix"])
        op = SuperOp(mat, (site_dim,) * len(support))
        terms.append(
            LocalTerm(tuple(td["center"]), int(td["radius"]), support, op,
                      bool(td.get("perturbation_only", False)))
        )
    return LindbladianModel(region, site_dim, tuple(terms))
