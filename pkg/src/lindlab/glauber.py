"""Classical Glauber dynamics and its quantum embedding.

Spin values live in {+1, -1}; a configuration over an n-site region is indexed
by bits (site k is bit n-1-k, so the index written in binary reads the sites in
canonical order, bit 0 meaning spin +1).  The inverse temperature is absorbed
into the potential.

Generator convention: the stored matrix acts on probability column vectors
(columns sum to zero, off-diagonals nonnegative); the transpose acts on
functions.  All stationarity checks use the measure side.

Boundary conditions: ``tau`` maps outer-boundary sites (coordinates possibly
outside the geometry window) to spins; ``tau=None`` is the free boundary (all
potential terms touching the complement are dropped).  ``embed`` builds the
tau-reading quantum generator on the region (every site flips); the
frozen-boundary variant keeps the outer boundary as explicit never-flipped
system sites, which at desk scale realizes the Gibbs simplex as the reduced
stationary set.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from . import dynamics, linalg
from .lattice import LatticeGeometry, Region, Site, ball
from .linalg import SuperOp, hermitize, partial_trace, trace_norm, vec, unvec
from .model import LindbladianModel, LocalTerm

ENUM_CEILING = 2 ** 20
DENSE_CEILING = 2 ** 12


class GlauberError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------

def config_bits(index: int, n: int) -> tuple[int, ...]:
    return tuple((index >> (n - 1 - k)) & 1 for k in range(n))


def config_index(bits) -> int:
    n = len(bits)
    return sum(int(b) << (n - 1 - k) for k, b in enumerate(bits))


def spins_from_bits(bits) -> tuple[int, ...]:
    return tuple(1 - 2 * int(b) for b in bits)


def all_spin_patterns(n: int):
    for idx in range(2 ** n):
        yield spins_from_bits(config_bits(idx, n))


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialTerm:
    """One translation pattern: relative offsets (first at the origin) and the
    value table indexed by local spin bits (MSB = first offset)."""

    offsets: tuple[Site, ...]
    table: tuple[float, ...]

    def __post_init__(self) -> None:
        offsets = tuple(tuple(o) for o in self.offsets)
        object.__setattr__(self, "offsets", offsets)
        if len(self.table) != 2 ** len(offsets):
            raise GlauberError("table size must be 2^len(offsets)")
        if any(c != 0 for c in offsets[0]):
            raise GlauberError("first offset must be the origin")

    def value(self, spins) -> float:
        bits = [(1 - s) // 2 for s in spins]
        return self.table[config_index(bits)]


def term_from_function(offsets, fn) -> PotentialTerm:
    offsets = tuple(tuple(o) for o in offsets)
    k = len(offsets)
    table = []
    for idx in range(2 ** k):
        spins = spins_from_bits(config_bits(idx, k))
        table.append(float(fn(*spins)))
    return PotentialTerm(offsets, tuple(table))


@dataclass(frozen=True)
class Potential:
    """Finite-range translation-invariant potential {J_A} given by patterns."""

    dim: int
    range_r: int
    terms: tuple[PotentialTerm, ...]
    translation_invariant: bool = True

    def __post_init__(self) -> None:
        for t in self.terms:
            span = max(
                (max(abs(c) for c in o) for o in t.offsets), default=0
            )
            if span > self.range_r:
                raise GlauberError("pattern exceeds the declared range")

    def to_json(self) -> str:
        return json.dumps({
            "dim": self.dim,
            "range": self.range_r,
            "ti": self.translation_invariant,
            "terms": [
                {"sites": [list(o) for o in t.offsets], "table": list(t.table)}
                for t in self.terms
            ],
        })

    @staticmethod
    def from_json(text: str) -> "Potential":
        data = json.loads(text)
        terms = tuple(
            PotentialTerm(tuple(tuple(s) for s in td["sites"]), tuple(td["table"]))
            for td in data["terms"]
        )
        return Potential(int(data["dim"]), int(data["range"]), terms,
                         bool(data.get("ti", True)))


def ising_potential(coupling: float, field: float = 0.0, dim: int = 1) -> Potential:
    """Nearest-neighbor Ising: J_A = coupling*s_x*s_y on edges, field*s_x on sites
    (inverse temperature absorbed)."""
    terms = []
    if field != 0.0:
        terms.append(term_from_function(((0,) * dim,), lambda s: field * s))
    for axis in range(dim):
        e = tuple(1 if a == axis else 0 for a in range(dim))
        terms.append(term_from_function(((0,) * dim, e), lambda s, t: coupling * s * t))
    return Potential(dim, 1, tuple(terms))


def zero_potential(dim: int = 1) -> Potential:
    return Potential(dim, 1, ())


# ---------------------------------------------------------------------------
# instances, Hamiltonians, Gibbs states
# ---------------------------------------------------------------------------

def plus_boundary(region: Region, r: int) -> tuple[Site, ...]:
    """The outer boundary {x not in Lambda : dist(x, Lambda) <= r}, as raw
    coordinates (may exit the geometry window on open axes)."""
    geometry = region.geometry
    inside = set(region.sites)
    out: set[Site] = set()
    for x in region.sites:
        for y in itertools.product(*(range(c - r, c + r + 1) for c in x)):
            w = geometry.wrap(y)
            if geometry.contains(w):
                if w not in inside:
                    out.add(w)
            elif not all(geometry.periodic):
                out.add(tuple(y))
    return tuple(sorted(out))


def _instances(potential: Potential, region: Region):
    """All pattern translates intersecting the region: (sites, table, in_mask)."""
    geometry = region.geometry
    inside = set(region.sites)
    lo = [min(s[a] for s in region.sites) - potential.range_r for a in range(geometry.dim)]
    hi = [max(s[a] for s in region.sites) + potential.range_r for a in range(geometry.dim)]
    out = []
    seen = set()
    for term in potential.terms:
        for anchor in itertools.product(*(range(l, h + 1) for l, h in zip(lo, hi))):
            sites = []
            for o in term.offsets:
                raw = tuple(a + c for a, c in zip(anchor, o))
                w = geometry.wrap(raw)
                sites.append(w if geometry.contains(w) else raw)
            if not any(s in inside for s in sites):
                continue
            key = (term.offsets, term.table, tuple(sites))
            if key in seen:
                continue
            seen.add(key)
            out.append((tuple(sites), term))
    return out


def _site_spin(site, sigma_map, tau):
    if site in sigma_map:
        return sigma_map[site]
    if tau is not None and site in tau:
        return tau[site]
    return None


def hamiltonian_vector(potential: Potential, region: Region, tau: dict | None) -> np.ndarray:
    """H^tau(sigma) = -sum over patterns touching the region of J_A(sigma x tau);
    with tau=None the terms touching the complement are dropped (free boundary)."""
    n = len(region)
    if 2 ** n > ENUM_CEILING:
        raise GlauberError("configuration space exceeds the enumeration ceiling")
    instances = _instances(potential, region)
    H = np.zeros(2 ** n)
    site_pos = {s: k for k, s in enumerate(region.sites)}
    for idx in range(2 ** n):
        spins = spins_from_bits(config_bits(idx, n))
        sigma_map = {s: spins[site_pos[s]] for s in region.sites}
        total = 0.0
        for sites, term in instances:
            vals = [_site_spin(s, sigma_map, tau) for s in sites]
            if any(v is None for v in vals):
                continue
            total += term.value(vals)
        H[idx] = -total
    return H


def gibbs(potential: Potential, region: Region, tau: dict | None = None) -> np.ndarray:
    """The exact Gibbs distribution mu(sigma) ~ exp(-H^tau(sigma))."""
    H = hamiltonian_vector(potential, region, tau)
    w = np.exp(-(H - H.min()))
    return w / w.sum()


def gibbs_simplex(potential: Potential, region: Region) -> list[tuple[dict, np.ndarray]]:
    """All (tau, mu^tau) over boundary configurations on the outer r-boundary."""
    bsites = plus_boundary(region, potential.range_r)
    if 2 ** len(bsites) * 2 ** len(region) > ENUM_CEILING:
        raise GlauberError("tau ensemble exceeds the enumeration ceiling")
    out = []
    for spins in all_spin_patterns(len(bsites)):
        tau = dict(zip(bsites, spins))
        out.append((tau, gibbs(potential, region, tau)))
    return out


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GlauberRates:
    """A rate family over a potential: heat-bath, metropolis, or custom.

    Custom families supply ``custom(delta_h) -> rate``; the built-ins satisfy
    detailed balance exactly.
    """

    family: str
    potential: Potential
    custom: object | None = None

    def rate_from_delta(self, dh: float) -> float:
        if self.family == "heat-bath":
            return 1.0 / (1.0 + math.exp(dh))
        if self.family == "metropolis":
            return min(1.0, math.exp(-dh))
        if self.family == "custom":
            return float(self.custom(dh))
        raise GlauberError(f"unknown rate family {self.family!r}")

    def delta_h(self, x: Site, spins_map: dict, tau: dict | None,
                instances_at_x) -> float:
        """H(sigma^x) - H(sigma) from the patterns containing x."""
        total = 0.0
        for sites, term in instances_at_x:
            vals = [_site_spin(s, spins_map, tau) for s in sites]
            if any(v is None for v in vals):
                continue
            flipped = [
                -v if s == x else v for s, v in zip(sites, vals)
            ]
            total += term.value(vals) - term.value(flipped)
        return total

    def constants(self) -> tuple[float, float]:
        """(c_m, c_M) over all local patterns of the potential's dependence set."""
        r = self.potential.range_r
        dim = self.potential.dim
        geometry = LatticeGeometry((4 * r + 1,) * dim)
        center = ((4 * r + 1) // 2,) * dim
        region = ball(geometry, center, r)
        inst = [
            (sites, term)
            for sites, term in _instances(self.potential, region)
            if center in sites
        ]
        cmin, cmax = math.inf, 0.0
        sites_all = sorted({s for sites, _ in inst for s in sites})
        if not sites_all:
            sites_all = [center]
        for spins in all_spin_patterns(len(sites_all)):
            smap = dict(zip(sites_all, spins))
            dh = self.delta_h(center, smap, None, inst)
            c = self.rate_from_delta(dh)
            cmin, cmax = min(cmin, c), max(cmax, c)
        if cmin <= 0 or not math.isfinite(cmax):
            raise GlauberError("rates must be positive and bounded")
        return cmin, cmax


def heat_bath(potential: Potential) -> GlauberRates:
    return GlauberRates("heat-bath", potential)


def metropolis(potential: Potential) -> GlauberRates:
    return GlauberRates("metropolis", potential)


def _rate_table(rates: GlauberRates, region: Region, tau: dict | None) -> np.ndarray:
    """c[k, sigma] for flipping site k in configuration sigma."""
    n = len(region)
    if 2 ** n > ENUM_CEILING:
        raise GlauberError("configuration space exceeds the enumeration ceiling")
    instances = _instances(rates.potential, region)
    at_site = {
        s: [(sites, t) for sites, t in instances if s in sites] for s in region.sites
    }
    site_pos = {s: k for k, s in enumerate(region.sites)}
    table = np.zeros((n, 2 ** n))
    for idx in range(2 ** n):
        spins = spins_from_bits(config_bits(idx, n))
        smap = {s: spins[site_pos[s]] for s in region.sites}
        for k, x in enumerate(region.sites):
            dh = rates.delta_h(x, smap, tau, at_site[x])
            table[k, idx] = rates.rate_from_delta(dh)
    return table


def detailed_balance_pointwise(rates: GlauberRates, region: Region,
                               tau: dict | None = None) -> float:
    """max over (x, sigma) of |c(x,sigma) - c(x,sigma^x) exp(-Delta H_x(sigma))|."""
    n = len(region)
    table = _rate_table(rates, region, tau)
    H = hamiltonian_vector(rates.potential, region, tau)
    worst = 0.0
    for idx in range(2 ** n):
        for k in range(n):
            flipped = idx ^ (1 << (n - 1 - k))
            dh = H[flipped] - H[idx]
            resid = abs(table[k, idx] - table[k, flipped] * math.exp(-dh))
            worst = max(worst, resid)
    return worst


# ---------------------------------------------------------------------------
# classical generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassicalGenerator:
    """Measure-side generator: columns sum to zero, off-diagonals >= 0;
    the transpose acts on functions."""

    region: Region
    matrix: np.ndarray

    @property
    def function_matrix(self) -> np.ndarray:
        return self.matrix.T

    def stationary(self, tol: float = 1e-10) -> list[np.ndarray]:
        w, V = np.linalg.eig(self.matrix)
        cols = np.where(np.abs(w) < tol * max(1.0, np.abs(w).max()))[0]
        return [np.real(V[:, c] / V[:, c].sum()) for c in cols]


def classical_generator(rates: GlauberRates, region: Region,
                        tau: dict | None = None) -> ClassicalGenerator:
    n = len(region)
    if 2 ** n > DENSE_CEILING:
        raise GlauberError("dense generator exceeds the ceiling")
    table = _rate_table(rates, region, tau)
    K = np.zeros((2 ** n, 2 ** n))
    for idx in range(2 ** n):
        for k in range(n):
            target = idx ^ (1 << (n - 1 - k))
            c = table[k, idx]
            K[target, idx] += c
            K[idx, idx] -= c
    return ClassicalGenerator(region, K)


# ---------------------------------------------------------------------------
# quantum embedding
# ---------------------------------------------------------------------------

def dephasing_term(site: Site, gamma: float) -> LocalTerm:
    L0 = math.sqrt(gamma) * np.diag([1.0, 0.0]).astype(complex)
    L1 = math.sqrt(gamma) * np.diag([0.0, 1.0]).astype(complex)
    op = linalg.from_gkls(None, [L0, L1])
    return LocalTerm(site, 0, (site,), op)


def _flip_terms(rates: GlauberRates, region: Region, tau: dict | None,
                flip_sites: tuple[Site, ...]) -> list[LocalTerm]:
    geometry = region.geometry
    r = rates.potential.range_r
    instances = _instances(rates.potential, region)
    terms = []
    for x in flip_sites:
        inst_x = [(sites, t) for sites, t in instances if x in sites]
        dep_sites = sorted(
            {s for sites, _ in inst_x for s in sites if s in set(region.sites)} | {x}
        )
        k = len(dep_sites)
        pos_x = dep_sites.index(x)
        dloc = 2 ** k
        lindblads = []
        for idx in range(dloc):
            spins = spins_from_bits(config_bits(idx, k))
            smap = dict(zip(dep_sites, spins))
            dh = rates.delta_h(x, smap, tau, inst_x)
            c = rates.rate_from_delta(dh)
            flipped_idx = idx ^ (1 << (k - 1 - pos_x))
            L = np.zeros((dloc, dloc), dtype=complex)
            L[flipped_idx, idx] = math.sqrt(c)
            lindblads.append(L)
        op = linalg.from_gkls(None, lindblads, dims=(2,) * k)
        radius = max((geometry.site_distance(x, s) for s in dep_sites), default=0)
        terms.append(LocalTerm(x, max(radius, r), tuple(dep_sites), op))
    return terms


def embed(rates: GlauberRates, region: Region, tau: dict | None = None,
          gamma: float = 0.0) -> LindbladianModel:
    """The tau-reading quantum Glauber generator on the region: jump operators
    sqrt(c(x,eta)) |eta^x><eta| per site and local configuration, plus uniform
    single-site dephasing of strength gamma."""
    if 2 ** (2 * len(region)) > ENUM_CEILING:
        raise GlauberError("quantum dimension exceeds the ceiling")
    terms = _flip_terms(rates, region, tau, region.sites)
    if gamma > 0:
        terms.extend(dephasing_term(s, gamma) for s in region.sites)
    return LindbladianModel(region, 2, tuple(terms))


def embed_with_frozen_boundary(rates: GlauberRates, V: Region,
                               gamma: float = 0.0) -> tuple[LindbladianModel, Region]:
    """The truncated dynamics carrying the outer boundary as frozen sites:
    only V flips, the boundary layer is never touched.  Returns the model on
    the enlarged region and the enlarged region itself."""
    geometry = V.geometry
    bsites = plus_boundary(V, rates.potential.range_r)
    if any(not geometry.contains(geometry.wrap(s)) for s in bsites):
        raise GlauberError("frozen boundary leaves the geometry window; enlarge it")
    enlarged = Region(geometry, V.sites + tuple(geometry.wrap(s) for s in bsites))
    terms = _flip_terms(rates, enlarged, None, V.sites)
    if gamma > 0:
        terms.extend(dephasing_term(s, gamma) for s in enlarged.sites)
    return LindbladianModel(enlarged, 2, tuple(terms)), enlarged


def detailed_balance_residual(L: SuperOp, mu: np.ndarray) -> float:
    """Operator norm of Gamma_mu L - dual(L) Gamma_mu, with Gamma_mu the
    sqrt(mu) sqrt(mu) Schur multiplier."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise GlauberError("detailed balance needs a full-rank state")
    root = np.sqrt(mu)
    Gamma = linalg.schur_multiplier(np.outer(root, root), L.dims)
    diff = Gamma.matrix @ L.matrix - L.dual().matrix @ Gamma.matrix
    return float(np.linalg.norm(diff, 2))


def fixed_point_set(model: LindbladianModel, tol: float = 1e-9) -> list[np.ndarray]:
    """A basis of the stationary space of the embedded generator."""
    return dynamics.stationary_basis(model.superop(), tol)


def diagonal_vector(rho: np.ndarray) -> np.ndarray:
    return np.real(np.diag(rho))


def diag_state(p: np.ndarray) -> np.ndarray:
    return np.diag(np.asarray(p, dtype=float)).astype(complex)


# ---------------------------------------------------------------------------
# contraction split and weak mixing
# ---------------------------------------------------------------------------

def classical_restriction_contraction(g: dynamics.Semigroup,
                                      projectors) -> callable:
    """eta(T_t o C): exact by enumeration over computational basis states
    (the diagonal inputs' extreme points)."""

    def eta_c(t: float) -> float:
        Et = g.at(t)
        M = Et - Et @ projectors.peripheral.matrix
        d = g.dim
        best = 0.0
        for k in range(d):
            X = np.zeros((d, d), dtype=complex)
            X[k, k] = 1.0
            val = 0.5 * trace_norm(unvec(M @ vec(X)), hermitian=True)
            best = max(best, val)
        return best

    return eta_c


def contraction_split_check(
    rates: GlauberRates,
    region: Region,
    tau: dict | None,
    gamma: float,
    ts: list[float],
    restarts: int = 48,
    seed: int = 0,
    slack: float = 1e-3,
) -> dict:
    """Check eta(T_t) <= eta(T_t o C) + eta(exp(t D)) on a time grid, plus the
    dephasing envelope eta(exp(t D)) <= |Lambda| exp(-gamma t / 2)."""
    full = embed(rates, region, tau, gamma=gamma)
    n = len(region)
    deph_terms = tuple(dephasing_term(s, gamma) for s in region.sites)
    deph = LindbladianModel(region, 2, deph_terms)
    g_full = dynamics.Semigroup(full.superop())
    g_deph = dynamics.Semigroup(deph.superop())
    proj_full = dynamics.asymptotic_projectors(g_full.generator)
    proj_deph = dynamics.asymptotic_projectors(g_deph.generator)
    eta_classical = classical_restriction_contraction(g_full, proj_full)
    rows = []
    violations = 0
    envelope_violations = 0
    for t in ts:
        lhs = dynamics.contraction(g_full, t, restarts=restarts, seed=seed,
                                   projectors=proj_full).value
        rhs_c = eta_classical(t)
        rhs_d = dynamics.contraction(g_deph, t, restarts=restarts, seed=seed,
                                     projectors=proj_deph).value
        ok = lhs <= rhs_c + rhs_d + slack
        envelope = n * math.exp(-gamma * t / 2.0)
        env_ok = rhs_d <= envelope + 1e-9
        violations += 0 if ok else 1
        envelope_violations += 0 if env_ok else 1
        rows.append({
            "t": t, "eta": lhs, "eta_classical": rhs_c, "eta_dephasing": rhs_d,
            "split_ok": ok, "envelope": envelope, "envelope_ok": env_ok,
        })
    return {"rows": rows, "violations": violations,
            "envelope_violations": envelope_violations}


def weak_mixing_sup(potential: Potential, V: Region, Delta: Region) -> float:
    """sup over boundary pairs tau, tau' of || mu^tau_{V,Delta} - mu^tau'_{V,Delta} ||_1
    by exhaustive enumeration and exact marginalization."""
    if not Delta.issubset(V):
        raise GlauberError("Delta must sit inside V")
    marginals = []
    n = len(V)
    keep = [V.sites.index(s) for s in Delta.sites]
    for _, p in gibbs_simplex(potential, V):
        q = p.reshape((2,) * n)
        axes = tuple(i for i in range(n) if i not in keep)
        marginals.append(q.sum(axis=axes).reshape(-1))
    best = 0.0
    for i in range(len(marginals)):
        for j in range(i + 1, len(marginals)):
            best = max(best, float(np.abs(marginals[i] - marginals[j]).sum()))
    return best


# ---------------------------------------------------------------------------
# perturbed rates
# ---------------------------------------------------------------------------

def perturbed_rates_experiment(
    rates: GlauberRates,
    e_fn,
    region: Region,
    f: np.ndarray,
    ts: list[float],
    tau: dict | None = None,
) -> dict:
    """Exact classical evolutions under Q and Q+E; sup-norm deviation per t.

    ``e_fn(x, spins_map) -> rate perturbation``; the perturbed off-diagonal
    rates must stay nonnegative.
    """
    import scipy.linalg as sla

    gen = classical_generator(rates, region, tau)
    n = len(region)
    site_pos = {s: k for k, s in enumerate(region.sites)}
    E = np.zeros_like(gen.matrix)
    table = _rate_table(rates, region, tau)
    for idx in range(2 ** n):
        spins = spins_from_bits(config_bits(idx, n))
        smap = {s: spins[site_pos[s]] for s in region.sites}
        for k, x in enumerate(region.sites):
            e = float(e_fn(x, smap))
            if table[k, idx] + e < 0:
                raise GlauberError(
                    f"perturbation drives rate negative at site {x}"
                )
            target = idx ^ (1 << (n - 1 - k))
            E[target, idx] += e
            E[idx, idx] -= e
    Qf = gen.function_matrix
    Ef = E.T
    devs = []
    for t in ts:
        a = sla.expm(t * Qf) @ f
        b = sla.expm(t * (Qf + Ef)) @ f
        devs.append(float(np.abs(a - b).max()))
    return {"ts": list(ts), "deviation": devs, "sup": max(devs) if devs else 0.0}
