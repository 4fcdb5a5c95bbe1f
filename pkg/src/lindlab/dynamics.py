"""Semigroup computation and spectral analysis for dissipative generators.

Time evolution uses scaling-and-squaring Pade-13 matrix exponentials (robust
for the non-normal generators that arise here); spectral projectors onto the
stationary and peripheral subspaces come from the full eigendecomposition with
explicit conditioning checks, raising rather than guessing when the generator
is numerically defective.

Contraction suprema are optimized over pure states (the trace norm is convex
and the map linear, so the supremum sits on extreme points) by multi-start
witness ascent; reported values are certified lower bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import linalg
from .linalg import SuperOp, NormEstimate

ZERO_TOL = 1e-9


class DynamicsError(RuntimeError):
    pass


class UniquenessError(DynamicsError):
    def __init__(self, dimension: int):
        super().__init__(f"stationary space has dimension {dimension}, expected 1")
        self.dimension = dimension


class ConditioningError(DynamicsError):
    pass


class HorizonError(DynamicsError):
    pass


@dataclass
class Semigroup:
    """exp(t L) with a per-t cache; exp(0) is the identity exactly."""

    generator: SuperOp
    _cache: dict[float, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.generator.dim

    def at(self, t: float) -> np.ndarray:
        if t < 0:
            raise DynamicsError("negative evolution time")
        if t == 0:
            return np.eye(self.dim ** 2, dtype=complex)
        if t not in self._cache:
            self._cache[t] = sla.expm(t * self.generator.matrix)
        return self._cache[t]

    def evolve(self, t: float, rho: np.ndarray) -> np.ndarray:
        """Schroedinger picture: exp(tL)(rho)."""
        return linalg.unvec(self.at(t) @ linalg.vec(rho))

    def heisenberg(self, t: float, O: np.ndarray) -> np.ndarray:
        """Heisenberg picture: dual(exp(tL))(O)."""
        D = linalg._dual_matrix(self.at(t))
        return linalg.unvec(D @ linalg.vec(O))


@dataclass(frozen=True)
class AsymptoticProjectors:
    """Spectral projectors onto stationary (kernel) and peripheral
    (purely-imaginary spectrum) subspaces."""

    stationary: SuperOp
    peripheral: SuperOp
    frequencies: np.ndarray
    stationary_dimension: int
    peripheral_dimension: int
    tol: float

    def algebra_residual(self) -> float:
        """max residual of T8^2=T8, Tphi^2=Tphi, T8 Tphi = Tphi T8 = T8."""
        P, Q = self.stationary.matrix, self.peripheral.matrix
        return float(max(
            np.linalg.norm(P @ P - P),
            np.linalg.norm(Q @ Q - Q),
            np.linalg.norm(P @ Q - P),
            np.linalg.norm(Q @ P - P),
        ))


def _eig_with_projector_data(G: np.ndarray):
    w, V = sla.eig(G)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e12:
        raise ConditioningError(
            f"generator is numerically defective (eigenvector condition {cond:.3e})"
        )
    Vinv = np.linalg.inv(V)
    return w, V, Vinv


def asymptotic_projectors(g: Semigroup | SuperOp, tol: float = ZERO_TOL) -> AsymptoticProjectors:
    gen = g.generator if isinstance(g, Semigroup) else g
    w, V, Vinv = _eig_with_projector_data(gen.matrix)
    scale = max(1.0, float(np.abs(w).max()))
    zero = np.abs(w) < tol * scale
    peri = w.real > -tol * scale
    P = V[:, zero] @ Vinv[zero, :]
    Q = V[:, peri] @ Vinv[peri, :]
    resid = max(np.linalg.norm(P @ P - P), np.linalg.norm(Q @ Q - Q))
    if resid > 1e-7 * scale:
        raise ConditioningError(f"projector residual {resid:.3e} beyond tolerance")
    return AsymptoticProjectors(
        stationary=SuperOp(P, gen.dims),
        peripheral=SuperOp(Q, gen.dims),
        frequencies=np.sort(w[peri].imag),
        stationary_dimension=int(zero.sum()),
        peripheral_dimension=int(peri.sum()),
        tol=tol,
    )


def stationary_basis(g: Semigroup | SuperOp, tol: float = ZERO_TOL) -> list[np.ndarray]:
    """A basis of the kernel of the generator, as operators."""
    gen = g.generator if isinstance(g, Semigroup) else g
    w, V, _ = _eig_with_projector_data(gen.matrix)
    scale = max(1.0, float(np.abs(w).max()))
    cols = np.where(np.abs(w) < tol * scale)[0]
    return [linalg.unvec(V[:, c]) for c in cols]


def fixed_point(g: Semigroup | SuperOp, tol: float = ZERO_TOL) -> np.ndarray:
    """The unique stationary density matrix; raises UniquenessError otherwise."""
    basis = stationary_basis(g, tol)
    if len(basis) != 1:
        raise UniquenessError(len(basis))
    rho = linalg.hermitize(basis[0])
    tr = np.trace(rho)
    if abs(tr) < 1e-12:
        raise ConditioningError("stationary vector has vanishing trace")
    return rho / tr


def spectral_gap(g: Semigroup | SuperOp, tol: float = ZERO_TOL) -> float:
    """The least negative real part among nonzero eigenvalues."""
    gen = g.generator if isinstance(g, Semigroup) else g
    w = np.linalg.eigvals(gen.matrix)
    scale = max(1.0, float(np.abs(w).max()))
    nonzero = w[np.abs(w) >= tol * scale]
    if nonzero.size == 0:
        raise DynamicsError("no nonzero eigenvalues: spectrum is degenerate at 0")
    return float(-nonzero.real.max())


@dataclass(frozen=True)
class ContractionEstimate:
    value: float
    maximizer: np.ndarray
    restarts: int


def _difference_map(g: Semigroup, t: float, projectors: AsymptoticProjectors | None):
    if projectors is None:
        projectors = asymptotic_projectors(g)
    Et = g.at(t)
    M = Et - Et @ projectors.peripheral.matrix
    return M


def contraction(
    g: Semigroup,
    t: float,
    restarts: int = 64,
    seed: int = 0,
    projectors: AsymptoticProjectors | None = None,
) -> ContractionEstimate:
    """eta(T_t) = 1/2 sup_rho ||T_t(rho) - T_{phi,t}(rho)||_1, from below."""
    if t < 0:
        raise DynamicsError("negative time")
    M = _difference_map(g, t, projectors)
    Md = M.conj().T
    est = linalg.max_trace_norm_pure_state(
        lambda X: linalg.unvec(M @ linalg.vec(X)),
        lambda W: linalg.unvec(Md @ linalg.vec(W)),
        g.dim,
        restarts=restarts,
        seed=seed,
    )
    psi = est.maximizer[0]
    return ContractionEstimate(min(0.5 * est.value, 1.0), np.outer(psi, psi.conj()), est.restarts)


def _embed_operator(W: np.ndarray, keep: list[int], dims: tuple[int, ...]) -> np.ndarray:
    """W acting on the `keep` factors, tensored with identity elsewhere."""
    n = len(dims)
    rest = [i for i in range(n) if i not in keep]
    d_rest = int(np.prod([dims[i] for i in rest])) if rest else 1
    big = np.kron(W, np.eye(d_rest))
    order = list(keep) + rest
    # permute from (keep..., rest...) to canonical order
    D = int(np.prod(dims))
    strides = np.ones(n, dtype=np.int64)
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * dims[i + 1]
    built_dims = [dims[p] for p in order]
    digits = np.array(np.unravel_index(np.arange(D), built_dims))
    p = np.zeros(D, dtype=np.int64)
    for k, site in enumerate(order):
        p += digits[k] * strides[site]
    out = np.empty_like(big)
    out[np.ix_(p, p)] = big
    return out


def local_contraction(
    g: Semigroup,
    t: float,
    keep: list[int],
    restarts: int = 64,
    seed: int = 0,
    projectors: AsymptoticProjectors | None = None,
) -> ContractionEstimate:
    """eta^A: the contraction measured after the partial trace onto the
    factors listed in ``keep``."""
    dims = g.generator.dims
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DynamicsError(f"keep={keep} outside the system")
    M = _difference_map(g, t, projectors)
    Md = M.conj().T
    keep = sorted(keep)

    def apply_fn(X):
        return linalg.partial_trace(linalg.unvec(M @ linalg.vec(X)), dims, keep)

    def adjoint_fn(W):
        Wfull = _embed_operator(W, keep, dims)
        return linalg.unvec(Md @ linalg.vec(Wfull))

    est = linalg.max_trace_norm_pure_state(apply_fn, adjoint_fn, g.dim,
                                           restarts=restarts, seed=seed)
    psi = est.maximizer[0]
    return ContractionEstimate(min(0.5 * est.value, 1.0), np.outer(psi, psi.conj()), est.restarts)


def mixing_time(
    g: Semigroup,
    eps: float = 0.25,
    t_max: float = 200.0,
    grid_points: int = 24,
    restarts: int = 32,
    seed: int = 0,
) -> float:
    """Smallest t (on a log grid, bisection-refined) with contraction <= eps."""
    if not 0 < eps < 1:
        raise DynamicsError("threshold must be in (0, 1)")
    projectors = asymptotic_projectors(g)
    ts = np.geomspace(1e-2, t_max, grid_points)

    def eta(t):
        return contraction(g, t, restarts=restarts, seed=seed, projectors=projectors).value

    lo = 0.0
    hi = None
    for t in ts:
        if eta(t) <= eps:
            hi = t
            break
        lo = t
    if hi is None:
        raise HorizonError(f"contraction stayed above {eps} up to t={t_max}")
    for _ in range(24):
        mid = 0.5 * (lo + hi)
        if hi - lo < 1e-3 * max(1.0, hi):
            break
        if eta(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class GrmFit:
    gamma: float
    delta: float
    intercept: float
    residual: float
    max_violation: float
    mixing: bool


def fit_grm(samples: list[tuple[int, float, float]], floor: float = 1e-15) -> GrmFit:
    """Fit log eta ~ c + delta log|Lambda| - gamma t over (size, t, eta) samples.

    ``max_violation`` is the largest upward deviation of log eta from the
    fitted envelope; ``mixing`` flags a genuinely positive decay rate.
    """
    if len(samples) < 3:
        raise DynamicsError("need at least 3 samples")
    sizes = np.array([s for s, _, _ in samples], dtype=float)
    ts = np.array([t for _, t, _ in samples], dtype=float)
    etas = np.maximum(np.array([e for _, _, e in samples], dtype=float), floor)
    A = np.vstack([np.log(sizes), -ts, np.ones_like(ts)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(etas), rcond=None)
    delta, gamma, c = float(coef[0]), float(coef[1]), float(coef[2])
    resid_vec = np.log(etas) - A @ coef
    return GrmFit(
        gamma=gamma,
        delta=delta,
        intercept=c,
        residual=float(np.sqrt(np.mean(resid_vec ** 2))),
        max_violation=float(resid_vec.max()),
        mixing=gamma > 1e-2,
    )
