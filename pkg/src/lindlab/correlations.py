"""Correlation measures on bipartite states and locality-of-order diagnostics.

The three functionals: covariance correlation (max over unit-norm observable
pairs, estimated from below by alternating sign-witness ascent), trace-distance
correlation (exact, from the Hermitian eigenvalues), and mutual information
(natural-log von Neumann entropies, eigenvalues clipped at zero).

The reduced-state order parameter ``ltqo_delta`` measures how distinguishable
the periodic states of a truncated generator remain after restriction to the
inner region; it enumerates extreme points when a classical stationary simplex
is supplied and otherwise reports an ascent lower bound of the supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bounds, dynamics, linalg
from ._fitting import classify_decay
from .lattice import Region, grow
from .linalg import hermitize, partial_trace, trace_norm
from .model import LindbladianModel, UniformFamily, assemble_closed


class CorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class BipartiteState:
    """A density matrix on H_A (x) H_B with declared factor dimensions."""

    rho: np.ndarray
    dim_a: int
    dim_b: int

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=complex)
        d = self.dim_a * self.dim_b
        if rho.shape != (d, d):
            raise CorrelationError(f"shape {rho.shape} != ({d},{d})")
        if abs(np.trace(rho) - 1.0) > 1e-9:
            raise CorrelationError("state must have unit trace")
        if np.linalg.eigvalsh(hermitize(rho)).min() < -1e-9:
            raise CorrelationError("state must be positive semidefinite")
        object.__setattr__(self, "rho", rho)

    @property
    def rho_a(self) -> np.ndarray:
        return partial_trace(self.rho, (self.dim_a, self.dim_b), [0])

    @property
    def rho_b(self) -> np.ndarray:
        return partial_trace(self.rho, (self.dim_a, self.dim_b), [1])

    @property
    def correlation_part(self) -> np.ndarray:
        return self.rho - np.kron(self.rho_a, self.rho_b)


def trace_corr(state: BipartiteState) -> float:
    """T(A:B) = ||rho_AB - rho_A (x) rho_B||_1, exact."""
    return trace_norm(state.correlation_part, hermitian=True)


def covariance_corr(state: BipartiteState, restarts: int = 16, seed: int = 0) -> float:
    """C(A:B) = max over ||M||,||N|| <= 1 of |<M(x)N> - <M><N>|, from below.

    Alternating optimization: for fixed Hermitian M the optimal N is the sign
    of the M-contracted correlation part, and symmetrically.
    """
    delta = hermitize(state.correlation_part)
    da, db = state.dim_a, state.dim_b
    dims = (da, db)
    rng = np.random.default_rng(np.random.SeedSequence([seed, da, db]))

    def contract_a(M):
        return hermitize(partial_trace(np.kron(M, np.eye(db)) @ delta, dims, [1]))

    def contract_b(N):
        return hermitize(partial_trace(np.kron(np.eye(da), N) @ delta, dims, [0]))

    def sign_op(X):
        w, V = np.linalg.eigh(X)
        s = np.sign(w)
        s[s == 0] = 1.0
        return (V * s) @ V.conj().T

    starts = [np.diag(np.eye(da)[0] - np.eye(da)[min(1, da - 1)]).astype(complex)]
    for _ in range(restarts):
        R = rng.standard_normal((da, da)) + 1j * rng.standard_normal((da, da))
        H = hermitize(R)
        starts.append(H / max(np.abs(np.linalg.eigvalsh(H))))
    best = 0.0
    for M in starts:
        val = 0.0
        for _ in range(60):
            N = sign_op(contract_a(M))
            M = sign_op(contract_b(N))
            new = abs(np.trace(np.kron(M, N) @ delta).real)
            if new <= val + 1e-13:
                val = max(val, new)
                break
            val = new
        best = max(best, val)
    return best


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Natural-log entropy with eigenvalue clipping at zero."""
    w = np.linalg.eigvalsh(hermitize(rho))
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log(w)))


def mutual_info(state: BipartiteState) -> float:
    """I(A:B) = S(rho_A) + S(rho_B) - S(rho_AB)."""
    return (
        von_neumann_entropy(state.rho_a)
        + von_neumann_entropy(state.rho_b)
        - von_neumann_entropy(state.rho)
    )


def fannes_mutual_info_bound(state: BipartiteState) -> tuple[bool, float]:
    """(applicable, bound): when T <= 1/(2e), I <= T (ln D_AB - ln T)."""
    T = trace_corr(state)
    if T <= 0 or T > 1.0 / (2.0 * math.e):
        return False, math.inf
    D = state.dim_a * state.dim_b
    return True, T * (math.log(D) - math.log(T))


# ---------------------------------------------------------------------------
# LTQO and fixed-point indistinguishability
# ---------------------------------------------------------------------------

def ltqo_delta(
    model: LindbladianModel,
    A: Region,
    ell: int,
    restarts: int = 24,
    seed: int = 0,
    peripheral_states: list[np.ndarray] | None = None,
) -> float:
    """sup over periodic states of the truncated generator on A(ell) of the
    trace distance between their reductions onto A.

    With ``peripheral_states`` (extreme points of a classical stationary
    simplex) the supremum is exact by convexity; otherwise it is an ascent
    lower bound over pure-state pairs pushed through the peripheral projector.
    """
    geometry = model.region.geometry
    Al = grow(geometry, A, ell)
    truncated = model.truncate(Al)
    keep = [Al.sites.index(s) for s in A.sites]
    dims = truncated.dims
    if peripheral_states is not None:
        best = 0.0
        reduced = [partial_trace(r, dims, keep) for r in peripheral_states]
        for i in range(len(reduced)):
            for j in range(i + 1, len(reduced)):
                best = max(best, trace_norm(reduced[i] - reduced[j], hermitian=True))
        return best
    proj = dynamics.asymptotic_projectors(truncated.superop())
    Q = proj.peripheral.matrix
    D = truncated.dim

    def reduce_push(X):
        return partial_trace(linalg.unvec(Q @ linalg.vec(X)), dims, keep)

    Qd = Q.conj().T

    def lift(W):
        Wfull = dynamics._embed_operator(W, keep, dims)
        return hermitize(linalg.unvec(Qd @ linalg.vec(Wfull)))

    rng = np.random.default_rng(np.random.SeedSequence([seed, D]))
    starts: list[tuple[np.ndarray, np.ndarray]] = []
    basis = np.eye(D, dtype=complex)
    starts.append((basis[0], basis[-1]))
    for k in range(1, min(D, 4)):
        starts.append((basis[0], basis[k]))
    for _ in range(restarts):
        v1 = rng.standard_normal(D) + 1j * rng.standard_normal(D)
        v2 = rng.standard_normal(D) + 1j * rng.standard_normal(D)
        starts.append((v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2)))
    best = 0.0
    for psi1, psi2 in starts:
        val = 0.0
        for _ in range(80):
            diff = hermitize(
                reduce_push(np.outer(psi1, psi1.conj()) - np.outer(psi2, psi2.conj()))
            )
            w, V = np.linalg.eigh(diff)
            new = float(np.abs(w).sum())
            W = (V * np.sign(w)) @ V.conj().T
            B = lift(W)
            bw, BV = np.linalg.eigh(B)
            psi1, psi2 = BV[:, -1], BV[:, 0]
            if new <= val + 1e-13:
                val = max(val, new)
                break
            val = new
        best = max(best, val)
    return best


def fixed_point_indistinguishability(
    family: UniformFamily,
    region: Region,
    A: Region,
    s: int,
    O_A: np.ndarray,
    ctx: bounds.BoundContext,
) -> dict:
    """lhs: |tr O_A (rho_inf - rho_inf^s)| from the exact fixed points of the
    closed generators on the region and on A(s); rhs: |A|^delta Delta_0(s)."""
    geometry = region.geometry
    full_model = assemble_closed(family, region)
    rho_full = dynamics.fixed_point(full_model.superop())
    As = grow(geometry, A, s)
    sub_model = assemble_closed(family, As)
    rho_sub = dynamics.fixed_point(sub_model.superop())
    keep_full = [region.sites.index(x) for x in A.sites]
    keep_sub = [As.sites.index(x) for x in A.sites]
    red_full = partial_trace(rho_full, full_model.dims, keep_full)
    red_sub = partial_trace(rho_sub, sub_model.dims, keep_sub)
    lhs = abs(np.trace(O_A @ (red_full - red_sub)).real)
    rhs = len(A) ** ctx.delta * bounds.delta0_envelope(ctx, s)
    return {"lhs": float(lhs), "rhs": float(rhs)}


def decay_fit(xs, values) -> dict:
    """Classify a positive series as exponential or power-law decay."""
    return classify_decay(xs, values)
