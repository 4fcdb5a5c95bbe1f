"""Dense operator and superoperator algebra.

Conventions (fixed once, asserted by tests):

* Vectorization is **column-stacking**: ``vec(X)[i + j*d] = X[i, j]``, so the
  map ``rho -> A rho B`` has matrix ``kron(B.T, A)``.
* A superoperator is a dense ``d**2 x d**2`` complex matrix acting on vec'd
  operators; :class:`SuperOp` pairs it with the tuple of local site dimensions
  whose product is ``d``.
* The dual is the bilinear trace pairing: ``trace(A T(B)) = trace(dual(T)(A) B)``.
  For Hermiticity-preserving maps it coincides with the Hilbert-Schmidt adjoint.
* The Choi matrix is ``J(T) = sum_kl T(|k><l|) (x) |k><l|``; complete positivity
  is positivity of J, and conditional complete positivity of a generator is
  positivity of J compressed to the orthogonal complement of the maximally
  entangled vector.

Norm suprema (trace-norm 1->1, stabilized/diamond, and the stabilized
infinity->infinity norm) are estimated by multi-start witness ascent.  The
returned values are certified lower bounds: every iterate evaluates the exact
trace norm of an admissible input.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.stats import qmc

DEFAULT_TOL = 1e-10
PSD_TOL = 1e-9


class LinalgError(ValueError):
    """Domain error for operator-algebra operations."""


# ---------------------------------------------------------------------------
# vec / unvec and elementary constructions
# ---------------------------------------------------------------------------

def vec(X: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    d = math.isqrt(v.size)
    if d * d != v.size:
        raise LinalgError(f"vector of length {v.size} is not a vec'd square matrix")
    return v.reshape((d, d), order="F")


def kron_factor_map(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix of ``rho -> A rho B`` in the column-stacking convention."""
    return np.kron(np.asarray(B).T, np.asarray(A))


def hermitize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.conj().T)


def trace_norm(X: np.ndarray, hermitian: bool = False) -> float:
    if hermitian:
        return float(np.abs(np.linalg.eigvalsh(hermitize(X))).sum())
    return float(np.linalg.svd(X, compute_uv=False).sum())


def _dual_matrix(G: np.ndarray) -> np.ndarray:
    # bilinear trace dual: D = S G^T S with S the vec-transpose permutation
    d2 = G.shape[0]
    d = math.isqrt(d2)
    a = np.arange(d2)
    perm = (a % d) * d + a // d
    Gt = G.T
    return Gt[np.ix_(perm, perm)]


# ---------------------------------------------------------------------------
# SuperOp
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuperOp:
    """A dense linear map on vec'd operators over a product of local sites.

    ``dims`` lists the local dimension of each tensor factor in canonical site
    order; their product is the Hilbert-space dimension.  Instances are treated
    as immutable.
    """

    matrix: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        d = int(np.prod(self.dims))
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (d * d, d * d):
            raise LinalgError(f"matrix shape {m.shape} incompatible with dims {self.dims}")
        if not np.all(np.isfinite(m)):
            raise LinalgError("non-finite entries in superoperator")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(X))

    def dual(self) -> "SuperOp":
        """Bilinear trace dual (Heisenberg picture for channels)."""
        return SuperOp(_dual_matrix(self.matrix), self.dims)

    def compose(self, other: "SuperOp") -> "SuperOp":
        """self after other."""
        return SuperOp(self.matrix @ other.matrix, self.dims)

    def choi(self) -> np.ndarray:
        return choi_matrix(self.matrix)

    def __add__(self, other: "SuperOp") -> "SuperOp":
        if self.dims != other.dims:
            raise LinalgError("dimension mismatch")
        return SuperOp(self.matrix + other.matrix, self.dims)

    def __sub__(self, other: "SuperOp") -> "SuperOp":
        if self.dims != other.dims:
            raise LinalgError("dimension mismatch")
        return SuperOp(self.matrix - other.matrix, self.dims)

    def __mul__(self, scalar: complex) -> "SuperOp":
        return SuperOp(self.matrix * scalar, self.dims)

    __rmul__ = __mul__

    def is_hermiticity_preserving(self, tol: float = DEFAULT_TOL) -> bool:
        J = self.choi()
        scale = max(1.0, float(np.linalg.norm(J)))
        return float(np.linalg.norm(J - J.conj().T)) <= tol * scale

    def is_trace_annihilating(self, tol: float = DEFAULT_TOL) -> bool:
        resid = vec(np.eye(self.dim)) @ self.matrix
        scale = max(1.0, float(np.linalg.norm(self.matrix)))
        return float(np.linalg.norm(resid)) <= tol * scale

    def is_trace_preserving(self, tol: float = DEFAULT_TOL) -> bool:
        resid = vec(np.eye(self.dim)) @ self.matrix - vec(np.eye(self.dim))
        return float(np.linalg.norm(resid)) <= tol * max(1.0, float(np.linalg.norm(self.matrix)))


def identity_superop(dims: tuple[int, ...] | list[int]) -> SuperOp:
    d = int(np.prod(dims))
    return SuperOp(np.eye(d * d, dtype=complex), tuple(dims))


def zero_superop(dims: tuple[int, ...] | list[int]) -> SuperOp:
    d = int(np.prod(dims))
    return SuperOp(np.zeros((d * d, d * d), dtype=complex), tuple(dims))


def schur_multiplier(coeffs: np.ndarray, dims: tuple[int, ...] | None = None) -> SuperOp:
    """The map ``|a><b| -> coeffs[a, b] |a><b|`` in the computational basis."""
    C = np.asarray(coeffs, dtype=complex)
    d = C.shape[0]
    if C.shape != (d, d):
        raise LinalgError("coefficient matrix must be square")
    diag = C.T.reshape(-1)  # vec index i + j*d carries coeffs[i, j]
    return SuperOp(np.diag(diag), dims if dims is not None else (d,))


# ---------------------------------------------------------------------------
# GKLS form and validity diagnostics
# ---------------------------------------------------------------------------

def from_gkls(
    H: np.ndarray | None,
    lindblad_ops: list[np.ndarray] | tuple[np.ndarray, ...] = (),
    dims: tuple[int, ...] | None = None,
    tol: float = DEFAULT_TOL,
) -> SuperOp:
    """Generator ``rho -> i[rho, H] + sum_j L_j rho L_j' - 1/2 {L_j'L_j, rho}``."""
    ops = [np.asarray(L, dtype=complex) for L in lindblad_ops]
    if H is None:
        if not ops:
            raise LinalgError("need a Hamiltonian or at least one Lindblad operator")
        H = np.zeros_like(ops[0])
    H = np.asarray(H, dtype=complex)
    d = H.shape[0]
    anti = np.linalg.norm(H - H.conj().T)
    if anti > tol * max(1.0, np.linalg.norm(H)):
        raise LinalgError(f"Hamiltonian is not Hermitian (anti-Hermitian norm {anti:.3e})")
    eye = np.eye(d)
    G = 1j * (kron_factor_map(eye, H) - kron_factor_map(H, eye))
    for L in ops:
        if L.shape != (d, d):
            raise LinalgError("all operators must share the same dimension")
        LdL = L.conj().T @ L
        G += kron_factor_map(L, L.conj().T)
        G -= 0.5 * (kron_factor_map(LdL, eye) + kron_factor_map(eye, LdL))
    return SuperOp(G, dims if dims is not None else (d,))


def choi_matrix(G: np.ndarray) -> np.ndarray:
    """``J(T) = sum_kl T(|k><l|) (x) |k><l|`` from the superoperator matrix."""
    d2 = G.shape[0]
    d = math.isqrt(d2)
    G4 = G.reshape(d, d, d, d)            # (col_out, row_out, col_in, row_in)
    G4b = G4.transpose(1, 0, 3, 2)        # (i, j, k, l) with entry G[i + j*d, k + l*d]
    return np.ascontiguousarray(G4b.transpose(0, 2, 1, 3).reshape(d2, d2))


def _max_entangled_vector(d: int) -> np.ndarray:
    w = np.zeros(d * d, dtype=complex)
    w[np.arange(d) * d + np.arange(d)] = 1.0
    return w / math.sqrt(d)


@dataclass(frozen=True)
class LindbladReport:
    hermiticity_preserving: bool
    trace_annihilating: bool
    conditionally_completely_positive: bool
    ccp_min_eigenvalue: float

    @property
    def overall(self) -> bool:
        return (
            self.hermiticity_preserving
            and self.trace_annihilating
            and self.conditionally_completely_positive
        )


def is_valid_lindbladian(L: SuperOp, tol: float = DEFAULT_TOL) -> LindbladReport:
    """GKLS validity via the Choi criteria.

    Conditional complete positivity is checked as positivity of the Choi matrix
    compressed to the orthogonal complement of the maximally entangled vector.
    """
    J = L.choi()
    scale = max(1.0, float(np.linalg.norm(J)))
    hp = float(np.linalg.norm(J - J.conj().T)) <= tol * scale
    ta = L.is_trace_annihilating(tol)
    w = _max_entangled_vector(L.dim)
    P = np.eye(L.dim ** 2) - np.outer(w, w.conj())
    compressed = P @ hermitize(J) @ P
    min_eig = float(np.linalg.eigvalsh(compressed).min())
    ccp = min_eig >= -PSD_TOL * scale
    return LindbladReport(hp, ta, ccp, min_eig)


def is_cptp(E: np.ndarray | SuperOp, tol: float = PSD_TOL) -> bool:
    """Channel check: Choi PSD and trace preservation, both to tolerance."""
    G = E.matrix if isinstance(E, SuperOp) else np.asarray(E)
    d = math.isqrt(G.shape[0])
    J = choi_matrix(G)
    scale = max(1.0, float(np.linalg.norm(J)))
    if float(np.linalg.norm(J - J.conj().T)) > 1e-8 * scale:
        return False
    if float(np.linalg.eigvalsh(hermitize(J)).min()) < -tol * scale:
        return False
    resid = vec(np.eye(d)) @ G - vec(np.eye(d))
    return float(np.linalg.norm(resid)) <= 1e-8 * max(1.0, float(np.linalg.norm(G)))


# ---------------------------------------------------------------------------
# partial trace and local embeddings
# ---------------------------------------------------------------------------

def partial_trace(X: np.ndarray, dims: tuple[int, ...] | list[int], keep: list[int] | tuple[int, ...]) -> np.ndarray:
    """Trace out all tensor factors except ``keep`` (indices into ``dims``)."""
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    keep = sorted(keep)
    if any(k < 0 or k >= n for k in keep):
        raise LinalgError(f"keep={keep} not a subset of factors 0..{n-1}")
    Xt = np.asarray(X).reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = keep + [n + k for k in keep]
    return np.einsum(Xt, row + col, out).reshape(
        int(np.prod([dims[k] for k in keep])), -1
    )


def embed_superop(T: SuperOp, support_pos: list[int] | tuple[int, ...], dims: tuple[int, ...] | list[int]) -> SuperOp:
    """Lift a superoperator on a subset of factors to the full product space.

    ``support_pos`` gives the (sorted) positions of T's factors inside the full
    ``dims`` list; T's own factor order must match.
    """
    dims = tuple(int(d) for d in dims)
    support_pos = list(support_pos)
    if sorted(support_pos) != support_pos:
        raise LinalgError("support positions must be sorted (canonical factor order)")
    if tuple(dims[p] for p in support_pos) != T.dims:
        raise LinalgError("support dims mismatch")
    n = len(dims)
    rest = [i for i in range(n) if i not in support_pos]
    dS = int(np.prod([dims[p] for p in support_pos]))
    dE = int(np.prod([dims[p] for p in rest])) if rest else 1
    D = dS * dE
    G4 = T.matrix.reshape(dS, dS, dS, dS)
    if rest:
        I = np.eye(dE)
        M = np.einsum("abcd,ef,gh->aebgcfdh", G4, I, I, optimize=True).reshape(D * D, D * D)
    else:
        M = T.matrix
    order = support_pos + rest
    strides = np.ones(n, dtype=np.int64)
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * dims[i + 1]
    built_dims = [dims[p] for p in order]
    digits = np.array(np.unravel_index(np.arange(D), built_dims))
    p = np.zeros(D, dtype=np.int64)
    for k, site in enumerate(order):
        p += digits[k] * strides[site]
    a = np.arange(D * D)
    vp = p[a % D] + D * p[a // D]
    out = np.empty_like(M)
    out[np.ix_(vp, vp)] = M
    return SuperOp(out, dims)


def apply_local(G: np.ndarray, support_pos: list[int] | tuple[int, ...], dims: tuple[int, ...] | list[int], X: np.ndarray) -> np.ndarray:
    """Apply a local superoperator (matrix G on the support factors) to X
    without materializing the lifted matrix."""
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    support_pos = list(support_pos)
    dS = int(np.prod([dims[p] for p in support_pos]))
    D = int(np.prod(dims))
    Xt = np.asarray(X).reshape(dims + dims)
    col_axes = [n + p for p in support_pos]
    row_axes = list(support_pos)
    moved = np.moveaxis(Xt, col_axes + row_axes, range(2 * len(support_pos)))
    shape = moved.shape
    Z = moved.reshape(dS * dS, -1)
    Y = (G @ Z).reshape(shape)
    return np.moveaxis(Y, range(2 * len(support_pos)), col_axes + row_axes).reshape(D, D)


def tensor_id_apply(G: np.ndarray, dS: int, dE: int, X: np.ndarray) -> np.ndarray:
    """Apply ``T (x) id_E`` to an operator on the (S x E) product, where G is
    the superoperator matrix of T on S and the row index is ``s*dE + e``."""
    X4 = np.asarray(X).reshape(dS, dE, dS, dE)
    Z = X4.transpose(1, 3, 2, 0).reshape(dE * dE, dS * dS)
    Y = Z @ G.T
    return Y.reshape(dE, dE, dS, dS).transpose(3, 0, 2, 1).reshape(dS * dE, dS * dE)


# ---------------------------------------------------------------------------
# norm estimation: multi-start witness ascent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormEstimate:
    """A certified lower bound on a norm supremum, with its maximizer."""

    value: float
    maximizer: tuple
    restarts: int


def _unit(v: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(v)
    return v / nrm if nrm > 0 else v


def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return _unit(v)


def _sobol_units(d: int, n: int, seed: int) -> list[np.ndarray]:
    # low-discrepancy starting vectors standing in for an exhaustive angular
    # grid at small dimension
    sampler = qmc.Sobol(2 * d, scramble=True, seed=seed)
    pts = sampler.random_base2(max(1, math.ceil(math.log2(max(2, n)))))
    vs = pts[:, :d] - 0.5 + 1j * (pts[:, d:] - 0.5)
    return [_unit(v) for v in vs if np.linalg.norm(v) > 1e-12]


def _start_vectors(d: int, restarts: int, rng: np.random.Generator, seed: int) -> list[np.ndarray]:
    starts: list[np.ndarray] = [np.eye(d, dtype=complex)[k] for k in range(min(d, 4))]
    starts.append(_unit(np.ones(d, dtype=complex)))
    if d <= 4:
        starts.extend(_sobol_units(d, max(restarts, 64), seed))
    while len(starts) < restarts:
        starts.append(_random_unit(rng, d))
    return starts


def _rank_one_ascent(apply_fn, adjoint_fn, x0, y0, iters: int = 200, tol: float = 1e-12):
    x, y = x0.copy(), y0.copy()
    best, bx, by = -1.0, x0, y0
    for _ in range(iters):
        M = apply_fn(np.outer(x, y.conj()))
        U, s, Vh = np.linalg.svd(M)
        val = float(s.sum())
        if val > best + tol * max(1.0, best):
            best, bx, by = val, x, y
        else:
            break
        W = U @ Vh
        B = adjoint_fn(W)
        x = _unit(B @ y)
        y = _unit(B.conj().T @ x)
    return max(best, 0.0), bx, by


def _pure_state_ascent(apply_fn, adjoint_fn, psi0, iters: int = 300, tol: float = 1e-12):
    # maximize ||M(psi psi*)||_1 over unit psi; M Hermiticity-preserving
    psi = psi0.copy()
    best, bpsi = -1.0, psi0
    for _ in range(iters):
        A = hermitize(apply_fn(np.outer(psi, psi.conj())))
        w, V = np.linalg.eigh(A)
        val = float(np.abs(w).sum())
        if val > best + tol * max(1.0, best):
            best, bpsi = val, psi
        else:
            break
        W = (V * np.sign(w)) @ V.conj().T
        B = hermitize(adjoint_fn(W))
        _, BV = np.linalg.eigh(B)
        psi = BV[:, -1]
    return max(best, 0.0), bpsi


def max_trace_norm_rank_one(
    apply_fn,
    adjoint_fn,
    d: int,
    restarts: int = 64,
    seed: int = 0,
) -> NormEstimate:
    """Lower bound on ``sup ||M(x y*)||_1`` over unit vectors via multi-start ascent."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, d]))
    xs = _start_vectors(d, restarts, rng, seed)
    best, bx, by = 0.0, xs[0], xs[0]
    for i, x0 in enumerate(xs):
        y0 = x0 if i % 2 == 0 else _random_unit(rng, d)
        val, x, y = _rank_one_ascent(apply_fn, adjoint_fn, x0, y0)
        if val > best:
            best, bx, by = val, x, y
    return NormEstimate(best, (bx, by), len(xs))


def max_trace_norm_pure_state(
    apply_fn,
    adjoint_fn,
    d: int,
    restarts: int = 64,
    seed: int = 0,
) -> NormEstimate:
    """Lower bound on ``sup ||M(psi psi*)||_1`` over pure states."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, d, 7]))
    starts = _start_vectors(d, restarts, rng, seed + 1)
    best, bpsi = 0.0, starts[0]
    for psi0 in starts:
        val, psi = _pure_state_ascent(apply_fn, adjoint_fn, psi0)
        if val > best:
            best, bpsi = val, psi
    return NormEstimate(best, (bpsi,), len(starts))


def induced_1to1_norm_estimate(T: SuperOp, restarts: int = 64, seed: int = 0) -> NormEstimate:
    """Lower bound on the unstabilized trace-norm induced norm ``||T||_{1->1}``."""
    G = T.matrix
    Gd = G.conj().T
    return max_trace_norm_rank_one(
        lambda X: unvec(G @ vec(X)),
        lambda W: unvec(Gd @ vec(W)),
        T.dim,
        restarts=restarts,
        seed=seed,
    )


def diamond_norm_estimate(T: SuperOp, restarts: int = 64, seed: int = 0) -> NormEstimate:
    """Lower bound on ``||T||_{1->1,cb}``, stabilized by an ancilla of T's own
    dimension (the supremum is attained there)."""
    d = T.dim
    G = T.matrix
    Gd = G.conj().T
    return max_trace_norm_rank_one(
        lambda X: tensor_id_apply(G, d, d, X),
        lambda W: tensor_id_apply(Gd, d, d, W),
        d * d,
        restarts=restarts,
        seed=seed,
    )


def infnorm_cb_estimate(T: SuperOp, restarts: int = 64, seed: int = 0) -> NormEstimate:
    """Lower bound on the stabilized operator-norm induced norm
    ``||T||_{inf->inf, cb}`` (ancilla of T's own dimension)."""
    d = T.dim
    G = T.matrix
    Gd = G.conj().T

    def apply_fn(X):
        return tensor_id_apply(G, d, d, X)

    def adjoint_fn(W):
        return tensor_id_apply(Gd, d, d, W)

    D = d * d
    rng = np.random.default_rng(np.random.SeedSequence([seed, D, 13]))
    n_starts = max(restarts, 8)
    best = 0.0
    bX = None
    for k in range(n_starts):
        if k == 0:
            X = np.eye(D, dtype=complex)
        else:
            R = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
            Ur, _, Vrh = np.linalg.svd(R)
            X = Ur @ Vrh
        val = -1.0
        Xbest = X
        for _ in range(200):
            M = apply_fn(X)
            U, s, Vh = np.linalg.svd(M)
            if float(s[0]) > val + 1e-12 * max(1.0, val):
                val, Xbest = float(s[0]), X
            else:
                break
            u, v = U[:, 0], Vh[0].conj()
            Wit = adjoint_fn(np.outer(u, v.conj()))
            # the operator-norm unit ball's extreme points are unitaries: the
            # maximizer of Re tr(W' X) over ||X||<=1 is the polar unitary of W
            Uw, _, Vwh = np.linalg.svd(Wit)
            X = Uw @ Vwh
        if val > best:
            best, bX = val, Xbest
    return NormEstimate(best, (bX,), n_starts)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"LSOP"
_VERSION = 1


def save_matrix(path, M: np.ndarray) -> None:
    """Portable binary layout: 16-byte header (magic, version u32, dim u64),
    then row-major little-endian f64 interleaved re/im."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    if M.shape != (n, n):
        raise LinalgError("only square matrices are serialized")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", n))
        inter = np.empty((n, n, 2), dtype="<f8")
        inter[..., 0] = M.real
        inter[..., 1] = M.imag
        fh.write(inter.tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise LinalgError(f"bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise LinalgError(f"unsupported version {version}")
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(n * n * 16), dtype="<f8").reshape(n, n, 2)
        return (data[..., 0] + 1j * data[..., 1]).astype(complex)


def matrix_to_json(M: np.ndarray) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def matrix_from_json(data: list) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in data])
