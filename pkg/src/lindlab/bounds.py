"""Closed-form locality and stability bounds, with certified series tails.

Evaluators for the propagation-speed series, the localization and
Lieb-Robinson bounds, the fast-decay envelope Delta_0(s), the stability
envelope c(|A|), and the power-law compatibility report.  Every infinite sum
is truncated only when a certified tail bound (geometric ratio or integral
comparison) drops below 1e-12 of the partial sum.

Time selections the source leaves free are fixed and documented here:
the exponential class uses t(s) = beta*s/(2v) in Delta_0 and
t0(d) = (mu/2)(log v / v) d (floored at 0) in the stability envelope; the
power-law class uses t(s) = kbar*log(1+s) and t0(d) = ktilde*log(1+d) with the
balanced rate ktilde = mu/(gamma_tilde + v), which keeps both exponents of the
envelope positive for every admissible context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, gammaln

from .lattice import Region, distance
from .model import DecayProfile, LindbladianModel

REL_TOL = 1e-12


class BoundsError(ValueError):
    pass


class DivergenceError(BoundsError):
    pass


class InfeasibleError(BoundsError):
    pass


# ---------------------------------------------------------------------------
# Lieb-Robinson data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LRData:
    """Lieb-Robinson class ('exp' or 'power'), decay exponent mu, and speed v."""

    kind: str
    mu: float
    v: float

    def __post_init__(self) -> None:
        if self.kind not in ("exp", "power"):
            raise BoundsError(f"unknown LR class {self.kind!r}")
        if self.mu <= 0 or self.v <= 0:
            raise BoundsError("mu and v must be positive")


def nu(kind: str, mu: float, r: float) -> float:
    """The submultiplicative envelope: e^{mu r} or (1+r)^mu."""
    if r < 0:
        raise BoundsError("radius must be nonnegative")
    if kind == "exp":
        return math.exp(mu * r)
    if kind == "power":
        return (1.0 + r) ** mu
    raise BoundsError(f"unknown LR class {kind!r}")


def nu_inv(kind: str, mu: float, r: float) -> float:
    return 1.0 / nu(kind, mu, r)


# ---------------------------------------------------------------------------
# certified series summation
# ---------------------------------------------------------------------------

def _tail_bound(kind: str, rate: float, poly_deg: float, k: int) -> float:
    """Certified upper bound on ``sum_{j>k} (1+j)^poly_deg decay(j)`` where
    decay is e^{-rate j} ('exponential'), (1+j)^{-rate} ('power'), or
    e^{-rate sqrt(j)} ('quasi')."""
    if kind == "exponential":
        ratio = math.exp(-rate) * ((k + 2) / (k + 1)) ** max(poly_deg, 0.0)
        if ratio >= 1.0:
            return math.inf
        first = (k + 2) ** poly_deg * math.exp(-rate * (k + 1))
        return first / (1.0 - ratio)
    if kind == "power":
        p = rate - poly_deg
        if p <= 1.0:
            return math.inf
        return (1.0 + k) ** (1.0 - p) / (p - 1.0)
    if kind == "quasi":
        # sum_{j>k} (1+j)^p e^{-rate sqrt j} <= 2^{p+1} Gamma(2p+2, rate*u0) / rate^{2p+2},
        # u0 = max(1, sqrt k); valid since (1+u^2)^p <= (2u^2)^p for u >= 1
        a = 2.0 * max(poly_deg, 0.0) + 2.0
        u0 = max(1.0, math.sqrt(max(k, 0)))
        log_gamma_upper = gammaln(a) + math.log(max(gammaincc(a, rate * u0), 1e-300))
        return 2.0 ** (poly_deg + 1.0) * math.exp(log_gamma_upper - a * math.log(rate))
    raise BoundsError(f"unknown decay kind {kind!r}")


def _certified_sum(term, tail, start: int = 0, rel_tol: float = REL_TOL,
                   max_terms: int = 50_000_000, block: int = 8192) -> float:
    """Sum ``term(k)`` (vectorized over numpy index arrays) until ``tail(k)``
    certifies the remainder below ``rel_tol`` of the partial sum."""
    total = 0.0
    k0 = start
    while k0 < start + max_terms:
        ks = np.arange(k0, k0 + block)
        total += float(np.sum(term(ks)))
        tb = tail(k0 + block - 1)
        if math.isfinite(tb) and tb <= rel_tol * max(total, 1e-300):
            return total
        k0 += block
    raise DivergenceError("series tail failed to certify below tolerance")


# ---------------------------------------------------------------------------
# Lieb-Robinson velocity from the strength data
# ---------------------------------------------------------------------------

def lr_velocity(J: float, profile: DecayProfile, D: int, lr_kind: str, mu: float,
                rel_tol: float = REL_TOL) -> float:
    """v = 2J * sum_delta f(delta) nu_mu(delta) |b(delta)|^2 (the shell double
    sum collapsed by swapping the summation order); certified tails."""
    if J == 0.0:
        return 0.0
    if J < 0 or mu <= 0:
        raise BoundsError("J must be >= 0 and mu > 0")
    kind, p = profile.kind, profile.parameter
    poly = 2.0 * D

    def log_nu(ks: np.ndarray) -> np.ndarray:
        return mu * ks if lr_kind == "exp" else mu * np.log1p(ks)

    def log_f(ks: np.ndarray) -> np.ndarray:
        if kind == "exponential":
            return -p * ks
        if kind == "quasi-local":
            return -p * np.sqrt(ks)
        return -p * np.log1p(ks)

    def term(ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=float)
        return np.exp(log_f(ks) + log_nu(ks) + poly * np.log(2.0 * ks + 1.0))

    if kind == "finite-range":
        total = sum(
            float(profile(d)) * nu(lr_kind, mu, d) * float((2 * d + 1) ** (2 * D))
            for d in range(int(p) + 1)
        )
        return 2.0 * J * total
    if kind == "exponential" and lr_kind == "exp":
        if mu >= p:
            raise DivergenceError(f"need mu < mu_f ({mu} >= {p})")
        tail = lambda k: (2.0 ** poly) * _tail_bound("exponential", p - mu, poly, k)
    elif kind == "exponential" and lr_kind == "power":
        tail = lambda k: (2.0 ** poly) * _tail_bound("exponential", p, poly + mu, k)
    elif kind == "quasi-local" and lr_kind == "power":
        tail = lambda k: (2.0 ** poly) * _tail_bound("quasi", p, poly + mu, k)
    elif kind == "power-law" and lr_kind == "power":
        if p - mu - 2 * D <= 1:
            raise DivergenceError(
                f"need mu < alpha - (2D+1): alpha={p}, mu={mu}, D={D}"
            )
        tail = lambda k: (2.0 ** poly) * _tail_bound("power", p - mu, poly, k)
    else:
        raise DivergenceError(
            f"profile class {kind!r} diverges against LR class {lr_kind!r}"
        )
    return 2.0 * J * _certified_sum(term, tail, rel_tol=rel_tol)


# ---------------------------------------------------------------------------
# the localization exponent and compatibility report
# ---------------------------------------------------------------------------

def beta_exponent(alpha: float, D: int) -> float:
    """Piecewise localization exponent for power-law models."""
    if alpha <= 2 * D + 1:
        raise BoundsError(f"alpha must exceed 2D+1 = {2 * D + 1}")
    if alpha >= 5 * D - 1:
        return alpha - 3 * D
    return 0.5 * (alpha - D - 1)


@dataclass(frozen=True)
class BoundContext:
    """Analytic constants for the closed-form bounds.

    ``beta`` is derived from (alpha, D) in the power-law class and must be
    supplied explicitly (a certified value) in the exponential class.
    """

    D: int
    J: float
    profile: DecayProfile
    lr: LRData
    gamma: float
    delta: float
    beta_exp: float | None = None

    def __post_init__(self) -> None:
        if self.gamma <= 0 or self.delta < 0:
            raise BoundsError("need gamma > 0 and delta >= 0")
        if self.profile.kind == "power-law":
            if self.lr.kind != "power":
                raise BoundsError("power-law strength requires the power LR class")
        elif self.beta_exp is not None and self.beta_exp <= 0:
            raise BoundsError("explicit beta must be positive")

    @property
    def beta(self) -> float:
        if self.profile.kind == "power-law":
            return beta_exponent(self.profile.parameter, self.D)
        if self.beta_exp is None:
            raise BoundsError("exponential-class context needs an explicit beta")
        return self.beta_exp


@dataclass(frozen=True)
class CompatReport:
    cc1: bool
    cc2: bool
    cc3: bool
    kbar: float
    delta0: float
    gamma_tilde: float
    eps_tilde: float | None

    @property
    def all_ok(self) -> bool:
        return self.cc1 and self.cc2 and self.cc3


def compat_check(ctx: BoundContext) -> CompatReport:
    """CC-1..3 plus the derived constants kbar, delta0, gamma_tilde, eps_tilde."""
    if ctx.profile.kind != "power-law":
        raise BoundsError("the compatibility report applies to power-law contexts")
    alpha = ctx.profile.parameter
    v, gamma, delta, D = ctx.lr.v, ctx.gamma, ctx.delta, ctx.D
    beta = ctx.beta
    cc1 = alpha > 3 * D + 2
    cc2 = beta > (v / gamma) * (v + gamma + D * delta)
    cc3 = beta >= v + gamma - D * delta
    kbar = (beta + D * delta) / (v + gamma)
    delta0 = gamma * beta / (v + gamma) - v * D * delta / (v + gamma)
    gamma_tilde = delta0
    eps_tilde = gamma_tilde * ctx.lr.mu / (gamma_tilde - v) if gamma_tilde > v else None
    return CompatReport(cc1, cc2, cc3, kbar, delta0, gamma_tilde, eps_tilde)


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------

def bound_localization(ctx: BoundContext, A_size: int, O_norm: float, t: float, r: float) -> float:
    """||O_A(t) - O_r(t)|| <= ||O_A|| |A| J (e^{vt}-1-vt)/v * nu_beta^{-1}(r)."""
    if min(A_size, O_norm, t, r) < 0:
        raise BoundsError("arguments must be nonnegative")
    v = ctx.lr.v
    return O_norm * A_size * ctx.J * (math.expm1(v * t) - v * t) / v * nu_inv(ctx.lr.kind, ctx.beta, r)


def bound_lr(ctx: BoundContext, K_cb: float, O_norm: float, C: float, t: float, dist_xy: float) -> float:
    """||K(O(t))|| <= ||K||_cb ||O|| C(X,Y) (e^{vt}-1) / nu_mu(dist)."""
    if min(K_cb, O_norm, C, t, dist_xy) < 0:
        raise BoundsError("arguments must be nonnegative")
    v = ctx.lr.v
    return K_cb * O_norm * C * math.expm1(v * t) * nu_inv(ctx.lr.kind, ctx.lr.mu, dist_xy)


def delta0_envelope(ctx: BoundContext, s: float) -> float:
    """The fast-decaying envelope Delta_0(s) = (J/v) e^{v t(s)} nu_beta^{-1}(s)
    + (1+2s)^{D delta} e^{-gamma t(s)} with the documented t(s) selection."""
    if s < 0:
        raise BoundsError("s must be nonnegative")
    v, gamma = ctx.lr.v, ctx.gamma
    poly = (1.0 + 2.0 * s) ** (ctx.D * ctx.delta)
    if ctx.lr.kind == "exp":
        beta = ctx.beta
        t = beta * s / (2.0 * v)
        return (ctx.J / v) * math.exp(-beta * s / 2.0) + poly * math.exp(-gamma * t)
    report = compat_check(ctx)
    if not report.all_ok:
        raise InfeasibleError(f"compatibility condition fails: {report}")
    t = report.kbar * math.log1p(s)
    first = (ctx.J / v) * math.exp(v * t) * nu_inv("power", ctx.beta, s)
    return first + poly * math.exp(-gamma * t)


def _gtilde_exp(ctx: BoundContext):
    mu, v, gamma = ctx.lr.mu, ctx.lr.v, ctx.gamma
    slope = max(0.0, (mu / 2.0) * (math.log(v) / v))

    def t0(d: float) -> float:
        return slope * d

    def g(d: float) -> float:
        return math.exp(-mu * d / 2.0) + (1.0 / gamma) * math.exp(-gamma * t0(d))

    rate = min(mu / 2.0, gamma * slope)
    return g, rate


def _gtilde_power(ctx: BoundContext):
    report = compat_check(ctx)
    if not report.all_ok:
        raise InfeasibleError(f"compatibility condition fails: {report}")
    mu, v = ctx.lr.mu, ctx.lr.v
    gt = report.gamma_tilde
    ktilde = mu / (gt + v)  # balanced rate: both exponents equal gt*mu/(gt+v)

    def g(d: float) -> float:
        t0 = ktilde * math.log1p(d)
        return math.exp(v * t0) * nu_inv("power", mu, d) + (1.0 / ctx.gamma) * math.exp(-gt * t0)

    rate = gt * mu / (gt + v)
    return g, rate


def _envelope_majorant(kind: str, rate: float, halved: bool) -> tuple[str, float, float]:
    """(tail_kind, tail_rate, prefactor) majorizing decay(rate, m) evaluated at
    m = floor(d/2) (halved=True adds the floor slack) as a function of d."""
    if kind == "exponential":
        # e^{-rate*floor(d/2)} <= e^{rate/2} e^{-(rate/2) d}
        return "exponential", rate / 2.0, math.exp(rate / 2.0) if halved else 1.0
    if kind == "power":
        # (1+floor(d/2))^{-rate} <= 2^rate (1+d)^{-rate}
        return "power", rate, 2.0 ** rate if halved else 1.0
    if kind == "quasi":
        # e^{-rate sqrt(floor(d/2))} <= e^{rate/sqrt2} e^{-(rate/sqrt2) sqrt d}
        return "quasi", rate / math.sqrt(2.0), math.exp(rate / math.sqrt(2.0)) if halved else 1.0
    raise BoundsError(kind)


def _e_tail_majorant(e_tail_kind: str | None, e_param: float) -> tuple[str, float, float] | None:
    """(kind, rate, prefactor) with E(m) = sum_{r>m} e(r) <= pref * decay(rate, m)."""
    if e_tail_kind is None:
        return None
    if e_tail_kind == "exponential":
        lam = e_param
        return "exponential", lam, math.exp(-lam) / max(1.0 - math.exp(-lam), 1e-300)
    if e_tail_kind == "power":
        eta = e_param
        if eta <= 1.0:
            raise InfeasibleError("power perturbation profile is not summable")
        return "power", eta - 1.0, 1.0 / (eta - 1.0)
    # quasi: E(m) <= (2/lam^2) Gamma(2, lam sqrt(max(1,m))) and
    # (1+x)e^{-x} <= 2 e^{-1/2} e^{-x/2}
    lam = e_param
    return "quasi", lam / 2.0, (2.0 / lam ** 2) * 2.0 * math.exp(-0.5)


def stability_envelope(
    ctx: BoundContext,
    A_size: int,
    pert_profile,
    rel_tol: float = REL_TOL,
    max_terms: int = 200_000,
) -> float:
    """The size-independent envelope
    c(|A|) = q1(|A|) [ g(0)|A| sum_r e(r) + sum_d q(d)( (e*g)(d) + g(0) sum_{r>d} e(r) ) ]
    with q1(|A|) = |A|^{max(1, delta)} and q(d) = |A|((2d+1)^D - (2d-1)^D),
    convolutions summed with certified tails.
    """
    D = ctx.D
    e = pert_profile
    if ctx.lr.kind == "exp":
        g, g_rate = _gtilde_exp(ctx)
        g_kind = "exponential"
    else:
        g, g_rate = _gtilde_power(ctx)
        g_kind = "power"
    if g_rate <= 0:
        raise InfeasibleError("envelope g is non-decaying for this context (v <= 1)")
    if g_kind == "power" and g_rate <= D:
        raise InfeasibleError(
            f"power-class envelope rate {g_rate:.3g} <= D: "
            "boundary growth wins and the d-sum diverges"
        )
    g_pref = 1.0 + 1.0 / ctx.gamma  # g(m) <= g_pref * decay(g_rate, m)
    _, e_param, e_tail_kind = _profile_tail_data(e)
    if e_tail_kind == "power":
        if e_param <= D + 1:
            raise InfeasibleError(
                f"power perturbation profile needs eta > D+1 (eta={e_param}, D={D})"
            )
        if ctx.lr.kind == "power" and e_param <= ctx.lr.mu:
            raise InfeasibleError(
                f"power perturbation profile needs eta > mu (eta={e_param}, mu={ctx.lr.mu})"
            )

    def e_tail(k: int) -> float:
        if e_tail_kind is None:
            return 0.0
        return _tail_bound(e_tail_kind, e_param, 0.0, k)

    if isinstance(e, DecayProfile):
        term_e = e
    else:
        term_e = lambda ks: np.asarray([float(e(int(k))) for k in np.atleast_1d(ks)])
    sum_e = _certified_sum(term_e, e_tail, rel_tol=rel_tol, max_terms=max_terms, block=512)
    if sum_e == 0.0:
        return 0.0

    poly = float(D - 1)
    q_pref = A_size * 2.0 * D * 3.0 ** max(D - 1, 0)  # q(d) <= q_pref (1+d)^{D-1}
    # conv(d) <= sum_e g(ceil(d/2)) + g(0) E(floor(d/2)); E decreasing
    conv_kind, conv_rate, conv_half_pref = _envelope_majorant(g_kind, g_rate, halved=True)
    em = _e_tail_majorant(e_tail_kind, e_param)

    e_vals = [e(0)]
    partial_e = e_vals[0]
    total = 0.0
    d = 0
    while d < max_terms:
        d += 1
        e_vals.append(e(d))
        partial_e += e_vals[d]
        q_d = A_size * float((2 * d + 1) ** D - (2 * d - 1) ** D)
        conv = sum(e_vals[r] * g(d - r) for r in range(d + 1))
        E_d = max(sum_e - partial_e, 0.0)
        total += q_d * (conv + g(0) * E_d)
        t_conv = q_pref * sum_e * g_pref * conv_half_pref * _tail_bound(conv_kind, conv_rate, poly, d)
        if em is None:
            t_E = 0.0
        else:
            ek, er, ep = em
            hk, hr, hp = _envelope_majorant(ek, er, halved=True)
            t_E = q_pref * g(0) * 2.0 * ep * hp * _tail_bound(hk, hr, poly, d)
        tail_estimate = t_conv + t_E
        if math.isfinite(tail_estimate) and tail_estimate <= rel_tol * max(total, 1e-300):
            break
    else:
        raise InfeasibleError("stability envelope failed to certify convergence")
    q1 = float(A_size) ** max(1.0, ctx.delta)
    return q1 * (g(0) * A_size * sum_e + total)


def _profile_tail_data(e) -> tuple[str, float, str | None]:
    """Map a DecayProfile (or callable) to tail-certification data."""
    if isinstance(e, DecayProfile):
        if e.kind == "finite-range":
            return e.kind, e.parameter, None
        if e.kind == "exponential":
            return e.kind, e.parameter, "exponential"
        if e.kind == "quasi-local":
            return e.kind, e.parameter, "quasi"
        if e.parameter <= 1.0:
            raise InfeasibleError("power-law perturbation profile must be summable (eta > 1)")
        return e.kind, e.parameter, "power"
    # plain callables must vanish beyond a finite range to certify
    probe = [e(r) for r in range(256)]
    last_nonzero = max((i for i, v in enumerate(probe) if v != 0.0), default=-1)
    if any(v != 0.0 for v in probe[128:]):
        raise BoundsError("callable perturbation profiles must be finitely supported")
    return "finite-range", float(last_nonzero), None


# ---------------------------------------------------------------------------
# numerical verification harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    max_ratio: float
    violations: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def verify_bound(exact: np.ndarray, bound: np.ndarray, slack: float = 1e-9) -> BoundReport:
    """Per-point comparison; a violation is exact > bound + slack."""
    exact = np.asarray(exact, dtype=float)
    bound = np.asarray(bound, dtype=float)
    if exact.shape != bound.shape:
        raise BoundsError("grids must match")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bound > 0, exact / bound, np.where(exact > slack, np.inf, 0.0))
    violations = tuple(int(i) for i in np.nonzero(exact > bound + slack)[0])
    return BoundReport(float(np.max(ratios)) if ratios.size else 0.0, violations)


# ---------------------------------------------------------------------------
# model-side localization data (exp class)
# ---------------------------------------------------------------------------

def localization_zeta(
    model: LindbladianModel,
    A: Region,
    r: int,
    mu: float,
    J: float,
    lr_kind: str = "exp",
    term_norms: dict | None = None,
) -> float:
    """Exact telescoping sum zeta(r) = (1/J) sum over terms excluded from
    L_{A(r)} of ||L_u|| nu_mu^{-1}(dist(A, supp)); a certified stand-in for the
    closed-form nu_beta^{-1}(r) at concrete radii."""
    from .lattice import grow
    from .linalg import diamond_norm_estimate

    Ar = grow(model.region.geometry, A, r)
    kept = set(model.truncate(Ar).terms)
    zeta = 0.0
    for t in model.terms:
        if t in kept:
            continue
        if term_norms is not None and t in term_norms:
            norm = term_norms[t]
        else:
            norm = diamond_norm_estimate(t.op, restarts=16, seed=0).value
        supp = Region(model.region.geometry, t.support)
        d = distance(model.region.geometry, A, supp)
        zeta += (norm / J) * nu_inv(lr_kind, mu, d)
    return zeta


def certify_localization_beta(
    model: LindbladianModel,
    A: Region,
    radii: list[int],
    mu: float,
    J: float,
) -> float:
    """The largest beta with zeta(r) <= e^{-beta r} at every tested radius."""
    betas = []
    for r in radii:
        z = localization_zeta(model, A, r, mu, J)
        if z <= 0:
            continue
        if z >= 1.0:
            raise InfeasibleError(
                f"zeta({r}) = {z:.3g} >= 1: increase mu to certify an exponential rate"
            )
        betas.append(-math.log(z) / r)
    if not betas:
        raise InfeasibleError("no usable radii to certify beta")
    return min(betas)
