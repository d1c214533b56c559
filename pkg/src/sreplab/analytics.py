"""Analytic objects of the recursion U = AU + B.

psi(p) = E A^p 1{A > 0}, the index kappa with psi(kappa) = 1, the tilted log
moment E A^kappa ln A, the truncated tilted log moment h_A, the normalizer
g_A, the constant D = E[(AU + B)^kappa - (AU)^kappa], the Kesten-type slope
constant and the critical GARCH variance factor C_{lambda,Z}.

Expectations are computed by enumeration for finite-support laws, in closed
form where one exists, and by adaptive quadrature otherwise.  The Monte Carlo
estimate of D is the only simulated quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

from . import _kernels as K
from .laws import (
    CoefficientLaw,
    DiscreteLaw,
    GarchLaw,
    KeveiLaw,
    LognormalLaw,
    NoiseLaw,
    encode,
    garch_to_sre,
    sample_coeff,
)
from .rng import Stream

__all__ = [
    "Estimate",
    "SlowVariationProfile",
    "KestenConstant",
    "NoRootError",
    "InfiniteMomentError",
    "ConsistencyError",
    "psi",
    "solve_kappa",
    "tilted_log_moment",
    "h_A",
    "fit_profile",
    "g_A",
    "g_A_log",
    "expected_b",
    "d_constant",
    "kesten_constant",
    "c_lambda_z",
]

_EPSABS = 1e-13
_EPSREL = 1e-12


class NoRootError(ValueError):
    """psi(p) = 1 has no bracketed root."""


class InfiniteMomentError(ValueError):
    """A required tilted log moment is infinite."""


class ConsistencyError(RuntimeError):
    """Computed quantities contradict a structural identity."""


@dataclass(frozen=True)
class Estimate:
    """A value with its Monte Carlo standard error (0 for analytic values)."""

    value: float
    std_error: float = 0.0
    reps: int = 0
    ci95: tuple[float, float] | None = None
    method: str = "analytic"
    detail: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.ci95 is None:
            half = 1.959963984540054 * self.std_error
            object.__setattr__(self, "ci95", (self.value - half, self.value + half))

    @property
    def analytic(self) -> bool:
        return self.std_error == 0.0

    def as_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "reps": self.reps,
                "ci95": list(self.ci95), "method": self.method}


# ------------------------------------------------------------------ integration


def _quad(f, a, b, points=None):
    val, _ = integrate.quad(f, a, b, epsabs=_EPSABS, epsrel=_EPSREL, limit=500, points=points)
    return val


def _tail_integral(f, a: float, start: float | None = None) -> float:
    """Integral of f over [a, inf); +inf when doubling the cutoff keeps moving it by > 1%."""
    x = max(2.0 * abs(a), 10.0) if start is None else start
    total = _quad(f, a, x)
    for _ in range(60):
        nxt = total + _quad(f, x, 2.0 * x)
        if abs(nxt - total) <= 0.01 * abs(nxt):
            rest, _ = integrate.quad(f, x, np.inf, epsabs=_EPSABS, epsrel=_EPSREL, limit=500)
            return total + rest
        total = nxt
        x *= 2.0
    return math.inf


def _noise_expect(noise: NoiseLaw, g, breaks=(), tail=False) -> float:
    """E g(Z) for a symmetric continuous noise, integrating over z >= 0 split at ``breaks``.

    With ``tail=True`` the last piece goes through the divergence check.
    """
    pdf = noise.pdf
    f = lambda z: g(z) * pdf(z)
    cuts = [0.0] + sorted(b for b in breaks if b > 0)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += _quad(f, lo, hi)
    last = cuts[-1]
    if tail:
        total += _tail_integral(f, last)
    else:
        total += integrate.quad(f, last, np.inf, epsabs=_EPSABS, epsrel=_EPSREL, limit=500)[0]
    return 2.0 * total


def _kevei_v_expect(law: KeveiLaw, g, lo: float, hi: float = math.inf, tail=False) -> float:
    """Integral over v in [lo, hi] of g(v) * E-tilted density, i.e. E exp(kappa V) g(V) 1{lo<V<hi} * P(branch)."""
    lo = max(lo, law.v0)
    if hi <= lo:
        return 0.0
    dens = lambda v: v ** (-law.alpha - 1.0) / law.norm
    f = lambda v: g(v) * dens(v)
    if math.isinf(hi):
        val = _tail_integral(f, lo) if tail else integrate.quad(f, lo, np.inf, epsabs=_EPSABS,
                                                                 epsrel=_EPSREL, limit=500)[0]
    else:
        val = _quad(f, lo, hi)
    return law.p * val


# ------------------------------------------------------------------------- psi


def psi(law: CoefficientLaw, p: float) -> Estimate:
    """E A^p 1{A > 0}; +inf when the moment diverges."""
    if not p > 0:
        raise ValueError(f"p must be > 0, got {p}")
    atoms = law.atoms()
    if atoms is not None:
        a, _, q = atoms
        pos = a > 0
        method = "enumeration (empirical sample)" if (
            isinstance(law, GarchLaw) and law.noise.variant == "empirical") else "enumeration"
        return Estimate(float(np.dot(q[pos], a[pos] ** p)), method=method)
    if isinstance(law, LognormalLaw):
        return Estimate(math.exp(p * law.mu + 0.5 * p * p * law.sigma**2), method="closed form")
    if isinstance(law, KeveiLaw):
        down = (1.0 - law.p) * math.exp(-p * law.w)
        if p > law.kappa:
            return Estimate(math.inf, method="closed form (divergent)")
        if p == law.kappa:
            return Estimate(down + law.p * law.exp_moment, method="closed form")
        up = integrate.quad(lambda v: v ** (-law.alpha - 1.0) * math.exp((p - law.kappa) * v),
                            law.v0, np.inf, epsabs=_EPSABS, epsrel=_EPSREL, limit=500)[0]
        return Estimate(down + law.p * up / law.norm, method="quadrature")
    if isinstance(law, GarchLaw):
        if law.noise.variant == "student_t_normalized" and 2 * p >= law.noise.df:
            return Estimate(math.inf, method="closed form (divergent)")
        lam, delta = law.lam, law.delta
        brk = [] if delta >= 1 or lam == 0 else [math.sqrt((1 - delta) / lam)]
        val = _noise_expect(law.noise, lambda z: (lam * z * z + delta) ** p, brk)
        return Estimate(val, method="quadrature")
    raise TypeError(f"unsupported law {law!r}")


def solve_kappa(law: CoefficientLaw) -> float:
    """The positive root of psi(kappa) = 1."""
    if isinstance(law, GarchLaw) and law.critical:
        return 1.0
    if isinstance(law, KeveiLaw):
        if abs(psi(law, law.kappa).value - 1.0) > 1e-9:
            raise ConsistencyError("Kevei law does not satisfy E A^kappa = 1")
        return law.kappa
    atoms = law.atoms()
    if atoms is not None:
        a, _, q = atoms
        if q[a > 1].sum() == 0:
            raise NoRootError("upper side: A <= 1 almost surely, psi(p) < 1 for every p > 0")
    f = lambda p: psi(law, p).value - 1.0
    p, fp = 1.0, f(1.0)
    if fp == 0.0:
        return 1.0
    if fp < 0:
        lo = p
        for _ in range(60):
            p *= 2.0
            fp = f(p)
            if fp >= 0:
                break
            lo = p
        else:
            raise NoRootError("upper side: psi(p) < 1 for all p tried (A <= 1 a.s.?)")
        hi = p
    else:
        hi = p
        for _ in range(60):
            p *= 0.5
            fp = f(p)
            if fp < 0:
                break
            hi = p
        else:
            raise NoRootError("lower side: psi(p) >= 1 near 0 (E ln A >= 0?)")
        lo = p
    # shrink an infinite upper end onto a finite value above 1
    for _ in range(200):
        if math.isfinite(f(hi)):
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if math.isfinite(fm) and fm >= 0:
            hi = mid
            break
        if math.isfinite(fm):
            lo = mid
        else:
            hi = mid
    else:
        raise NoRootError("upper side: psi jumps from below 1 to +inf")
    if not math.isfinite(f(hi)):
        raise NoRootError("upper side: psi jumps from below 1 to +inf")
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-13, maxiter=500)


# ----------------------------------------------------------- tilted log moments


def tilted_log_moment(law: CoefficientLaw, kappa: float) -> Estimate:
    """E A^kappa ln A with parts ``plus`` = E A^kappa ln+ A and ``minus`` = E A^kappa ln- A."""
    atoms = law.atoms()
    if atoms is not None:
        a, _, q = atoms
        up = a > 1
        dn = (a > 0) & (a < 1)
        plus = float(np.dot(q[up], a[up] ** kappa * np.log(a[up])))
        minus = float(0.0 - np.dot(q[dn], a[dn] ** kappa * np.log(a[dn])))
        method = "enumeration"
    elif isinstance(law, KeveiLaw):
        plus = _kevei_v_expect(law, lambda v: v, 0.0, tail=True)
        minus = (1.0 - law.p) * math.exp(-law.kappa * law.w) * law.w
        method = "quadrature"
    elif isinstance(law, LognormalLaw):
        mu, s = law.mu, law.sigma
        g = lambda y: math.exp(kappa * y) * y * math.exp(-0.5 * ((y - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        plus = _tail_integral(g, 0.0, start=max(10.0, mu + 10 * s + kappa * s * s))
        minus = -_quad(g, -np.inf, 0.0)
        method = "quadrature"
    elif isinstance(law, GarchLaw):
        lam, delta = law.lam, law.delta
        A = lambda z: lam * z * z + delta
        if delta >= 1 or lam == 0:
            zs = 0.0
        else:
            zs = math.sqrt((1 - delta) / lam)

        def alog(z, sign):
            a = A(z)
            if a <= 0:
                return 0.0
            v = a**kappa * math.log(a)
            return v if (v > 0) == (sign > 0) else 0.0

        plus = _noise_expect(law.noise, lambda z: alog(z, +1), [zs], tail=True)
        minus = -_noise_expect(law.noise, lambda z: alog(z, -1), [zs]) if zs > 0 else 0.0
        method = "quadrature"
    else:
        raise TypeError(f"unsupported law {law!r}")
    return Estimate(plus - minus, method=method, detail={"plus": plus, "minus": minus})


def h_A(law: CoefficientLaw, kappa: float, x: float) -> float:
    """E A^kappa ln+(A ^ e^x), the truncated tilted log moment at log level x."""
    if not x > 0:
        raise ValueError(f"x must be > 0, got {x}")
    atoms = law.atoms()
    if atoms is not None:
        a, _, q = atoms
        up = a > 1
        return float(np.dot(q[up], a[up] ** kappa * np.minimum(np.log(a[up]), x)))
    if isinstance(law, KeveiLaw):
        inner = _kevei_v_expect(law, lambda v: v, 0.0, x)
        outer = x * _kevei_v_expect(law, lambda v: 1.0, x)
        return inner + outer
    if isinstance(law, LognormalLaw):
        mu, s = law.mu, law.sigma
        dens = lambda y: math.exp(kappa * y - 0.5 * ((y - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        inner = _quad(lambda y: y * dens(y), 0.0, x)
        outer = x * integrate.quad(dens, x, np.inf, epsabs=_EPSABS, epsrel=_EPSREL, limit=500)[0]
        return inner + outer
    if isinstance(law, GarchLaw):
        lam, delta = law.lam, law.delta
        if lam == 0:
            return delta**kappa * min(math.log(delta), x) if delta > 1 else 0.0
        z1 = math.sqrt(max(1 - delta, 0.0) / lam)
        # past e^690 the cut sits beyond any mass a finite-variance noise can carry
        zx = math.sqrt(max(math.exp(min(x, 690.0)) - delta, 0.0) / lam)

        def g(z):
            a = lam * z * z + delta
            if a <= 1:
                return 0.0
            return a**kappa * min(math.log(a), x)

        # geometric breaks keep quadrature from stepping over the mass when zx is huge
        mids = np.geomspace(max(z1, 1.0), min(zx, 1e8), 24) if zx > 4 * max(z1, 1.0) else []
        return _noise_expect(law.noise, g, [z1, *mids, zx])
    raise TypeError(f"unsupported law {law!r}")


# ---------------------------------------------------------------- normalizers


@dataclass(frozen=True)
class SlowVariationProfile:
    """Normalizer descriptor: Finite(m = E A^kappa ln A) or RegVar(rho, ell)."""

    branch: str
    m: float | None = None
    rho: float | None = None
    ell: Callable[[float], float] | None = field(default=None, compare=False)
    detail: dict = field(default_factory=dict, compare=False)

    @classmethod
    def finite(cls, m: float) -> "SlowVariationProfile":
        if not (m > 0 and math.isfinite(m)):
            raise ValueError(f"Finite branch needs 0 < m < inf, got {m}")
        return cls("finite", m=float(m))

    @classmethod
    def regvar(cls, rho: float, ell: Callable[[float], float], **detail) -> "SlowVariationProfile":
        if not 0 <= rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {rho}")
        return cls("regvar", rho=float(rho), ell=ell, detail=detail)

    def as_dict(self) -> dict:
        d = {"branch": self.branch}
        if self.branch == "finite":
            d["m"] = self.m
        else:
            d["rho"] = self.rho
            d.update({k: v for k, v in self.detail.items() if isinstance(v, (int, float, str))})
        return d


def fit_profile(law: CoefficientLaw, kappa: float, x_grid, window: float = 0.5) -> SlowVariationProfile:
    """Finite branch when E A^kappa ln+ A < inf, else a log-log fit of h_A on the top of ``x_grid``.

    ``window`` is the fraction of the grid (by position, grids are meant to be
    log-spaced) used for the fit; the default keeps the upper half.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if x_grid.size < 2 or np.any(np.diff(x_grid) <= 0):
        raise ValueError("x_grid must be increasing with at least two points")
    if x_grid[-1] / x_grid[0] < 100:
        raise ValueError("x_grid must span at least two decades")
    tlm = tilted_log_moment(law, kappa)
    if math.isfinite(tlm.detail["plus"]):
        if not tlm.value > 0:
            raise ConsistencyError(f"E A^kappa ln A = {tlm.value:.6g} <= 0 contradicts convexity of psi")
        return SlowVariationProfile.finite(tlm.value)
    h = np.array([h_A(law, kappa, x) for x in x_grid])
    k0 = int(math.floor(x_grid.size * (1.0 - window)))
    k0 = min(k0, x_grid.size - 2)
    lx, lh = np.log(x_grid[k0:]), np.log(h[k0:])
    slope, icpt = np.polyfit(lx, lh, 1)
    rho = float(min(max(slope, 0.0), 1.0 - 1e-9))

    def ell(x, _rho=rho):
        return h_A(law, kappa, float(x)) / float(x) ** _rho

    return SlowVariationProfile.regvar(rho, ell, raw_slope=float(slope), intercept=float(icpt),
                                       fit_from=float(x_grid[k0]), fit_to=float(x_grid[-1]))


def g_A_log(profile: SlowVariationProfile, log_t: float) -> float:
    """g_A evaluated at t = exp(log_t); avoids forming huge t."""
    x = float(log_t)
    if not x > 0:
        raise ValueError(f"g_A needs t > 1 (ln t = {x})")
    if profile.branch == "finite":
        return x / profile.m
    rho = profile.rho
    ell = profile.ell(x)
    if rho == 0.0:
        return x / ell
    return math.sin(math.pi * rho) / (math.pi * rho * (1.0 - rho)) * x ** (1.0 - rho) / ell


def g_A(profile: SlowVariationProfile, t: float) -> float:
    """Normalizer of the truncated moment E U^kappa 1{U <= t}."""
    if not t > 1:
        raise ValueError(f"g_A needs t > 1, got {t}")
    return g_A_log(profile, math.log(t))


# ------------------------------------------------------------------ constants


def expected_b(law: CoefficientLaw) -> float:
    atoms = law.atoms()
    if atoms is not None:
        _, b, q = atoms
        return float(np.dot(q, b))
    if isinstance(law, GarchLaw):
        return law.beta
    return float(law.b)


def d_constant(
    law: CoefficientLaw,
    kappa: float,
    stream: Stream,
    reps: int,
    tol: float = 1e-12,
    max_depth: int = 10**6,
) -> Estimate:
    """D = E[(AU + B)^kappa - (AU)^kappa] with U independent of (A, B).

    Exact (E B) when kappa = 1; otherwise Monte Carlo over ``reps`` pairs.
    """
    if abs(kappa - 1.0) < 1e-14:
        return Estimate(expected_b(law), method="closed form E B")
    if reps < 10_000:
        raise ValueError("d_constant needs reps >= 1e4")
    enc = encode(law)
    u, _, stop, _ = K.perpetuity_batch(*enc, np.uint64(stream.split(0).key), np.uint64(0), int(reps),
                                       float(tol), int(max_depth))
    a, b = sample_coeff(stream.split(1), law, reps)
    au = a * u
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(au > 0, au**kappa * np.expm1(kappa * np.log1p(b / au)), b**kappa)
    flagged = int(np.sum((stop == K.STOP_DEPTH) | (stop == K.STOP_OVERFLOW)))
    ok = np.isfinite(f)
    f = f[ok]
    mean = float(f.mean())
    se = float(f.std(ddof=1) / math.sqrt(f.size))
    return Estimate(mean, se, int(f.size), method="monte carlo",
                    detail={"flagged": flagged, "unreliable": flagged > 0.001 * reps})


class KestenConstant(NamedTuple):
    c_prime: float
    tail_constant: float | None
    reason: str


def kesten_constant(D: float, kappa: float, m: float, nonarithmetic: str) -> KestenConstant:
    """Slope c' = D/m of E U^kappa 1{U <= t} against ln t and, in the Kesten
    regime (non-arithmetic ln A), the tail constant c'/kappa."""
    if not (m > 0 and math.isfinite(m)):
        raise ValueError(f"m must lie in (0, inf), got {m}")
    c = D / m
    if nonarithmetic == "pass":
        return KestenConstant(c, c / kappa, "non-arithmetic ln A: P(U > t) ~ (c'/kappa) t^-kappa")
    return KestenConstant(c, None, f"tail constant not identified (non-arithmetic check: {nonarithmetic})")


def c_lambda_z(noise: NoiseLaw, lam: float) -> Estimate:
    """C_{lambda,Z} = 1 / E[(1 + lam(Z^2 - 1)) ln(1 + lam(Z^2 - 1))]."""
    if not 0 < lam <= 1:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")

    def xlogx(a):
        a = np.asarray(a, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0)

    if noise.is_table:
        z, p = noise.atoms()
        if p[np.abs(z * z - 1.0) > 1e-14].sum() == 0:
            raise ValueError("Z^2 = 1 almost surely: P(Z^2 != 1) > 0 fails")
        val = float(np.dot(p, xlogx(1.0 + lam * (z * z - 1.0))))
        method = "enumeration"
    else:
        zs = math.sqrt(max(0.0, 1.0 - 1.0 / lam)) if lam < 1 else 0.0
        z1 = 1.0
        plus = _noise_expect(noise, lambda z: float(xlogx(1.0 + lam * (z * z - 1.0))) if z > 1 else 0.0,
                             [z1], tail=True)
        if math.isinf(plus):
            raise InfiniteMomentError(
                "E A ln+ A is infinite for this noise; use the regularly varying g_A branch")
        minus = _noise_expect(noise, lambda z: float(xlogx(1.0 + lam * (z * z - 1.0))) if z <= 1 else 0.0,
                              [zs, z1])
        val = plus + minus
        method = "quadrature"
    if not val > 0:
        raise ConsistencyError(f"E A ln A = {val:.6g} <= 0")
    return Estimate(1.0 / val, method=method, detail={"tilted_log_moment": val})
