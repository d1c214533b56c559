"""Truncated means, slowly varying normalizers and probes for nonnegative Y.

For Y >= 0 with truncated mean l(x) = E Y 1{Y <= x}, this module evaluates
l, the tail ratio x P(Y > x) / l(x), the conjugate sequence b_n solving
b = n l(b), a shrinking schedule a_n with n P(Y > a_n b_n) -> 0, and grid
probes of the two regularity conditions l(x l(x)) / l(x) -> 1 and
l(x / ln x) / l(x) -> 1.

Slowly varying functions are handled through their logarithm on a log
scale, so that probes can run out to x ~ 1e300 without overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

from . import _kernels as K

__all__ = [
    "SlowlyVarying",
    "ell_const",
    "ell_log",
    "ell_ap4",
    "ell_table",
    "parse_ell",
    "PositiveLawY",
    "truncated_mean",
    "tail_prob",
    "tail_ratio",
    "truncated_min_mean",
    "bruin_bn",
    "bruin_residual",
    "pick_an",
    "AnSchedule",
    "ProbeReport",
    "probe_condition",
    "ConvergenceError",
    "DomainError",
]


class ConvergenceError(ArithmeticError):
    """An iteration did not converge; ``trace`` holds the iterates."""

    def __init__(self, msg, trace=()):
        super().__init__(msg)
        self.trace = list(trace)


class DomainError(ValueError):
    pass


# ----------------------------------------------------------------- evaluators


@dataclass(frozen=True)
class SlowlyVarying:
    """A positive function given by ``log_value(ln x)``."""

    name: str
    log_value: Callable[[float], float] = field(compare=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.exp(np.vectorize(self.log_value, otypes=[float])(np.log(x)))
        return float(out) if out.ndim == 0 else out

    def log(self, x: float) -> float:
        return self.log_value(math.log(x))


def ell_const(c: float = 1.0) -> SlowlyVarying:
    if not c > 0:
        raise ValueError("constant must be positive")
    lc = math.log(c)
    return SlowlyVarying(f"const:{c}", lambda lx: lc)


def ell_log() -> SlowlyVarying:
    """l(x) = ln x (defined for x > 1)."""
    return SlowlyVarying("log", lambda lx: math.log(lx) if lx > 0 else -math.inf)


def ell_ap4(beta: float) -> SlowlyVarying:
    """l(x) = exp((ln x)^beta), beta in (0, 1)."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return SlowlyVarying(f"ap4:{beta}", lambda lx: max(lx, 0.0) ** beta)


def ell_table(source: str | Path) -> SlowlyVarying:
    """Tabulated l: rows ``x,l(x)``; log-log interpolation, flat beyond the ends."""
    rows = []
    for line in Path(source).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(";", ",").replace("\t", ",").split(",")
        try:
            x, y = float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            continue  # header
        rows.append((x, y))
    if len(rows) < 2:
        raise ValueError(f"{source}: need at least two numeric rows 'x,l(x)'")
    arr = np.array(sorted(rows))
    if np.any(arr <= 0):
        raise ValueError(f"{source}: x and l(x) must be positive")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    return SlowlyVarying(f"table:{source}", lambda t: float(np.interp(t, lx, ly)))


def parse_ell(spec: str) -> SlowlyVarying:
    """``const[:c]``, ``log``, ``ap4:beta`` or a path to a two-column table."""
    head, _, arg = spec.partition(":")
    if head == "const":
        return ell_const(float(arg) if arg else 1.0)
    if head == "log":
        return ell_log()
    if head == "ap4":
        return ell_ap4(float(arg) if arg else 0.75)
    if Path(spec).exists():
        return ell_table(spec)
    raise ValueError(f"unknown ell specification {spec!r}")


# -------------------------------------------------------------------- laws of Y


@dataclass(frozen=True)
class PositiveLawY:
    """Law of a nonnegative Y.

    variants: ``pareto_one`` (P(Y > x) = 1/x on x >= 1), ``st_petersburg``
    (Y = 2^T, P(T = m) = 2^-m), ``bounded`` (finite atoms), ``sampled``
    (empirical), ``analytic`` (given by its truncated mean).
    """

    variant: str
    values: tuple = ()
    probs: tuple = ()
    ell: SlowlyVarying | None = field(default=None, compare=False)

    @classmethod
    def pareto_one(cls):
        return cls("pareto_one")

    @classmethod
    def st_petersburg(cls):
        return cls("st_petersburg")

    @classmethod
    def bounded(cls, points):
        """``points``: a single value or (value, probability) pairs."""
        if np.ndim(points) == 0:
            points = [(float(points), 1.0)]
        v = tuple(float(a) for a, _ in points)
        p = tuple(float(b) for _, b in points)
        if min(v) < 0 or min(p) < 0 or abs(sum(p) - 1) > 1e-12:
            raise ValueError("bounded law needs nonnegative values and probabilities summing to 1")
        return cls("bounded", v, p)

    @classmethod
    def sampled(cls, sample):
        s = np.asarray(sample, dtype=float).ravel()
        if s.size == 0 or np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("sample must be nonempty, finite and nonnegative")
        return cls("sampled", tuple(s))

    @classmethod
    def analytic(cls, ell: SlowlyVarying):
        return cls("analytic", ell=ell)

    @property
    def sup(self) -> float:
        if self.variant in ("bounded", "sampled"):
            return max(self.values)
        return math.inf

    def kernel_spec(self):
        """(kind, table) for the compiled i.i.d. samplers."""
        if self.variant == "pareto_one":
            return K.Y_PARETO_ONE, np.zeros(1)
        if self.variant == "st_petersburg":
            return K.Y_ST_PETERSBURG, np.zeros(1)
        if self.variant == "sampled":
            return K.Y_TABLE, np.asarray(self.values)
        if self.variant == "bounded":
            # equal-probability table; exact when probabilities are multiples of 1/1024
            grid = (np.arange(1024) + 0.5) / 1024
            cum = np.cumsum(self.probs)
            idx = np.minimum(np.searchsorted(cum, grid), len(self.values) - 1)
            return K.Y_TABLE, np.asarray(self.values)[idx]
        raise ValueError(f"no sampler for variant {self.variant!r}")

    def to_dict(self) -> dict:
        d = {"variant": self.variant}
        if self.variant == "bounded":
            d["points"] = [[v, p] for v, p in zip(self.values, self.probs)]
        elif self.variant == "sampled":
            d["size"] = len(self.values)
        elif self.variant == "analytic":
            d["ell"] = self.ell.name
        return d


def _log2_floor(x: float) -> int:
    m, e = math.frexp(x)  # x = m 2^e, m in [0.5, 1)
    return e - 1


def truncated_mean(lawY: PositiveLawY, x: float) -> float:
    """E Y 1{Y <= x}."""
    if not x > 0:
        raise ValueError("x must be > 0")
    v = lawY.variant
    if v == "pareto_one":
        return math.log(x) if x > 1 else 0.0
    if v == "st_petersburg":
        return float(max(_log2_floor(x), 0))
    if v == "bounded":
        return float(sum(a * p for a, p in zip(lawY.values, lawY.probs) if a <= x))
    if v == "sampled":
        s = np.asarray(lawY.values)
        return float(np.mean(np.where(s <= x, s, 0.0)))
    return float(lawY.ell(x))


def tail_prob(lawY: PositiveLawY, x: float) -> float:
    """P(Y > x)."""
    v = lawY.variant
    if v == "pareto_one":
        return min(1.0, 1.0 / x)
    if v == "st_petersburg":
        return 1.0 if x < 2 else 2.0 ** (-_log2_floor(x))
    if v == "bounded":
        return float(sum(p for a, p in zip(lawY.values, lawY.probs) if a > x))
    if v == "sampled":
        return float(np.mean(np.asarray(lawY.values) > x))
    # P(Y > x) = int_x^inf (l(y) - l(x)) dy / y^2, via y = x e^s
    lx = lawY.ell.log(x)
    f = lambda s: (math.exp(lawY.ell.log_value(math.log(x) + s) - lx) - 1.0) * math.exp(-s)
    val, _ = integrate.quad(f, 0.0, np.inf, limit=500)
    return math.exp(lx) * val / x


def tail_ratio(lawY: PositiveLawY, x: float) -> float:
    """x P(Y > x) / E Y 1{Y <= x}."""
    l = truncated_mean(lawY, x)
    if not l > 0:
        raise DomainError(f"truncated mean vanishes at x={x}")
    return x * tail_prob(lawY, x) / l


def truncated_min_mean(lawY: PositiveLawY, x: float) -> float:
    """E min(Y, x) = l(x) + x P(Y > x)."""
    return truncated_mean(lawY, x) + x * tail_prob(lawY, x)


# ------------------------------------------------------------------- b_n, a_n


def bruin_residual(ell, n: float, b: float) -> float:
    """|n l(b) / b - 1|."""
    return abs(n * float(ell(b)) / b - 1.0)


def bruin_bn(ell, n: int, mode: str = "fixed_point", max_iter: int = 10_000) -> float:
    """b_n with n l(b_n) / b_n -> 1.

    ``fixed_point`` iterates b <- n l(b) from b = n l(n) (damped by 1/2 once
    the steps change sign) until the relative change is below 1e-9 and the
    residual below 1e-9; ``formula_ap3`` returns n l(n).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    b = n * float(ell(n))
    if mode == "formula_ap3":
        return b
    if mode != "fixed_point":
        raise ValueError("mode must be 'fixed_point' or 'formula_ap3'")
    if not b > 0:
        raise ValueError("l(n) must be positive")
    trace = [b]
    damp = 1.0
    prev_step = 0.0
    for _ in range(max_iter):
        target = n * float(ell(b))
        step = target - b
        if prev_step * step < 0:
            damp = 0.5
        nb = b + damp * step
        trace.append(nb)
        if abs(nb - b) <= 1e-12 * abs(b) or (abs(nb - b) <= 1e-9 * abs(b) and bruin_residual(ell, n, nb) < 1e-10):
            return nb
        prev_step = step
        b = nb
    raise ConvergenceError(f"b_n fixed point did not converge in {max_iter} iterations", trace[-20:])


@dataclass
class AnSchedule:
    """a_n = (ln n)^-exponent with the probe table that selected it."""

    exponent: float
    probe_table: list[dict]

    def __call__(self, n):
        return np.log(np.asarray(n, dtype=float)) ** (-self.exponent)


def pick_an(lawY: PositiveLawY, b, probe_n=(1e3, 1e6, 1e9), max_halvings: int = 6) -> AnSchedule:
    """Pick a_n = (ln n)^-1/2, halving the exponent while n P(Y > a_n b_n) fails to decrease."""
    table = []
    gamma = 0.5
    for attempt in range(max_halvings + 1):
        vals = []
        for n in probe_n:
            a = math.log(n) ** (-gamma)
            v = n * tail_prob(lawY, a * float(b(n)))
            vals.append(v)
            table.append({"exponent": gamma, "n": n, "a_n": a, "value": v})
        if max(vals) == 0.0 or all(x > y for x, y in zip(vals, vals[1:])):
            return AnSchedule(gamma, table)
        if attempt < max_halvings:
            gamma /= 2.0
    raise ConvergenceError("no schedule a_n = (ln n)^-g made n P(Y > a_n b_n) decrease", table)


# ----------------------------------------------------------------------- probes


@dataclass
class ProbeReport:
    which: str
    x: np.ndarray
    ratio: np.ndarray
    verdict: str
    tolerance: float
    last: int

    def rows(self):
        return [{"x": float(x), "ratio": float(r)} for x, r in zip(self.x, self.ratio)]


def probe_condition(ell: SlowlyVarying, which: str, x_grid, tolerance: float = 0.02, last: int = 3) -> ProbeReport:
    """Ratios l(x l(x))/l(x) (``2a``) or l(x/ln x)/l(x) (``2b``) along ``x_grid``.

    Verdict ``converges_to_1`` when the last ``last`` ratios are within
    ``tolerance`` of 1, ``diverges`` when |ratio - 1| grows over them,
    otherwise ``inconclusive``.
    """
    x = np.asarray(x_grid, dtype=float)
    if x.size < last or np.any(np.diff(x) <= 0):
        raise ValueError("x_grid must be increasing with at least `last` points")
    if x[-1] / x[0] < 1e3:
        raise ValueError("x_grid must span at least three decades")
    lx = np.log(x)
    out = np.empty_like(x)
    for i, t in enumerate(lx):
        base = ell.log_value(t)
        if which == "2a":
            arg = t + base
        elif which == "2b":
            if t <= 1:
                out[i] = np.nan
                continue
            arg = t - math.log(t)
        else:
            raise ValueError("which must be '2a' or '2b'")
        out[i] = math.exp(ell.log_value(arg) - base)
    tail = out[-last:]
    dev = np.abs(tail - 1.0)
    if np.all(np.isfinite(tail)) and np.all(dev <= tolerance):
        verdict = "converges_to_1"
    elif np.all(np.isfinite(tail)) and np.all(np.diff(dev) > 0):
        verdict = "diverges"
    else:
        verdict = "inconclusive"
    return ProbeReport(which, x, out, verdict, tolerance, last)
