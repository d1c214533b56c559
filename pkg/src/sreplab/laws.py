"""Noise laws Z, coefficient laws (A, B) and the standing-condition report.

Laws are immutable values.  Sampling goes through the compiled kernels; every
law knows how to encode itself as the ``(ipar, fpar, tx, ty, tc)`` arrays they
consume.  Finite-support laws expose their atoms so that analytic quantities
can be computed by enumeration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import integrate, special

from . import _kernels as K
from .rng import Stream

__all__ = [
    "LawError",
    "NoiseLaw",
    "CoefficientLaw",
    "GarchLaw",
    "LognormalLaw",
    "DiscreteLaw",
    "KeveiLaw",
    "ConditionReport",
    "THREE_POINT_NOISE",
    "sample_noise",
    "sample_coeff",
    "garch_to_sre",
    "garch_critical",
    "build_kevei_law",
    "check_conditions",
    "encode",
    "encode_tilted",
    "noise_from_dict",
    "law_from_dict",
]

_MOMENT_TOL = 1e-8
_PROB_TOL = 1e-12


class LawError(ValueError):
    """Invalid law parameters or an unreadable law source."""


# --------------------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseLaw:
    """Distribution of the GARCH multiplicative noise (mean 0, variance 1).

    Use the constructors :meth:`standard_normal`, :meth:`discrete`,
    :meth:`student_t` and :meth:`empirical` rather than the raw fields.
    """

    variant: str
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    df: float = math.nan
    source: str = ""
    standardized: bool = True

    @classmethod
    def standard_normal(cls) -> "NoiseLaw":
        return cls("standard_normal")

    @classmethod
    def discrete(cls, points, standardized: bool = True) -> "NoiseLaw":
        """Finite-support noise.  ``standardized=False`` skips the mean/variance
        check (sampling only; GARCH constructors reject such laws)."""
        vals = tuple(float(v) for v, _ in points)
        probs = tuple(float(p) for _, p in points)
        law = cls("discrete", vals, probs, standardized=bool(standardized))
        law._validate_table()
        return law

    @classmethod
    def student_t(cls, df: float) -> "NoiseLaw":
        if not df > 2:
            raise LawError(f"normalized Student t needs df > 2, got {df}")
        return cls("student_t_normalized", df=float(df))

    @classmethod
    def empirical(cls, source, column: str | int | None = None) -> "NoiseLaw":
        """Load a sample (array, or a text/CSV file) and studentize it."""
        if isinstance(source, (str, Path)):
            data = _read_sample(Path(source), column)
            name = str(source)
        else:
            data = np.asarray(source, dtype=float).ravel()
            name = "<array>"
        if data.size < 2 or not np.all(np.isfinite(data)):
            raise LawError("empirical noise needs at least two finite values")
        data = data - data.mean()
        peak = np.max(np.abs(data))
        if peak == 0:
            raise LawError("empirical noise sample is constant")
        # rescale before squaring so tiny spreads do not underflow
        data = data / peak
        data = data / np.sqrt(np.mean(data**2))
        # one refinement pass pins the moments to rounding level
        data = data - data.mean()
        data = data / np.sqrt(np.mean(data**2))
        n = data.size
        return cls("empirical", tuple(data.tolist()), tuple([1.0 / n] * n), source=name)

    def _validate_table(self):
        p = np.asarray(self.probs)
        v = np.asarray(self.values)
        if p.size == 0 or p.size != v.size:
            raise LawError("discrete noise needs matching values and probabilities")
        if np.any(p < 0) or abs(p.sum() - 1.0) > _PROB_TOL:
            raise LawError(f"probabilities must be >= 0 and sum to 1 (sum={p.sum()!r})")
        if not self.standardized:
            return
        m1 = float(np.dot(p, v))
        m2 = float(np.dot(p, v * v))
        if abs(m1) > _MOMENT_TOL or abs(m2 - 1.0) > _MOMENT_TOL:
            raise LawError(f"noise must have mean 0 and variance 1 (got {m1:.3g}, {m2:.3g})")

    @property
    def is_table(self) -> bool:
        return self.variant in ("discrete", "empirical")

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.values), np.asarray(self.probs)

    def expect(self, f) -> float:
        """E f(Z) by enumeration or quadrature; ``f`` must accept numpy arrays."""
        if self.is_table:
            v, p = self.atoms()
            return float(np.dot(p, f(v)))
        pdf = self.pdf
        val, _ = integrate.quad(lambda z: f(np.asarray(z)) * pdf(z), -np.inf, np.inf,
                                epsabs=1e-13, epsrel=1e-12, limit=400)
        return float(val)

    def pdf(self, z):
        if self.variant == "standard_normal":
            return np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        if self.variant == "student_t_normalized":
            df = self.df
            s = math.sqrt((df - 2.0) / df)
            t = z / s
            logc = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi)
            return np.exp(logc - (df + 1) / 2 * np.log1p(t * t / df)) / s
        raise LawError(f"{self.variant} noise has no density")

    def to_dict(self) -> dict:
        if self.variant == "standard_normal":
            return {"variant": "standard_normal"}
        if self.variant == "student_t_normalized":
            return {"variant": "student_t_normalized", "df": self.df}
        if self.variant == "discrete":
            return {"variant": "discrete", "points": [[v, p] for v, p in zip(self.values, self.probs)]}
        return {"variant": "empirical", "source": self.source, "size": len(self.values)}


THREE_POINT_NOISE = NoiseLaw.discrete([(math.sqrt(2.0), 0.25), (0.0, 0.5), (-math.sqrt(2.0), 0.25)])


def _read_sample(path: Path, column) -> np.ndarray:
    try:
        text = path.read_text()
    except OSError as exc:
        raise LawError(f"cannot read empirical noise source {path}: {exc}") from exc
    if column is None:
        try:
            return np.array([float(line) for line in text.split() if line.strip()])
        except ValueError as exc:
            raise LawError(f"{path}: expected one number per line") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise LawError(f"{path}: empty file")
    if isinstance(column, str) and not column.isdigit():
        header, rows = rows[0], rows[1:]
        if column not in header:
            raise LawError(f"{path}: no column named {column!r}")
        idx = header.index(column)
    else:
        idx = int(column)
    try:
        return np.array([float(r[idx]) for r in rows if r])
    except (ValueError, IndexError) as exc:
        raise LawError(f"{path}: bad value in column {column!r}") from exc


def noise_from_dict(d: dict) -> NoiseLaw:
    variant = d.get("variant")
    if variant == "standard_normal":
        return NoiseLaw.standard_normal()
    if variant == "discrete":
        return NoiseLaw.discrete([(v, p) for v, p in d["points"]])
    if variant == "three_point":
        return THREE_POINT_NOISE
    if variant in ("student_t", "student_t_normalized"):
        return NoiseLaw.student_t(d["df"])
    if variant == "empirical":
        if "values" in d:
            return NoiseLaw.empirical(d["values"])
        return NoiseLaw.empirical(d["source"], d.get("column"))
    raise LawError(f"unknown noise variant {variant!r}")


# --------------------------------------------------------------------- coefficients


class CoefficientLaw:
    """Base class of the (A, B) laws."""

    variant: str = ""

    def atoms(self):
        """``(a, b, prob)`` arrays for finite-support laws, else ``None``."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class GarchLaw(CoefficientLaw):
    """A = lam Z^2 + delta, B = beta: the recursion for the GARCH(1,1) variance."""

    beta: float
    lam: float
    delta: float
    noise: NoiseLaw = field(default_factory=NoiseLaw.standard_normal)

    def __post_init__(self):
        if self.lam < 0 or self.delta < 0:
            raise LawError("GARCH coefficients lambda, delta must be nonnegative")
        if self.beta < 0:
            raise LawError("GARCH intercept beta must be nonnegative")
        if not self.noise.standardized:
            raise LawError("GARCH noise must have mean 0 and variance 1")

    @property
    def variant(self) -> str:
        return "garch_critical" if self.critical else "garch_general"

    @property
    def critical(self) -> bool:
        return abs(self.lam + self.delta - 1.0) <= 1e-15

    def atoms(self):
        if not self.noise.is_table:
            return None
        z, p = self.noise.atoms()
        return self.lam * z * z + self.delta, np.full(z.shape, self.beta), p

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "beta": self.beta, "lambda": self.lam}
        if not self.critical:
            d["delta"] = self.delta
        d["noise"] = self.noise.to_dict()
        return d


@dataclass(frozen=True)
class LognormalLaw(CoefficientLaw):
    """ln A ~ N(mu, sigma^2), B = b."""

    mu: float
    sigma: float
    b: float = 1.0
    variant = "lognormal_A_const_B"

    def __post_init__(self):
        if self.sigma < 0 or self.b < 0:
            raise LawError("lognormal law needs sigma >= 0 and b >= 0")

    def to_dict(self) -> dict:
        return {"variant": self.variant, "mu": self.mu, "sigma": self.sigma, "b": self.b}


@dataclass(frozen=True)
class DiscreteLaw(CoefficientLaw):
    """Finitely many atoms ((a, b), probability)."""

    pairs: tuple[tuple[tuple[float, float], float], ...]
    variant = "finite_discrete"

    def __post_init__(self):
        pairs = tuple(((float(a), float(b)), float(p)) for (a, b), p in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        a, b, p = self.atoms()
        if p.size == 0:
            raise LawError("finite_discrete law needs at least one atom")
        if np.any(a < 0) or np.any(b < 0):
            raise LawError("atoms of A and B must be nonnegative")
        if np.any(p < 0) or abs(p.sum() - 1.0) > _PROB_TOL:
            raise LawError(f"probabilities must be >= 0 and sum to 1 (sum={p.sum()!r})")

    def atoms(self):
        a = np.array([ab[0] for ab, _ in self.pairs])
        b = np.array([ab[1] for ab, _ in self.pairs])
        p = np.array([q for _, q in self.pairs])
        return a, b, p

    def to_dict(self) -> dict:
        return {"variant": self.variant, "pairs": [[[a, b], p] for (a, b), p in self.pairs]}


@dataclass(frozen=True)
class KeveiLaw(CoefficientLaw):
    """ln A = V with probability p, ln A = -w otherwise; B = b.

    V has density proportional to v**(-alpha-1) exp(-kappa v) on [v0, inf), so
    that E A^kappa 1{ln A > x} is a pure power x**(-alpha) beyond v0.  Build it
    with :func:`build_kevei_law`, which solves for ``w``.
    """

    alpha: float
    kappa: float
    v0: float
    p: float
    b: float
    w: float
    exp_moment: float  # E exp(kappa V)
    acceptance: float  # rejection-sampler acceptance rate
    variant = "kevei"

    @property
    def norm(self) -> float:
        """Normalizing integral of v**(-alpha-1) exp(-kappa v) over [v0, inf)."""
        return (self.v0 ** (-self.alpha) / self.alpha) / self.exp_moment

    def tilted_tail(self, x):
        """E A^kappa 1{ln A > x} (exact form of the quadrature)."""
        x = np.maximum(np.asarray(x, dtype=float), self.v0)
        return self.p / self.norm * x ** (-self.alpha) / self.alpha

    def to_dict(self) -> dict:
        return {"variant": self.variant, "alpha": self.alpha, "kappa": self.kappa,
                "v0": self.v0, "p": self.p, "b": self.b}


def garch_to_sre(beta: float, lam: float, delta: float, noise: NoiseLaw) -> GarchLaw:
    """Coefficient law of sigma2_j = (lam Z^2 + delta) sigma2_{j-1} + beta."""
    if not beta > 0:
        raise LawError(f"beta must be > 0 (P(B = 0) < 1 fails for beta={beta})")
    return GarchLaw(float(beta), float(lam), float(delta), noise)


def garch_critical(beta: float, lam: float, noise: NoiseLaw) -> GarchLaw:
    if not 0 < lam <= 1:
        raise LawError(f"critical GARCH needs lambda in (0, 1], got {lam}")
    return garch_to_sre(beta, lam, 1.0 - lam, noise)


def _kevei_v_integral(alpha, kappa, v0, g):
    """Integral of g(v) v**(-alpha-1) exp(-kappa v) over [v0, inf)."""
    f = lambda v: g(v) * v ** (-alpha - 1.0) * math.exp(-kappa * v)
    val, _ = integrate.quad(f, v0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


def build_kevei_law(alpha: float, kappa: float, v0: float, p: float, b: float) -> KeveiLaw:
    """Kevei's tilted-tail family with E A^kappa = 1 enforced through the down-jump w."""
    if not 0 < alpha < 1:
        raise LawError(f"alpha must lie in (0, 1), got {alpha}")
    if not (kappa > 0 and v0 > 0 and 0 < p < 1 and b > 0):
        raise LawError("need kappa > 0, v0 > 0, p in (0, 1), b > 0")
    z = _kevei_v_integral(alpha, kappa, v0, lambda v: 1.0)
    # E exp(kappa V) = (integral of v**(-alpha-1) over [v0, inf)) / z
    expm = (v0 ** (-alpha) / alpha) / z
    load = p * expm
    if load >= 1.0:
        raise LawError(f"p * E exp(kappa V) = {load:.6g} >= 1; no down-jump restores E A^kappa = 1")
    w = -math.log((1.0 - load) / (1.0 - p)) / kappa
    if not w > 0:
        raise LawError(f"derived down-jump w = {w:.6g} is not positive")
    acc = alpha * v0**alpha * math.exp(kappa * v0) * z
    return KeveiLaw(float(alpha), float(kappa), float(v0), float(p), float(b), w, expm, acc)


def law_from_dict(d: dict) -> CoefficientLaw:
    """Build a coefficient law from its JSON record (``{"variant": ..., params}``)."""
    if "law" in d and isinstance(d["law"], dict):
        d = d["law"]
    variant = d.get("variant")
    try:
        if variant == "garch_critical":
            return garch_critical(d["beta"], d["lambda"], noise_from_dict(d.get("noise", {"variant": "standard_normal"})))
        if variant == "garch_general":
            return garch_to_sre(d["beta"], d["lambda"], d["delta"],
                                noise_from_dict(d.get("noise", {"variant": "standard_normal"})))
        if variant == "lognormal_A_const_B":
            return LognormalLaw(float(d["mu"]), float(d["sigma"]), float(d.get("b", 1.0)))
        if variant == "finite_discrete":
            return DiscreteLaw(tuple(((ab[0], ab[1]), p) for ab, p in d["pairs"]))
        if variant == "kevei":
            return build_kevei_law(d["alpha"], d["kappa"], d["v0"], d["p"], d.get("b", 1.0))
    except KeyError as exc:
        raise LawError(f"law {variant!r} is missing parameter {exc}") from exc
    raise LawError(f"unknown law variant {variant!r}")


# ------------------------------------------------------------------------ encoding

_EMPTY = np.zeros(1)


def _cum(p):
    c = np.cumsum(np.asarray(p, dtype=float))
    c /= c[-1]
    c[-1] = 1.0
    return c


def _encode_noise(noise: NoiseLaw):
    if noise.is_table:
        v, p = noise.atoms()
        return K.N_TABLE, 0.0, 0.0, np.asarray(v, dtype=float), _cum(p)
    if noise.variant == "standard_normal":
        return K.N_NORMAL, 0.0, 0.0, _EMPTY, _EMPTY
    return K.N_STUDENT, noise.df, 0.0, _EMPTY, _EMPTY


def encode(law: CoefficientLaw):
    """Kernel arrays ``(ipar, fpar, tx, ty, tc)`` for a coefficient law."""
    fpar = np.zeros(8)
    if isinstance(law, DiscreteLaw):
        a, b, p = law.atoms()
        return np.array([K.K_TABLE, 0]), fpar, a, b, _cum(p)
    if isinstance(law, GarchLaw):
        kind, p0, p1, tx, tc = _encode_noise(law.noise)
        fpar[:5] = law.beta, law.lam, law.delta, p0, p1
        return np.array([K.K_GARCH, kind]), fpar, tx, _EMPTY, tc
    if isinstance(law, LognormalLaw):
        fpar[:3] = law.mu, law.sigma, law.b
        return np.array([K.K_LOGNORMAL, 0]), fpar, _EMPTY, _EMPTY, _EMPTY
    if isinstance(law, KeveiLaw):
        fpar[:6] = law.alpha, law.kappa, law.v0, law.p, law.w, law.b
        return np.array([K.K_KEVEI, 0]), fpar, _EMPTY, _EMPTY, _EMPTY
    raise LawError(f"cannot encode {type(law).__name__}")


def encode_tilted(law: CoefficientLaw, kappa: float):
    """Kernel arrays for the law of (A, B) reweighted by A**kappa.

    Requires E A^kappa = 1.  Available for finite-support laws, lognormal A,
    the Kevei family, and Gaussian GARCH at kappa = 1.
    """
    atoms = law.atoms()
    if atoms is not None:
        a, b, p = atoms
        q = p * np.where(a > 0, a, 0.0) ** kappa
        keep = q > 0
        return encode(DiscreteLaw(tuple(((x, y), w) for x, y, w in zip(a[keep], b[keep], q[keep] / q.sum()))))
    fpar = np.zeros(8)
    if isinstance(law, LognormalLaw):
        return encode(LognormalLaw(law.mu + kappa * law.sigma**2, law.sigma, law.b))
    if isinstance(law, KeveiLaw):
        if abs(kappa - law.kappa) > 1e-12:
            raise LawError("Kevei law can only be tilted at its own kappa")
        fpar[:5] = law.alpha, law.v0, law.p * law.exp_moment, law.w, law.b
        return np.array([K.K_KEVEI_TILTED, 0]), fpar, _EMPTY, _EMPTY, _EMPTY
    if isinstance(law, GarchLaw) and law.noise.variant == "standard_normal" and abs(kappa - 1.0) < 1e-12:
        s = law.lam + law.delta
        fpar[:5] = law.beta, law.lam, law.delta, law.lam / s, 0.0
        return np.array([K.K_GARCH, K.N_NORMAL_TILTED]), fpar, _EMPTY, _EMPTY, _EMPTY
    raise LawError(f"no tilted sampler for {law.variant} at kappa={kappa}")


# ------------------------------------------------------------------------ sampling


def sample_noise(stream: Stream, law: NoiseLaw, size: int | None = None):
    """Draw Z from ``stream``: one float, or the first ``size`` draws as an array."""
    kind, p0, p1, tx, tc = _encode_noise(law)
    out = K.noise_batch(kind, p0, p1, tx, tc, np.uint64(stream.key), 1 if size is None else int(size))
    return float(out[0]) if size is None else out


def sample_coeff(stream: Stream, law: CoefficientLaw, size: int | None = None):
    """Draw (A, B) from ``stream``: one pair, or the first ``size`` pairs as two arrays."""
    a, b = K.coeff_batch(*encode(law), np.uint64(stream.key), 1 if size is None else int(size))
    if size is None:
        return float(a[0]), float(b[0])
    return a, b


# ---------------------------------------------------------------------- conditions

PASS, FAIL, UNKNOWN, NA = "pass", "fail", "unknown", "not-applicable"


@dataclass
class ConditionReport:
    """Verdicts on the standing assumptions; every field is always filled."""

    cond3: str
    cond4: str
    kappa_exists: str
    kappa: float | None
    cond6: str
    garch_stationarity: str
    nonarithmetic_logA: str
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "cond3_P(A=1)<1": self.cond3,
            "cond4_P(B=0)<1": self.cond4,
            "kappa_exists": self.kappa_exists,
            "kappa": self.kappa,
            "cond6_EB^kappa<inf": self.cond6,
            "garch_stationarity": self.garch_stationarity,
            "nonarithmetic_logA": self.nonarithmetic_logA,
            "notes": list(self.notes),
        }


def _is_lattice(logs: np.ndarray, max_den: int = 1000, tol: float = 1e-9) -> bool:
    """True when all values are integer multiples of one span (rationally related)."""
    logs = logs[np.abs(logs) > tol]
    if logs.size <= 1:
        return True
    ref = logs[np.argmin(np.abs(logs))]
    for y in logs:
        r = y / ref
        if abs(float(Fraction(r).limit_denominator(max_den)) - r) > tol * max(1.0, abs(r)):
            return False
    return True


def check_conditions(law: CoefficientLaw, kappa_hint: float | None = None) -> ConditionReport:
    """Evaluate conditions (P(A=1)<1, P(B=0)<1, E A^kappa = 1, E B^kappa < inf) and extras."""
    from .analytics import NoRootError, solve_kappa, psi

    notes = []
    atoms = law.atoms()
    if atoms is not None:
        a, b, p = atoms
        cond3 = PASS if p[np.isclose(a, 1.0, rtol=0, atol=1e-14)].sum() < 1 - _PROB_TOL else FAIL
        cond4 = PASS if p[b == 0].sum() < 1 - _PROB_TOL else FAIL
        cond6 = PASS
        pos = a > 0
        nonarith = FAIL if _is_lattice(np.log(a[pos & (p > 0)])) else PASS
    else:
        if isinstance(law, GarchLaw):
            cond3 = FAIL if law.lam == 0 and law.delta == 1.0 else PASS
            cond4 = PASS if law.beta > 0 else FAIL
        elif isinstance(law, LognormalLaw):
            cond3 = FAIL if law.sigma == 0 and law.mu == 0 else PASS
            cond4 = PASS if law.b > 0 else FAIL
        else:
            cond3 = PASS
            cond4 = PASS if law.b > 0 else FAIL
        cond6 = PASS
        nonarith = UNKNOWN
        notes.append("lattice test of ln A is only decided for finite-support laws")

    if isinstance(law, GarchLaw):
        z_var = law.noise
        if law.lam == 0:
            elog = math.log(law.delta) if law.delta > 0 else -math.inf
        elif z_var.is_table:
            z, pz = z_var.atoms()
            aa = law.lam * z * z + law.delta
            elog = -math.inf if np.any((aa == 0) & (pz > 0)) else float(np.dot(pz, np.log(aa)))
        else:
            elog = z_var.expect(lambda t: np.log(law.lam * t * t + law.delta))
        stat = PASS if (law.beta > 0 and elog < 0) else FAIL
        notes.append(f"E ln(lam Z^2 + delta) = {elog:.6g}")
    else:
        stat = NA

    kappa = None
    kstatus = FAIL
    if cond3 == PASS:
        try:
            kappa = solve_kappa(law) if kappa_hint is None else float(kappa_hint)
            if kappa_hint is not None and abs(psi(law, kappa).value - 1.0) > 1e-8:
                raise NoRootError(f"E A^kappa != 1 at the hinted kappa={kappa_hint}")
            kstatus = PASS
        except NoRootError as exc:
            notes.append(str(exc))
            kappa = None
    else:
        notes.append("A = 1 almost surely: no stationary solution")
    return ConditionReport(cond3, cond4, kstatus, kappa, cond6, stat, nonarith, notes)
