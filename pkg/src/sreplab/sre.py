"""Perpetuities, forward recursions and GARCH(1,1) paths.

Batch functions run replication ``r`` on ``stream.split(start + r)``; the
single-path functions are the ``r = 0`` case of the batch, so a single path
and the first row of a batch coincide.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .laws import CoefficientLaw, GarchLaw, NoiseLaw, encode, garch_to_sre
from .rng import Stream

__all__ = [
    "PathConfig",
    "PathSummary",
    "PerpetuityBatch",
    "PathBatch",
    "GarchBatch",
    "perpetuity_sample",
    "perpetuity_samples",
    "forward_path",
    "forward_paths",
    "garch_path",
    "garch_paths",
    "chi_h",
    "write_path_csv",
    "STOP_NAMES",
]

STOP_NAMES = {
    K.STOP_ZERO: "product_zero",
    K.STOP_TOL: "product_below_tol",
    K.STOP_DEPTH: "max_depth",
    K.STOP_OVERFLOW: "overflow",
    K.STOP_ABOVE: "above_cut",
}
_MODES = {"stationary": 0, "fixed": 1, "zero": 2}


@dataclass(frozen=True)
class PathConfig:
    """Path length, initial condition and what to record.

    ``record`` is ``"sums"`` (totals at ``n``), ``"grid"`` (partial sums at
    ``floor(n t)`` for ``t`` in ``times``) or ``"full"`` (whole trajectory).
    """

    n: int
    u0_mode: str = "stationary"
    u0_value: float = 0.0
    record: str = "sums"
    times: tuple[float, ...] = ()
    tol: float = 1e-12
    max_depth: int = 10**6

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        if self.u0_mode not in _MODES:
            raise ValueError(f"u0_mode must be one of {sorted(_MODES)}")
        if self.record not in ("sums", "grid", "full"):
            raise ValueError("record must be 'sums', 'grid' or 'full'")
        t = np.asarray(self.times, dtype=float)
        if t.size and (np.any(t <= 0) or np.any(t > 1) or np.any(np.diff(t) <= 0)):
            raise ValueError("grid times must be strictly increasing in (0, 1]")
        if self.record == "grid" and not t.size:
            raise ValueError("record='grid' needs times")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @property
    def stationary(self) -> bool:
        return self.u0_mode == "stationary"

    def snapshot_steps(self) -> np.ndarray:
        if self.record != "grid":
            return np.array([self.n], dtype=np.int64)
        steps = np.floor(self.n * np.asarray(self.times) + 1e-9).astype(np.int64)
        if steps[0] < 1 or np.any(np.diff(steps) <= 0):
            raise ValueError("grid times collapse to equal steps; increase n")
        return steps

    def snapshot_times(self) -> tuple[float, ...]:
        return self.times if self.record == "grid" else (1.0,)


@dataclass
class PathSummary:
    sum_u_kappa: float = float("nan")
    sum_x: float = float("nan")
    sum_x2: float = float("nan")
    sum_sigma2: float = float("nan")
    snapshots: list[tuple[float, float]] = field(default_factory=list)
    truncation_diagnostics: dict = field(default_factory=dict)
    flagged: bool = False
    stationary: bool = True
    path: np.ndarray | None = None
    sigma2: np.ndarray | None = None


@dataclass
class PerpetuityBatch:
    values: np.ndarray
    depth: np.ndarray
    stop: np.ndarray
    residual: np.ndarray

    @property
    def flagged(self) -> int:
        return int(np.sum((self.stop == K.STOP_DEPTH) | (self.stop == K.STOP_OVERFLOW)))

    def stop_counts(self) -> dict:
        c = np.bincount(self.stop.astype(np.int64), minlength=len(STOP_NAMES))
        return {STOP_NAMES[i]: int(c[i]) for i in range(len(STOP_NAMES))}


@dataclass
class PathBatch:
    steps: np.ndarray
    times: tuple[float, ...]
    sums: np.ndarray  # (reps, len(steps)) partial sums of U_j**kappa
    last: np.ndarray
    flags: np.ndarray

    @property
    def flagged(self) -> int:
        return int(np.count_nonzero(self.flags))


@dataclass
class GarchBatch:
    steps: np.ndarray
    times: tuple[float, ...]
    sum_x: np.ndarray  # (reps, len(steps))
    sum_x2: np.ndarray
    sum_sigma2: np.ndarray
    lindeberg: np.ndarray
    sigma2_0: np.ndarray
    flags: np.ndarray

    @property
    def flagged(self) -> int:
        return int(np.count_nonzero(self.flags))


def _root(stream: Stream) -> np.uint64:
    return np.uint64(stream.key)


def perpetuity_samples(
    stream: Stream, law: CoefficientLaw, reps: int, tol: float = 1e-12, max_depth: int = 10**6, start: int = 0
) -> PerpetuityBatch:
    """``reps`` independent truncated perpetuity draws."""
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    u, d, s, r = K.perpetuity_batch(*encode(law), _root(stream), np.uint64(start), int(reps), float(tol),
                                    int(max_depth))
    return PerpetuityBatch(u, d, s, r)


def perpetuity_sample(
    stream: Stream, law: CoefficientLaw, tol: float = 1e-12, max_depth: int = 10**6, diagnostics: bool = False
):
    """One draw of sum_k B_k prod_{j<k} A_j, truncated once the running product
    is 0, below ``tol``, or after ``max_depth`` terms.

    With ``diagnostics=True`` returns ``(value, depth, stop_name, residual_product)``.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    u, depth, code, prod = K.perpetuity_one(*encode(law), _root(stream), K.LANE_PATH, float(tol), int(max_depth))
    if diagnostics:
        return float(u), int(depth), STOP_NAMES[int(code)], float(prod)
    return float(u)


def forward_paths(
    stream: Stream, law: CoefficientLaw, cfg: PathConfig, kappa: float, reps: int, start: int = 0
) -> PathBatch:
    """Iterate U_j = A_j U_{j-1} + B_j for ``reps`` replications, summing U_j**kappa."""
    steps = cfg.snapshot_steps()
    sums, last, flags = K.sre_path_batch(
        *encode(law), _root(stream), np.uint64(start), int(reps), cfg.n, _MODES[cfg.u0_mode],
        float(cfg.u0_value), float(kappa), steps, cfg.tol, cfg.max_depth,
    )
    return PathBatch(steps, cfg.snapshot_times(), sums, last, flags)


def forward_path(stream: Stream, law: CoefficientLaw, cfg: PathConfig, kappa: float) -> PathSummary:
    """One forward path (replication 0 of ``stream``)."""
    b = forward_paths(stream, law, cfg, kappa, 1)
    out = PathSummary(
        sum_u_kappa=float(b.sums[0, -1]),
        snapshots=[(t, float(v)) for t, v in zip(b.times, b.sums[0])],
        flagged=bool(b.flags[0]),
        stationary=cfg.stationary,
        truncation_diagnostics={"stop": STOP_NAMES[int(b.flags[0])] if b.flags[0] else "ok"},
    )
    if cfg.stationary:
        _, depth, stop, resid = _init_diagnostics(stream, law, cfg)
        out.truncation_diagnostics = {"max_depth_used": depth, "stop": stop, "residual_product": resid}
    if cfg.record == "full":
        traj, _ = K.sre_trajectory_batch(*encode(law), _root(stream), np.uint64(0), 1, cfg.n, _MODES[cfg.u0_mode],
                                         float(cfg.u0_value), cfg.tol, cfg.max_depth)
        out.path = traj[0]
    return out


def _init_diagnostics(stream: Stream, law: CoefficientLaw, cfg: PathConfig):
    key = stream.split(0).key
    u, depth, code, prod = K.perpetuity_one(*encode(law), np.uint64(key), K.LANE_INIT, cfg.tol, cfg.max_depth)
    return float(u), int(depth), STOP_NAMES[int(code)], float(prod)


def garch_paths(
    stream: Stream,
    beta: float,
    lam: float,
    delta: float,
    noise: NoiseLaw,
    cfg: PathConfig,
    reps: int,
    start: int = 0,
    lindeberg_level: float = 0.0,
) -> GarchBatch:
    """GARCH(1,1) replications; sigma2_0 is drawn from the stationary law when requested."""
    law = garch_to_sre(beta, lam, delta, noise)
    steps = cfg.snapshot_steps()
    out, s0, flags = K.garch_path_batch(
        *encode(law), _root(stream), np.uint64(start), int(reps), cfg.n, _MODES[cfg.u0_mode],
        float(cfg.u0_value), steps, cfg.tol, cfg.max_depth, float(lindeberg_level),
    )
    return GarchBatch(steps, cfg.snapshot_times(), out[:, :, 0], out[:, :, 1], out[:, :, 2], out[:, :, 3], s0, flags)


def garch_path(
    stream: Stream, beta: float, lam: float, delta: float, noise: NoiseLaw, cfg: PathConfig
) -> PathSummary:
    """One GARCH(1,1) path (replication 0 of ``stream``)."""
    b = garch_paths(stream, beta, lam, delta, noise, cfg, 1)
    out = PathSummary(
        sum_x=float(b.sum_x[0, -1]),
        sum_x2=float(b.sum_x2[0, -1]),
        sum_sigma2=float(b.sum_sigma2[0, -1]),
        sum_u_kappa=float(b.sum_sigma2[0, -1]),
        snapshots=[(t, float(v)) for t, v in zip(b.times, b.sum_x[0])],
        flagged=bool(b.flags[0]),
        stationary=cfg.stationary,
    )
    if cfg.stationary:
        law = garch_to_sre(beta, lam, delta, noise)
        _, depth, stop, resid = _init_diagnostics(stream, law, cfg)
        out.truncation_diagnostics = {"max_depth_used": depth, "stop": stop, "residual_product": resid}
    if cfg.record == "full":
        law = garch_to_sre(beta, lam, delta, noise)
        x, s = K.garch_trajectory(*encode(law), np.uint64(stream.split(0).key), cfg.n, _MODES[cfg.u0_mode],
                                  float(cfg.u0_value), cfg.tol, cfg.max_depth)
        out.path, out.sigma2 = x, s
    return out


def chi_h(x, h: float):
    """Clip ``x`` to [-h, h]."""
    if not h > 0:
        raise ValueError("h must be > 0")
    y = np.clip(x, -h, h)
    return float(y) if np.ndim(y) == 0 else y


def write_path_csv(path: str | Path, summary: PathSummary) -> None:
    """Write a full recorded path: ``j,U_j`` or, for GARCH, ``j,X_j,sigma2_j``."""
    if summary.path is None:
        raise ValueError("summary holds no full path (use record='full')")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if summary.sigma2 is None:
            w.writerow(["j", "U_j"])
            for j, u in enumerate(summary.path):
                w.writerow([j, repr(float(u))])
        else:
            w.writerow(["j", "X_j", "sigma2_j"])
            for j in range(1, summary.path.size + 1):
                w.writerow([j, repr(float(summary.path[j - 1])), repr(float(summary.sigma2[j]))])
