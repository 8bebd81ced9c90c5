"""Monte Carlo statistics over replication ensembles.

An :class:`Ensemble` holds solution samples at a declared probe lattice (a
subset of (time, space) points) for every completed replication; aborted
replications are excluded from estimates but stay on the abort list.  The
estimators are

* ``lk_norm``: sample moment E|u(t,x)|^k with a CLT confidence interval,
  reported both as the raw power mean and as its k-th root,
* ``weighted_norm``: max over probes of exp(-beta t) * ||u(t,x)||_k,
* ``tail_probability``: empirical exceedance frequency with a Wilson score
  interval (valid at zero counts),
* ``coupled_sup_difference``: max over probes of the k-norm of the pathwise
  difference between two clamp levels driven by common noise.

Moment sums are carried exactly (binary floats are scaled integers), so
estimates computed from replication shards merge to bit-identical values
regardless of shard boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "Z_95",
    "ProbeError",
    "CouplingError",
    "MomentEstimate",
    "TailEstimate",
    "MomentAccumulator",
    "Ensemble",
    "PairEnsemble",
    "lk_norm",
    "weighted_norm",
    "tail_probability",
    "coupled_sup_difference",
    "wilson_interval",
]

Z_95 = 1.959963984540054  # two-sided 95% normal quantile

DEFAULT_ORDER_CAP = 8

# All finite float64 values are integer multiples of 2^-1074.
_DEN_BITS = 1074
_DEN = 1 << _DEN_BITS


class ProbeError(KeyError):
    pass


class CouplingError(ValueError):
    pass


def _exact_add(total: int, values) -> int:
    for v in values:
        num, den = float(v).as_integer_ratio()
        total += num * (_DEN // den)
    return total


def _exact_float(total: int, scale: int = 1) -> float:
    return float(Fraction(total, _DEN * scale))


@dataclass
class MomentAccumulator:
    """Exact shard-mergeable sums of |u|^k and its square."""

    order: float
    count: int = 0
    _sum_pow: int = 0
    _sum_sq: int = 0

    def add(self, samples) -> "MomentAccumulator":
        y = np.abs(np.asarray(samples, dtype=float)).ravel() ** self.order
        self.count += y.size
        self._sum_pow = _exact_add(self._sum_pow, y)
        self._sum_sq = _exact_add(self._sum_sq, y * y)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.order != self.order:
            raise ValueError("cannot merge accumulators of different orders")
        out = MomentAccumulator(self.order)
        out.count = self.count + other.count
        out._sum_pow = self._sum_pow + other._sum_pow
        out._sum_sq = self._sum_sq + other._sum_sq
        return out

    def estimate(self) -> "MomentEstimate":
        n = self.count
        if n == 0:
            raise ValueError("no samples accumulated")
        mean = _exact_float(self._sum_pow, n)
        mean_sq = _exact_float(self._sum_sq, n)
        if n >= 2:
            variance = max(0.0, (mean_sq - mean * mean) * n / (n - 1))
        else:
            variance = math.nan
        return MomentEstimate.from_power_mean(self.order, n, mean, variance)


@dataclass(frozen=True)
class MomentEstimate:
    """Point estimate and 95% CLT interval for E|u(t,x)|^k and its k-th root."""

    order: float
    count: int
    power_mean: float
    power_lo: float | None
    power_hi: float | None
    root_mean: float
    root_lo: float | None
    root_hi: float | None
    rel_half_width: float | None
    flags: tuple = ()

    @classmethod
    def from_power_mean(cls, order, count, mean, variance):
        flags = []
        if count < 30:
            # too few replications for a trustworthy CLT interval
            flags.append("no-interval")
            lo = hi = None
            rhw = None
        else:
            hw = Z_95 * math.sqrt(variance / count)
            lo, hi = max(0.0, mean - hw), mean + hw
            rhw = hw / mean if mean > 0 else math.inf
            if rhw > 0.5:
                flags.append("high-variance")
        root = mean ** (1.0 / order)
        return cls(
            order=order,
            count=count,
            power_mean=mean,
            power_lo=lo,
            power_hi=hi,
            root_mean=root,
            root_lo=None if lo is None else lo ** (1.0 / order),
            root_hi=None if hi is None else hi ** (1.0 / order),
            rel_half_width=rhw,
            flags=tuple(flags),
        )


@dataclass(frozen=True)
class TailEstimate:
    threshold: float
    count: int
    exceedances: int
    p_hat: float
    lo: float
    hi: float


def wilson_interval(successes: int, n: int, z: float = Z_95):
    """Wilson score interval for a binomial proportion; valid at 0 and n."""
    if n <= 0:
        raise ValueError("need at least one trial")
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    hw = z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    # at the boundary counts the exact interval ends are 0 and 1
    lo = 0.0 if successes == 0 else max(0.0, center - hw)
    hi = 1.0 if successes == n else min(1.0, center + hw)
    return lo, hi


def _close(a, b):
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


@dataclass
class Ensemble:
    """Samples of one clamp level's solution at the probe lattice."""

    probe_times: np.ndarray  # (nt,) lattice times, strictly positive except optional t=0
    probe_xs: np.ndarray  # (nx,)
    samples: np.ndarray  # (n_replications, nt, nx), completed replications only
    level: float | None = None
    horizon: float | None = None
    provenance: dict = field(default_factory=dict)
    aborted: list = field(default_factory=list)
    path_max_abs: np.ndarray | None = None

    @classmethod
    def from_samples(cls, samples, probe_times, probe_xs, **kw) -> "Ensemble":
        samples = np.asarray(samples, dtype=float)
        return cls(
            probe_times=np.asarray(probe_times, dtype=float),
            probe_xs=np.asarray(probe_xs, dtype=float),
            samples=samples,
            **kw,
        )

    @classmethod
    def from_batch(cls, batch, grid, level_index: int = 0, provenance=None) -> "Ensemble":
        vals = batch.samples[level_index]
        ok = np.isfinite(vals).all(axis=(1, 2))
        return cls(
            probe_times=batch.probe_step_idx * grid.dt,
            probe_xs=-grid.R + batch.probe_x_idx * grid.dx,
            samples=vals[ok],
            level=batch.levels[level_index],
            horizon=grid.T,
            provenance=provenance or {},
            aborted=list(batch.aborted),
            path_max_abs=batch.path_max_abs[ok],
        )

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    def probe_index(self, t: float, x: float):
        for it, pt in enumerate(self.probe_times):
            if _close(pt, t):
                for ix, px in enumerate(self.probe_xs):
                    if _close(px, x):
                        return it, ix
        raise ProbeError(f"({t}, {x}) is not a probe point of this ensemble")

    def samples_at(self, t: float, x: float) -> np.ndarray:
        it, ix = self.probe_index(t, x)
        return self.samples[:, it, ix]


def lk_norm(ensemble: Ensemble, k: float, t: float, x: float,
            order_cap: int = DEFAULT_ORDER_CAP) -> MomentEstimate:
    """Sample estimate of E|u(t,x)|^k, reported with its k-th root."""
    if k < 1:
        raise ValueError(f"moment order must be >= 1, got {k}")
    if k > order_cap:
        raise ValueError(f"moment order {k} exceeds the cap {order_cap}; high orders are variance-fragile")
    return MomentAccumulator(k).add(ensemble.samples_at(t, x)).estimate()


def weighted_norm(ensemble: Ensemble, k: float, beta: float, T: float,
                  order_cap: int = DEFAULT_ORDER_CAP) -> float:
    """Lattice version of the exponentially weighted norm on (0, T]."""
    if beta <= 0:
        raise ValueError("weight exponent beta must be positive")
    if ensemble.horizon is not None and T > ensemble.horizon * (1 + 1e-12):
        raise ValueError(f"T={T} exceeds the ensemble horizon {ensemble.horizon}")
    best = None
    for it, pt in enumerate(ensemble.probe_times):
        if pt <= 0 or pt > T * (1 + 1e-12):
            continue
        for ix, px in enumerate(ensemble.probe_xs):
            est = lk_norm(ensemble, k, pt, px, order_cap)
            val = math.exp(-beta * pt) * est.root_mean
            best = val if best is None else max(best, val)
    if best is None:
        raise ValueError(f"no probe times in (0, {T}]")
    return best


def tail_probability(ensemble: Ensemble, threshold: float, t: float, x: float) -> TailEstimate:
    """Empirical P{|u(t,x)| >= threshold} with a Wilson 95% interval."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    vals = ensemble.samples_at(t, x)
    n = vals.size
    hits = int(np.count_nonzero(np.abs(vals) >= threshold))
    lo, hi = wilson_interval(hits, n)
    return TailEstimate(threshold=threshold, count=n, exceedances=hits, p_hat=hits / n, lo=lo, hi=hi)


@dataclass
class PairEnsemble:
    """Pathwise differences u_{N+1} - u_N under common noise, at the probes."""

    level_low: float
    level_high: float
    probe_times: np.ndarray
    probe_xs: np.ndarray
    diff_samples: np.ndarray  # (n, nt, nx)
    sup_abs_diff: np.ndarray  # (n,) over the whole lattice
    path_max_abs: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)
    aborted: list = field(default_factory=list)

    @classmethod
    def from_batch(cls, batch, grid, provenance=None) -> "PairEnsemble":
        if len(batch.levels) != 2:
            raise CouplingError("pair ensemble needs a two-level batch")
        diff = batch.samples[1] - batch.samples[0]
        ok = np.isfinite(diff).all(axis=(1, 2))
        return cls(
            level_low=batch.levels[0],
            level_high=batch.levels[1],
            probe_times=batch.probe_step_idx * grid.dt,
            probe_xs=-grid.R + batch.probe_x_idx * grid.dx,
            diff_samples=diff[ok],
            sup_abs_diff=batch.sup_abs_diff[ok],
            path_max_abs=batch.path_max_abs[ok],
            provenance=provenance or {},
            aborted=list(batch.aborted),
        )

    @classmethod
    def from_trajectory_pairs(cls, pairs, probe_times, probe_xs) -> "PairEnsemble":
        """Build from (low, high) FieldTrajectory pairs; validates the coupling."""
        diffs, sups = [], []
        lv_lo = lv_hi = None
        for low, high in pairs:
            if low.noise_spec != high.noise_spec:
                raise CouplingError(
                    f"trajectories are not coupled: noise specs differ "
                    f"({low.noise_spec} vs {high.noise_spec})"
                )
            if not _close(high.level, low.level + 1.0):
                raise CouplingError(f"levels {low.level} and {high.level} are not consecutive")
            if lv_lo is None:
                lv_lo, lv_hi = low.level, high.level
            elif not (_close(low.level, lv_lo) and _close(high.level, lv_hi)):
                raise CouplingError("mixed clamp levels in one pair ensemble")
            d = high.values - low.values
            sups.append(float(np.max(np.abs(d))))
            rows = [low.grid.t_index(t) for t in probe_times]
            cols = [low.grid.x_index(x) for x in probe_xs]
            diffs.append(d[np.ix_(rows, cols)])
        return cls(
            level_low=lv_lo,
            level_high=lv_hi,
            probe_times=np.asarray(probe_times, dtype=float),
            probe_xs=np.asarray(probe_xs, dtype=float),
            diff_samples=np.asarray(diffs),
            sup_abs_diff=np.asarray(sups),
        )

    @property
    def count(self) -> int:
        return self.diff_samples.shape[0]


def coupled_sup_difference(pair: PairEnsemble, k: float, T: float,
                           order_cap: int = DEFAULT_ORDER_CAP) -> float:
    """Max over probes with t <= T of the k-norm of the coupled difference."""
    if pair.count == 0:
        raise ValueError("no completed replication pairs")
    best = 0.0
    found = False
    for it, pt in enumerate(pair.probe_times):
        if pt <= 0 or pt > T * (1 + 1e-12):
            continue
        found = True
        for ix in range(pair.probe_xs.size):
            est = MomentAccumulator(k).add(pair.diff_samples[:, it, ix]).estimate()
            best = max(best, est.root_mean)
    if not found:
        raise ValueError(f"no probe times in (0, {T}]")
    return best
