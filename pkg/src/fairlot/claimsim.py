"""Known-claims experiment engine.

Samples claim populations, gives each of m decision-makers an independently
noised view of them, and measures expected utility and systemic exclusion
for top-k, unweighted, BF, and partial-BF allocation, across iterations and
over sweep grids of randomization rates.

All lotteries here are the same sequential claim-proportional draw as in
:mod:`fairlot.lottery`, run row-parallel across iterations (one cumulative-sum
inversion per round); traces are not recorded on this path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    ClaimProfile,
    ConfigurationError,
    LotteryConfig,
    Mechanism,
    resolve_k,
)
from .metrics import FrontierPoint
from .rng import RandomSource, as_generator

# stream-id layout within one simulation seed
_STREAM_CLAIMS = 0
_STREAM_NOISE = 10_000       # + allocator (concurrent) or mech*100 + step (sequential)
_STREAM_LOTTERY = 20_000     # + mech*1000 + allocator/step
_STREAM_SWEEP_EU = 30_000    # + grid point index
_STREAM_SWEEP_SER = 40_000   # + grid point index * 16 + allocator

CSV_COLUMNS = (
    "distribution",
    "param",
    "n",
    "k",
    "mechanism",
    "k_prime",
    "n_prime",
    "m",
    "noise_sigma",
    "mode",
    "metric",
    "value",
    "stderr",
)


class Family(str, Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"
    INVERTED_NORMAL = "inverted_normal"
    PARETO = "pareto"
    INVERTED_PARETO = "inverted_pareto"


_PARAMETRIC = (Family.NORMAL, Family.INVERTED_NORMAL, Family.PARETO, Family.INVERTED_PARETO)


@dataclass(frozen=True)
class DistributionSpec:
    """Claim distribution: sigma for the normal family, alpha for pareto."""

    family: Family
    param: Optional[float] = None

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if fam in _PARAMETRIC:
            if self.param is None or self.param <= 0:
                raise ConfigurationError(f"{fam.value} needs a positive param")

    def label(self) -> str:
        return self.family.value


class SimulationMode(str, Enum):
    CONCURRENT = "concurrent"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class SimulationConfig:
    n: int
    selection_rate: float
    iterations: int
    m: int = 2
    noise_sigma: float = 0.0
    mode: SimulationMode = SimulationMode.CONCURRENT
    benefit: float = 0.0
    mechanisms: tuple[LotteryConfig, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("n must be at least 1")
        resolve_k(self.n, self.selection_rate)  # validates the rate
        if self.iterations < 1:
            raise ConfigurationError("iterations must be at least 1")
        if self.m < 1:
            raise ConfigurationError("m must be at least 1")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be nonnegative")
        if self.benefit < 0:
            raise ConfigurationError("benefit must be nonnegative")
        object.__setattr__(self, "mode", SimulationMode(self.mode))
        for cfg in self.mechanisms:
            if cfg.n != self.n:
                raise ConfigurationError(f"mechanism config n={cfg.n} != simulation n={self.n}")

    @property
    def k(self) -> int:
        return resolve_k(self.n, self.selection_rate)


# ---------------------------------------------------------------------------
# sampling

def _sample_matrix(spec: DistributionSpec, gen: np.random.Generator, shape) -> np.ndarray:
    """Claims in [0, 1] with the requested shape."""
    fam = spec.family
    if fam == Family.UNIFORM:
        return gen.random(shape)
    if fam == Family.NORMAL:
        return _rejection_normal(gen, shape, lambda g, size: g.normal(0.5, spec.param, size))
    if fam == Family.INVERTED_NORMAL:
        # bimodal: equal mixture of N(0, s^2) and N(1, s^2), truncated to [0, 1]
        def draw(g, size):
            centers = g.integers(0, 2, size).astype(np.float64)
            return g.normal(centers, spec.param)

        return _rejection_normal(gen, shape, draw)
    x = 1.0 + gen.pareto(spec.param, shape)  # classical Pareto, scale 1, x >= 1
    if fam == Family.PARETO:
        return 1.0 - 1.0 / x  # density alpha*(1-c)^(alpha-1): mass at weak claims
    return 1.0 / x  # inverted: mass at strong claims


def _rejection_normal(gen, shape, draw) -> np.ndarray:
    """Truncate to [0, 1] by redrawing out-of-range samples."""
    out = draw(gen, shape)
    bad = (out < 0.0) | (out > 1.0)
    while bad.any():
        out[bad] = draw(gen, int(bad.sum()))
        bad = (out < 0.0) | (out > 1.0)
    return out


def sample_claims(spec: DistributionSpec, n: int, rng: RandomSource | np.random.Generator) -> ClaimProfile:
    """One claim population of size n."""
    gen = as_generator(rng)
    return ClaimProfile(_sample_matrix(spec, gen, n))


def add_decision_maker_noise(
    claims: ClaimProfile, sigma: float, rng: RandomSource | np.random.Generator
) -> ClaimProfile:
    """A decision-maker's noisy perception: c_i + N(0, sigma^2), clipped to [0, 1]."""
    if sigma < 0:
        raise ConfigurationError("sigma must be nonnegative")
    if sigma == 0:
        return claims
    gen = as_generator(rng)
    noisy = np.clip(claims.claims + gen.normal(0.0, sigma, claims.n), 0.0, 1.0)
    return ClaimProfile(noisy, ids=claims.ids)


# ---------------------------------------------------------------------------
# batched allocation primitives (row = one independent iteration)

def _batch_select_proportional(weights: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    """Sequential weight-proportional selection without replacement, run
    row-parallel. Rows whose surviving weights sum to zero fall back to a
    uniform draw over their unselected columns."""
    w = np.array(weights, dtype=np.float64, copy=True)
    rows_n, cols = w.shape
    if not (0 <= k <= cols):
        raise ConfigurationError(f"need 0 <= k <= {cols}, got {k}")
    sel = np.zeros((rows_n, cols), dtype=bool)
    rows = np.arange(rows_n)
    for _ in range(k):
        tot = w.sum(axis=1)
        dead = tot <= 0.0
        if dead.any():
            w[dead] = (~sel[dead]).astype(np.float64)
            tot = w.sum(axis=1)
        cum = np.cumsum(w, axis=1)
        u = gen.random(rows_n) * tot
        idx = (cum <= u[:, None]).sum(axis=1)
        np.minimum(idx, cols - 1, out=idx)
        bad = w[rows, idx] <= 0.0
        if bad.any():  # float-boundary stragglers: step back to a live column
            for r in np.flatnonzero(bad):
                j = idx[r]
                while w[r, j] <= 0.0:
                    j -= 1
                idx[r] = j
        sel[rows, idx] = True
        w[rows, idx] = 0.0
    return sel


def _desc_order(values: np.ndarray) -> np.ndarray:
    """Row-wise descending stable order (ties by ascending position)."""
    return np.argsort(-values, axis=1, kind="stable")


def _batch_allocate(
    mech: LotteryConfig,
    perceived: np.ndarray,
    gen: Optional[np.random.Generator],
    order: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Outcome matrix (rows x n) for one mechanism on perceived claims."""
    rows_n, n = perceived.shape
    k = mech.k
    rows = np.arange(rows_n)
    out = np.zeros((rows_n, n), dtype=bool)
    if mech.mechanism == Mechanism.TOP_K:
        order = _desc_order(perceived) if order is None else order
        out[rows[:, None], order[:, :k]] = True
        return out
    if mech.mechanism == Mechanism.UNWEIGHTED:
        return _batch_select_proportional(np.ones_like(perceived), k, gen)
    if mech.mechanism == Mechanism.BF:
        return _batch_select_proportional(perceived, k, gen)
    if mech.mechanism in (Mechanism.PARTIAL_BF, Mechanism.DECISION_BOUNDARY):
        kp = int(mech.k_prime or 0)
        order = _desc_order(perceived) if order is None else order
        out[rows[:, None], order[:, : k - kp]] = True
        if kp > 0:
            npr = int(mech.n_prime)
            band_cols = order[:, k - kp : k - kp + npr]
            band_claims = np.take_along_axis(perceived, band_cols, axis=1)
            sel_band = _batch_select_proportional(band_claims, kp, gen)
            np.put_along_axis(out, band_cols, sel_band | np.take_along_axis(out, band_cols, axis=1), axis=1)
        return out
    raise ConfigurationError(f"{mech.mechanism} is not a known-claims mechanism")


# ---------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class MetricValue:
    mean: float
    stderr: float


def _metric(series: np.ndarray) -> MetricValue:
    series = np.asarray(series, dtype=np.float64)
    if series.size <= 1:
        return MetricValue(float(series.mean()), 0.0)
    return MetricValue(float(series.mean()), float(series.std(ddof=1) / np.sqrt(series.size)))


@dataclass(frozen=True)
class MechanismStats:
    """Aggregates for one mechanism: ser_by_m[1] is the plain exclusion rate
    (SER is undefined for a single decision-maker and flagged as such)."""

    config: LotteryConfig
    expected_utility: MetricValue
    ser_by_m: dict[int, MetricValue]

    def label(self) -> str:
        return self.config.mechanism.value


@dataclass(frozen=True)
class SimulationResult:
    config: SimulationConfig
    spec: DistributionSpec
    seed: int
    stats: tuple[MechanismStats, ...]
    # sequential mode only: per-mechanism mean claim after each step
    trajectories: dict[str, tuple[MetricValue, ...]] = field(default_factory=dict)

    def to_rows(self) -> list[dict]:
        rows = []
        base = {
            "distribution": self.spec.label(),
            "param": self.spec.param,
            "n": self.config.n,
            "k": self.config.k,
            "noise_sigma": self.config.noise_sigma,
            "mode": self.config.mode.value,
        }
        for st in self.stats:
            mech = {
                "mechanism": st.config.mechanism.value,
                "k_prime": st.config.k_prime,
                "n_prime": st.config.n_prime,
            }
            rows.append(base | mech | {
                "m": None,
                "metric": "expected_utility",
                "value": st.expected_utility.mean,
                "stderr": st.expected_utility.stderr,
            })
            for m_prime, mv in sorted(st.ser_by_m.items()):
                metric = "exclusion_rate" if m_prime == 1 else "ser"
                rows.append(base | mech | {
                    "m": m_prime, "metric": metric, "value": mv.mean, "stderr": mv.stderr,
                })
        return rows


def _simulate(cfg: SimulationConfig, spec: DistributionSpec, seed: int) -> SimulationResult:
    it, n, m, k = cfg.iterations, cfg.n, cfg.m, cfg.k
    if not cfg.mechanisms:
        raise ConfigurationError("no mechanisms configured")
    claims = _sample_matrix(spec, RandomSource(seed, _STREAM_CLAIMS).generator(), (it, n))
    sequential = cfg.mode == SimulationMode.SEQUENTIAL
    stats = []
    trajectories: dict[str, tuple[MetricValue, ...]] = {}

    if not sequential:
        # every mechanism sees the same per-allocator noisy view (paired)
        noisy_views = []
        for a in range(m):
            if cfg.noise_sigma > 0:
                gen = RandomSource(seed, _STREAM_NOISE + a).generator()
                noisy_views.append(np.clip(claims + gen.normal(0.0, cfg.noise_sigma, (it, n)), 0.0, 1.0))
            else:
                noisy_views.append(claims)
        orders = [_desc_order(v) for v in noisy_views]

    for j, mech in enumerate(cfg.mechanisms):
        if mech.k != k:
            raise ConfigurationError(f"mechanism k={mech.k} != simulation k={k}")
        excluded = np.ones((it, n), dtype=bool)
        eu_sum = np.zeros(it)
        ser_series: dict[int, np.ndarray] = {}
        true_claims = claims
        if sequential:
            true_claims = claims.copy()
        traj = [_metric(true_claims.mean(axis=1))] if sequential else None
        for a in range(m):
            if sequential:
                if cfg.noise_sigma > 0:
                    gen = RandomSource(seed, _STREAM_NOISE + j * 100 + a).generator()
                    perceived = np.clip(true_claims + gen.normal(0.0, cfg.noise_sigma, (it, n)), 0.0, 1.0)
                else:
                    perceived = true_claims
                order = None
            else:
                perceived = noisy_views[a]
                order = orders[a]
            lot_gen = RandomSource(seed, _STREAM_LOTTERY + j * 1000 + a).generator()
            out = _batch_allocate(mech, perceived, lot_gen, order=order)
            eu_sum += (out * true_claims).sum(axis=1) / k
            excluded &= ~out
            ser_series[a + 1] = excluded.mean(axis=1)
            if sequential:
                if cfg.benefit > 0:
                    true_claims = np.clip(true_claims + cfg.benefit * out, 0.0, 1.0)
                traj.append(_metric(true_claims.mean(axis=1)))
        stats.append(
            MechanismStats(
                config=mech,
                expected_utility=_metric(eu_sum / m),
                ser_by_m={mp: _metric(s) for mp, s in ser_series.items()},
            )
        )
        if sequential:
            trajectories[mech.mechanism.value] = tuple(traj)
    return SimulationResult(cfg, spec, seed, tuple(stats), trajectories)


def run_concurrent(cfg: SimulationConfig, spec: DistributionSpec, seed: int) -> SimulationResult:
    """m decision-makers allocate at the same time, each on its own noisy
    view of one sampled claim population; repeated over iterations."""
    if cfg.mode != SimulationMode.CONCURRENT:
        raise ConfigurationError("config mode is not concurrent")
    return _simulate(cfg, spec, seed)


def run_sequential(cfg: SimulationConfig, spec: DistributionSpec, seed: int) -> SimulationResult:
    """m allocations in series; each winner's true claim rises by
    cfg.benefit (clipped to 1) before the next step."""
    if cfg.mode != SimulationMode.SEQUENTIAL:
        raise ConfigurationError("config mode is not sequential")
    return _simulate(cfg, spec, seed)


# ---------------------------------------------------------------------------
# partial-BF sweep

def default_grid(step: float = 0.1) -> list[tuple[float, float]]:
    """(k'/k, n'/n) lattice in `step` increments."""
    levels = np.round(np.arange(step, 1.0 + step / 2, step), 10)
    return [(float(r1), float(r2)) for r1 in levels for r2 in levels]


@dataclass(frozen=True)
class SweepPoint:
    kprime_rate: float
    nprime_rate: float
    k_prime: int
    n_prime: int
    expected_utility: MetricValue
    utility_delta: MetricValue          # top-k EU minus mechanism EU, absolute
    utility_delta_relative: float       # delta / top-k EU
    ser: MetricValue

    def config_label(self) -> str:
        return f"partial_bf(k'/k={self.kprime_rate:g},n'/n={self.nprime_rate:g})"


@dataclass(frozen=True)
class SweepResult:
    config: SimulationConfig
    spec: DistributionSpec
    seed: int
    points: tuple[SweepPoint, ...]
    skipped: tuple[tuple[float, float, str], ...]
    eu_topk: MetricValue
    ser_topk: MetricValue

    def frontier_points(self, relative: bool = False) -> list[FrontierPoint]:
        return [
            FrontierPoint(
                p.utility_delta_relative if relative else p.utility_delta.mean,
                p.ser.mean,
                p.config_label(),
            )
            for p in self.points
        ]

    def to_rows(self) -> list[dict]:
        base = {
            "distribution": self.spec.label(),
            "param": self.spec.param,
            "n": self.config.n,
            "k": self.config.k,
            "noise_sigma": self.config.noise_sigma,
            "mode": "sweep",
        }
        topk = {"mechanism": "top_k", "k_prime": None, "n_prime": None}
        rows = [
            base | topk | {"m": None, "metric": "expected_utility",
                           "value": self.eu_topk.mean, "stderr": self.eu_topk.stderr},
            base | topk | {"m": self.config.m, "metric": "ser",
                           "value": self.ser_topk.mean, "stderr": self.ser_topk.stderr},
        ]
        for p in self.points:
            mech = {"mechanism": "partial_bf", "k_prime": p.k_prime, "n_prime": p.n_prime}
            rows += [
                base | mech | {"m": None, "metric": "expected_utility",
                               "value": p.expected_utility.mean, "stderr": p.expected_utility.stderr},
                base | mech | {"m": None, "metric": "utility_delta",
                               "value": p.utility_delta.mean, "stderr": p.utility_delta.stderr},
                base | mech | {"m": None, "metric": "utility_delta_relative",
                               "value": p.utility_delta_relative, "stderr": None},
                base | mech | {"m": self.config.m, "metric": "ser",
                               "value": p.ser.mean, "stderr": p.ser.stderr},
            ]
        for r1, r2, reason in self.skipped:
            rows.append(base | {
                "mechanism": "partial_bf", "k_prime": None, "n_prime": None,
                "m": None, "metric": f"skipped(k'/k={r1:g},n'/n={r2:g}): {reason}",
                "value": None, "stderr": None,
            })
        return rows


def sweep_partial_bf(
    cfg: SimulationConfig,
    spec: DistributionSpec,
    grid: Optional[Sequence[tuple[float, float]]] = None,
    seed: int = 0,
) -> SweepResult:
    """Expected-utility cost (noise-free, claims known) and SER (m noisy
    decision-makers) of partial-BF lotteries across a (k'/k, n'/n) grid.

    Grid points violating the partial-fairness bounds are skipped and
    reported. The top-k baseline is evaluated under the same claims and
    noise so deltas and SER reductions are paired.
    """
    grid = default_grid() if grid is None else list(grid)
    it, n, m, k = cfg.iterations, cfg.n, cfg.m, cfg.k
    rows = np.arange(it)
    claims = _sample_matrix(spec, RandomSource(seed, _STREAM_CLAIMS).generator(), (it, n))

    order_true = _desc_order(claims)
    sorted_true = np.take_along_axis(claims, order_true, axis=1)
    eu_topk_it = sorted_true[:, :k].sum(axis=1) / k

    # noisy views for the SER side (per allocator), shared across grid points
    orders_noisy, sorted_noisy = [], []
    for a in range(m):
        if cfg.noise_sigma > 0:
            gen = RandomSource(seed, _STREAM_NOISE + a).generator()
            view = np.clip(claims + gen.normal(0.0, cfg.noise_sigma, (it, n)), 0.0, 1.0)
        else:
            view = claims
        o = _desc_order(view)
        orders_noisy.append(o)
        sorted_noisy.append(np.take_along_axis(view, o, axis=1))

    excl_topk = np.ones((it, n), dtype=bool)
    for a in range(m):
        sel = np.zeros((it, n), dtype=bool)
        sel[rows[:, None], orders_noisy[a][:, :k]] = True
        excl_topk &= ~sel
    ser_topk_it = excl_topk.mean(axis=1)

    points: list[SweepPoint] = []
    skipped: list[tuple[float, float, str]] = []
    for idx, (r1, r2) in enumerate(grid):
        kp = max(1, int(round(r1 * k)))
        npr = int(round(r2 * n))
        hi = n - k + kp
        if not (0 < kp <= k):
            skipped.append((r1, r2, f"k'={kp} outside (0, {k}]"))
            continue
        if not (kp < npr <= hi):
            skipped.append((r1, r2, f"n'={npr} outside ({kp}, {hi}]"))
            continue
        # expected utility, claims known exactly
        band_true = sorted_true[:, k - kp : k - kp + npr]
        gen = RandomSource(seed, _STREAM_SWEEP_EU + idx).generator()
        sel_band = _batch_select_proportional(band_true, kp, gen)
        eu_it = (sorted_true[:, : k - kp].sum(axis=1) + (band_true * sel_band).sum(axis=1)) / k
        delta_it = eu_topk_it - eu_it
        # SER across m noisy decision-makers
        excluded = np.ones((it, n), dtype=bool)
        for a in range(m):
            band_cols = orders_noisy[a][:, k - kp : k - kp + npr]
            band_claims = sorted_noisy[a][:, k - kp : k - kp + npr]
            gen_a = RandomSource(seed, _STREAM_SWEEP_SER + idx * 16 + a).generator()
            sel_a = _batch_select_proportional(band_claims, kp, gen_a)
            selected = np.zeros((it, n), dtype=bool)
            selected[rows[:, None], orders_noisy[a][:, : k - kp]] = True
            np.put_along_axis(selected, band_cols, sel_a, axis=1)
            excluded &= ~selected
        eu = _metric(eu_it)
        delta = _metric(delta_it)
        eu_topk_mean = float(eu_topk_it.mean())
        points.append(
            SweepPoint(
                kprime_rate=r1,
                nprime_rate=r2,
                k_prime=kp,
                n_prime=npr,
                expected_utility=eu,
                utility_delta=delta,
                utility_delta_relative=float(delta.mean / eu_topk_mean) if eu_topk_mean else 0.0,
                ser=_metric(excluded.mean(axis=1)),
            )
        )
    return SweepResult(
        config=cfg,
        spec=spec,
        seed=seed,
        points=tuple(points),
        skipped=tuple(skipped),
        eu_topk=_metric(eu_topk_it),
        ser_topk=_metric(ser_topk_it),
    )


# ---------------------------------------------------------------------------
# CSV emission

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_rows(path, rows: Iterable[dict]) -> None:
    """Long-format results CSV with the documented column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in CSV_COLUMNS])
