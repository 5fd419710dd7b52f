"""Per-episode metrics, CSV persistence, and bootstrap aggregation.

CSV files open with a comment header carrying the format version and a
timestamp; everything after it is deterministic for a given config+seed, so
byte comparison modulo the header checks reproducibility. Aggregation uses
a seeded percentile bootstrap over episode rows.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from predrive.errors import ConfigurationError

METRICS_VERSION = 1

_FIELDS = ["run_id", "seed", "episode", "crashes", "crash_pct",
           "distance", "mean_speed", "pe", "pre", "masked_count"]


@dataclass
class MetricsRecord:
    run_id: str
    seed: int
    episode: int
    crashes: int          # vehicles newly crashed over the episode
    crash_pct: float      # 100 if any AV crashed this episode else 0
    distance: float       # mean AV distance traveled, meters
    mean_speed: float     # mean AV speed over the episode, m/s
    pe: float             # mean chain position error, meters (nan if unused)
    pre: float            # mean one-step prediction error (nan if unused)
    masked_count: int

    def validate(self) -> None:
        if not 0.0 <= self.crash_pct <= 100.0:
            raise ValueError("crash_pct must be within [0, 100]")
        if self.distance < -1e-9:
            raise ValueError("distance must be non-negative")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if np.isnan(x) else f"{x:.6f}"
    return str(x)


def write_metrics_csv(path: str, records: list[MetricsRecord]) -> None:
    for rec in records:
        rec.validate()
    with open(path, "w", newline="") as fh:
        fh.write(f"# predrive-metrics v{METRICS_VERSION} "
                 f"generated={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        writer = csv.writer(fh)
        writer.writerow(_FIELDS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, f)) for f in _FIELDS])


def read_metrics_csv(path: str) -> list[MetricsRecord]:
    with open(path) as fh:
        body = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(body)))
    if reader.fieldnames != _FIELDS:
        raise ConfigurationError(
            f"{path}: unexpected metrics schema {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(MetricsRecord(
            run_id=row["run_id"], seed=int(row["seed"]),
            episode=int(row["episode"]), crashes=int(row["crashes"]),
            crash_pct=float(row["crash_pct"]), distance=float(row["distance"]),
            mean_speed=float(row["mean_speed"]), pe=float(row["pe"]),
            pre=float(row["pre"]), masked_count=int(row["masked_count"])))
    return out


def bootstrap_ci(values, b: int = 2000, seed: int = 0,
                 alpha: float = 0.05) -> tuple[float, float, float]:
    """Percentile-bootstrap CI of the mean: (mean, lo, hi)."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("bootstrap over an empty sample")
    mean = float(x.mean())
    if x.size == 1:
        return mean, mean, mean
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(b, x.size))
    means = x[idx].mean(axis=1)
    lo, hi = np.percentile(means, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return mean, float(lo), float(hi)


@dataclass
class SummaryRow:
    run_id: str
    episodes: int
    crash_pct_mean: float
    crash_pct_lo: float
    crash_pct_hi: float
    distance_mean: float
    speed_mean: float
    pe_mean: float
    pre_mean: float


def aggregate(records: list[MetricsRecord], b: int = 2000,
              seed: int = 0) -> list[SummaryRow]:
    """Mean + bootstrap CI of the crash rate per run id, plus plain means of
    the secondary metrics. Rows are sorted by run id."""
    if not records:
        raise ConfigurationError("aggregate needs at least one record")
    by_run: dict[str, list[MetricsRecord]] = {}
    for rec in records:
        by_run.setdefault(rec.run_id, []).append(rec)
    out = []
    for run_id in sorted(by_run):
        group = by_run[run_id]
        crash = [r.crash_pct for r in group]
        mean, lo, hi = bootstrap_ci(crash, b=b, seed=seed)
        pes = [r.pe for r in group if not np.isnan(r.pe)]
        pres = [r.pre for r in group if not np.isnan(r.pre)]
        out.append(SummaryRow(
            run_id=run_id, episodes=len(group),
            crash_pct_mean=mean, crash_pct_lo=lo, crash_pct_hi=hi,
            distance_mean=float(np.mean([r.distance for r in group])),
            speed_mean=float(np.mean([r.mean_speed for r in group])),
            pe_mean=float(np.mean(pes)) if pes else float("nan"),
            pre_mean=float(np.mean(pres)) if pres else float("nan")))
    return out


def write_summary_csv(path: str, rows: list[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# predrive-summary v{METRICS_VERSION} "
                 f"generated={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        writer = csv.writer(fh)
        writer.writerow(["run_id", "episodes", "crash_pct_mean",
                         "crash_pct_lo", "crash_pct_hi", "distance_mean",
                         "speed_mean", "pe_mean", "pre_mean"])
        for r in rows:
            writer.writerow([r.run_id, r.episodes, _fmt(r.crash_pct_mean),
                             _fmt(r.crash_pct_lo), _fmt(r.crash_pct_hi),
                             _fmt(r.distance_mean), _fmt(r.speed_mean),
                             _fmt(r.pe_mean), _fmt(r.pre_mean)])
