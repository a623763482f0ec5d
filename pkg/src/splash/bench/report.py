"""Result containers and writers (JSON, CSV and whitespace-separated .dat)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

SCHEMA_VERSION = 1
METRIC_COLUMNS = ("iteration", "metric", "value", "m", "elapsed_ms")


@dataclass
class MetricRow:
    iteration: int
    metric: str
    value: float
    m: int
    elapsed_ms: Optional[float] = None


@dataclass
class TimingRow:
    """Per-iteration time split in milliseconds.

    ``compute_ms`` and ``wait_ms`` are averaged over workers.
    """

    iteration: int
    m: int
    compute_ms: float
    wait_ms: float
    combine_ms: float
    wall_ms: float

    @property
    def coverage(self) -> float:
        if self.wall_ms <= 0:
            return 1.0
        return (self.compute_ms + self.wait_ms + self.combine_ms) / self.wall_ms


def timing_row(rep) -> TimingRow:
    k = len(rep.compute_time)
    return TimingRow(
        iteration=rep.iteration,
        m=rep.m,
        compute_ms=1e3 * sum(rep.compute_time) / k,
        wait_ms=1e3 * sum(rep.wait_time) / k,
        combine_ms=1e3 * rep.combine_time,
        wall_ms=1e3 * rep.wall_time,
    )


@dataclass
class ExperimentResult:
    task: str
    config: dict
    metrics: list = field(default_factory=list)
    baseline: list = field(default_factory=list)
    timing: list = field(default_factory=list)
    m_trajectory: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        body = asdict(self)
        body["schema_version"] = SCHEMA_VERSION
        return json.dumps(body, indent=2, sort_keys=True, default=_default)


def _default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x)) if isinstance(x, float) else str(x)


def metrics_csv(rows, with_timing: bool = False) -> str:
    """Metrics table; ``elapsed_ms`` stays blank unless ``with_timing``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow(
            [
                r.iteration,
                r.metric,
                _fmt(float(r.value)),
                r.m,
                _fmt(r.elapsed_ms) if with_timing else "",
            ]
        )
    return buf.getvalue()


def timing_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("iteration", "m", "compute_ms", "wait_ms", "combine_ms", "wall_ms", "coverage"))
    for r in rows:
        w.writerow(
            [r.iteration, r.m, *(f"{v:.3f}" for v in (r.compute_ms, r.wait_ms, r.combine_ms, r.wall_ms)),
             f"{r.coverage:.4f}"]
        )
    return buf.getvalue()


def dat_table(header, rows) -> str:
    """gnuplot-friendly columns with a commented header."""
    lines = ["# " + " ".join(header)]
    lines += [" ".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_outputs(out: Path, name: str, result: ExperimentResult, with_timing: bool = False,
                  dat: Optional[dict] = None) -> list:
    """Writes ``<name>_result.json``, ``metrics.csv``, ``timing.csv`` and any .dat files."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(fname, text):
        path = out / fname
        path.write_text(text, encoding="utf-8")
        written.append(path)

    put(f"{name}_result.json", result.to_json())
    rows = result.metrics + result.baseline
    put("metrics.csv", metrics_csv(rows, with_timing))
    if result.timing:
        put("timing.csv", timing_csv(result.timing))
    for fname, text in (dat or {}).items():
        put(fname, text)
    return written
