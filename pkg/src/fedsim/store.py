"""On-disk experiment records: one JSON document per run, written atomically,
plus listing/filtering and plot-ready CSV export."""

from __future__ import annotations

import hashlib
import json
import os
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .engine import MetricsRow, RunConfig

SCHEMA_VERSION = 1

X_AXES = {"rounds": "round", "bits": "bits_up_cum",
          "oracle_calls": "oracle_calls_cum", "wall_clock": "wall_clock_s"}
Y_AXES = {"f": "f_global", "grad_norm": "grad_norm_global",
          "loss": "train_loss_sampled"}


class StoreError(ValueError):
    pass


class RecordCorrupt(StoreError):
    pass


class UnknownRecord(StoreError):
    pass


def new_run_id() -> str:
    return time.strftime("%Y%m%d-%H%M%S") + "-" + uuid.uuid4().hex[:8]


def canonical_config_json(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(canonical_config_json(config).encode()).hexdigest()[:16]


@dataclass
class ExperimentRecord:
    id: str
    config: RunConfig
    status: str
    created_at: float
    rows: list[MetricsRow] = field(default_factory=list)
    group: Optional[str] = None
    comment: Optional[str] = None
    error: Optional[str] = None

    @staticmethod
    def fresh(config: RunConfig, status: str = "pending") -> "ExperimentRecord":
        return ExperimentRecord(id=new_run_id(), config=config, status=status,
                                created_at=time.time(), group=config.group,
                                comment=config.comment)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "created_at": self.created_at,
            "status": self.status,
            "group": self.group,
            "comment": self.comment,
            "error": self.error,
            "config": self.config.to_dict(),
            "config_hash": config_hash(self.config),
            "rows": [r.to_dict() for r in self.rows],
        }

    @staticmethod
    def from_dict(data: dict) -> "ExperimentRecord":
        try:
            if data["schema_version"] != SCHEMA_VERSION:
                raise RecordCorrupt(
                    f"unsupported schema version {data['schema_version']}")
            return ExperimentRecord(
                id=data["id"], config=RunConfig.from_dict(data["config"]),
                status=data["status"], created_at=data["created_at"],
                rows=[MetricsRow.from_dict(r) for r in data["rows"]],
                group=data.get("group"), comment=data.get("comment"),
                error=data.get("error"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, RecordCorrupt):
                raise
            raise RecordCorrupt(f"malformed record: {exc}") from exc

    def summary(self) -> dict:
        last = self.rows[-1].to_dict() if self.rows else None
        return {"id": self.id, "created_at": self.created_at,
                "status": self.status, "group": self.group,
                "comment": self.comment, "algorithm": self.config.algorithm,
                "compressor": self.config.compressor,
                "rounds_done": len(self.rows), "last_row": last}


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def record_path(out_dir: str | Path, run_id: str) -> Path:
    return Path(out_dir) / run_id / "record.json"


def save_record(record: ExperimentRecord, out_dir: str | Path) -> Path:
    """Atomic write: temp file in the record directory, then rename."""
    path = record_path(out_dir, record.id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / (".record.json.tmp-" + uuid.uuid4().hex[:6])
    tmp.write_text(json.dumps(record.to_dict(), indent=1))
    os.replace(tmp, path)
    return path


def load_record(path_or_dir: str | Path, run_id: Optional[str] = None,
                ) -> ExperimentRecord:
    path = Path(path_or_dir)
    if run_id is not None:
        path = record_path(path, run_id)
    elif path.is_dir():
        path = path / "record.json"
    if not path.exists():
        raise UnknownRecord(f"no record at {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RecordCorrupt(f"unreadable record {path}: {exc}") from exc
    return ExperimentRecord.from_dict(data)


def list_records(out_dir: str | Path, group: Optional[str] = None,
                 algorithm: Optional[str] = None, status: Optional[str] = None,
                 ) -> list[ExperimentRecord]:
    """All complete records under out_dir, sorted by (created_at, id);
    filters are conjunctive; half-written temp files are skipped."""
    out = []
    root = Path(out_dir)
    if not root.exists():
        return out
    for sub in root.iterdir():
        path = sub / "record.json"
        if not path.exists():
            continue
        try:
            rec = load_record(path)
        except StoreError:
            continue
        if group is not None and rec.group != group:
            continue
        if algorithm is not None and rec.config.algorithm != algorithm:
            continue
        if status is not None and rec.status != status:
            continue
        out.append(rec)
    out.sort(key=lambda r: (r.created_at, r.id))
    return out


# --------------------------------------------------------------------------
# plot-ready export
# --------------------------------------------------------------------------

@dataclass
class SeriesExport:
    x_axis: str
    y_axis: str
    scale: str
    columns: list[str]                   # run ids, in request order
    series: dict[str, list[tuple[float, float]]]
    dropped: dict[str, int]              # nonpositive y dropped under log scale

    def to_csv(self) -> str:
        xs = sorted({x for pts in self.series.values() for x, _ in pts})
        lookup = {rid: dict(pts) for rid, pts in self.series.items()}
        lines = [",".join([self.x_axis] + list(self.columns))]
        for x in xs:
            cells = [_fmt(x)]
            for rid in self.columns:
                y = lookup[rid].get(x)
                cells.append("" if y is None else _fmt(y))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    if isinstance(v, float) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def export_series(records: Sequence[ExperimentRecord], x_axis: str,
                  y_axis: str, scale: str = "linear") -> SeriesExport:
    if x_axis not in X_AXES:
        raise StoreError(f"unknown x axis {x_axis!r}; choose from {sorted(X_AXES)}")
    if y_axis not in Y_AXES:
        raise StoreError(f"unknown y axis {y_axis!r}; choose from {sorted(Y_AXES)}")
    if scale not in ("linear", "log"):
        raise StoreError("scale must be 'linear' or 'log'")
    xf, yf = X_AXES[x_axis], Y_AXES[y_axis]
    series: dict[str, list[tuple[float, float]]] = {}
    dropped: dict[str, int] = {}
    for rec in records:
        pts = []
        drop = 0
        for row in rec.rows:
            x, y = getattr(row, xf), getattr(row, yf)
            if scale == "log" and y <= 0:
                drop += 1
                continue
            pts.append((float(x), float(y)))
        series[rec.id] = pts
        dropped[rec.id] = drop
    return SeriesExport(x_axis=x_axis, y_axis=y_axis, scale=scale,
                        columns=[r.id for r in records], series=series,
                        dropped=dropped)
