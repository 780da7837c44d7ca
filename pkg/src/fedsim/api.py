"""HTTP control API: launch, monitor, stop, and export experiments.

Plain JSON over HTTP for a single local operator; runs execute on a small
worker pool (FIFO beyond the concurrency cap) and persist through the store.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import store
from .cli import emit_cli_line
from .engine import (FAILED, FINISHED, PENDING, RUNNING, STOPPED, ConfigError,
                     RunConfig, run_experiment)
from .problems import ProblemError


@dataclass
class RunHandle:
    record: store.ExperimentRecord
    stop_event: threading.Event = field(default_factory=threading.Event)

    @property
    def status(self) -> str:
        return self.record.status


class Registry:
    """In-memory authority for live runs, backed by the record store."""

    def __init__(self, out_dir: str | Path, max_concurrent: int = 2,
                 default_threads: int = 1):
        self.out_dir = str(out_dir)
        self.default_threads = default_threads
        self.max_concurrent = max_concurrent
        self.pool = ThreadPoolExecutor(max_workers=max_concurrent)
        self.handles: dict[str, RunHandle] = {}
        self.lock = threading.Lock()

    def launch(self, config: RunConfig) -> str:
        record = store.ExperimentRecord.fresh(config, status=PENDING)
        handle = RunHandle(record=record)
        with self.lock:
            self.handles[record.id] = handle
        store.save_record(record, self.out_dir)
        self.pool.submit(self._execute, handle)
        return record.id

    def _execute(self, handle: RunHandle) -> None:
        record = handle.record
        record.status = RUNNING
        try:
            def on_row(row):
                record.rows.append(row)
                if len(record.rows) % 25 == 0:
                    store.save_record(record, self.out_dir)

            result = run_experiment(record.config, stop_event=handle.stop_event,
                                    on_row=on_row)
            record.rows = result.rows
            record.status = result.status
            record.error = result.error
        except Exception as exc:  # defensive: engine bugs must not hang a slot
            record.status = FAILED
            record.error = str(exc)
        store.save_record(record, self.out_dir)

    def get(self, run_id: str) -> store.ExperimentRecord:
        with self.lock:
            handle = self.handles.get(run_id)
        if handle is not None:
            return handle.record
        return store.load_record(self.out_dir, run_id)

    def stop(self, run_id: str) -> str:
        with self.lock:
            handle = self.handles.get(run_id)
        if handle is None:
            # stopping a finished on-disk run is a no-op, per idempotence
            return store.load_record(self.out_dir, run_id).status
        handle.stop_event.set()
        return handle.status

    def counts(self) -> dict:
        with self.lock:
            statuses = [h.status for h in self.handles.values()]
        return {"running": sum(s == RUNNING for s in statuses),
                "queued": sum(s == PENDING for s in statuses)}

    def list(self, group=None, algorithm=None, status=None
             ) -> list[store.ExperimentRecord]:
        with self.lock:
            live = dict(self.handles)
        records = {rid: h.record for rid, h in live.items()}
        for rec in store.list_records(self.out_dir):
            records.setdefault(rec.id, rec)
        out = []
        for rec in records.values():
            if group is not None and rec.group != group:
                continue
            if algorithm is not None and rec.config.algorithm != algorithm:
                continue
            if status is not None and rec.status != status:
                continue
            out.append(rec)
        out.sort(key=lambda r: (r.created_at, r.id))
        return out


def create_app(out_dir: str | Path, max_concurrent: int = 2,
               default_threads: int = 1,
               static_dir: Optional[str | Path] = None) -> FastAPI:
    registry = Registry(out_dir, max_concurrent=max_concurrent,
                        default_threads=default_threads)
    app = FastAPI(title="fedsim", version="0.1.0")
    app.state.registry = registry

    def _record_or_404(run_id: str) -> store.ExperimentRecord:
        try:
            return registry.get(run_id)
        except store.UnknownRecord:
            raise HTTPException(404, f"unknown experiment {run_id!r}")

    @app.post("/experiments", status_code=201)
    async def launch(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(400, "body must be a JSON config object")
        try:
            config = RunConfig.from_dict(body)
        except (ConfigError, ProblemError, ValueError) as exc:
            raise HTTPException(400, f"invalid config: {exc}")
        run_id = registry.launch(config)
        return {"id": run_id, "status": registry.get(run_id).status}

    @app.get("/experiments")
    def list_experiments(group: Optional[str] = None,
                         algorithm: Optional[str] = None,
                         status: Optional[str] = None):
        return [rec.summary()
                for rec in registry.list(group=group, algorithm=algorithm,
                                         status=status)]

    @app.get("/experiments/{run_id}")
    def get_experiment(run_id: str, since_round: Optional[int] = None):
        rec = _record_or_404(run_id)
        data = rec.to_dict()
        if since_round is not None:
            data["rows"] = [r for r in data["rows"] if r["round"] > since_round]
        return data

    @app.post("/experiments/{run_id}/stop")
    def stop_experiment(run_id: str):
        try:
            status = registry.stop(run_id)
        except store.UnknownRecord:
            raise HTTPException(404, f"unknown experiment {run_id!r}")
        return {"id": run_id, "status": status}

    @app.get("/experiments/{run_id}/cli", response_class=PlainTextResponse)
    def get_cli(run_id: str):
        rec = _record_or_404(run_id)
        return emit_cli_line(rec.config)

    @app.get("/experiments/{run_id}/export", response_class=PlainTextResponse)
    def export_one(run_id: str, x: str = "rounds", y: str = "grad_norm",
                   scale: str = "linear",
                   ids: Optional[str] = Query(default=None)):
        wanted = [run_id] + ([i for i in ids.split(",") if i] if ids else [])
        records = [_record_or_404(rid) for rid in wanted]
        try:
            export = store.export_series(records, x, y, scale)
        except store.StoreError as exc:
            raise HTTPException(400, str(exc))
        headers = {"X-Dropped-Points": str(sum(export.dropped.values()))}
        return PlainTextResponse(export.to_csv(), media_type="text/csv",
                                 headers=headers)

    @app.get("/system")
    def system():
        counts = registry.counts()
        return {"worker_threads_default": registry.default_threads,
                "max_concurrent_runs": registry.max_concurrent, **counts}

    if static_dir is not None and Path(static_dir).exists():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")

    return app
