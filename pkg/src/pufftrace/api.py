"""JSON service over the stored-session analytics and the device link.

Read queries are side-effect-free and may run concurrently; everything that
touches the device queues behind one exclusive client.  Filtering always
happens server-side so the CLI, this API and any UI can never disagree.
Device-link failures surface as 502 responses whose body names the error.
"""

from __future__ import annotations

import datetime as dt
import re
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import link
from .link import DeviceClient, DeviceLinkError
from .pipeline import (
    AnalysisResult,
    Episode,
    EpisodeKind,
    FilterConfig,
    analyze_events,
)
from .plots import day_timeline
from .records import (
    DeviceInstant,
    ZoneConfig,
    decode_stream,
    format_instant_iso,
    to_unix_seconds,
)

_SESSION_ID_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9_.-]*")


@dataclass(frozen=True)
class RunConfig:
    """Service-level settings; per-request query parameters override filters."""

    data_dir: Path
    zone: ZoneConfig
    filters: FilterConfig = FilterConfig()
    device_port: str | None = None
    ui_dir: Path | None = None


class SessionStore:
    """Flat-file persistence: one raw record file per analyzed session."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        if not _SESSION_ID_RE.fullmatch(session_id):
            raise HTTPException(status_code=400, detail=f"invalid session id {session_id!r}")
        return self.data_dir / f"{session_id}.raw"

    def list_sessions(self) -> list[dict]:
        sessions = []
        for path in sorted(self.data_dir.glob("*.raw")):
            count = sum(1 for line in path.read_text().splitlines() if line.strip())
            sessions.append({"id": path.stem, "record_count": count})
        return sessions

    def save(self, records: list[str], session_id: str | None = None) -> str:
        if session_id is None:
            stamp = dt.datetime.now().strftime("%Y%m%d-%H%M%S")
            session_id = f"pull-{stamp}"
            suffix = 1
            while self._path(session_id).exists():
                suffix += 1
                session_id = f"pull-{stamp}-{suffix}"
        path = self._path(session_id)
        path.write_text("".join(record + "\n" for record in records))
        return session_id

    def read_lines(self, session_id: str) -> list[str]:
        path = self._path(session_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return path.read_text().splitlines()


class DeviceManager:
    """One exclusive device client; endpoint handlers queue behind its lock."""

    def __init__(self, default_port: str | None = None):
        self.default_port = default_port
        self.client: DeviceClient | None = None
        self.lock = threading.Lock()

    def ensure_connected(self, port: str | None) -> DeviceClient:
        target = port or (self.client.port if self.client else None) or self.default_port
        if target is None:
            raise HTTPException(status_code=400, detail="no device port given or configured")
        if self.client is not None and self.client.port != target:
            self.client.close()
            self.client = None
        if self.client is None:
            client = DeviceClient()
            client.connect(target)
            self.client = client
        return self.client

    def drop(self) -> None:
        if self.client is not None:
            self.client.close()
            self.client = None


@contextmanager
def _device_errors(manager: DeviceManager):
    try:
        yield
    except DeviceLinkError as err:
        manager.drop()
        raise HTTPException(
            status_code=502,
            detail={"error": type(err).__name__, "detail": str(err)},
        ) from err


class PortBody(BaseModel):
    port: str | None = None


class TimeBody(PortBody):
    posix_seconds: int | None = None
    fraction_ticks: int = 0


class PullBody(PortBody):
    session_id: str | None = None


def episode_to_json(episode: Episode, zone: ZoneConfig) -> dict:
    return {
        "kind": episode.kind.value,
        "start": format_instant_iso(episode.start, zone),
        "end": format_instant_iso(episode.end, zone),
        "duration_ms": episode.duration_ms,
        "date": episode.date(zone).isoformat(),
        "confidence": episode.confidence.value if episode.confidence else None,
    }


def instant_to_json(instant: DeviceInstant, zone: ZoneConfig) -> dict:
    return {
        "posix_seconds": instant.posix_seconds,
        "fraction_ticks": instant.fraction_ticks,
        "unix_seconds": to_unix_seconds(instant),
        "iso": format_instant_iso(instant, zone),
    }


def create_app(config: RunConfig) -> FastAPI:
    app = FastAPI(title="pufftrace", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = SessionStore(config.data_dir)
    devices = DeviceManager(config.device_port)
    app.state.config = config
    app.state.store = store
    app.state.devices = devices

    def run_analysis(
        session_id: str, min_puff_s: float | None, use_thermistor: bool | None
    ) -> AnalysisResult:
        filters = config.filters
        if min_puff_s is not None:
            filters = replace(filters, display_min_puff_s=min_puff_s)
        if use_thermistor is not None:
            filters = replace(filters, use_thermistor=use_thermistor)
        events, _rejects = decode_stream(store.read_lines(session_id))
        return analyze_events(events, filters, config.zone)

    @app.get("/ports")
    def get_ports():
        return {
            "ports": [
                {"system_name": p.system_name, "human_label": p.human_label}
                for p in link.list_ports()
            ]
        }

    @app.post("/device/connect")
    def device_connect(body: PortBody):
        with devices.lock, _device_errors(devices):
            client = devices.ensure_connected(body.port)
            return {"state": client.state.value, "port": client.port}

    @app.post("/device/set-time")
    def device_set_time(body: TimeBody):
        instant = (
            DeviceInstant(body.posix_seconds, body.fraction_ticks)
            if body.posix_seconds is not None
            else DeviceInstant.now()
        )
        with devices.lock, _device_errors(devices):
            devices.ensure_connected(body.port).set_time(instant)
        return {"acknowledged": True, "set_to": instant_to_json(instant, config.zone)}

    @app.get("/device/time")
    def device_read_time(port: str | None = Query(default=None)):
        with devices.lock, _device_errors(devices):
            instant = devices.ensure_connected(port).read_time()
        return instant_to_json(instant, config.zone)

    @app.post("/device/erase")
    def device_erase(body: PortBody):
        with devices.lock, _device_errors(devices):
            devices.ensure_connected(body.port).erase_flash()
        return {"acknowledged": True}

    @app.post("/device/start")
    def device_start(body: TimeBody):
        instant = (
            DeviceInstant(body.posix_seconds, body.fraction_ticks)
            if body.posix_seconds is not None
            else DeviceInstant.now()
        )
        with devices.lock, _device_errors(devices):
            devices.ensure_connected(body.port).start_collection(instant)
        return {"acknowledged": True, "synchronized_to": instant_to_json(instant, config.zone)}

    @app.post("/device/pull")
    def device_pull(body: PullBody):
        records: list[str] = []
        with devices.lock, _device_errors(devices):
            count = devices.ensure_connected(body.port).read_data(records.append)
        session_id = store.save(records, body.session_id)
        return {"session_id": session_id, "record_count": count}

    @app.get("/sessions")
    def get_sessions():
        return {"sessions": store.list_sessions()}

    @app.get("/sessions/{session_id}/episodes")
    def get_episodes(
        session_id: str,
        min_puff_s: float | None = Query(default=None, ge=0),
        use_thermistor: bool | None = Query(default=None),
        kinds: str | None = Query(default=None),
    ):
        wanted = None
        if kinds:
            try:
                wanted = {EpisodeKind(k.strip().upper()) for k in kinds.split(",") if k.strip()}
            except ValueError:
                raise HTTPException(status_code=422, detail=f"unknown episode kind in {kinds!r}")
        result = run_analysis(session_id, min_puff_s, use_thermistor)
        episodes = [
            episode_to_json(e, config.zone)
            for e in result.episodes
            if wanted is None or e.kind in wanted
        ]
        return {
            "session_id": session_id,
            "raw_puff_count": result.raw_puff_count,
            "episodes": episodes,
        }

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(
        session_id: str,
        min_puff_s: float | None = Query(default=None, ge=0),
        use_thermistor: bool | None = Query(default=None),
    ):
        result = run_analysis(session_id, min_puff_s, use_thermistor)
        return {
            "session_id": session_id,
            "metrics": [m.to_json_dict() for m in result.metrics()],
        }

    @app.get("/sessions/{session_id}/timeline")
    def get_timeline(
        session_id: str,
        date: str,
        min_puff_s: float | None = Query(default=None, ge=0),
        use_thermistor: bool | None = Query(default=None),
    ):
        try:
            day = dt.date.fromisoformat(date)
        except ValueError:
            raise HTTPException(status_code=422, detail=f"bad date {date!r}")
        result = run_analysis(session_id, min_puff_s, use_thermistor)
        return day_timeline(result, day)

    if config.ui_dir is not None and Path(config.ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(config.ui_dir), html=True), name="ui")

    return app


def serve_api(config: RunConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
