"""Protocol-faithful virtual monitor plus a behavioral scenario generator.

The emulator answers the wire protocol over a TCP loopback endpoint, one
connection at a time, and registers the endpoint so port discovery finds it.
Scenarios script whole sessions of puffing behavior (with touch accompaniment,
thermistor readings and spurious short puffs) and compile deterministically
into flash contents.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import random
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import link
from .records import DecodedEvent, DeviceInstant, EventKind, TICKS_PER_SECOND, encode_record

log = logging.getLogger(__name__)

DEFAULT_FLASH_CAPACITY = 65536


class CapacityExceeded(Exception):
    """More records than the modeled flash can hold."""


# ---------------------------------------------------------------------------
# Scenario description.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SessionSpec:
    """One scripted sitting: a list of (duration_s, gap_to_next_s) puffs."""

    label: str
    start_offset_s: float
    puffs: list[tuple[float, float]]
    touch_fraction: float = 0.9
    touch_lead_s: float = 0.5
    touch_lag_s: float = 0.5
    temp_baseline: int = 260
    temp_delta: int = 245

    def __post_init__(self):
        if any(duration <= 0 for duration, _ in self.puffs):
            raise ValueError(f"session {self.label!r} has a non-positive puff duration")
        if any(gap < 0 for _, gap in self.puffs):
            raise ValueError(f"session {self.label!r} has a negative gap")
        if not 0.0 <= self.touch_fraction <= 1.0:
            raise ValueError("touch_fraction must lie in [0, 1]")

    @property
    def span_s(self) -> float:
        return sum(duration + gap for duration, gap in self.puffs)


@dataclass(frozen=True)
class NoiseModel:
    """Spurious short puff pairs scattered uniformly over the scenario."""

    count: int = 0
    # Above the 200 ms noise gate and below the 1 s display filter, so raw
    # episode counts match scripted + injected exactly.
    duration_range_s: tuple[float, float] = (0.25, 0.9)

    def __post_init__(self):
        lo, hi = self.duration_range_s
        if self.count < 0 or lo <= 0 or hi <= lo:
            raise ValueError("noise model needs count >= 0 and 0 < lo < hi")


@dataclass(frozen=True)
class Scenario:
    """A scripted day of behavior: sessions, noise and a deterministic seed."""

    start: float
    sessions: list[SessionSpec]
    noise: NoiseModel = NoiseModel()
    seed: int = 0

    def __post_init__(self):
        previous_end = None
        for session in self.sessions:
            begin = session.start_offset_s
            if previous_end is not None and begin < previous_end:
                raise ValueError(f"session {session.label!r} overlaps its predecessor")
            previous_end = begin + session.span_s

    @property
    def end(self) -> float:
        if not self.sessions:
            return self.start
        last = self.sessions[-1]
        return self.start + last.start_offset_s + last.span_s

    @property
    def true_puff_count(self) -> int:
        return sum(len(s.puffs) for s in self.sessions)

    @property
    def total_puff_duration_s(self) -> float:
        return sum(duration for s in self.sessions for duration, _ in s.puffs)

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "seed": self.seed,
            "noise": {
                "count": self.noise.count,
                "duration_range_s": list(self.noise.duration_range_s),
            },
            "sessions": [
                {
                    "label": s.label,
                    "start_offset_s": s.start_offset_s,
                    "puffs": [list(p) for p in s.puffs],
                    "touch_fraction": s.touch_fraction,
                    "touch_lead_s": s.touch_lead_s,
                    "touch_lag_s": s.touch_lag_s,
                    "temp_baseline": s.temp_baseline,
                    "temp_delta": s.temp_delta,
                }
                for s in self.sessions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        start = data["start"]
        if isinstance(start, str):
            start = dt.datetime.fromisoformat(start).timestamp()
        noise_data = data.get("noise", {})
        sessions = [
            SessionSpec(
                label=s["label"],
                start_offset_s=float(s["start_offset_s"]),
                puffs=[(float(d), float(g)) for d, g in s["puffs"]],
                touch_fraction=float(s.get("touch_fraction", 0.9)),
                touch_lead_s=float(s.get("touch_lead_s", 0.5)),
                touch_lag_s=float(s.get("touch_lag_s", 0.5)),
                temp_baseline=int(s.get("temp_baseline", 260)),
                temp_delta=int(s.get("temp_delta", 245)),
            )
            for s in data.get("sessions", [])
        ]
        return cls(
            start=float(start),
            sessions=sessions,
            noise=NoiseModel(
                count=int(noise_data.get("count", 0)),
                duration_range_s=tuple(noise_data.get("duration_range_s", (0.25, 0.9))),
            ),
            seed=int(data.get("seed", 0)),
        )


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def validation_day(start: float = 1707696000.0, seed: int = 2024) -> Scenario:
    """The desk-scale reproduction protocol: four sessions of 18 puffs each
    (six at ~2 s, six at ~3 s, six at ~4 s, ~30 s apart) plus 17 short
    spurious puffs.  start defaults to 2024-02-12 00:00 UTC."""
    rng = random.Random(seed)
    sessions = []
    offsets = {"midnight": 0.5, "morning": 8.5, "afternoon": 14.5, "evening": 20.5}
    for label, hour in offsets.items():
        puffs = []
        for nominal in (2.0, 3.0, 4.0):
            for _ in range(6):
                duration = round(nominal + rng.uniform(-0.2, 0.35), 2)
                gap = round(rng.uniform(28.0, 32.0), 2)
                puffs.append((duration, gap))
        sessions.append(SessionSpec(label=label, start_offset_s=hour * 3600.0, puffs=puffs))
    return Scenario(start=start, sessions=sessions, noise=NoiseModel(count=17), seed=seed)


def _instant(epoch_s: float) -> DeviceInstant:
    whole, ticks = divmod(round(epoch_s * TICKS_PER_SECOND), TICKS_PER_SECOND)
    return DeviceInstant(whole, ticks)


def generate_records(scenario: Scenario, capacity: int = DEFAULT_FLASH_CAPACITY) -> list[str]:
    """Compile a scenario into raw flash lines, sorted by time.

    Each scripted puff emits its ON/OFF pair followed directly by the
    thermistor pair (temperature records carry no timestamp, so they stay
    glued behind their puff's OFF record); touch pairs bracket the puff when
    the accompaniment draw succeeds.  Spurious puffs emit bare short pairs
    placed clear of every scripted puff.  Deterministic for a given seed.
    """
    rng = random.Random(scenario.seed)
    puff_intervals: list[tuple[float, float]] = []
    # (sort seconds, tiebreak rank, sequence, event)
    entries: list[tuple[float, int, int, DecodedEvent]] = []
    seq = 0

    def push(at: float, rank: int, event: DecodedEvent):
        nonlocal seq
        entries.append((at, rank, seq, event))
        seq += 1

    for session in scenario.sessions:
        cursor = scenario.start + session.start_offset_s
        for duration, gap in session.puffs:
            on, off = cursor, cursor + duration
            puff_intervals.append((on, off))
            push(on, 0, DecodedEvent(EventKind.PUFF_ON, instant=_instant(on)))
            push(off, 0, DecodedEvent(EventKind.PUFF_OFF, instant=_instant(off)))
            push(off, 1, DecodedEvent(
                EventKind.TEMPERATURE_ON,
                temperature=session.temp_baseline + session.temp_delta,
            ))
            push(off, 2, DecodedEvent(
                EventKind.TEMPERATURE_OFF, temperature=session.temp_baseline
            ))
            if rng.random() < session.touch_fraction:
                t_on = max(scenario.start, on - session.touch_lead_s)
                t_off = off + session.touch_lag_s
                push(t_on, 0, DecodedEvent(EventKind.TOUCH_ON, instant=_instant(t_on)))
                push(t_off, 0, DecodedEvent(EventKind.TOUCH_OFF, instant=_instant(t_off)))
            cursor = off + gap

    lo, hi = scenario.noise.duration_range_s
    span_start, span_end = scenario.start, scenario.end
    margin = 0.05
    for _ in range(scenario.noise.count):
        for _attempt in range(10000):
            at = rng.uniform(span_start, max(span_start, span_end - hi))
            duration = rng.uniform(lo, hi)
            candidate = (at, at + duration)
            clear = all(
                candidate[1] + margin < s or candidate[0] - margin > e
                for s, e in puff_intervals
            )
            if clear:
                puff_intervals.append(candidate)
                push(candidate[0], 0, DecodedEvent(EventKind.PUFF_ON, instant=_instant(candidate[0])))
                push(candidate[1], 0, DecodedEvent(EventKind.PUFF_OFF, instant=_instant(candidate[1])))
                break
        else:
            raise ValueError("could not place spurious puffs clear of scripted ones")

    entries.sort(key=lambda item: (item[0], item[1], item[2]))
    if len(entries) > capacity:
        raise CapacityExceeded(f"{len(entries)} records exceed flash capacity {capacity}")
    return [encode_record(event) for _, _, _, event in entries]


# ---------------------------------------------------------------------------
# Emulated device and wire-protocol server.
# ---------------------------------------------------------------------------


@dataclass
class FaultPlan:
    """Optional misbehavior for fault-injection tests."""

    drop_handshake: bool = False
    truncate_data_after: int | None = None
    stall_data_after: int | None = None


class EmulatedDevice:
    """Flash contents plus a clock modeled as an offset from the host clock."""

    def __init__(self, capacity: int = DEFAULT_FLASH_CAPACITY):
        self.capacity = capacity
        self._flash: list[str] = []
        self.clock_offset_s = 0.0
        self._lock = threading.Lock()

    def load_flash(self, records: list[str]) -> None:
        if len(records) > self.capacity:
            raise CapacityExceeded(f"{len(records)} records exceed capacity {self.capacity}")
        with self._lock:
            self._flash = list(records)

    def dump_flash(self) -> list[str]:
        with self._lock:
            return list(self._flash)

    def erase(self) -> None:
        with self._lock:
            self._flash = []

    def set_clock(self, instant: DeviceInstant, host_now: float | None = None) -> None:
        host_now = time.time() if host_now is None else host_now
        self.clock_offset_s = instant.total_ticks / TICKS_PER_SECOND - host_now

    def read_clock(self, host_now: float | None = None) -> DeviceInstant:
        host_now = time.time() if host_now is None else host_now
        return _instant(max(0.0, host_now + self.clock_offset_s))


class EmulatorServer:
    """Serves the wire protocol for one EmulatedDevice, one client at a time."""

    def __init__(self, device: EmulatedDevice, host: str = "127.0.0.1", port: int = 0,
                 *, label: str = "emulated puff monitor", fault: FaultPlan | None = None):
        self.device = device
        self.label = label
        self.fault = fault or FaultPlan()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        bound_host, bound_port = self._listener.getsockname()
        self.endpoint = f"tcp:{bound_host}:{bound_port}"
        self._thread: threading.Thread | None = None
        self._running = False
        self._registration: Path | None = None

    def start(self) -> str:
        self._listener.listen(1)
        self._running = True
        self._registration = link.register_endpoint(self.endpoint, self.label)
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()
        return self.endpoint

    def stop(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        if self._registration is not None:
            try:
                self._registration.unlink()
            except OSError:
                pass
            self._registration = None
        if self._thread is not None:
            self._thread.join(timeout=1.0)
            self._thread = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    def _accept_loop(self):
        # Short timeouts everywhere so stop() is prompt: a close() does not
        # reliably wake a thread parked in accept()/recv().
        self._listener.settimeout(0.2)
        while self._running:
            try:
                conn, peer = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                self._serve_connection(conn)
            except OSError:
                pass  # peer vanished mid-exchange
            except Exception:
                log.exception("emulator connection from %s failed", peer)
            finally:
                try:
                    conn.close()
                except OSError:
                    pass

    def _serve_connection(self, conn: socket.socket):
        conn.settimeout(0.2)
        buffer = bytearray()

        def next_line() -> str | None:
            while self._running:
                newline = buffer.find(b"\n")
                if newline >= 0:
                    raw = bytes(buffer[:newline])
                    del buffer[: newline + 1]
                    return raw.decode("ascii", errors="replace").strip()
                try:
                    chunk = conn.recv(4096)
                except socket.timeout:
                    continue
                if not chunk:
                    return None
                buffer.extend(chunk)
            return None

        if self.fault.drop_handshake:
            # Stay silent until the client gives up.
            while next_line() is not None:
                pass
            return
        while self._running:
            line = next_line()
            if line is None:
                return
            reply = self._dispatch(line, conn)
            if reply is None:
                return
            conn.sendall((reply + "\n").encode("ascii"))

    def _dispatch(self, line: str, conn: socket.socket) -> str | None:
        command, _, argument = line.partition(" ")
        if command == link.CMD_PING:
            return link.RSP_PONG
        if command == link.CMD_SET_TIME:
            digits = argument.strip()
            if len(digits) != 16 or not all(c in "0123456789abcdefABCDEF" for c in digits):
                return f"{link.RSP_ERROR} 2"
            self.device.set_clock(link.parse_instant_hex(digits[4:]))
            return link.RSP_OK
        if command == link.CMD_READ_TIME:
            now = self.device.read_clock()
            return f"{link.RSP_TIME} {now.posix_seconds:08X}{now.fraction_ticks:04X}"
        if command == link.CMD_ERASE:
            self.device.erase()
            return link.RSP_OK
        if command == link.CMD_READ_DATA:
            records = self.device.dump_flash()
            for i, record in enumerate(records):
                if self.fault.truncate_data_after is not None and i >= self.fault.truncate_data_after:
                    return None  # close mid-stream
                if self.fault.stall_data_after is not None and i >= self.fault.stall_data_after:
                    while self._running:
                        time.sleep(0.05)
                    return None
                conn.sendall(f"{link.RSP_RECORD} {record}\n".encode("ascii"))
            return f"{link.RSP_END} {len(records)}"
        return f"{link.RSP_ERROR} 1"


def serve(device: EmulatedDevice, endpoint: str, **kwargs) -> None:
    """Blocking convenience: run a server on "tcp:host:port" until interrupted."""
    kind, args = link.parse_endpoint(endpoint)
    if kind != "tcp":
        raise ValueError("the emulator serves TCP endpoints only")
    server = EmulatorServer(device, host=args[0], port=args[1], **kwargs)
    server.start()
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
