"""Client side of the monitor's line-oriented wire protocol.

One LF-terminated ASCII line per message, byte-transparent transport
(serial port or TCP loopback for the emulator):

    client -> device : PING | SETT <16 hex> | GETT | ERAS | DATA
    device -> client : PONG | OK | TIME <12 hex> | REC <16 hex> ... END <n>
                       | ERR <code>

SETT carries a DeviceInstant as 8+4 hex digits left-padded with 4 zeros;
TIME replies with the same 12 significant digits.  DATA streams every stored
record as its own REC line and terminates with END plus the record count.
Every command elicits exactly one terminated response (REC lines belong to
the single DATA exchange), and a session never has more than one command in
flight.
"""

from __future__ import annotations

import json
import os
import socket
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

from .records import DeviceInstant

DEFAULT_BAUD = 115200
HANDSHAKE_TIMEOUT_S = 2.0
DATA_LINE_TIMEOUT_S = 5.0

CMD_PING = "PING"
CMD_SET_TIME = "SETT"
CMD_READ_TIME = "GETT"
CMD_ERASE = "ERAS"
CMD_READ_DATA = "DATA"

RSP_PONG = "PONG"
RSP_OK = "OK"
RSP_TIME = "TIME"
RSP_RECORD = "REC"
RSP_END = "END"
RSP_ERROR = "ERR"

REGISTRY_ENV = "PUFFTRACE_PORT_REGISTRY"


class DeviceLinkError(Exception):
    """Base for all device-link failures."""


class PortUnavailable(DeviceLinkError):
    pass


class NoHandshake(DeviceLinkError):
    pass


class Timeout(DeviceLinkError):
    pass


class Rejected(DeviceLinkError):
    pass


class MalformedReply(DeviceLinkError):
    pass


class AbortedByPeer(DeviceLinkError):
    def __init__(self, message: str, partial_count: int = 0):
        super().__init__(message)
        self.partial_count = partial_count


class SessionBusy(DeviceLinkError):
    pass


class InvalidState(DeviceLinkError):
    pass


class LinkState(Enum):
    DISCONNECTED = "DISCONNECTED"
    CONNECTED = "CONNECTED"
    BUSY = "BUSY"


@dataclass(frozen=True)
class PortDescriptor:
    system_name: str
    human_label: str

    def __post_init__(self):
        if not self.system_name:
            raise ValueError("port system name must be nonempty")


def format_set_time(instant: DeviceInstant) -> str:
    return f"{CMD_SET_TIME} 0000{instant.posix_seconds:08X}{instant.fraction_ticks:04X}"


def parse_instant_hex(digits: str) -> DeviceInstant:
    """Decode 12 hex digits (8 posix + 4 ticks) into a DeviceInstant."""
    if len(digits) != 12:
        raise ValueError(f"expected 12 hex digits, got {digits!r}")
    return DeviceInstant(int(digits[:8], 16), int(digits[8:], 16))


# ---------------------------------------------------------------------------
# Transports: byte streams with LF line framing.
# ---------------------------------------------------------------------------


class TransportClosed(Exception):
    """Peer closed the connection (internal; surfaced as AbortedByPeer)."""


class TcpTransport:
    def __init__(self, host: str, port: int, connect_timeout: float = HANDSHAKE_TIMEOUT_S):
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as err:
            raise NoHandshake(f"cannot reach tcp:{host}:{port}: {err}") from err
        self._buffer = bytearray()

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall(line.encode("ascii") + b"\n")
        except OSError as err:
            raise TransportClosed(str(err)) from err

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                raw = bytes(self._buffer[:newline])
                del self._buffer[: newline + 1]
                return raw.rstrip(b"\r").decode("ascii", errors="replace")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Timeout(f"no response line within {timeout:.1f} s")
            self._sock.settimeout(remaining)
            try:
                chunk = self._sock.recv(4096)
            except socket.timeout:
                raise Timeout(f"no response line within {timeout:.1f} s") from None
            except OSError as err:
                raise TransportClosed(str(err)) from err
            if not chunk:
                raise TransportClosed("connection closed by peer")
            self._buffer.extend(chunk)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class SerialTransport:
    """Real serial port, used when pyserial is installed."""

    def __init__(self, device: str, baud: int = DEFAULT_BAUD):
        try:
            import serial
        except ImportError as err:
            raise PortUnavailable("pyserial is not installed; serial ports unavailable") from err
        try:
            # 8-N-1 framing; per-read timeouts are set in recv_line.
            self._ser = serial.Serial(device, baudrate=baud, timeout=0.1)
        except Exception as err:
            raise PortUnavailable(f"cannot open serial port {device}: {err}") from err
        self._buffer = bytearray()

    def send_line(self, line: str) -> None:
        self._ser.write(line.encode("ascii") + b"\n")
        self._ser.flush()

    def recv_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                raw = bytes(self._buffer[:newline])
                del self._buffer[: newline + 1]
                return raw.rstrip(b"\r").decode("ascii", errors="replace")
            if time.monotonic() >= deadline:
                raise Timeout(f"no response line within {timeout:.1f} s")
            chunk = self._ser.read(4096)
            if chunk:
                self._buffer.extend(chunk)

    def close(self) -> None:
        self._ser.close()


def parse_endpoint(port_spec: str) -> tuple[str, tuple]:
    """Split a port spec into ("tcp", (host, port)) or ("serial", (device,))."""
    spec = port_spec.strip()
    if spec.startswith("tcp:"):
        rest = spec[4:]
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise PortUnavailable(f"malformed tcp endpoint: {port_spec!r}")
        return "tcp", (host, int(port))
    if spec.startswith("serial:"):
        return "serial", (spec[7:],)
    if ":" in spec and not spec.startswith(("/", ".")):
        host, _, port = spec.rpartition(":")
        if port.isdigit():
            return "tcp", (host, int(port))
    if spec:
        return "serial", (spec,)
    raise PortUnavailable("empty port spec")


def open_transport(port_spec: str, *, baud: int = DEFAULT_BAUD,
                   connect_timeout: float = HANDSHAKE_TIMEOUT_S):
    kind, args = parse_endpoint(port_spec)
    if kind == "tcp":
        return TcpTransport(*args, connect_timeout=connect_timeout)
    return SerialTransport(args[0], baud=baud)


# ---------------------------------------------------------------------------
# Port discovery: real serial ports plus registered emulator endpoints.
# ---------------------------------------------------------------------------


def registry_dir() -> Path:
    override = os.environ.get(REGISTRY_ENV)
    if override:
        return Path(override)
    return Path(tempfile.gettempdir()) / "pufftrace-ports"


def register_endpoint(endpoint: str, label: str) -> Path:
    """Advertise an emulator endpoint so list_ports can discover it."""
    folder = registry_dir()
    folder.mkdir(parents=True, exist_ok=True)
    path = folder / f"{os.getpid()}-{endpoint.replace(':', '_').replace('/', '_')}.json"
    path.write_text(json.dumps({"endpoint": endpoint, "label": label, "pid": os.getpid()}))
    return path


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def list_ports() -> list[PortDescriptor]:
    """Serial ports visible to the host plus live registered emulators."""
    ports: list[PortDescriptor] = []
    try:
        from serial.tools import list_ports as serial_ports
    except ImportError:
        pass
    else:
        for info in serial_ports.comports():
            ports.append(PortDescriptor(info.device, info.description or info.device))
    folder = registry_dir()
    if folder.is_dir():
        for entry in sorted(folder.glob("*.json")):
            try:
                meta = json.loads(entry.read_text())
            except (OSError, json.JSONDecodeError):
                continue
            if not _pid_alive(int(meta.get("pid", -1))):
                try:
                    entry.unlink()
                except OSError:
                    pass
                continue
            ports.append(PortDescriptor(meta["endpoint"], meta.get("label", meta["endpoint"])))
    return ports


# ---------------------------------------------------------------------------
# Client session.
# ---------------------------------------------------------------------------


class DeviceClient:
    """Exclusive-owner handle for one device link; one command in flight."""

    def __init__(self, *, response_timeout: float = HANDSHAKE_TIMEOUT_S,
                 data_timeout: float = DATA_LINE_TIMEOUT_S, baud: int = DEFAULT_BAUD):
        self._transport = None
        self._lock = threading.Lock()
        self._busy = False
        self.port: str | None = None
        self.response_timeout = response_timeout
        self.data_timeout = data_timeout
        self.baud = baud

    @property
    def state(self) -> LinkState:
        if self._transport is None:
            return LinkState.DISCONNECTED
        return LinkState.BUSY if self._busy else LinkState.CONNECTED

    def connect(self, port_spec: str) -> None:
        """Open the port and exchange PING/PONG; requires DISCONNECTED."""
        if self._transport is not None:
            raise InvalidState(f"already connected to {self.port}")
        transport = open_transport(port_spec, baud=self.baud,
                                   connect_timeout=self.response_timeout)
        try:
            transport.send_line(CMD_PING)
            reply = transport.recv_line(self.response_timeout)
        except (Timeout, TransportClosed) as err:
            transport.close()
            raise NoHandshake(f"no handshake from {port_spec}: {err}") from err
        if reply != RSP_PONG:
            transport.close()
            raise NoHandshake(f"unexpected handshake reply {reply!r} from {port_spec}")
        self._transport = transport
        self.port = port_spec

    def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None
            self.port = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _acquire(self):
        if self._transport is None:
            raise InvalidState("not connected")
        if not self._lock.acquire(blocking=False):
            raise SessionBusy("another command is in flight")
        self._busy = True

    def _release(self):
        self._busy = False
        self._lock.release()

    def _exchange(self, command: str, timeout: float) -> str:
        try:
            self._transport.send_line(command)
            return self._transport.recv_line(timeout)
        except TransportClosed as err:
            raise AbortedByPeer(f"link dropped during {command.split()[0]}: {err}") from err

    def _expect_ok(self, command: str) -> None:
        reply = self._exchange(command, self.response_timeout)
        if reply.startswith(RSP_ERROR):
            raise Rejected(f"device rejected {command.split()[0]}: {reply}")
        if reply != RSP_OK:
            raise MalformedReply(f"expected OK, got {reply!r}")

    def set_time(self, instant: DeviceInstant) -> None:
        self._acquire()
        try:
            self._expect_ok(format_set_time(instant))
        finally:
            self._release()

    def read_time(self) -> DeviceInstant:
        self._acquire()
        try:
            reply = self._exchange(CMD_READ_TIME, self.response_timeout)
        finally:
            self._release()
        prefix = RSP_TIME + " "
        if not reply.startswith(prefix):
            raise MalformedReply(f"expected TIME reply, got {reply!r}")
        try:
            return parse_instant_hex(reply[len(prefix):].strip())
        except ValueError as err:
            raise MalformedReply(f"bad TIME payload in {reply!r}: {err}") from err

    def erase_flash(self) -> None:
        self._acquire()
        try:
            self._expect_ok(CMD_ERASE)
        finally:
            self._release()

    def start_collection(self, now: DeviceInstant | None = None) -> None:
        """Erase flash then synchronize the clock, atomically for callers."""
        if now is None:
            now = DeviceInstant.now()
        self._acquire()
        try:
            self._expect_ok(CMD_ERASE)
            self._expect_ok(format_set_time(now))
        finally:
            self._release()

    def read_data(self, sink: Callable[[str], None]) -> int:
        """Stream every stored record line into sink; returns the count.

        Storage is left untouched, so consecutive reads deliver identical
        byte streams.
        """
        self._acquire()
        count = 0
        try:
            try:
                self._transport.send_line(CMD_READ_DATA)
                while True:
                    try:
                        line = self._transport.recv_line(self.data_timeout)
                    except Timeout:
                        raise Timeout(f"data stream stalled after {count} records") from None
                    if line.startswith(RSP_RECORD + " "):
                        sink(line[len(RSP_RECORD) + 1 :])
                        count += 1
                    elif line.startswith(RSP_END):
                        claimed = line[len(RSP_END) :].strip()
                        if not claimed.isdigit() or int(claimed) != count:
                            raise MalformedReply(
                                f"device announced {claimed!r} records, delivered {count}"
                            )
                        return count
                    elif line.startswith(RSP_ERROR):
                        raise Rejected(f"device rejected DATA: {line}")
                    else:
                        raise MalformedReply(f"unexpected line in data stream: {line!r}")
            except TransportClosed as err:
                raise AbortedByPeer(
                    f"stream cut after {count} records: {err}", partial_count=count
                ) from err
        finally:
            self._release()


def connect(port_spec: str, **kwargs) -> DeviceClient:
    """Convenience: build a client and connect it to port_spec."""
    client = DeviceClient(**kwargs)
    client.connect(port_spec)
    return client
