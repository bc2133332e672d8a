"""Codec for the 64-bit event records emitted by the puff monitor.

Each record is one line of exactly 16 hexadecimal characters, laid out
most-significant-first:

    [4 hex] event code | [8 hex] POSIX seconds (UTC) | [4 hex] fraction

The fraction counts ticks of 1/65536 s (~15 us resolution).  Temperature
records carry no timestamp: their middle 8 digits are zero padding and the
final 4 hold a raw ADC count in 0..1024.

The human-readable "converted" form is one line per record, e.g.

    PUFF_ON 2024-02-12 10:09:44.55
    TEMPERATURE_ON 505

with the sub-second part rounded to centiseconds (ties away from zero,
carrying into the seconds field when rounding reaches 100).  Records are
stored in UTC; a timezone is applied only when rendering.
"""

from __future__ import annotations

import datetime as dt
import logging
import re
import time
from dataclasses import dataclass
from enum import Enum
from typing import Iterable
from zoneinfo import ZoneInfo

log = logging.getLogger(__name__)

TICKS_PER_SECOND = 65536
TEMPERATURE_MAX = 1024
RECORD_LENGTH = 16

_HEX16_RE = re.compile(r"[0-9A-Fa-f]{16}")
_OFFSET_RE = re.compile(r"(?:UTC|GMT)?([+-])(\d{2}):?(\d{2})")


class RecordError(ValueError):
    """A raw record line that cannot be decoded."""


class WrongLength(RecordError):
    pass


class NonHexCharacter(RecordError):
    pass


class UnknownEventCode(RecordError):
    pass


class TemperatureOutOfRange(RecordError):
    pass


class EventKind(Enum):
    """The six event codes a record may carry (leading 4 hex digits)."""

    PUFF_ON = 0x1000
    PUFF_OFF = 0x2000
    TOUCH_ON = 0x3000
    TOUCH_OFF = 0x4000
    TEMPERATURE_ON = 0x5000
    TEMPERATURE_OFF = 0x6000

    @property
    def is_temperature(self) -> bool:
        return self in (EventKind.TEMPERATURE_ON, EventKind.TEMPERATURE_OFF)

    @property
    def is_on(self) -> bool:
        return self in (EventKind.PUFF_ON, EventKind.TOUCH_ON, EventKind.TEMPERATURE_ON)

    @property
    def channel(self) -> str:
        """Sensor channel name: PUFF, TOUCH or TEMPERATURE."""
        return self.name.rsplit("_", 1)[0]


_CODE_TO_KIND = {kind.value: kind for kind in EventKind}


@dataclass(frozen=True, order=True)
class DeviceInstant:
    """A device timestamp: whole POSIX seconds plus 1/65536-s ticks."""

    posix_seconds: int
    fraction_ticks: int = 0

    def __post_init__(self):
        if not 0 <= self.posix_seconds < 2**32:
            raise ValueError(f"posix_seconds out of 32-bit range: {self.posix_seconds}")
        if not 0 <= self.fraction_ticks < TICKS_PER_SECOND:
            raise ValueError(f"fraction_ticks out of 16-bit range: {self.fraction_ticks}")

    @property
    def total_ticks(self) -> int:
        return self.posix_seconds * TICKS_PER_SECOND + self.fraction_ticks

    @classmethod
    def from_unix(cls, seconds: float) -> "DeviceInstant":
        """Nearest-tick instant for a float epoch time."""
        whole, ticks = divmod(round(seconds * TICKS_PER_SECOND), TICKS_PER_SECOND)
        return cls(whole, ticks)

    @classmethod
    def now(cls) -> "DeviceInstant":
        return cls.from_unix(time.time())


def to_unix_seconds(instant: DeviceInstant) -> float:
    # Exact: the numerator fits in 48 bits and the divisor is a power of two.
    return instant.total_ticks / TICKS_PER_SECOND


@dataclass(frozen=True)
class DecodedEvent:
    """A typed record: timestamped puff/touch edge, or a temperature count."""

    kind: EventKind
    instant: DeviceInstant | None = None
    temperature: int | None = None

    def __post_init__(self):
        if self.kind.is_temperature:
            if self.temperature is None or self.instant is not None:
                raise ValueError(f"{self.kind.name} events carry a temperature only")
            if not 0 <= self.temperature <= TEMPERATURE_MAX:
                raise ValueError(f"temperature out of range: {self.temperature}")
        else:
            if self.instant is None or self.temperature is not None:
                raise ValueError(f"{self.kind.name} events carry an instant only")


def parse_record(text: str) -> DecodedEvent:
    """Decode one 16-hex-character record line.

    Raises WrongLength, NonHexCharacter, UnknownEventCode or
    TemperatureOutOfRange; whitespace around the record is tolerated.
    """
    s = text.strip()
    if len(s) != RECORD_LENGTH:
        raise WrongLength(f"expected {RECORD_LENGTH} hex characters, got {len(s)}: {s!r}")
    if not _HEX16_RE.fullmatch(s):
        raise NonHexCharacter(f"not a hexadecimal record: {s!r}")
    word = int(s, 16)
    code = word >> 48
    kind = _CODE_TO_KIND.get(code)
    if kind is None:
        raise UnknownEventCode(f"unknown event code {code:04X} in {s!r}")
    if kind.is_temperature:
        # Middle 32 bits are padding; the ADC count sits in the low 16.
        raw = word & 0xFFFF
        if raw > TEMPERATURE_MAX:
            raise TemperatureOutOfRange(f"temperature {raw} above {TEMPERATURE_MAX} in {s!r}")
        if raw == TEMPERATURE_MAX:
            log.warning("temperature reading at documented ceiling %d: %s", TEMPERATURE_MAX, s)
        return DecodedEvent(kind=kind, temperature=raw)
    posix = (word >> 16) & 0xFFFFFFFF
    ticks = word & 0xFFFF
    return DecodedEvent(kind=kind, instant=DeviceInstant(posix, ticks))


def encode_record(event: DecodedEvent) -> str:
    """Render an event back to its 16-character uppercase hex form."""
    if event.kind.is_temperature:
        return f"{event.kind.value:04X}{0:08X}{event.temperature:04X}"
    inst = event.instant
    return f"{event.kind.value:04X}{inst.posix_seconds:08X}{inst.fraction_ticks:04X}"


def decode_stream(
    lines: Iterable[str],
) -> tuple[list[DecodedEvent], list[tuple[int, RecordError]]]:
    """Decode raw record lines, collecting per-line failures.

    Blank lines are skipped.  Returns (events, rejects) where rejects pairs
    each failing 1-based line number with its error; valid records are never
    dropped because of surrounding invalid lines.
    """
    events: list[DecodedEvent] = []
    rejects: list[tuple[int, RecordError]] = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            events.append(parse_record(stripped))
        except RecordError as err:
            rejects.append((lineno, err))
    return events, rejects


@dataclass(frozen=True)
class ZoneConfig:
    """Rendering timezone: a fixed offset or an IANA zone, UTC inside."""

    name: str
    zone: dt.tzinfo

    @classmethod
    def parse(cls, spec: str | None = None) -> "ZoneConfig":
        """Resolve a zone spec: None/"local", "UTC", "UTC-06:00", "+0530" or an IANA name."""
        if spec is None or spec.lower() == "local":
            local = dt.datetime.now().astimezone().tzinfo
            return cls("local", local)
        if spec.upper() in ("UTC", "Z"):
            return cls("UTC", dt.timezone.utc)
        m = _OFFSET_RE.fullmatch(spec.strip())
        if m:
            sign = 1 if m.group(1) == "+" else -1
            offset = dt.timedelta(hours=int(m.group(2)), minutes=int(m.group(3)))
            return cls(f"UTC{m.group(1)}{m.group(2)}:{m.group(3)}", dt.timezone(sign * offset))
        try:
            return cls(spec, ZoneInfo(spec))
        except Exception:
            raise ValueError(f"unrecognized timezone spec: {spec!r}") from None

    @classmethod
    def utc(cls) -> "ZoneConfig":
        return cls("UTC", dt.timezone.utc)


def round_centiseconds(ticks: int) -> int:
    """Round ticks/65536 to centiseconds, ties away from zero; may carry to 100."""
    return (200 * ticks + TICKS_PER_SECOND) // (2 * TICKS_PER_SECOND)


def zoned_time(instant: DeviceInstant, zone: ZoneConfig) -> tuple[dt.datetime, int]:
    """Zone-local datetime (whole seconds) plus rounded centiseconds, carry applied."""
    total_centis = instant.posix_seconds * 100 + round_centiseconds(instant.fraction_ticks)
    seconds, centis = divmod(total_centis, 100)
    return dt.datetime.fromtimestamp(seconds, zone.zone), centis


def date_of(instant: DeviceInstant, zone: ZoneConfig) -> dt.date:
    """Calendar date of an instant under the rendering zone."""
    return zoned_time(instant, zone)[0].date()


def format_time_of_day(instant: DeviceInstant, zone: ZoneConfig) -> str:
    when, centis = zoned_time(instant, zone)
    return f"{when:%H:%M:%S}.{centis:02d}"


def format_instant(instant: DeviceInstant, zone: ZoneConfig) -> str:
    when, centis = zoned_time(instant, zone)
    return f"{when:%Y-%m-%d %H:%M:%S}.{centis:02d}"


def format_instant_iso(instant: DeviceInstant, zone: ZoneConfig) -> str:
    """ISO-8601 form with centisecond precision and UTC offset."""
    when, centis = zoned_time(instant, zone)
    offset = when.strftime("%z")
    return f"{when:%Y-%m-%dT%H:%M:%S}.{centis:02d}{offset[:3]}:{offset[3:]}"


def render_converted_line(event: DecodedEvent, zone: ZoneConfig) -> str:
    """Human-readable line: "<KIND> YYYY-MM-DD HH:MM:SS.cc" or "<KIND> <adc>"."""
    if event.kind.is_temperature:
        return f"{event.kind.name} {event.temperature}"
    return f"{event.kind.name} {format_instant(event.instant, zone)}"
