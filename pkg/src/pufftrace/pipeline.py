"""Turn decoded event streams into episodes, filtered puffs and daily metrics.

Pairing is positional, per sensor channel: within the PUFF (or TOUCH)
subsequence of the stream, an ON immediately followed by an OFF forms one
episode; anything else is an orphan and is reported, never silently dropped.
Temperature records have no timestamps, so they attach to episodes purely by
stream position.  All operations are pure; none mutates its inputs.
"""

from __future__ import annotations

import datetime as dt
import statistics
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from .records import (
    DecodedEvent,
    DeviceInstant,
    EventKind,
    TICKS_PER_SECOND,
    ZoneConfig,
    date_of,
    format_time_of_day,
)


class EpisodeKind(Enum):
    PUFF = "PUFF"
    TOUCH = "TOUCH"


class Confidence(Enum):
    HIGH = "HIGH"
    STANDARD = "STANDARD"


class LengthMismatch(ValueError):
    """Reference and device event lists differ in length."""


@dataclass(frozen=True)
class Episode:
    """A paired ON/OFF interval for one sensor channel."""

    kind: EpisodeKind
    start: DeviceInstant
    end: DeviceInstant
    confidence: Confidence | None = None
    # Stream positions of the ON/OFF records; -1 for synthetic episodes.
    on_index: int = field(default=-1, compare=False, repr=False)
    off_index: int = field(default=-1, compare=False, repr=False)

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("episode ends before it starts")

    @property
    def duration_ms(self) -> float:
        return (self.end.total_ticks - self.start.total_ticks) * 1000 / TICKS_PER_SECOND

    @property
    def duration_s(self) -> float:
        return (self.end.total_ticks - self.start.total_ticks) / TICKS_PER_SECOND

    def date(self, zone: ZoneConfig) -> dt.date:
        return date_of(self.start, zone)

    def overlaps(self, other: "Episode") -> bool:
        """Closed-interval overlap: shared boundary instants count."""
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True)
class PuffWithTemps:
    """A puff episode with the ADC readings sampled at its start and end."""

    episode: Episode
    temp_on: int | None = None
    temp_off: int | None = None

    @property
    def temp_delta(self) -> int | None:
        if self.temp_on is None or self.temp_off is None:
            return None
        return abs(self.temp_on - self.temp_off)


@dataclass(frozen=True)
class FilterConfig:
    """Thresholds for noise removal and display filtering."""

    use_thermistor: bool = False
    min_puff_ms: float = 200.0
    temp_delta_threshold: int = 10
    display_min_puff_s: float = 0.0

    def __post_init__(self):
        if self.min_puff_ms < 0 or self.temp_delta_threshold < 0 or self.display_min_puff_s < 0:
            raise ValueError("filter thresholds must be nonnegative")


@dataclass(frozen=True)
class PTMetrics:
    """Per-day puffing-topography summary."""

    date: dt.date
    puff_count: int
    total_puff_duration_s: float
    inter_puff_intervals_s: list[float]
    touch_count: int
    total_touch_duration_s: float

    def to_json_dict(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "puff_count": self.puff_count,
            "total_puff_duration_s": self.total_puff_duration_s,
            "inter_puff_intervals_s": self.inter_puff_intervals_s,
            "touch_count": self.touch_count,
            "total_touch_duration_s": self.total_touch_duration_s,
        }


@dataclass(frozen=True)
class DriftReport:
    """Per-session comparison of reference vs device-recorded event times."""

    label: str
    offsets_s: list[float]
    approx_time_diff_s: float

    def display_offset(self) -> str:
        """Representative offset rounded to 0.5 s for report display."""
        value = self.approx_time_diff_s
        sign = -1.0 if value < 0 else 1.0
        return f"{sign * (int(abs(value) * 2 + 0.5) / 2):.1f}s"


def pair_episodes(
    events: Sequence[DecodedEvent],
) -> tuple[list[Episode], list[DecodedEvent]]:
    """Pair ON/OFF events into episodes, per channel, by stream adjacency.

    Returns episodes sorted chronologically and the unmatched events (in
    stream order).  Temperature records are ignored here.  An ON followed by
    another ON of the same channel orphans the first; an OFF with no pending
    ON is an orphan, as is a pair whose OFF precedes its ON in time.
    """
    episodes: list[Episode] = []
    orphans: list[tuple[int, DecodedEvent]] = []
    pending: dict[str, tuple[int, DecodedEvent]] = {}
    for i, ev in enumerate(events):
        if ev.kind.is_temperature:
            continue
        channel = ev.kind.channel
        if ev.kind.is_on:
            if channel in pending:
                orphans.append(pending.pop(channel))
            pending[channel] = (i, ev)
        else:
            if channel in pending:
                j, on_ev = pending.pop(channel)
                if ev.instant < on_ev.instant:
                    orphans.extend([(j, on_ev), (i, ev)])
                else:
                    episodes.append(
                        Episode(
                            kind=EpisodeKind[channel],
                            start=on_ev.instant,
                            end=ev.instant,
                            on_index=j,
                            off_index=i,
                        )
                    )
            else:
                orphans.append((i, ev))
    orphans.extend(pending.values())
    orphans.sort(key=lambda pair: pair[0])
    episodes.sort(key=lambda e: (e.start, e.on_index))
    return episodes, [ev for _, ev in orphans]


def associate_temperatures(
    events: Sequence[DecodedEvent],
    episodes: Sequence[Episode],
) -> tuple[list[PuffWithTemps], list[DecodedEvent]]:
    """Attach temperature ON/OFF pairs to the episode they follow.

    A pair belongs to the episode whose OFF record most recently precedes it,
    provided the whole pair sits before the next episode's ON record.
    Returns puff episodes (stream order) with any attached readings, plus the
    temperature events that could not be attached.
    """
    unassociated: list[DecodedEvent] = []
    temp_pairs: list[tuple[int, int, DecodedEvent, DecodedEvent]] = []
    pending: tuple[int, DecodedEvent] | None = None
    for i, ev in enumerate(events):
        if not ev.kind.is_temperature:
            continue
        if ev.kind is EventKind.TEMPERATURE_ON:
            if pending is not None:
                unassociated.append(pending[1])
            pending = (i, ev)
        else:
            if pending is None:
                unassociated.append(ev)
            else:
                temp_pairs.append((pending[0], i, pending[1], ev))
                pending = None
    if pending is not None:
        unassociated.append(pending[1])

    by_off = sorted(range(len(episodes)), key=lambda k: episodes[k].off_index)
    on_positions = sorted(e.on_index for e in episodes)
    attached: dict[int, tuple[int, int]] = {}
    for i_on, i_off, ev_on, ev_off in temp_pairs:
        owner = None
        for k in by_off:
            if episodes[k].off_index < i_on:
                owner = k
            else:
                break
        if owner is None:
            unassociated.extend([ev_on, ev_off])
            continue
        next_on = next((p for p in on_positions if p > episodes[owner].off_index), None)
        if (next_on is not None and next_on < i_off) or owner in attached:
            unassociated.extend([ev_on, ev_off])
            continue
        attached[owner] = (ev_on.temperature, ev_off.temperature)

    puffs = []
    for k, ep in enumerate(episodes):
        if ep.kind is not EpisodeKind.PUFF:
            continue
        temp_on, temp_off = attached.get(k, (None, None))
        puffs.append(PuffWithTemps(episode=ep, temp_on=temp_on, temp_off=temp_off))
    return puffs, unassociated


def merge_consecutive_puffs(puffs: Sequence[PuffWithTemps]) -> list[PuffWithTemps]:
    """Concatenate puff N with puff N+1 when N+1's start reading has not
    risen above N's end reading, spanning N's ON to N+1's OFF."""
    merged: list[PuffWithTemps] = []
    current: PuffWithTemps | None = None
    for puff in puffs:
        if (
            current is not None
            and current.temp_off is not None
            and puff.temp_on is not None
            and puff.temp_on <= current.temp_off
        ):
            joined = Episode(
                kind=EpisodeKind.PUFF,
                start=current.episode.start,
                end=puff.episode.end,
                on_index=current.episode.on_index,
                off_index=puff.episode.off_index,
            )
            current = PuffWithTemps(joined, current.temp_on, puff.temp_off)
        else:
            if current is not None:
                merged.append(current)
            current = puff
    if current is not None:
        merged.append(current)
    return merged


def fuse_and_filter_with_temps(
    puffs: Sequence[PuffWithTemps], config: FilterConfig
) -> list[PuffWithTemps]:
    """Noise removal, keeping temperature readings with the surviving puffs.

    Duration-only mode removes every puff at or below min_puff_ms.  Thermistor
    mode first merges consecutive puffs, then lets a short puff survive only
    when its temperature swing exceeds the threshold; short puffs without
    readings degrade to the duration-only rule.
    """
    if not config.use_thermistor:
        return [p for p in puffs if p.episode.duration_ms > config.min_puff_ms]
    kept = []
    for puff in merge_consecutive_puffs(puffs):
        if puff.episode.duration_ms > config.min_puff_ms:
            kept.append(puff)
        elif puff.temp_delta is not None and puff.temp_delta > config.temp_delta_threshold:
            kept.append(puff)
    return kept


def fuse_and_filter(puffs: Sequence[PuffWithTemps], config: FilterConfig) -> list[Episode]:
    return [p.episode for p in fuse_and_filter_with_temps(puffs, config)]


def apply_display_filter(episodes: Iterable[Episode], min_seconds: float) -> list[Episode]:
    """Keep puffs lasting at least min_seconds; touches pass through unmodified."""
    if min_seconds < 0:
        raise ValueError("display threshold must be nonnegative")
    return [
        e for e in episodes if e.kind is not EpisodeKind.PUFF or e.duration_s >= min_seconds
    ]


def classify_confidence(
    puffs: Sequence[Episode], touches: Sequence[Episode]
) -> list[Episode]:
    """Mark each puff HIGH when its interval overlaps any touch, else STANDARD."""
    classified = []
    for puff in puffs:
        high = any(puff.overlaps(t) for t in touches)
        classified.append(replace(puff, confidence=Confidence.HIGH if high else Confidence.STANDARD))
    return classified


def bucket_by_day(
    episodes: Iterable[Episode], zone: ZoneConfig
) -> dict[dt.date, list[Episode]]:
    """Group episodes by the calendar date of their start under zone.

    Episodes spanning midnight stay whole under their start date; clipping to
    the 24-hour axis is a rendering concern.
    """
    buckets: dict[dt.date, list[Episode]] = {}
    for episode in episodes:
        buckets.setdefault(episode.date(zone), []).append(episode)
    return dict(sorted(buckets.items()))


def compute_pt_metrics(buckets: dict[dt.date, list[Episode]]) -> list[PTMetrics]:
    """Per-day counts, total durations and OFF-to-next-ON gaps at tick precision."""
    metrics = []
    for day, episodes in sorted(buckets.items()):
        puffs = sorted(
            (e for e in episodes if e.kind is EpisodeKind.PUFF), key=lambda e: e.start
        )
        touches = [e for e in episodes if e.kind is EpisodeKind.TOUCH]
        intervals = [
            (nxt.start.total_ticks - prev.end.total_ticks) / TICKS_PER_SECOND
            for prev, nxt in zip(puffs, puffs[1:])
        ]
        metrics.append(
            PTMetrics(
                date=day,
                puff_count=len(puffs),
                total_puff_duration_s=sum(p.duration_s for p in puffs),
                inter_puff_intervals_s=intervals,
                touch_count=len(touches),
                total_touch_duration_s=sum(t.duration_s for t in touches),
            )
        )
    return metrics


def compute_drift(
    reference: Sequence[tuple[float, float]],
    device: Sequence[tuple[float, float]],
    label: str = "",
) -> DriftReport:
    """Offsets between reference and device (ON, OFF) times, in seconds.

    The representative value is the median of all per-edge offsets, robust to
    a single outlying pair; display rounding to 0.5 s happens in the report.
    """
    if len(reference) != len(device):
        raise LengthMismatch(f"{len(reference)} reference pairs vs {len(device)} device pairs")
    offsets = []
    for (ref_on, ref_off), (dev_on, dev_off) in zip(reference, device):
        offsets.append(ref_on - dev_on)
        offsets.append(ref_off - dev_off)
    approx = statistics.median(offsets) if offsets else 0.0
    return DriftReport(label=label, offsets_s=offsets, approx_time_diff_s=approx)


EPISODE_TABLE_HEADER = "Event,Date,Range,Duration(ms)"


def export_episode_table(episodes: Iterable[Episode], zone: ZoneConfig) -> str:
    """Comma-separated Event,Date,Range,Duration(ms) rows, one per episode."""
    lines = [EPISODE_TABLE_HEADER]
    for e in episodes:
        when = e.date(zone).isoformat()
        span = f"{format_time_of_day(e.start, zone)} to {format_time_of_day(e.end, zone)}"
        lines.append(f"{e.kind.value},{when},{span},{e.duration_ms:.2f}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AnalysisResult:
    """Everything the CLI, API and plots need from one pass over a stream."""

    zone: ZoneConfig
    config: FilterConfig
    raw_puff_count: int
    raw_touch_count: int
    puffs: list[PuffWithTemps]
    touches: list[Episode]
    orphans: list[DecodedEvent]
    unassociated_temps: list[DecodedEvent]

    @property
    def episodes(self) -> list[Episode]:
        both = [p.episode for p in self.puffs] + list(self.touches)
        return sorted(both, key=lambda e: (e.start, e.kind.value))

    def buckets(self) -> dict[dt.date, list[Episode]]:
        return bucket_by_day(self.episodes, self.zone)

    def metrics(self) -> list[PTMetrics]:
        return compute_pt_metrics(self.buckets())


def analyze_events(
    events: Sequence[DecodedEvent], config: FilterConfig, zone: ZoneConfig
) -> AnalysisResult:
    """Full pipeline: pair, associate temperatures, fuse, display-filter, classify."""
    episodes, orphans = pair_episodes(events)
    touches = [e for e in episodes if e.kind is EpisodeKind.TOUCH]
    raw_puffs = [e for e in episodes if e.kind is EpisodeKind.PUFF]
    with_temps, unassociated = associate_temperatures(events, episodes)
    kept = fuse_and_filter_with_temps(with_temps, config)
    if config.display_min_puff_s > 0:
        kept = [p for p in kept if p.episode.duration_s >= config.display_min_puff_s]
    classified = classify_confidence([p.episode for p in kept], touches)
    puffs = [
        PuffWithTemps(episode, p.temp_on, p.temp_off)
        for episode, p in zip(classified, kept)
    ]
    return AnalysisResult(
        zone=zone,
        config=config,
        raw_puff_count=len(raw_puffs),
        raw_touch_count=len(touches),
        puffs=puffs,
        touches=touches,
        orphans=orphans,
        unassociated_temps=unassociated,
    )
