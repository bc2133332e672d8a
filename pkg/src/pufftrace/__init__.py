"""Puff-topography toolkit: record codec, event pipeline, device link,
emulator, plots, CLI and JSON API for a vape-usage monitor."""

from .records import (
    DecodedEvent,
    DeviceInstant,
    EventKind,
    RecordError,
    ZoneConfig,
    decode_stream,
    encode_record,
    parse_record,
    render_converted_line,
    to_unix_seconds,
)
from .pipeline import (
    AnalysisResult,
    Confidence,
    DriftReport,
    Episode,
    EpisodeKind,
    FilterConfig,
    PTMetrics,
    PuffWithTemps,
    analyze_events,
    apply_display_filter,
    associate_temperatures,
    bucket_by_day,
    classify_confidence,
    compute_drift,
    compute_pt_metrics,
    export_episode_table,
    fuse_and_filter,
    pair_episodes,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisResult",
    "Confidence",
    "DecodedEvent",
    "DeviceInstant",
    "DriftReport",
    "Episode",
    "EpisodeKind",
    "EventKind",
    "FilterConfig",
    "PTMetrics",
    "PuffWithTemps",
    "RecordError",
    "ZoneConfig",
    "analyze_events",
    "apply_display_filter",
    "associate_temperatures",
    "bucket_by_day",
    "classify_confidence",
    "compute_drift",
    "compute_pt_metrics",
    "decode_stream",
    "encode_record",
    "export_episode_table",
    "fuse_and_filter",
    "pair_episodes",
    "parse_record",
    "render_converted_line",
    "to_unix_seconds",
]
