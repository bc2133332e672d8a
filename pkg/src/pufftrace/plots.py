"""Per-day SVG timelines: puffs on top, temperature middle, touch bottom.

Everything is drawn on a 00:00-24:00 axis; intervals reaching past midnight
are clipped at 24:00 (the episode itself belongs to its start date).  Output
is plain hand-written SVG so repeated runs are byte-identical.
"""

from __future__ import annotations

import datetime as dt
from pathlib import Path

from .pipeline import AnalysisResult, Episode
from .records import ZoneConfig, zoned_time

DAY_SECONDS = 86400.0

WIDTH = 1000
HEIGHT = 330
MARGIN_LEFT = 110
MARGIN_RIGHT = 30
MARGIN_TOP = 48
TRACK_HEIGHT = 64
TRACK_GAP = 18
AXIS_HEIGHT = 30

_STYLE = """
  text { font-family: sans-serif; font-size: 13px; fill: #333; }
  .title { font-size: 16px; font-weight: bold; }
  .gridline { stroke: #ddd; stroke-width: 1; }
  .track-band { fill: #f7f7f7; }
  .puff.high { fill: #1f77b4; }
  .puff.standard { fill: #9ecae1; }
  .touch { fill: #2ca02c; }
  .temperature-sample { fill: #d62728; }
"""


def seconds_into_day(instant, zone: ZoneConfig, day: dt.date) -> float:
    """Seconds since day's midnight under zone; may be negative or > 86400."""
    when, centis = zoned_time(instant, zone)
    base = (when.date() - day).days * DAY_SECONDS
    return base + when.hour * 3600 + when.minute * 60 + when.second + centis / 100.0


def _interval(e: Episode, zone: ZoneConfig, day: dt.date) -> tuple[float, float]:
    start = max(0.0, seconds_into_day(e.start, zone, day))
    end = min(DAY_SECONDS, seconds_into_day(e.end, zone, day))
    return start, end


def day_timeline(result: AnalysisResult, day: dt.date) -> dict:
    """Track intervals for one date, ready for rendering (seconds in day)."""
    zone = result.zone
    puffs = []
    temperatures = []
    for p in result.puffs:
        if p.episode.date(zone) != day:
            continue
        start, end = _interval(p.episode, zone, day)
        puffs.append(
            {
                "start_s": start,
                "end_s": end,
                "duration_ms": p.episode.duration_ms,
                "confidence": p.episode.confidence.value if p.episode.confidence else None,
            }
        )
        if p.temp_on is not None:
            temperatures.append({"time_s": start, "raw_value": p.temp_on})
        if p.temp_off is not None:
            temperatures.append({"time_s": end, "raw_value": p.temp_off})
    touches = []
    for t in result.touches:
        if t.date(zone) != day:
            continue
        start, end = _interval(t, zone, day)
        touches.append({"start_s": start, "end_s": end, "duration_ms": t.duration_ms})
    return {
        "date": day.isoformat(),
        "puffs": puffs,
        "touches": touches,
        "temperatures": temperatures,
    }


def _x(seconds: float) -> float:
    plot_width = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    return MARGIN_LEFT + (seconds / DAY_SECONDS) * plot_width


def render_day_svg(timeline: dict) -> str:
    """One day's three-track timeline as an SVG document string."""
    tracks = [
        ("Puffs", "track-puff"),
        ("Temperature", "track-temperature"),
        ("Touches", "track-touch"),
    ]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<style>{_STYLE}</style>",
        f'<text class="title" x="{MARGIN_LEFT}" y="26">Daily activity {timeline["date"]}</text>',
    ]
    track_tops = {}
    for i, (label, track_id) in enumerate(tracks):
        top = MARGIN_TOP + i * (TRACK_HEIGHT + TRACK_GAP)
        track_tops[track_id] = top
        parts.append(
            f'<rect class="track-band" x="{MARGIN_LEFT}" y="{top}" '
            f'width="{WIDTH - MARGIN_LEFT - MARGIN_RIGHT}" height="{TRACK_HEIGHT}"/>'
        )
        parts.append(f'<text x="10" y="{top + TRACK_HEIGHT / 2 + 4:.0f}">{label}</text>')
    axis_y = MARGIN_TOP + len(tracks) * (TRACK_HEIGHT + TRACK_GAP)
    for hour in range(0, 25, 2):
        x = _x(hour * 3600)
        parts.append(
            f'<line class="gridline" x1="{x:.2f}" y1="{MARGIN_TOP}" '
            f'x2="{x:.2f}" y2="{axis_y - TRACK_GAP}"/>'
        )
        anchor = "middle" if 0 < hour < 24 else ("start" if hour == 0 else "end")
        parts.append(
            f'<text x="{x:.2f}" y="{axis_y + 14}" text-anchor="{anchor}">{hour:02d}:00</text>'
        )

    def bar(track_id: str, start_s: float, end_s: float, classes: str, pad: int = 10):
        top = track_tops[track_id] + pad
        height = TRACK_HEIGHT - 2 * pad
        x1, x2 = _x(start_s), _x(end_s)
        width = max(x2 - x1, 1.0)  # keep sub-pixel events visible
        return f'<rect class="{classes}" x="{x1:.2f}" y="{top}" width="{width:.2f}" height="{height}"/>'

    parts.append('<g id="track-puff">')
    for p in timeline["puffs"]:
        confidence = (p.get("confidence") or "STANDARD").lower()
        parts.append(bar("track-puff", p["start_s"], p["end_s"], f"puff {confidence}"))
    parts.append("</g>")

    parts.append('<g id="track-temperature">')
    temp_top = track_tops["track-temperature"]
    for sample in timeline["temperatures"]:
        x = _x(sample["time_s"])
        # ADC 0..1024 spans the band, larger readings higher.
        y = temp_top + TRACK_HEIGHT - (sample["raw_value"] / 1024.0) * TRACK_HEIGHT
        parts.append(f'<circle class="temperature-sample" cx="{x:.2f}" cy="{y:.2f}" r="3"/>')
    parts.append("</g>")

    parts.append('<g id="track-touch">')
    for t in timeline["touches"]:
        parts.append(bar("track-touch", t["start_s"], t["end_s"], "touch"))
    parts.append("</g>")

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_day_plots(result: AnalysisResult, out_dir: str | Path) -> list[Path]:
    """Emit one <date>.svg per day present in the analysis; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for day in result.buckets():
        path = out / f"{day.isoformat()}.svg"
        path.write_text(render_day_svg(day_timeline(result, day)))
        written.append(path)
    return written
