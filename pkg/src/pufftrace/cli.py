"""Command-line front end: decode, analyze, plot, device operations, serve.

Exit codes: 0 success, 1 usage error, 2 IO/data error, 3 device error.
"""

from __future__ import annotations

import datetime as dt
import json
import sys
from pathlib import Path

import click

from . import emulator as emu
from . import link
from .api import RunConfig, serve_api
from .pipeline import FilterConfig, analyze_events, export_episode_table
from .plots import write_day_plots
from .records import (
    DeviceInstant,
    ZoneConfig,
    decode_stream,
    format_instant,
    render_converted_line,
)


class DataError(click.ClickException):
    """Input data unusable (maps to exit code 2)."""

    exit_code = 2


def _zone(spec: str | None) -> ZoneConfig:
    try:
        return ZoneConfig.parse(spec)
    except ValueError as err:
        raise click.UsageError(str(err))


def _when(spec: str | None) -> DeviceInstant:
    if spec is None:
        return DeviceInstant.now()
    try:
        return DeviceInstant.from_unix(float(spec))
    except ValueError:
        pass
    try:
        parsed = dt.datetime.fromisoformat(spec)
    except ValueError:
        raise click.UsageError(f"cannot parse time {spec!r} (epoch seconds or ISO-8601)")
    if parsed.tzinfo is None:
        parsed = parsed.astimezone()
    return DeviceInstant.from_unix(parsed.timestamp())


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text().splitlines()
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}")


def _decode_or_fail(lines: list[str], source: str) -> tuple[list, list]:
    events, rejects = decode_stream(lines)
    for lineno, err in rejects:
        click.echo(f"warning: {source} line {lineno}: {err}", err=True)
    if rejects and not events:
        raise DataError(f"{source}: every record line is invalid")
    return events, rejects


filter_options = [
    click.option("--min-puff-ms", default=200.0, show_default=True,
                 help="Noise gate: remove puffs at or below this duration."),
    click.option("--temp-delta", default=10, show_default=True,
                 help="ADC swing a short puff needs to survive in thermistor mode."),
    click.option("--display-min-s", default=0.0, show_default=True,
                 help="Display filter: keep only puffs at least this many seconds."),
    click.option("--use-thermistor", is_flag=True, default=False,
                 help="Fuse thermistor readings when filtering short puffs."),
]


def with_filter_options(command):
    for option in reversed(filter_options):
        command = option(command)
    return command


def _filters(min_puff_ms, temp_delta, display_min_s, use_thermistor) -> FilterConfig:
    try:
        return FilterConfig(
            use_thermistor=use_thermistor,
            min_puff_ms=min_puff_ms,
            temp_delta_threshold=temp_delta,
            display_min_puff_s=display_min_s,
        )
    except ValueError as err:
        raise click.UsageError(str(err))


@click.group()
def cli():
    """Toolkit for puff-topography logs from a vape-usage monitor."""


@cli.command()
@click.argument("raw_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "-o", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Converted output file (default: <raw>.converted.txt).")
@click.option("--zone", "zone_spec", default=None,
              help="Rendering timezone (e.g. UTC, UTC-06:00, America/Chicago); default host zone.")
def decode(raw_file: Path, out: Path | None, zone_spec: str | None):
    """Convert a raw record file to human-readable lines."""
    zone = _zone(zone_spec)
    events, _ = _decode_or_fail(_read_lines(raw_file), str(raw_file))
    if out is None:
        out = raw_file.with_suffix(".converted.txt")
    try:
        out.write_text("".join(render_converted_line(e, zone) + "\n" for e in events))
    except OSError as err:
        raise DataError(f"cannot write {out}: {err}")
    click.echo(f"wrote {len(events)} converted lines to {out}")


@cli.command()
@click.argument("raw_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path), default=Path("."),
              show_default=True, help="Directory for episodes.csv and metrics.json.")
@click.option("--zone", "zone_spec", default=None, help="Rendering timezone; default host zone.")
@with_filter_options
def analyze(raw_file: Path, out: Path, zone_spec, min_puff_ms, temp_delta,
            display_min_s, use_thermistor):
    """Pair, filter and summarize a raw record file."""
    zone = _zone(zone_spec)
    filters = _filters(min_puff_ms, temp_delta, display_min_s, use_thermistor)
    events, _ = _decode_or_fail(_read_lines(raw_file), str(raw_file))
    result = analyze_events(events, filters, zone)
    out.mkdir(parents=True, exist_ok=True)
    episodes_path = out / "episodes.csv"
    metrics_path = out / "metrics.json"
    try:
        episodes_path.write_text(export_episode_table(result.episodes, zone))
        metrics_path.write_text(
            json.dumps([m.to_json_dict() for m in result.metrics()], indent=2) + "\n"
        )
    except OSError as err:
        raise DataError(f"cannot write outputs: {err}")
    if result.orphans:
        click.echo(f"warning: {len(result.orphans)} unmatched event(s)", err=True)
    if result.unassociated_temps:
        click.echo(
            f"warning: {len(result.unassociated_temps)} unattached temperature reading(s)",
            err=True,
        )
    kept = len(result.puffs)
    click.echo(
        f"{result.raw_puff_count} raw puffs -> {kept} kept, "
        f"{result.raw_touch_count} touches; wrote {episodes_path} and {metrics_path}"
    )


@cli.command()
@click.argument("raw_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path), default=Path("."),
              show_default=True, help="Directory for the per-day SVG files.")
@click.option("--zone", "zone_spec", default=None, help="Rendering timezone; default host zone.")
@with_filter_options
def plot(raw_file: Path, out: Path, zone_spec, min_puff_ms, temp_delta,
         display_min_s, use_thermistor):
    """Emit one <date>.svg timeline per day in the log."""
    zone = _zone(zone_spec)
    filters = _filters(min_puff_ms, temp_delta, display_min_s, use_thermistor)
    events, _ = _decode_or_fail(_read_lines(raw_file), str(raw_file))
    result = analyze_events(events, filters, zone)
    written = write_day_plots(result, out)
    if not written:
        click.echo("no dated events to plot")
        return
    for path in written:
        click.echo(f"wrote {path}")


@cli.group()
def device():
    """Talk to a monitor (or emulator) over its serial/TCP link."""


@device.command("ports")
def device_ports():
    """List serial ports and registered emulator endpoints."""
    ports = link.list_ports()
    if not ports:
        click.echo("no ports found")
        return
    for p in ports:
        click.echo(f"{p.system_name}\t{p.human_label}")


port_option = click.option("--port", "-p", required=True,
                           help="Port spec: serial device path or tcp:HOST:PORT.")


@device.command("set-time")
@port_option
@click.option("--at", "when_spec", default=None, help="Epoch seconds or ISO time; default now.")
def device_set_time(port: str, when_spec: str | None):
    """Synchronize the device clock."""
    instant = _when(when_spec)
    with link.connect(port) as client:
        client.set_time(instant)
    click.echo(f"device clock set to {format_instant(instant, ZoneConfig.utc())} UTC")


@device.command("read-time")
@port_option
def device_read_time(port: str):
    """Read back the device clock."""
    with link.connect(port) as client:
        instant = client.read_time()
    click.echo(f"device clock: {format_instant(instant, ZoneConfig.utc())} UTC "
               f"({instant.posix_seconds:08X}{instant.fraction_ticks:04X})")


@device.command("erase")
@port_option
def device_erase(port: str):
    """Erase the device flash."""
    with link.connect(port) as client:
        client.erase_flash()
    click.echo("flash erased")


@device.command("start")
@port_option
@click.option("--at", "when_spec", default=None, help="Epoch seconds or ISO time; default now.")
def device_start(port: str, when_spec: str | None):
    """Begin a collection: erase flash and synchronize the clock."""
    instant = _when(when_spec)
    with link.connect(port) as client:
        client.start_collection(instant)
    click.echo(f"collection started; clock {format_instant(instant, ZoneConfig.utc())} UTC")


@device.command("pull")
@port_option
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Raw record file to write.")
@click.option("--convert", is_flag=True, default=False,
              help="Also write <out>.converted.txt after the pull.")
@click.option("--zone", "zone_spec", default=None, help="Timezone for --convert rendering.")
def device_pull(port: str, out: Path, convert: bool, zone_spec: str | None):
    """Read every stored record into a raw file."""
    zone = _zone(zone_spec)
    lines: list[str] = []
    with link.connect(port) as client:
        count = client.read_data(lines.append)
    try:
        out.write_text("".join(line + "\n" for line in lines))
    except OSError as err:
        raise DataError(f"cannot write {out}: {err}")
    click.echo(f"pulled {count} records into {out}")
    if convert:
        events, _ = _decode_or_fail(lines, str(out))
        converted = out.with_suffix(".converted.txt")
        converted.write_text("".join(render_converted_line(e, zone) + "\n" for e in events))
        click.echo(f"wrote {len(events)} converted lines to {converted}")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path),
              default=Path("sessions"), show_default=True,
              help="Directory of stored raw session files.")
@click.option("--zone", "zone_spec", default=None, help="Rendering timezone; default host zone.")
@click.option("--device-port", default=None, help="Default port spec for device endpoints.")
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Serve a built web UI from this directory under /ui.")
@with_filter_options
def serve(host, port, data_dir, zone_spec, device_port, ui_dir,
          min_puff_ms, temp_delta, display_min_s, use_thermistor):
    """Run the JSON API (and optional web UI)."""
    config = RunConfig(
        data_dir=data_dir,
        zone=_zone(zone_spec),
        filters=_filters(min_puff_ms, temp_delta, display_min_s, use_thermistor),
        device_port=device_port,
        ui_dir=ui_dir,
    )
    click.echo(f"serving on http://{host}:{port} (sessions in {data_dir})")
    serve_api(config, host=host, port=port)


@cli.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="Scenario JSON file to load into flash.")
@click.option("--validation-day", is_flag=True, default=False,
              help="Load the built-in four-session validation scenario.")
@click.option("--seed", default=2024, show_default=True, type=int)
@click.option("--start", "start_spec", default=None,
              help="Scenario start (epoch seconds or ISO); validation day only.")
@click.option("--endpoint", default="tcp:127.0.0.1:8431", show_default=True,
              help="TCP endpoint to serve the wire protocol on.")
@click.option("--label", default="emulated puff monitor", show_default=True)
@click.option("--write-raw", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the generated raw records to a file and exit (no serving).")
def emulate(scenario_path, validation_day, seed, start_spec, endpoint, label, write_raw):
    """Run a virtual monitor, optionally preloaded from a scenario."""
    if scenario_path and validation_day:
        raise click.UsageError("--scenario and --validation-day are mutually exclusive")
    records: list[str] = []
    if scenario_path:
        scenario = emu.load_scenario(scenario_path)
        records = emu.generate_records(scenario)
    elif validation_day:
        start = _when(start_spec) if start_spec else None
        scenario = emu.validation_day(
            start=start.total_ticks / 65536 if start else 1707696000.0, seed=seed
        )
        records = emu.generate_records(scenario)
    if write_raw is not None:
        write_raw.write_text("".join(r + "\n" for r in records))
        click.echo(f"wrote {len(records)} records to {write_raw}")
        return
    device = emu.EmulatedDevice()
    if records:
        device.load_flash(records)
    click.echo(f"emulator with {len(records)} records listening on {endpoint}")
    emu.serve(device, endpoint, label=label)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except link.DeviceLinkError as exc:
        click.echo(f"device error: {type(exc).__name__}: {exc}", err=True)
        return 3
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
