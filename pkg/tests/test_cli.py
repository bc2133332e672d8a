import json

import pytest

from pufftrace.cli import main
from pufftrace.emulator import EmulatedDevice, EmulatorServer, generate_records, validation_day

from conftest import GOLDEN_RAW, GOLDEN_CONVERTED
from test_plots import two_day_fixture


@pytest.fixture
def golden_file(tmp_path):
    path = tmp_path / "sample.raw"
    path.write_text("".join(line + "\n" for line in GOLDEN_RAW))
    return path


@pytest.fixture
def validation_file(tmp_path):
    path = tmp_path / "validation.raw"
    path.write_text("".join(r + "\n" for r in generate_records(validation_day())))
    return path


class TestDecodeCommand:
    def test_golden_converted_output(self, golden_file, tmp_path):
        out = tmp_path / "converted.txt"
        code = main(["decode", str(golden_file), "--out", str(out), "--zone", "UTC-06:00"])
        assert code == 0
        assert out.read_text() == "".join(l + "\n" for l in GOLDEN_CONVERTED)

    def test_empty_file_is_success(self, tmp_path):
        raw = tmp_path / "empty.raw"
        raw.write_text("")
        out = tmp_path / "out.txt"
        assert main(["decode", str(raw), "--out", str(out)]) == 0
        assert out.read_text() == ""

    def test_bad_line_warns_but_succeeds(self, tmp_path, capsys):
        raw = tmp_path / "mixed.raw"
        raw.write_text(GOLDEN_RAW[0] + "\nnot-hex-here-16ch\n")
        out = tmp_path / "out.txt"
        assert main(["decode", str(raw), "--out", str(out), "--zone", "UTC-06:00"]) == 0
        captured = capsys.readouterr()
        assert "line 2" in captured.err
        assert out.read_text() == GOLDEN_CONVERTED[0] + "\n"

    def test_all_lines_invalid_exits_2(self, tmp_path, capsys):
        raw = tmp_path / "junk.raw"
        raw.write_text("garbage\nmore garbage\n")
        assert main(["decode", str(raw)]) == 2

    def test_missing_file_is_usage_error(self):
        assert main(["decode", "/nonexistent/file.raw"]) == 1

    def test_bad_zone_is_usage_error(self, golden_file):
        assert main(["decode", str(golden_file), "--zone", "Mars/OlympusMons"]) == 1

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 1


class TestAnalyzeCommand:
    def test_validation_day_counts(self, validation_file, tmp_path, capsys):
        out = tmp_path / "results"
        code = main([
            "analyze", str(validation_file), "--out", str(out), "--zone", "UTC",
            "--display-min-s", "1.0",
        ])
        assert code == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert sum(m["puff_count"] for m in metrics) == 72
        header, *rows = (out / "episodes.csv").read_text().strip().splitlines()
        assert header == "Event,Date,Range,Duration(ms)"
        assert sum(1 for r in rows if r.startswith("PUFF,")) == 72

    def test_no_filter_keeps_spurious_puffs(self, validation_file, tmp_path):
        out = tmp_path / "raw-results"
        assert main(["analyze", str(validation_file), "--out", str(out), "--zone", "UTC"]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert sum(m["puff_count"] for m in metrics) == 89

    def test_empty_input(self, tmp_path):
        raw = tmp_path / "empty.raw"
        raw.write_text("")
        out = tmp_path / "results"
        assert main(["analyze", str(raw), "--out", str(out)]) == 0
        assert json.loads((out / "metrics.json").read_text()) == []
        assert (out / "episodes.csv").read_text() == "Event,Date,Range,Duration(ms)\n"

    def test_reruns_are_bit_identical(self, validation_file, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        args = ["analyze", str(validation_file), "--zone", "UTC", "--display-min-s", "1.0"]
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        assert (out_a / "episodes.csv").read_bytes() == (out_b / "episodes.csv").read_bytes()
        assert (out_a / "metrics.json").read_bytes() == (out_b / "metrics.json").read_bytes()


class TestPlotCommand:
    def test_two_day_fixture(self, tmp_path):
        raw = tmp_path / "twoday.raw"
        raw.write_text("".join(l + "\n" for l in two_day_fixture()))
        out = tmp_path / "plots"
        code = main([
            "plot", str(raw), "--out", str(out), "--zone", "UTC", "--display-min-s", "1.0",
        ])
        assert code == 0
        assert sorted(p.name for p in out.glob("*.svg")) == ["2024-02-12.svg", "2024-02-13.svg"]

    def test_empty_log_notice(self, tmp_path, capsys):
        raw = tmp_path / "empty.raw"
        raw.write_text("")
        assert main(["plot", str(raw), "--out", str(tmp_path / "plots")]) == 0
        assert "no dated events" in capsys.readouterr().out


class TestDeviceCommands:
    def test_ports_lists_running_emulator(self, capsys):
        with EmulatorServer(EmulatedDevice()) as server:
            assert main(["device", "ports"]) == 0
            assert server.endpoint in capsys.readouterr().out

    def test_ports_empty(self, capsys):
        assert main(["device", "ports"]) == 0
        assert "no ports found" in capsys.readouterr().out

    def test_pull_matches_flash_dump(self, tmp_path, capsys):
        device = EmulatedDevice()
        device.load_flash(GOLDEN_RAW)
        out = tmp_path / "pulled.raw"
        with EmulatorServer(device) as server:
            code = main(["device", "pull", "--port", server.endpoint, "--out", str(out)])
        assert code == 0
        assert out.read_text() == "".join(l + "\n" for l in GOLDEN_RAW)

    def test_pull_with_convert(self, tmp_path):
        device = EmulatedDevice()
        device.load_flash(GOLDEN_RAW)
        out = tmp_path / "pulled.raw"
        with EmulatorServer(device) as server:
            code = main([
                "device", "pull", "--port", server.endpoint, "--out", str(out),
                "--convert", "--zone", "UTC-06:00",
            ])
        assert code == 0
        converted = tmp_path / "pulled.converted.txt"
        assert converted.read_text() == "".join(l + "\n" for l in GOLDEN_CONVERTED)

    def test_set_then_read_time(self, capsys):
        with EmulatorServer(EmulatedDevice()) as server:
            assert main(["device", "set-time", "--port", server.endpoint,
                         "--at", "1707754184"]) == 0
            assert main(["device", "read-time", "--port", server.endpoint]) == 0
        out = capsys.readouterr().out
        assert "2024-02-12 16:09:44" in out

    def test_start_then_pull_empty(self, tmp_path, capsys):
        device = EmulatedDevice()
        device.load_flash(GOLDEN_RAW)
        out = tmp_path / "after-start.raw"
        with EmulatorServer(device) as server:
            assert main(["device", "start", "--port", server.endpoint]) == 0
            assert main(["device", "pull", "--port", server.endpoint, "--out", str(out)]) == 0
        assert out.read_text() == ""

    def test_erase(self, capsys):
        device = EmulatedDevice()
        device.load_flash(GOLDEN_RAW)
        with EmulatorServer(device) as server:
            assert main(["device", "erase", "--port", server.endpoint]) == 0
        assert device.dump_flash() == []

    def test_unreachable_device_exits_3(self, tmp_path, capsys):
        code = main(["device", "read-time", "--port", "tcp:127.0.0.1:1"])
        assert code == 3
        assert "NoHandshake" in capsys.readouterr().err


class TestEmulateCommand:
    def test_write_raw_validation_day(self, tmp_path):
        out = tmp_path / "day.raw"
        code = main(["emulate", "--validation-day", "--seed", "9", "--write-raw", str(out)])
        assert code == 0
        expected = generate_records(validation_day(seed=9))
        assert out.read_text() == "".join(r + "\n" for r in expected)

    def test_scenario_file_round_trip(self, tmp_path):
        from pufftrace.emulator import save_scenario

        scenario = validation_day(seed=3)
        scenario_path = tmp_path / "scenario.json"
        save_scenario(scenario, scenario_path)
        out = tmp_path / "from-file.raw"
        code = main(["emulate", "--scenario", str(scenario_path), "--write-raw", str(out)])
        assert code == 0
        assert out.read_text() == "".join(r + "\n" for r in generate_records(scenario))

    def test_scenario_and_validation_day_conflict(self, tmp_path):
        scenario_path = tmp_path / "s.json"
        scenario_path.write_text("{}")
        assert main(["emulate", "--scenario", str(scenario_path), "--validation-day"]) == 1
