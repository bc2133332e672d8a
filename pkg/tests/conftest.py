import pytest

GOLDEN_RAW = [
    "100065CA42C88D44",
    "200065CA42C9AAE0",
    "50000000000001F9",
    "6000000000000104",
    "300065CA42CE04A0",
    "400065CA42D007CD",
]

GOLDEN_CONVERTED = [
    "PUFF_ON 2024-02-12 10:09:44.55",
    "PUFF_OFF 2024-02-12 10:09:45.67",
    "TEMPERATURE_ON 505",
    "TEMPERATURE_OFF 260",
    "TOUCH_ON 2024-02-12 10:09:50.02",
    "TOUCH_OFF 2024-02-12 10:09:52.03",
]


@pytest.fixture
def golden_lines():
    return list(GOLDEN_RAW)


@pytest.fixture(autouse=True)
def isolated_port_registry(tmp_path, monkeypatch):
    """Keep emulator endpoint discovery private to each test."""
    monkeypatch.setenv("PUFFTRACE_PORT_REGISTRY", str(tmp_path / "port-registry"))
