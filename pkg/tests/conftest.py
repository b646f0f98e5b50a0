import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from v2xrelay.channel_model import DestinationNode, RelayNode, SourceSignal  # noqa: E402


@pytest.fixture
def fig3_source():
    return SourceSignal.scalar(2.0, 15.0)


@pytest.fixture
def fig3_relay():
    return RelayNode(1, h_src=0.9, h_dst=0.5, power=20.0, noise_var=1.0)


@pytest.fixture
def fig3_pair(fig3_relay):
    return [fig3_relay, RelayNode(2, h_src=0.9, h_dst=0.5, power=20.0, noise_var=1.0)]


@pytest.fixture
def unit_source():
    return SourceSignal.scalar(1.0, 1.0)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Print and collect one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
