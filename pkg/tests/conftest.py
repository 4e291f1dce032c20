import json
import shutil
from pathlib import Path

import pytest

from lislnet import oracle

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

ISS_TLE = (
    "1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2927\n"
    "2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391563537"
)


@pytest.fixture
def tiny():
    return oracle.tiny_instance()


@pytest.fixture
def tiny_graphs(tiny):
    return tiny.build()


@pytest.fixture
def tiny_config(tmp_path):
    """TINY instance expressed as a satellite snapshot config, copied into tmp."""
    shutil.copy(CONFIG_DIR / "tiny_snapshot.json", tmp_path / "tiny_snapshot.json")
    cfg = json.loads((CONFIG_DIR / "tiny.json").read_text())
    cfg["output"]["dir"] = "out"
    cfg["schedule"]["iterations"] = 200
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(cfg))
    return path


ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    """Log one acceptance line; shown again in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion:>2}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
