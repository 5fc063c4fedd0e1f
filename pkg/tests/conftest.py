import copy
import sys

import pytest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from dynims.scenario import from_dict, preset_path

_DOCS = {}


def preset_doc(name: str) -> dict:
    """A fresh, mutable copy of a preset's TOML document."""
    if name not in _DOCS:
        with open(preset_path(name), "rb") as fh:
            _DOCS[name] = tomllib.load(fh)
    return copy.deepcopy(_DOCS[name])


def scenario_from(name: str, **tables):
    """Preset with selected tables/keys overridden, e.g. hpc={"jitter": 0}."""
    doc = preset_doc(name)
    for key, val in tables.items():
        if isinstance(val, dict):
            doc.setdefault(key, {}).update(val)
        else:
            doc[key] = val
    return from_dict(doc)


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"


_RUNS = {}


def run_preset(name: str, **overrides):
    """Run a preset once per test session (keyed by name and overrides)."""
    from dynims.sim import Simulation

    key = (name, repr(sorted(overrides.items())))
    if key not in _RUNS:
        sc = scenario_from(name, **overrides) if overrides else from_dict(preset_doc(name))
        _RUNS[key] = Simulation(sc).run()
    return _RUNS[key]


SMALL_TOML = """
name = "small"
seed = 3
duration_ms = 60000
tick_ms = 10

[cluster]
compute_nodes = 2
total_m_gb = 20
reserved_gb = 1
ramdisk_max_gb = 8
data_nodes = 1
data_node_cache_gb = 6

[controller]
mode = "dynamic"
lambda = 0.5
u_max_gb = 8

[hpc]
baseline_gb = 4
peak_gb = 10
bursts = [{ start_ms = 8000, ramp_ms = 1000, hold_ms = 3000, fall_ms = 1000 }]

[analytics]
dataset_gb = 24
iterations = 4
exec_memory_gb = 4
"""


@pytest.fixture
def small_toml(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL_TOML)
    return p


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (ok, detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
