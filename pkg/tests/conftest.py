import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from parqvi import cli
from parqvi.qvi import fixed_point_solve, multi_seed_explore
from parqvi.scenarios import build, load_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
SCENARIO_FILES = {"scalar-example": "scalar-example.ini", "sweep2d": "sweep2d.ini",
                  "gradient-pde": "gradient-pde.ini"}

# criterion number -> (passed, detail), filled by tests/test_acceptance.py
_ACCEPTANCE = {}


def config_path(name):
    return CONFIGS / SCENARIO_FILES[name]


def scenario(name, **overrides):
    """Build a default scenario; overrides are ``section__key=value``."""
    ov = {tuple(k.split("__")): str(v) for k, v in overrides.items()}
    return build(load_config(config_path(name), ov))


@pytest.fixture
def record():
    def _record(number, passed, detail):
        _ACCEPTANCE[number] = (bool(passed), detail)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def scalar_exploration():
    sc = scenario("scalar-example")
    t0 = time.perf_counter()
    ex = multi_seed_explore(sc.problem, sc.seeds, sc.config.solver["cluster_tol"])
    return sc, ex, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sweep_run():
    sc = scenario("sweep2d")
    ex = multi_seed_explore(sc.problem, sc.seeds, sc.config.solver["cluster_tol"])
    return sc, ex


@pytest.fixture(scope="session")
def pde_run():
    sc = scenario("gradient-pde")
    return sc, fixed_point_solve(sc.problem, sc.seeds[0])


@pytest.fixture(scope="session")
def cli_outputs(tmp_path_factory):
    """Run the CLI once on every default config; returns per-scenario
    ``(exit code, output dir, seconds)``."""
    base = tmp_path_factory.mktemp("runs")
    out = {}
    for name in SCENARIO_FILES:
        d = base / name
        t0 = time.perf_counter()
        code = cli.main(["run", str(config_path(name)), "--output-dir", str(d)])
        out[name] = (code, d, time.perf_counter() - t0)
    return out


@pytest.fixture
def copy_run(cli_outputs, tmp_path):
    def _copy(name):
        dst = tmp_path / name
        shutil.copytree(cli_outputs[name][1], dst)
        return dst
    return _copy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
