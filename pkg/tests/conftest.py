import dataclasses
import os
import subprocess
import sys
from pathlib import Path

import pytest

from subthz_sounder.config import load_scenario, preset_path

# lines collected by the acceptance suite, echoed in the terminal summary
CRITERIA: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)


def run_cli(*args, cwd=None):
    """Run the installed entry point in a subprocess; returns CompletedProcess."""
    env = dict(os.environ, PYTHONHASHSEED="0")
    return subprocess.run([sys.executable, "-m", "subthz_sounder.cli", *map(str, args)],
                          capture_output=True, text=True, cwd=cwd, env=env)


@pytest.fixture(scope="session")
def preset():
    return load_scenario(preset_path("canyon"))


@pytest.fixture(scope="session")
def preset_run(tmp_path_factory):
    """The bundled preset pushed through every stage once, via the CLI."""
    out = tmp_path_factory.mktemp("preset_run")
    for stage in ("trace", "simulate", "process", "analyze", "plot"):
        res = run_cli(stage, "--out", out, "--no-timestamp")
        assert res.returncode == 0, res.stderr
    return Path(out)


def variant(scenario, **sections):
    """Copy of ``scenario`` with fields of nested sections replaced.

    ``variant(s, scene=dict(max_wall_order=0), seed=3)``
    """
    changes = {}
    for name, value in sections.items():
        if isinstance(value, dict):
            changes[name] = dataclasses.replace(getattr(scenario, name), **value)
        else:
            changes[name] = value
    return dataclasses.replace(scenario, **changes)
