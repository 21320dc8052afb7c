"""Bundled scenario documents shipped as package data."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .canonical import canonical_loads
from .scenario import (
    ScenarioConfig,
    convergence_scenario,
    scenario_from_record,
    scenario_to_record,
    smoke_scenario,
)
from .canonical import canonical_bytes

BUNDLED_BUILDERS = {
    "default": convergence_scenario,
    "smoke": smoke_scenario,
}


def scenario_dir():
    return resources.files("cpmm").joinpath("data", "scenarios")


def write_bundled_scenarios(directory=None) -> None:
    base = directory or scenario_dir()
    for name, builder in BUNDLED_BUILDERS.items():
        base.joinpath(f"{name}.json").write_bytes(
            canonical_bytes(scenario_to_record(builder()))
        )


def bundled_scenario(name: str) -> ScenarioConfig:
    """Load a bundled scenario by name; falls back to the in-code builder."""
    path = scenario_dir().joinpath(f"{name}.json")
    try:
        return scenario_from_record(canonical_loads(path.read_bytes()))
    except FileNotFoundError:
        if name in BUNDLED_BUILDERS:
            return BUNDLED_BUILDERS[name]()
        raise KeyError(f"unknown bundled scenario {name!r}")


def resolve_scenario_path(spec: str) -> ScenarioConfig:
    """Resolve a CLI --scenario argument: a file path or a bundled name."""
    path = Path(spec)
    if path.exists():
        return scenario_from_record(canonical_loads(path.read_bytes()))
    if spec in BUNDLED_BUILDERS or scenario_dir().joinpath(f"{spec}.json").is_file():
        return bundled_scenario(spec)
    raise FileNotFoundError(f"scenario {spec!r}: no such file or bundled scenario")
