"""Shipped desk-scale tuning fixtures and the bundled experiment suite."""

from importlib import resources
from pathlib import Path

from ..tuning import TuningConfig, parse_tuning


def path(name: str) -> Path:
    """Filesystem path of a shipped fixture, e.g. path("desk_base")."""
    filename = name if name.endswith(".json") else f"{name}.json"
    with resources.as_file(resources.files(__package__) / filename) as p:
        return Path(p)


def load(name: str) -> TuningConfig:
    return parse_tuning(path(name).read_text())
