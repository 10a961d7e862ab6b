"""Human-readable scenario files and the bundled test scenarios.

Format: '#' starts a comment, sections are bracketed, keys take
whitespace-separated numeric values. Lengths are meters, angles radians,
times seconds.

    [map]
    bounds = xmin ymin xmax ymax
    wall = x1 y1 x2 y2            # repeatable

    [start]
    pose = x y theta

    [goals]
    point = x y                   # repeatable, visited in order

    [obstacles]                   # optional
    obstacle = <name>             # starts a new moving obstacle
    segment = x1 y1 x2 y2         # shape in the obstacle's local frame
    waypoint = t x y              # schedule keyframes, strictly increasing t

    [limits]                      # optional
    t_max = seconds
    goal_radius = meters

    [anchors]                     # optional UWB anchor layout
    anchor = x y z                # exactly 4
    tag_height = meters
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .simcore import ObstacleScript, ScenarioSpec, WorldMap
from .uwb import AnchorSet, corner_anchor_set


class ScenarioParseError(ValueError):
    """Malformed scenario text; message carries the line number."""


class ScenarioValidationError(ValueError):
    """Parsed fine but violates a scenario invariant."""


@dataclass
class ParsedScenario:
    spec: ScenarioSpec
    anchors: AnchorSet

    @property
    def name(self) -> str:
        return self.spec.name


def _floats(value: str, n: int, lineno: int, key: str) -> list[float]:
    parts = value.split()
    if len(parts) != n:
        raise ScenarioParseError(
            f"line {lineno}: {key} expects {n} values, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as e:
        raise ScenarioParseError(f"line {lineno}: {key}: {e}") from e


_SECTION_KEYS = {
    "map": {"bounds", "wall"},
    "start": {"pose"},
    "goals": {"point"},
    "obstacles": {"obstacle", "segment", "waypoint"},
    "limits": {"t_max", "goal_radius"},
    "anchors": {"anchor", "tag_height"},
}


def parse_scenario_text(text: str, name: str = "scenario") -> ParsedScenario:
    bounds = None
    walls: list[list[float]] = []
    pose = None
    goals: list[tuple[float, float]] = []
    obstacles: list[dict] = []
    t_max = 180.0
    goal_radius = 0.2
    anchor_rows: list[list[float]] = []
    tag_height = None
    section = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTION_KEYS:
                raise ScenarioParseError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise ScenarioParseError(f"line {lineno}: key before any section")
        if "=" not in line:
            raise ScenarioParseError(f"line {lineno}: expected 'key = values'")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _SECTION_KEYS[section]:
            raise ScenarioParseError(
                f"line {lineno}: key {key!r} not valid in [{section}]")

        if key == "bounds":
            bounds = tuple(_floats(value, 4, lineno, key))
        elif key == "wall":
            walls.append(_floats(value, 4, lineno, key))
        elif key == "pose":
            pose = tuple(_floats(value, 3, lineno, key))
        elif key == "point":
            x, y = _floats(value, 2, lineno, key)
            goals.append((x, y))
        elif key == "obstacle":
            if not value:
                raise ScenarioParseError(f"line {lineno}: obstacle needs a name")
            obstacles.append({"name": value, "segments": [], "waypoints": [],
                              "lineno": lineno})
        elif key in ("segment", "waypoint"):
            if not obstacles:
                raise ScenarioParseError(
                    f"line {lineno}: {key} before any 'obstacle =' entry")
            if key == "segment":
                obstacles[-1]["segments"].append(_floats(value, 4, lineno, key))
            else:
                t, x, y = _floats(value, 3, lineno, key)
                obstacles[-1]["waypoints"].append((t, x, y))
        elif key == "t_max":
            (t_max,) = _floats(value, 1, lineno, key)
        elif key == "goal_radius":
            (goal_radius,) = _floats(value, 1, lineno, key)
        elif key == "anchor":
            anchor_rows.append(_floats(value, 3, lineno, key))
        elif key == "tag_height":
            (tag_height,) = _floats(value, 1, lineno, key)

    if bounds is None:
        raise ScenarioParseError("missing [map] bounds")
    if pose is None:
        raise ScenarioParseError("missing [start] pose")
    if not goals:
        raise ScenarioParseError("missing [goals] point")

    try:
        world = WorldMap(np.array(walls).reshape(-1, 4), bounds)
        scripts = [
            ObstacleScript(np.array(o["segments"]).reshape(-1, 4),
                           o["waypoints"], o["name"])
            for o in obstacles
        ]
        spec = ScenarioSpec(map=world, start=pose, goals=goals,
                            obstacles=scripts, t_max=t_max,
                            goal_radius=goal_radius, name=name)
    except ValueError as e:
        raise ScenarioValidationError(str(e)) from e

    if anchor_rows:
        if len(anchor_rows) != 4:
            raise ScenarioValidationError(
                f"[anchors] needs exactly 4 anchors, got {len(anchor_rows)}")
        try:
            anchors = AnchorSet(np.array(anchor_rows),
                                tag_height if tag_height is not None else 0.2)
        except ValueError as e:
            raise ScenarioValidationError(str(e)) from e
    else:
        anchors = corner_anchor_set(bounds)
    return ParsedScenario(spec, anchors)


def load_scenario(text: str, name: str = "scenario") -> ScenarioSpec:
    """Parse and validate scenario text; see module docstring for the format."""
    return parse_scenario_text(text, name).spec


def load_scenario_file(path) -> ParsedScenario:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"scenario file not found: {p}")
    return parse_scenario_text(p.read_text(), name=p.stem)


def bundled_scenario_names() -> list[str]:
    files = resources.files("uwbnav").joinpath("scenarios")
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".scn"))


def load_bundled_scenario(name: str) -> ParsedScenario:
    """Load one of the scenarios shipped with the package by bare name."""
    ref = resources.files("uwbnav").joinpath("scenarios").joinpath(f"{name}.scn")
    if not ref.is_file():
        raise FileNotFoundError(
            f"no bundled scenario {name!r}; available: {bundled_scenario_names()}")
    return parse_scenario_text(ref.read_text(), name=name)


def resolve_scenario(name_or_path: str) -> ParsedScenario:
    """Bundled name first, then filesystem path."""
    try:
        return load_bundled_scenario(name_or_path)
    except FileNotFoundError:
        pass
    return load_scenario_file(name_or_path)
