"""Declarative experiment configs: INI-style sections of flat key/value pairs.

Example::

    [gridworld]
    width = 5
    height = 5
    reward_cells = 0,0:1  4,0:1  0,4:1  4,4:1
    teleport_on_reward = true

    [decomposition]
    n_factors = 4
    alpha = softened_min

    [trainer]
    mode = exact
    total_steps = 400
    seeds = 0 1 2 3

    [output]
    directory = runs/corners
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decomposition import AlphaScheme
from .induced import ControlConfig
from .mdp import GridworldSpec, MdpValidationError, TabularMdp, build_gridworld
from .trainer import ConfigError, TrainerConfig

OUTPUT_ROOT_ENV = "REWDECOMP_OUTPUT_ROOT"
WORKERS_ENV = "REWDECOMP_WORKERS"

SECTIONS = ("gridworld", "decomposition", "trainer", "metrics", "induced", "output")

# exact-mode defaults tuned for the 5x5 corner grid; everything else uses TrainerConfig's
EXACT_DEFAULTS = {"learning_rate": 0.1, "init_scale": 0.1, "total_steps": 400, "log_interval": 20}


class ConfigFileError(ConfigError):
    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path is not None and line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


@dataclass(frozen=True)
class MetricToggles:
    saturation: bool = True
    theorem1: bool = True
    lemma1: bool = True
    state_dependence: bool = True
    state_dependence_steps: int = 10_000
    sensitivity: bool = True


@dataclass(frozen=True)
class InducedSettings:
    enabled: bool = False
    region: str = "left_half"
    control: ControlConfig = field(default_factory=ControlConfig)
    seeds: tuple[int, ...] = (0, 1, 2, 3)


@dataclass(frozen=True)
class ExperimentConfig:
    gridworld: GridworldSpec
    n_factors: int
    alpha: AlphaScheme
    trainer: TrainerConfig
    metrics: MetricToggles
    induced: InducedSettings
    seeds: tuple[int, ...]
    output_dir: Path
    source: Path | None = None

    def build_mdp(self) -> TabularMdp:
        return build_gridworld(dataclasses.replace(self.gridworld, discount=self.trainer.discount))


def region_mask(name: str, mdp: TabularMdp) -> np.ndarray:
    """Named reward region: all, none, left_half, right_half, top_half, bottom_half."""
    width, height = mdp.grid_shape
    xs = np.arange(mdp.n_states) % width
    ys = np.arange(mdp.n_states) // width
    masks = {
        "all": np.ones(mdp.n_states, dtype=bool),
        "none": np.zeros(mdp.n_states, dtype=bool),
        "left_half": xs < width / 2,
        "right_half": xs >= width / 2,
        "top_half": ys < height / 2,
        "bottom_half": ys >= height / 2,
    }
    if name not in masks:
        raise ValueError(f"unknown region {name!r}; expected one of {sorted(masks)}")
    return masks[name]


def _line_index(text: str) -> dict[tuple[str, str], int]:
    index: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            section = m.group(1).strip().lower()
            index[(section, "")] = lineno
            continue
        if section is not None and ("=" in line or ":" in line):
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            index.setdefault((section, key), lineno)
    return index


class _Reader:
    def __init__(self, parser, lines, path):
        self.parser = parser
        self.lines = lines
        self.path = path
        self.used: set[tuple[str, str]] = set()

    def error(self, section, key, message):
        line = self.lines.get((section, key)) or self.lines.get((section, ""))
        return ConfigFileError(message, self.path, line)

    def get(self, section, key, convert, default):
        if not self.parser.has_option(section, key):
            return default
        self.used.add((section, key))
        raw = self.parser.get(section, key)
        try:
            return convert(raw)
        except (ValueError, TypeError) as exc:
            raise self.error(section, key, f"bad value for {section}.{key}: {raw!r} ({exc})") from None


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in re.split(r"[\s,]+", raw.strip()) if tok)


def _reward_cells(raw: str) -> tuple[tuple[tuple[int, int], float], ...]:
    cells = []
    for tok in re.split(r"[\s;]+", raw.strip()):
        if not tok:
            continue
        m = re.fullmatch(r"(-?\d+),(-?\d+)(?::(.+))?", tok)
        if not m:
            raise ValueError(f"cell {tok!r} is not of the form x,y:reward")
        value = float(m.group(3)) if m.group(3) is not None else 1.0
        cells.append(((int(m.group(1)), int(m.group(2))), value))
    return tuple(cells)


def _optional_float(raw: str):
    return None if raw.strip().lower() in ("", "none") else float(raw)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; errors carry the offending line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigFileError(f"cannot read config: {exc}", path) from None
    return parse_config(text, path)


def parse_config(text: str, path=None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if getattr(exc, "errors", None) else getattr(exc, "lineno", None)
        raise ConfigFileError(f"cannot parse config: {exc.message.splitlines()[0]}", path, lineno) from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        raise ConfigFileError(f"cannot parse config: {exc.message}", path, lineno) from None
    lines = _line_index(text)
    r = _Reader(parser, lines, path)
    for section in parser.sections():
        if section not in SECTIONS:
            raise r.error(section, "", f"unknown section [{section}]")

    g = "gridworld"
    size = r.get(g, "size", int, None)
    grid = GridworldSpec.four_corners(size) if size else GridworldSpec()
    grid = dataclasses.replace(
        grid,
        width=r.get(g, "width", int, grid.width),
        height=r.get(g, "height", int, grid.height),
        reward_cells=r.get(g, "reward_cells", _reward_cells, grid.reward_cells),
        teleport_on_reward=r.get(g, "teleport_on_reward", _bool, grid.teleport_on_reward),
    )
    start = r.get(g, "start", str, "uniform").strip()
    if start != "uniform":
        raise r.error(g, "start", f"only 'uniform' starts are supported, got {start!r}")
    try:
        grid.validate()
    except MdpValidationError as exc:
        raise r.error(g, "reward_cells", str(exc)) from None

    d = "decomposition"
    n_factors = r.get(d, "n_factors", int, 4)
    kind = r.get(d, "alpha", str, "softened_min").strip()
    try:
        if kind == "uniform":
            alpha = AlphaScheme.uniform(r.get(d, "alpha_constant", float, 1.0))
        else:
            alpha = AlphaScheme(kind=kind, scale=r.get(d, "alpha_scale", float, 10.0),
                                temperature=r.get(d, "alpha_temperature", float, 2.0))
    except ValueError as exc:
        raise r.error(d, "alpha", str(exc)) from None

    t = "trainer"
    mode = r.get(t, "mode", str, "exact").strip()
    values: dict = {"mode": mode, "n_factors": n_factors}
    if mode == "exact":
        values.update(EXACT_DEFAULTS)
    types = {f.name: f.type for f in dataclasses.fields(TrainerConfig)}
    for name in TrainerConfig.field_names():
        if name in ("mode", "n_factors"):
            continue
        kind_ = types[name]
        convert = {"int": int, "float": float, "bool": _bool, "str": str}.get(kind_, _optional_float)
        if name in values:
            values[name] = r.get(t, name, convert, values[name])
        elif parser.has_option(t, name):
            values[name] = r.get(t, name, convert, None)
    seeds = r.get(t, "seeds", _ints, None)
    if seeds is None:
        seeds = tuple(range(values.get("n_runs", TrainerConfig.n_runs)))
    if not seeds:
        raise r.error(t, "seeds", "seed list must be non-empty")
    values["n_runs"] = len(seeds)
    try:
        trainer = TrainerConfig(**values)
        trainer.validate()
    except (ConfigError, TypeError) as exc:
        bad = next((k for k in values if k in str(exc) and (t, k) in lines), "")
        raise r.error(t, bad, str(exc)) from None

    m = "metrics"
    metrics = MetricToggles(**{f.name: r.get(m, f.name, int if f.type == "int" else _bool, f.default)
                               for f in dataclasses.fields(MetricToggles)})

    i = "induced"
    control = ControlConfig(
        total_steps=r.get(i, "total_steps", int, ControlConfig.total_steps),
        eval_interval=r.get(i, "eval_interval", int, ControlConfig.eval_interval),
        q_learning_rate=r.get(i, "q_learning_rate", float, ControlConfig.q_learning_rate),
        epsilon_start=r.get(i, "epsilon_start", float, ControlConfig.epsilon_start),
        epsilon_end=r.get(i, "epsilon_end", float, ControlConfig.epsilon_end),
        epsilon_horizon=r.get(i, "epsilon_horizon", int, ControlConfig.epsilon_horizon),
        init_noise=r.get(i, "init_noise", float, ControlConfig.init_noise),
    )
    if control.total_steps < 1 or control.eval_interval < 1:
        raise r.error(i, "total_steps", "induced total_steps and eval_interval must be positive")
    induced = InducedSettings(
        enabled=r.get(i, "enabled", _bool, False),
        region=r.get(i, "region", str, "left_half").strip(),
        control=control,
        seeds=r.get(i, "seeds", _ints, (0, 1, 2, 3)),
    )
    probe = build_gridworld(dataclasses.replace(grid))
    try:
        region_mask(induced.region, probe)
    except ValueError as exc:
        raise r.error(i, "region", str(exc)) from None
    if not induced.seeds:
        raise r.error(i, "seeds", "seed list must be non-empty")

    out = r.get("output", "directory", str, "runs/default").strip()
    output_dir = Path(out)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not output_dir.is_absolute():
        output_dir = Path(root) / output_dir

    for section in parser.sections():
        for key in parser.options(section):
            known = (section, key) in r.used or (section == t and key in TrainerConfig.field_names())
            if not known:
                raise r.error(section, key, f"unknown key {section}.{key}")

    return ExperimentConfig(gridworld=grid, n_factors=n_factors, alpha=alpha, trainer=trainer,
                            metrics=metrics, induced=induced, seeds=tuple(seeds),
                            output_dir=output_dir, source=Path(path) if path else None)


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigFileError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
