"""Experiment configuration: TOML (or JSON) with one section per component.

Unknown keys are errors.  Missing keys take their defaults, which are
reported once through the module logger.  Every validation error carries
the dotted key path and, when it can be found, the source line.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomlkit
from tomlkit.exceptions import ParseError

from .bsde import BsdeTrainConfig
from .control import ControlTrainConfig
from .kernels import SCHEMES
from .model import ModelParams

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None,
                 source: str | None = None):
        if source is not None:
            where = f"{source}:{line}" if line is not None else source
        else:
            where = f"line {line}" if line is not None else ""
        prefix = f"{where}: " if where else ""
        label = f"{key}: " if key else ""
        super().__init__(f"{prefix}{label}{message}")
        self.key = key
        self.line = line


@dataclass(frozen=True)
class SelectorConfig:
    n_points: int = 20
    oracle_paths: int = 100_000

    def __post_init__(self) -> None:
        if self.n_points < 1:
            raise ValueError("n_points must be at least 1")
        if self.oracle_paths < 2:
            raise ValueError("oracle_paths must be at least 2")


@dataclass(frozen=True)
class McConfig:
    paths: int = 1_000_000
    threshold: float = 1.58

    def __post_init__(self) -> None:
        if self.paths < 2:
            raise ValueError("paths must be at least 2")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be nonnegative, got {self.threshold}")


@dataclass(frozen=True)
class SimulateConfig:
    paths: int = 20
    threshold: float = 1.58

    def __post_init__(self) -> None:
        if self.paths < 1:
            raise ValueError("paths must be at least 1")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be nonnegative, got {self.threshold}")


@dataclass(frozen=True)
class GridConfig:
    M: int = 50

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError(f"M must be at least 1, got {self.M}")


SECTIONS = {
    "model": ModelParams,
    "grid": GridConfig,
    "bsde": BsdeTrainConfig,
    "control": ControlTrainConfig,
    "selector": SelectorConfig,
    "mc": McConfig,
    "simulate": SimulateConfig,
}
# seeds and the control grid are driven by the top level
_HIDDEN = {"bsde": {"seed"}, "control": {"seed", "M"}}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    scale: float = 1.0
    scheme: str = "euler"
    out: str = "runs"
    model: ModelParams = field(default_factory=ModelParams)
    grid: GridConfig = field(default_factory=GridConfig)
    bsde: BsdeTrainConfig = field(default_factory=BsdeTrainConfig)
    control: ControlTrainConfig = field(default_factory=ControlTrainConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    mc: McConfig = field(default_factory=McConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    def __post_init__(self) -> None:
        if not 0 < self.scale <= 1:
            raise ValueError(f"scale must lie in (0, 1], got {self.scale}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {sorted(SCHEMES)}, got {self.scheme!r}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")

    def bsde_config(self) -> BsdeTrainConfig:
        cfg = dataclasses.replace(self.bsde, seed=self.seed)
        return cfg.scaled(self.scale) if self.scale != 1.0 else cfg

    def control_config(self) -> ControlTrainConfig:
        cfg = dataclasses.replace(self.control, seed=self.seed, M=self.grid.M)
        return cfg.scaled(self.scale) if self.scale != 1.0 else cfg

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "scale": self.scale, "scheme": self.scheme, "out": self.out}
        for name in SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            for key in _HIDDEN.get(name, ()):
                section.pop(key)
            if name == "model":
                section["x0"] = list(section["x0"])
            out[name] = section
        return out

    def hash(self) -> str:
        """Digest of every setting that can change results (``out`` excluded)."""
        data = self.to_dict()
        data.pop("out")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_TOP = {f.name: f for f in fields(ExperimentConfig) if f.name not in SECTIONS}


def _defaults() -> dict:
    return ExperimentConfig().to_dict()


def _locate(text: str, path: tuple[str, ...], is_json: bool) -> int | None:
    """Best-effort 1-based line of ``path`` in the source text."""
    if not text:
        return None
    lines = text.splitlines()
    key = path[-1]
    if is_json:
        pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
        section = None if len(path) == 1 else re.compile(r'"' + re.escape(path[0]) + r'"\s*:')
        inside = section is None
        for i, line in enumerate(lines, 1):
            if section is not None and section.search(line):
                inside = True
                if pat.search(line[section.search(line).end():]):
                    return i
                continue
            if inside and pat.search(line):
                return i
        return None
    want = path[0] if len(path) > 1 else None
    current = None
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i, line in enumerate(lines, 1):
        head = re.match(r"^\s*\[\s*([^\]]+?)\s*\]", line)
        if head:
            current = head.group(1)
            if len(path) == 1 and current == key:
                return i
            continue
        if current == want and pat.match(line):
            return i
    return None


def _check_type(value, default, key: str):
    """Coerce ``value`` to the type of ``default``; raise ``TypeError`` on mismatch."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise TypeError(f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise TypeError(f"expected a list, got {value!r}")
        return [_check_type(v, d, key) for v, d in zip(value, default)] if len(value) == len(
            default) else value
    raise TypeError(f"unsupported setting type for {key}")


def _field_of(message: str) -> str | None:
    m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\b", message)
    return m.group(1) if m else None


def from_dict(data: dict, text: str = "", source: str | None = None,
              is_json: bool = False) -> ExperimentConfig:
    """Validate a nested mapping and build the config."""
    def err(msg, path):
        return ConfigError(msg, ".".join(path), _locate(text, path, is_json), source)

    if not isinstance(data, dict):
        raise ConfigError("top level must be a table", source=source)
    defaults = _defaults()
    missing: list[str] = []
    top = {}
    sections: dict[str, dict] = {}
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise err("expected a section", (key,))
            continue
        if key not in _TOP:
            raise err("unknown key", (key,))
        try:
            top[key] = _check_type(value, defaults[key], key)
        except TypeError as exc:
            raise err(str(exc), (key,)) from None
    for key in _TOP:
        if key not in data:
            missing.append(key)
            top[key] = defaults[key]
    for name in SECTIONS:
        given = data.get(name, {})
        values = {}
        for key, value in given.items():
            if key not in defaults[name]:
                raise err("unknown key", (name, key))
            try:
                values[key] = _check_type(value, defaults[name][key], key)
            except TypeError as exc:
                raise err(str(exc), (name, key)) from None
        for key, value in defaults[name].items():
            if key not in given:
                missing.append(f"{name}.{key}")
                values[key] = value
        if name == "model":
            values["x0"] = tuple(values["x0"])
        try:
            sections[name] = SECTIONS[name](**values)
        except (TypeError, ValueError) as exc:
            key = _field_of(str(exc))
            path = (name, key) if key in values else (name,)
            raise err(str(exc), path) from None
    if missing:
        log.info("config: %d setting(s) not given, using defaults: %s", len(missing),
                 ", ".join(missing))
    try:
        return ExperimentConfig(**top, **sections)
    except ValueError as exc:
        key = _field_of(str(exc))
        raise err(str(exc), (key,) if key in _TOP else ()) from None


def loads(text: str, fmt: str = "toml", source: str | None = None) -> ExperimentConfig:
    if fmt == "json":
        if not text.strip():
            data = {}
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(exc.msg, line=exc.lineno, source=source) from None
        return from_dict(data, text, source, is_json=True)
    try:
        data = tomlkit.parse(text).unwrap()
    except ParseError as exc:
        raise ConfigError(str(exc), line=exc.line, source=source) from None
    return from_dict(data, text, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("no such file", source=str(path))
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    return loads(path.read_text(), fmt, str(path))


def dumps(config: ExperimentConfig, fmt: str = "toml") -> str:
    data = config.to_dict()
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    doc = tomlkit.document()
    for key in _TOP:
        doc[key] = data[key]
    for name in SECTIONS:
        table = tomlkit.table()
        for key, value in data[name].items():
            table[key] = value
        doc[name] = table
    return tomlkit.dumps(doc)


def save_config(config: ExperimentConfig, path) -> None:
    path = Path(path)
    path.write_text(dumps(config, "json" if path.suffix.lower() == ".json" else "toml"))
