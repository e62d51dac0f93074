"""Run configuration and its INI-style file format.

One section per component, ``key = value`` lines, ``#`` comments. Tuples are
comma-separated. Any key left out takes its default; unknown sections or keys
are errors. Every run writes the fully resolved file next to its outputs.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..agents.learner import AgentConfig, Variant
from ..agents.replay import PerConfig
from ..errors import ConfigError
from ..sim.config import ControlGains, IdmParams, MobilParams, RoadConfig, ScenarioConfig, SimParams


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    road: RoadConfig = field(default_factory=RoadConfig)
    idm: IdmParams = field(default_factory=IdmParams)
    mobil: MobilParams = field(default_factory=MobilParams)
    gains: ControlGains = field(default_factory=ControlGains)
    agent: AgentConfig = field(default_factory=AgentConfig)
    episodes: int = 2000
    eval_episodes: int = 10
    seed: int = 0
    output: str = "runs/default"

    @property
    def sim(self) -> SimParams:
        return SimParams(self.scenario, self.road, self.idm, self.mobil, self.gains)

    def with_overrides(self, *, seed=None, variant=None, episodes=None, output=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if variant is not None:
            cfg = replace(cfg, agent=replace(cfg.agent, variant=Variant(variant)))
        if episodes is not None:
            cfg = replace(cfg, episodes=int(episodes))
        if output is not None:
            cfg = replace(cfg, output=str(output))
        return cfg


# section name -> (attribute path on RunConfig, dataclass type)
SECTIONS = {
    "run": ((), RunConfig),
    "scenario": (("scenario",), ScenarioConfig),
    "road": (("road",), RoadConfig),
    "idm": (("idm",), IdmParams),
    "mobil": (("mobil",), MobilParams),
    "gains": (("gains",), ControlGains),
    "agent": (("agent",), AgentConfig),
    "per": (("agent", "per"), PerConfig),
}


# Per-episode spawn seeds come from the master seed, so this one is not a knob.
_HIDDEN = {(ScenarioConfig, "seed")}


def _scalar_fields(cls):
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)
            if not dataclasses.is_dataclass(hints[f.name]) and (cls, f.name) not in _HIDDEN}


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _parse(text: str, hint):
    origin = typing.get_origin(hint)
    if origin is tuple:
        args = typing.get_args(hint)
        inner = args[0]
        return tuple(_parse(t.strip(), inner) for t in text.split(",") if t.strip())
    if hint is bool:
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if hint is int:
        return int(text, 0)
    if hint is float:
        return float(text)
    if isinstance(hint, type) and issubclass(hint, Variant):
        return Variant(text.lower())
    return text


def _get(cfg, path):
    for attr in path:
        cfg = getattr(cfg, attr)
    return cfg


def _set(cfg, path, value):
    if not path:
        return value
    head, rest = path[0], path[1:]
    return replace(cfg, **{head: _set(getattr(cfg, head), rest, value)})


def dumps_config(cfg: RunConfig) -> str:
    out = []
    for section, (path, cls) in SECTIONS.items():
        obj = _get(cfg, path)
        out.append(f"[{section}]")
        for name in _scalar_fields(cls):
            out.append(f"{name} = {_format(getattr(obj, name))}")
        out.append("")
    return "\n".join(out)


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if key is None and current == section:
                return n
        elif current == section and key is not None and s.split("=", 1)[0].strip() == key:
            return n
    return None


def _err(text, section, key, msg) -> ConfigError:
    line = _line_of(text, section, key)
    where = f"[{section}]" + (f" {key}" if key else "")
    return ConfigError(f"line {line}: {where}: {msg}" if line else f"{where}: {msg}")


def loads_config(text: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"line {getattr(exc, 'lineno', '?')}: {exc.message.splitlines()[0]}") from None

    cfg = base or RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise _err(text, section, None, "unknown section")
        path, cls = SECTIONS[section]
        known = _scalar_fields(cls)
        updates = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise _err(text, section, key, "unknown key")
            try:
                updates[key] = _parse(raw.strip(), known[key])
            except ValueError as exc:
                raise _err(text, section, key, str(exc)) from None
        try:
            cfg = _set(cfg, path, replace(_get(cfg, path), **updates))
        except (ValueError, TypeError) as exc:
            raise _err(text, section, None, str(exc)) from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads_config(text)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps_config(cfg))
