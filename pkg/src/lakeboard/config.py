"""Run configuration: TOML-style key/value files with flag overrides.

Values are written one ``key = <value>`` per line with JSON value syntax,
which is a strict subset of TOML for the types used here. Serialization is
deterministic, so serialize -> parse -> serialize is a fixed point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

MODES = ("blackboard", "master-slave", "rag")
BACKENDS = ("live", "scripted", "replay")


class ConfigError(ValueError):
    """Invalid or contradictory run configuration."""


@dataclass
class RunConfig:
    mode: str = "blackboard"
    budget: int = 10
    search_enabled: bool = True
    backend: str = "scripted"
    live_url: str = ""
    live_key: str = ""
    live_model: str = "default"
    script_path: str = ""
    replay_path: str = ""
    lake_root: str = ""
    exec_timeout: float = 120.0
    interpreter: str = ""
    runner_cmd: str = ""
    excluded_domains: list[str] = field(default_factory=list)
    output_dir: str = "out"
    jobs: int = 1
    max_inspect: int = 10
    web_fixture: str = ""
    search_provider_url: str = ""

    def validate(self, require_backend: bool = True) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        specs = {
            "live": bool(self.live_url),
            "scripted": bool(self.script_path),
            "replay": bool(self.replay_path),
        }
        given = [name for name, present in specs.items() if present]
        if len(given) > 1:
            raise ConfigError(f"exactly one backend spec allowed, got {given}")
        if given and given[0] != self.backend:
            raise ConfigError(f"backend is {self.backend!r} but a {given[0]!r} spec was provided")
        if require_backend:
            if self.backend == "live" and not self.live_url:
                raise ConfigError("live backend requires live_url (or LAKEBOARD_API_BASE)")
            if self.backend == "scripted" and not self.script_path:
                raise ConfigError("scripted backend requires script_path")
            if self.backend == "replay" and not self.replay_path:
                raise ConfigError("replay backend requires replay_path")
        if self.replay_path and not Path(self.replay_path).exists():
            raise ConfigError(f"replay path does not exist: {self.replay_path}")
        if self.exec_timeout <= 0:
            raise ConfigError("exec_timeout must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def serialize(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {json.dumps(value)}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize())

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        values: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key = key.strip()
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            try:
                values[key] = json.loads(value.strip())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.parse(Path(path).read_text())

    def apply_overrides(self, **overrides) -> "RunConfig":
        """Return a copy with non-None overrides applied (flags win over file)."""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in values:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
        return RunConfig(**values)
