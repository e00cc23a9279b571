import configparser
import hashlib
import json
import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

from .cones import BodySpec, ConeId, Slice
from .errors import ConfigError, InvalidParamsError

INI_SECTION = "experiment"
DEFAULT_INI_NAME = "mapcones.ini"


def get_xdg_cache_dir() -> Path:
    path = Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "mapcones"
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_xdg_config_dir() -> Path:
    path = Path(os.environ.get("XDG_CONFIG_HOME", Path.home() / ".config")) / "mapcones"
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_default_ini() -> Path:
    return get_xdg_config_dir() / DEFAULT_INI_NAME


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a report. Output paths are not part of the identity."""

    command: str
    n: int = 2
    cone: str = "CP"
    slice: str = "base"
    seed: int = 0
    chains: int = 8
    steps: int = 2000
    dirs: int = 10_000
    probes: int = 1000
    pairs: int = 100_000
    suite: str = "bases"
    family: str | None = None
    p: float | None = None
    input: str | None = None
    out: str | None = None

    def __post_init__(self) -> None:
        if self.n < 2:  # noqa: PLR2004
            msg = f"n must be at least 2, got {self.n}"
            raise ConfigError(msg)
        if self.seed < 0:
            msg = f"seed must be non-negative, got {self.seed}"
            raise ConfigError(msg)
        if self.chains < 2:  # noqa: PLR2004
            msg = f"chains must be at least 2, got {self.chains}"
            raise ConfigError(msg)
        for name in ("steps", "dirs", "probes", "pairs"):
            if getattr(self, name) < 1:
                msg = f"{name} must be at least 1, got {getattr(self, name)}"
                raise ConfigError(msg)
        if self.suite not in {"bases", "tp"}:
            msg = f"unknown suite {self.suite!r}; choose bases or tp"
            raise ConfigError(msg)

    @property
    def body_spec(self) -> BodySpec:
        try:
            return BodySpec(ConeId.parse(self.cone), self.n, Slice.parse(self.slice))
        except InvalidParamsError as err:
            raise ConfigError(str(err)) from err

    def to_json(self) -> dict[str, Any]:
        data = asdict(self)
        data.pop("out")
        if self.input is not None:
            try:
                data["input_sha256"] = hashlib.sha256(Path(self.input).read_bytes()).hexdigest()
            except OSError as err:
                msg = f"cannot read input file {self.input}: {err}"
                raise ConfigError(msg) from err
        return data

    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def cache_key(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    @classmethod
    def build(cls, command: str, ini: Mapping[str, str], overrides: Mapping[str, Any]) -> "ExperimentConfig":
        """INI values first, then explicitly passed flags on top."""
        known = {f.name for f in fields(cls)} - {"command"}
        unknown = set(ini) - known
        if unknown:
            msg = f"unknown keys in [{INI_SECTION}]: {', '.join(sorted(unknown))}"
            raise ConfigError(msg)
        values: dict[str, Any] = {k: _coerce(k, v) for k, v in ini.items()}
        values.update({k: v for k, v in overrides.items() if k in known})
        return cls(command=command, **values)

    @classmethod
    def from_ini(cls, path: Path, command: str) -> "ExperimentConfig":
        return cls.build(command, read_ini(path), {})


_INTS = frozenset({"n", "seed", "chains", "steps", "dirs", "probes", "pairs"})


def _coerce(key: str, raw: str) -> Any:  # noqa: ANN401
    value = raw.strip()
    try:
        if key in _INTS:
            return int(value)
        if key == "p":
            return float(value)
    except ValueError as err:
        msg = f"{key} = {raw!r} is not a number"
        raise ConfigError(msg) from err
    return value or None


def read_ini(path: Path) -> dict[str, str]:
    parser = configparser.ConfigParser()
    try:
        with Path(path).open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as err:
        msg = f"cannot read config file {path}: {err}"
        raise ConfigError(msg) from err
    except configparser.Error as err:
        msg = f"malformed config file {path}: {err}"
        raise ConfigError(msg) from err
    if not parser.has_section(INI_SECTION):
        return {}
    return dict(parser.items(INI_SECTION))


def load_ini(path: Path | None) -> dict[str, str]:
    """Read ``path``, or the default INI in the config dir when it exists."""
    if path is not None:
        return read_ini(path)
    default = get_default_ini()
    return read_ini(default) if default.exists() else {}
