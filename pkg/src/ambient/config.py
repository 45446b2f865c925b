"""Experiment configuration: a flat ``key = value`` file mapped onto a dataclass.

Every output carries :meth:`ExperimentConfig.digest`, a hash of all fields
except the output directory, so reruns into a fresh directory keep their
identity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .tensorio import format_kv, parse_kv, text_hash

TASKS = ("cs", "superres", "inpaint", "mri")
SAMPLERS = ("uncond", "dps", "adps", "aos", "fista")
AXES = {"m": "m", "factor": "factor", "R": "R", "nfe": "steps", "p": "p"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "cs"
    shape: tuple = (8,)
    m: int = 4
    factor: int = 2
    p: float = 0.5
    R: float = 4.0
    acs_lines: int = 4
    noise_std: float = 0.0
    prior_components: int = 4
    prior_spread: float = 1.0
    prior_tau2: float = 0.5
    prior_seed: int = 0
    model: str = "analytic"
    train_p: float = 0.8
    train_R: float = 4.0
    sampler: str = "dps"
    steps: int = 200
    gamma: str = "const:10"
    stochastic: bool = True
    fista_lambda: float = 0.001
    fista_iters: int = 100
    dataset: str = "synthetic"
    n_test: int = 50
    op_seed: int = 11
    seed: int = 0
    output: str = "out"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; expected one of {SAMPLERS}")
        if self.task == "mri" and self.dataset == "synthetic":
            raise ConfigError("the mri task needs a dataset directory from gen-data")
        if self.sampler == "aos" and self.task not in ("inpaint", "mri"):
            raise ConfigError("one-step ambient restoration needs a mask-type operator (inpaint or mri)")
        if self.n_test < 0:
            raise ConfigError("n_test must be non-negative")

    def digest(self) -> str:
        items = {k: v for k, v in asdict(self).items() if k != "output"}
        return text_hash(format_kv(dict(sorted(items.items()))))

    def with_axis(self, axis: str, value) -> "ExperimentConfig":
        if axis not in AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXES)}")
        name = AXES[axis]
        return replace(self, **{name: _FIELD_TYPES[name](value)})

    def check_files(self) -> None:
        """All referenced files must exist."""
        if self.dataset != "synthetic" and not (Path(self.dataset) / "manifest.txt").exists():
            raise ConfigError(f"dataset {self.dataset!r} not found (no manifest.txt)")
        if self.model != "analytic" and not (Path(self.model) / "manifest.txt").exists():
            raise ConfigError(f"checkpoint {self.model!r} not found (no manifest.txt)")

    def to_text(self, include_output: bool = True) -> str:
        items = asdict(self)
        if not include_output:
            items.pop("output")
        return format_kv(items)


def _to_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _to_shape(v) -> tuple:
    if isinstance(v, (tuple, list)):
        return tuple(int(s) for s in v)
    parts = str(v).replace("x", ",").split(",")
    return tuple(int(s) for s in parts if s.strip())


def _to_int(v) -> int:
    f = float(v)
    if f != int(f):
        raise ConfigError(f"not an integer: {v!r}")
    return int(f)


_CASTS = {"str": str, "int": _to_int, "float": float, "bool": _to_bool, "tuple": _to_shape}
_FIELD_TYPES = {f.name: _CASTS[f.type] for f in fields(ExperimentConfig)}


def config_from_dict(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    unknown = set(values) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cast = {k: _FIELD_TYPES[k](v) for k, v in values.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return replace(base or ExperimentConfig(), **cast)


def load_config(path, overrides: dict | None = None, check_files: bool = True) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    values = parse_kv(text)
    values.update(overrides or {})
    config = config_from_dict(values)
    if check_files:
        config.check_files()
    return config
