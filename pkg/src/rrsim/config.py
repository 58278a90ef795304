"""Declarative run configuration and its dotted-key file format.

A config file is plain text, one ``key = value`` pair per line, ``#`` starts a
comment.  Keys are dotted (``compressor.kind``, ``method.gamma``, ...) and
values are parsed as booleans, integers, floats, or bare strings.  Parsing,
serialization and ``ExperimentConfig.replace`` all speak the same key set, so
parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

__all__ = [
    "ConfigError",
    "CompressorSpec",
    "SamplingSpec",
    "MethodConfig",
    "DatasetSpec",
    "RecordSpec",
    "ExperimentConfig",
    "parse_config_text",
    "parse_config_file",
    "config_from_keys",
    "config_to_keys",
    "serialize_config",
]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class CompressorSpec:
    kind: str = "identity"
    k: int | None = None
    levels: int | None = None


@dataclass(frozen=True)
class SamplingSpec:
    policy: str | None = None  # None: method-dependent default
    batch_fraction: float | None = None  # None: unit batches


@dataclass(frozen=True)
class MethodConfig:
    name: str = "qrr"
    stepsize_preset: str = "theory"  # theory | manual
    gamma: float | None = None
    eta: float | None = None
    alpha: float | None = None
    multiplier: float = 1.0
    epsilon: float | None = None


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic"  # synthetic | libsvm
    path: str | None = None
    M: int = 1
    lam: float | None = None
    condition_number: float | None = None
    partition: str = "sorted_equal_split"
    n: int | None = None
    d: int | None = None
    heterogeneity: float | None = None
    problem: str = "logistic"  # logistic | quadratic


@dataclass(frozen=True)
class RecordSpec:
    every: int = 1
    lyapunov: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    sampling: SamplingSpec = field(default_factory=SamplingSpec)
    method: MethodConfig = field(default_factory=MethodConfig)
    compressor: CompressorSpec = field(default_factory=CompressorSpec)
    record: RecordSpec = field(default_factory=RecordSpec)
    epochs: int = 1
    seed: int = 0
    out: str | None = None

    def replace(self, **updates) -> "ExperimentConfig":
        """Return a copy with dotted-key overrides, e.g. replace(**{'method.gamma': 0.1})."""
        keys = config_to_keys(self)
        for k, v in updates.items():
            if k not in _KEY_TABLE:
                raise ConfigError(f"unknown config key {k!r}")
            keys[k] = v
        return config_from_keys(keys)


# dotted key -> (section attribute | None, field name)
_KEY_TABLE: dict[str, tuple[str | None, str]] = {
    "dataset.kind": ("dataset", "kind"),
    "dataset.path": ("dataset", "path"),
    "dataset.M": ("dataset", "M"),
    "dataset.lambda": ("dataset", "lam"),
    "dataset.condition_number": ("dataset", "condition_number"),
    "dataset.partition": ("dataset", "partition"),
    "dataset.n": ("dataset", "n"),
    "dataset.d": ("dataset", "d"),
    "dataset.heterogeneity": ("dataset", "heterogeneity"),
    "dataset.problem": ("dataset", "problem"),
    "sampling.policy": ("sampling", "policy"),
    "sampling.batch_fraction": ("sampling", "batch_fraction"),
    "method.name": ("method", "name"),
    "method.stepsize_preset": ("method", "stepsize_preset"),
    "method.gamma": ("method", "gamma"),
    "method.eta": ("method", "eta"),
    "method.alpha": ("method", "alpha"),
    "method.multiplier": ("method", "multiplier"),
    "method.epsilon": ("method", "epsilon"),
    "compressor.kind": ("compressor", "kind"),
    "compressor.k": ("compressor", "k"),
    "compressor.levels": ("compressor", "levels"),
    "record.every": ("record", "every"),
    "record.lyapunov": ("record", "lyapunov"),
    "epochs": (None, "epochs"),
    "seed": (None, "seed"),
    "out": (None, "out"),
}

_SECTIONS = {
    "dataset": DatasetSpec,
    "sampling": SamplingSpec,
    "method": MethodConfig,
    "compressor": CompressorSpec,
    "record": RecordSpec,
}


def _parse_scalar(raw: str):
    text = raw.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _format_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def parse_config_text(text: str) -> dict:
    """Parse dotted-key lines into a {key: scalar} dict."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_TABLE:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        out[key] = _parse_scalar(value)
    return out


def parse_config_file(path) -> "ExperimentConfig":
    with open(path) as fh:
        return config_from_keys(parse_config_text(fh.read()))


def _coerce(section_cls, name: str, value):
    if value is None:
        return None
    hints = {f.name: f.type for f in fields(section_cls)}
    hint = hints[name]
    if hint.startswith("float") and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def config_from_keys(keys: dict) -> ExperimentConfig:
    section_kwargs: dict[str, dict] = {name: {} for name in _SECTIONS}
    top_kwargs: dict = {}
    for key, value in keys.items():
        if key not in _KEY_TABLE:
            raise ConfigError(f"unknown config key {key!r}")
        section, name = _KEY_TABLE[key]
        if section is None:
            top_kwargs[name] = value
        else:
            section_kwargs[section][name] = _coerce(_SECTIONS[section], name, value)
    cfg = ExperimentConfig(
        dataset=DatasetSpec(**section_kwargs["dataset"]),
        sampling=SamplingSpec(**section_kwargs["sampling"]),
        method=MethodConfig(**section_kwargs["method"]),
        compressor=CompressorSpec(**section_kwargs["compressor"]),
        record=RecordSpec(**section_kwargs["record"]),
        **top_kwargs,
    )
    _validate(cfg)
    return cfg


def config_to_keys(cfg: ExperimentConfig) -> dict:
    out: dict = {}
    for key, (section, name) in _KEY_TABLE.items():
        value = getattr(cfg, name) if section is None else getattr(getattr(cfg, section), name)
        if value is not None:
            out[key] = value
    return out


def serialize_config(cfg: ExperimentConfig) -> str:
    keys = config_to_keys(cfg)
    lines = [f"{key} = {_format_scalar(keys[key])}" for key in sorted(keys)]
    return "\n".join(lines) + "\n"


def _validate(cfg: ExperimentConfig) -> None:
    ds = cfg.dataset
    if ds.kind not in ("synthetic", "libsvm"):
        raise ConfigError(f"dataset.kind must be synthetic or libsvm, got {ds.kind!r}")
    if ds.kind == "libsvm" and not ds.path:
        raise ConfigError("dataset.path is required for libsvm datasets")
    if ds.kind == "synthetic" and (ds.n is None or ds.d is None):
        raise ConfigError("synthetic datasets need dataset.n and dataset.d")
    if ds.partition not in ("sorted_equal_split", "iid_shuffle_split"):
        raise ConfigError(f"unknown partition rule {ds.partition!r}")
    if ds.lam is not None and ds.condition_number is not None:
        raise ConfigError("give dataset.lambda or dataset.condition_number, not both")
    if ds.problem not in ("logistic", "quadratic"):
        raise ConfigError(f"unknown problem kind {ds.problem!r}")
    if ds.M < 1:
        raise ConfigError("dataset.M must be >= 1")
    if cfg.method.stepsize_preset not in ("theory", "manual"):
        raise ConfigError("method.stepsize_preset must be theory or manual")
    if cfg.method.stepsize_preset == "manual" and cfg.method.gamma is None:
        raise ConfigError("manual stepsizes require method.gamma")
    if cfg.compressor.kind not in ("identity", "rand_k", "dithering"):
        raise ConfigError(f"unknown compressor kind {cfg.compressor.kind!r}")
    if cfg.compressor.kind == "rand_k" and cfg.compressor.k is None:
        raise ConfigError("rand_k compressor requires compressor.k")
    if cfg.compressor.kind == "dithering" and cfg.compressor.levels is None:
        raise ConfigError("dithering compressor requires compressor.levels")
    if cfg.sampling.policy is not None and cfg.sampling.policy not in (
        "rr_every_epoch", "rr_once", "with_replacement",
    ):
        raise ConfigError(f"unknown sampling policy {cfg.sampling.policy!r}")
    if cfg.sampling.batch_fraction is not None and not (0.0 < cfg.sampling.batch_fraction <= 1.0):
        raise ConfigError("sampling.batch_fraction must lie in (0, 1]")
    if cfg.epochs < 0:
        raise ConfigError("epochs must be >= 0")
    if cfg.record.every < 1:
        raise ConfigError("record.every must be >= 1")
