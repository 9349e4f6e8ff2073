"""Run configuration: model, training and path knobs in one flat-sectioned file.

Files are TOML with optional ``[model]``, ``[train]`` and ``[paths]`` tables.
``--set section.key=value`` overrides parse their value as a TOML literal, so
``--set model.gtn_layers=3`` and ``--set train.lambda_rec=0.0`` both work. Keys
may omit the section when the name is unambiguous.
"""

from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class ModelConfig:
    node_budget: int = 20
    gtn_layers: int = 5
    gtn_heads: int = 8
    embed_dim: int = 768
    d_out: int = 256
    d_spatial: int = 256
    attn_heads: int = 8
    d_k: int = 64
    d_v: int = 64
    n_max: int = 30
    d_noise: int = 2048
    regressor_hidden: int = 512
    use_pos_encoding: bool = True
    use_residual: bool = True
    use_spatial: bool = True
    trainable_embeddings: bool = False
    embedding_seed: int = 0
    pixel_scale: float = 256.0
    eps: float = 1e-6

    @property
    def d_model(self) -> int:
        return self.d_out + (self.d_spatial if self.use_spatial else 0)

    def problems(self) -> list[str]:
        out = []
        for name in ("node_budget", "gtn_layers", "gtn_heads", "d_out", "d_spatial", "attn_heads",
                     "d_k", "d_v", "n_max", "d_noise", "regressor_hidden", "embed_dim"):
            if getattr(self, name) < 1:
                out.append(f"model.{name} must be >= 1")
        if self.gtn_heads > self.d_out:
            out.append(f"model.gtn_heads={self.gtn_heads} exceeds model.d_out={self.d_out}")
        if self.node_budget > self.n_max:
            out.append(f"model.node_budget={self.node_budget} exceeds model.n_max={self.n_max}")
        if self.eps <= 0 or self.pixel_scale <= 0:
            out.append("model.eps and model.pixel_scale must be positive")
        return out


@dataclass
class TrainConfig:
    lr_g: float = 1e-4
    lr_d: float = 2e-5
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 32
    lambda_rec: float = 50.0
    real_updates: int = 2
    adversarial: bool = True
    balanced_sampling: bool = True
    augment: bool = True
    p_flip: float = 0.5
    p_jitter: float = 0.5
    p_blur: float = 0.5
    p_gray: float = 0.2
    image_size: int = 128
    d_base_channels: int = 8
    seed: int = 0
    steps: int = 1000
    checkpoint_every: int = 0

    def problems(self) -> list[str]:
        out = []
        for name in ("lr_g", "lr_d", "batch_size", "image_size", "d_base_channels"):
            if getattr(self, name) <= 0:
                out.append(f"train.{name} must be positive")
        if self.batch_size % 2:
            out.append(f"train.batch_size={self.batch_size} must be even (half real, half fake)")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                out.append(f"train.{name} must lie in [0, 1)")
        for name in ("p_flip", "p_jitter", "p_blur", "p_gray"):
            if not 0 <= getattr(self, name) <= 1:
                out.append(f"train.{name} must lie in [0, 1]")
        if self.lambda_rec < 0:
            out.append("train.lambda_rec must be >= 0")
        if self.real_updates < 1:
            out.append("train.real_updates must be >= 1")
        if self.steps < 0 or self.checkpoint_every < 0:
            out.append("train.steps and train.checkpoint_every must be >= 0")
        return out


@dataclass
class PathsConfig:
    data: str = ""
    embeddings: str = ""
    out: str = "runs/default"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> "RunConfig":
        problems = self.model.problems() + self.train.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_toml(self) -> str:
        lines = []
        for section, values in self.to_dict().items():
            lines.append(f"[{section}]")
            for k, v in values.items():
                lines.append(f"{k} = {_toml_literal(v)}")
            lines.append("")
        return "\n".join(lines)


SECTIONS = {"model": ModelConfig, "train": TrainConfig, "paths": PathsConfig}


def _toml_literal(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(v)


def _coerce(section: str, key: str, value, problems: list[str]):
    ftype = {f.name: f.type for f in fields(SECTIONS[section])}[key]
    expected = {"int": int, "float": float, "bool": bool, "str": str}[ftype]
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is int and isinstance(value, bool) or not isinstance(value, expected):
        problems.append(f"{section}.{key}: expected {ftype}, got {type(value).__name__} {value!r}")
        return None
    return value


def _resolve_key(key: str) -> list[tuple[str, str]]:
    if "." in key:
        section, name = key.split(".", 1)
        if section in SECTIONS and name in {f.name for f in fields(SECTIONS[section])}:
            return [(section, name)]
        return []
    return [(s, key) for s, cls in SECTIONS.items() if key in {f.name for f in fields(cls)}]


def config_from_dict(doc: dict, overrides: list[str] = ()) -> RunConfig:
    """Build and validate a :class:`RunConfig`; every bad key is reported at once."""
    problems: list[str] = []
    values: dict[str, dict] = {s: {} for s in SECTIONS}
    for section, body in doc.items():
        if section not in SECTIONS:
            problems.append(f"unknown section or key '{section}'")
            continue
        if not isinstance(body, dict):
            problems.append(f"'{section}' must be a table")
            continue
        for key, value in body.items():
            if not _resolve_key(f"{section}.{key}"):
                problems.append(f"unknown key '{section}.{key}'")
                continue
            coerced = _coerce(section, key, value, problems)
            if coerced is not None:
                values[section][key] = coerced
    for item in overrides:
        if "=" not in item:
            problems.append(f"override '{item}' is not key=value")
            continue
        key, raw = item.split("=", 1)
        targets = _resolve_key(key.strip())
        if len(targets) != 1:
            problems.append(f"unknown key '{key}'" if not targets else f"ambiguous key '{key}'")
            continue
        section, name = targets[0]
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()  # bare strings such as paths
        coerced = _coerce(section, name, value, problems)
        if coerced is not None:
            values[section][name] = coerced
    cfg = RunConfig(**{s: SECTIONS[s](**values[s]) for s in SECTIONS})
    problems += cfg.model.problems() + cfg.train.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path=None, overrides: list[str] = ()) -> RunConfig:
    doc = {}
    if path:
        with open(path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError([f"{path}: {exc}"]) from exc
    return config_from_dict(doc, list(overrides))


def replace_section(cfg: RunConfig, **changes) -> RunConfig:
    """Return a copy with ``model=...``/``train=...`` field dicts merged in."""
    out = RunConfig(**{s: dataclasses.replace(getattr(cfg, s), **changes.get(s, {})) for s in SECTIONS})
    return out.validate()
