"""Run configuration: one flat key=value text file driving data, model,
training, and evaluation settings.

Format rules, all enforced:
  - one `key=value` per line; blank lines and `#` comments are skipped
  - `schema_version` is required and must equal 1
  - every other key must be a known namespaced setting (data.*, model.*,
    train.*, eval.*) or `out_dir`; an unknown key is a hard error naming it
  - booleans are written `true` / `false`

vocab_size is intentionally not a key: it always comes from the data the
run loads, never from configuration. The environment variable BIGFAIR_SEED,
when set, overrides both the data and training master seeds; it is the only
environment override the package honors.
"""

from __future__ import annotations

import dataclasses
import os

from .model import ModelConfig, config_by_tag
from .synthetic import SyntheticConfig
from .train import TrainConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


_PARSERS = {bool: _bool, int: int, float: float, str: str}

# model keys that may be overridden per run; everything else about the
# architecture follows the chosen capacity preset
_MODEL_KEYS = {
    "token_embed_dim": int,
    "hidden_dim": int,
    "num_heads": int,
    "num_layers": int,
    "dropout_rate": float,
    "max_title_len": int,
    "max_history_len": int,
    "query_dim": int,
}


def _registry() -> dict[str, type]:
    reg: dict[str, type] = {"out_dir": str, "model.capacity": str}
    for f in dataclasses.fields(SyntheticConfig):
        reg[f"data.{f.name}"] = _field_type(f.type)
    for name, typ in _MODEL_KEYS.items():
        reg[f"model.{name}"] = typ
    for f in dataclasses.fields(TrainConfig):
        if f.name == "cold_threshold":
            continue  # surfaced once, under eval.
        reg[f"train.{f.name}"] = _field_type(f.type)
    reg["eval.cold_threshold"] = int
    reg["eval.include_pooled"] = bool
    reg["eval.p_list"] = str
    return reg


def _field_type(annotation) -> type:
    text = annotation if isinstance(annotation, str) else annotation.__name__
    return {"bool": bool, "int": int, "float": float, "str": str}[text]


@dataclasses.dataclass
class RunConfig:
    data: SyntheticConfig
    capacity: str = "big"
    model_overrides: dict = dataclasses.field(default_factory=dict)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    cold_threshold: int = 5
    include_pooled: bool = False
    p_list: str = "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"
    out_dir: str = "out"

    def model_config(self, vocab_size: int) -> ModelConfig:
        return config_by_tag(self.capacity, vocab_size, **self.model_overrides)

    def p_values(self) -> list[float]:
        values = [float(tok) for tok in self.p_list.split(",") if tok.strip()]
        if not values:
            raise ConfigError("eval.p_list contains no values")
        return values


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    registry = _registry()
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value

    if "schema_version" not in raw:
        raise ConfigError(f"{source}: missing required key schema_version")
    version_text = raw.pop("schema_version")
    try:
        version = int(version_text)
    except ValueError:
        raise ConfigError(f"{source}: schema_version must be an integer, "
                          f"got {version_text!r}") from None
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{source}: unsupported schema_version {version} "
                          f"(this build reads {SCHEMA_VERSION})")

    values: dict[str, object] = {}
    for key, text_value in raw.items():
        if key not in registry:
            raise ConfigError(f"{source}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[registry[key]](text_value)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key}: {exc}") from None

    data_kwargs = {k.split(".", 1)[1]: v for k, v in values.items()
                   if k.startswith("data.")}
    train_kwargs = {k.split(".", 1)[1]: v for k, v in values.items()
                    if k.startswith("train.")}
    model_overrides = {k.split(".", 1)[1]: v for k, v in values.items()
                       if k.startswith("model.") and k != "model.capacity"}

    capacity = values.get("model.capacity", "big")
    if capacity not in ("small", "big"):
        raise ConfigError(f"{source}: model.capacity must be small or big, "
                          f"got {capacity!r}")

    cold_threshold = values.get("eval.cold_threshold", 5)
    cfg = RunConfig(
        data=SyntheticConfig(**data_kwargs),
        capacity=capacity,
        model_overrides=model_overrides,
        train=TrainConfig(cold_threshold=cold_threshold, **train_kwargs),
        cold_threshold=cold_threshold,
        include_pooled=values.get("eval.include_pooled", False),
        out_dir=values.get("out_dir", "out"),
    )
    if "eval.p_list" in values:
        cfg.p_list = values["eval.p_list"]

    seed_override = os.environ.get("BIGFAIR_SEED")
    if seed_override is not None:
        try:
            seed = int(seed_override)
        except ValueError:
            raise ConfigError(
                f"BIGFAIR_SEED must be an integer, got {seed_override!r}"
            ) from None
        cfg.data.master_seed = seed
        cfg.train.master_seed = seed
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def write_resolved_config(cfg: RunConfig, path) -> None:
    """Write back the fully resolved settings, one line per key."""

    def fmt(value) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        return str(value)

    lines = [f"schema_version={SCHEMA_VERSION}", f"out_dir={cfg.out_dir}"]
    for f in dataclasses.fields(SyntheticConfig):
        lines.append(f"data.{f.name}={fmt(getattr(cfg.data, f.name))}")
    lines.append(f"model.capacity={cfg.capacity}")
    for name in sorted(cfg.model_overrides):
        lines.append(f"model.{name}={fmt(cfg.model_overrides[name])}")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "cold_threshold":
            continue
        lines.append(f"train.{f.name}={fmt(getattr(cfg.train, f.name))}")
    lines.append(f"eval.cold_threshold={cfg.cold_threshold}")
    lines.append(f"eval.include_pooled={fmt(cfg.include_pooled)}")
    lines.append(f"eval.p_list={cfg.p_list}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
