"""Run configuration and its key-value text format.

A config file is plain text, one ``key = value`` assignment per line.
Blank lines and lines starting with ``#`` are ignored.  Values are parsed
by the declared field type: integers, floats, strings (taken verbatim,
unquoted), and comma-separated integer tuples.  Every field has a default,
so an empty file is a valid config.  Serialization round-trips losslessly;
floats are written with ``repr``.

Defaults describe the desk-scale setup: a 642-vertex synthetic face model,
64x64 images, batch size 4.  Larger models and images are configurable but
cost accordingly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..errors import ConfigError
from ..losses import LossWeights
from ..render import Camera


@dataclass(frozen=True)
class RunConfig:
    # model source: a container file, or a synthesized model when empty
    model_path: str = ""
    model_seed: int = 11
    n_vertices: int = 642
    # mesh hierarchy and network widths
    hierarchy_levels: int = 4
    hierarchy_fraction: float = 0.25
    cheb_order: int = 6
    channels: tuple[int, ...] = (64, 32, 16, 8)
    embed_dim: int = 128
    refiner_width: int = 16
    refiner_blocks: int = 2
    critic_channels: tuple[int, ...] = (8, 16, 16, 16, 16, 16)
    # imaging
    image_size: int = 64
    focal: float = 101.0
    # loss weights and schedule
    sigma1: float = 1.0
    sigma2: float = 0.2
    sigma3: float = 0.001
    sigma4: float = 1.0
    warmup_steps: int = 40
    ramp_steps: int = 40
    lambda_gp: float = 10.0
    # optimization
    learning_rate: float = 1e-4
    adam_beta1: float = 0.0
    adam_beta2: float = 0.9
    batch_size: int = 4
    critic_steps: int = 5
    train_steps: int = 200
    checkpoint_every: int = 0  # 0: write only the final checkpoint
    # synthetic data
    dataset_size: int = 16
    detail_amplitude: float = 0.15
    # run identity
    seed: int = 0
    out_dir: str = "out"

    def weights(self) -> LossWeights:
        return LossWeights(
            sigma1=self.sigma1,
            sigma2=self.sigma2,
            sigma3=self.sigma3,
            sigma4=self.sigma4,
            warmup_steps=self.warmup_steps,
            ramp_steps=self.ramp_steps,
        )

    def camera(self) -> Camera:
        return Camera(self.focal, self.image_size, self.image_size)

    def validate(self) -> "RunConfig":
        problems = []
        if self.image_size < 16:
            problems.append("image_size must be at least 16")
        if self.image_size % 64 != 0:
            # six pooling stages in the critic each halve the image
            problems.append("image_size must be divisible by 64")
        if len(self.channels) != self.hierarchy_levels:
            problems.append(
                f"channels has {len(self.channels)} entries for "
                f"{self.hierarchy_levels} hierarchy levels"
            )
        if self.hierarchy_levels < 2:
            problems.append("hierarchy_levels must be at least 2")
        if not 0.0 < self.hierarchy_fraction < 1.0:
            problems.append("hierarchy_fraction must lie in (0, 1)")
        if self.cheb_order < 1:
            problems.append("cheb_order must be positive")
        if self.embed_dim < 2:
            problems.append("embed_dim must be at least 2")
        if len(self.critic_channels) != 6:
            problems.append("critic_channels must list six stage widths")
        for name in ("sigma1", "sigma2", "sigma3", "sigma4", "lambda_gp",
                     "focal", "learning_rate", "detail_amplitude"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be nonnegative")
        for name in ("warmup_steps", "ramp_steps", "train_steps",
                     "checkpoint_every"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be nonnegative")
        for name in ("batch_size", "critic_steps", "dataset_size",
                     "refiner_width", "refiner_blocks", "n_vertices"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            problems.append("adam betas must lie in [0, 1)")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(field: dataclasses.Field, raw: str, line_no: int):
    raw = raw.strip()
    kind = field.type
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        # tuple[int, ...]: comma separated, surrounding spaces allowed
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(
            f"line {line_no}: cannot parse {field.name} from {raw!r}: {exc}"
        ) from None


def parse_config(text: str) -> RunConfig:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        field = _FIELDS.get(key)
        if field is None:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate config key {key!r}")
        values[key] = _parse_value(field, raw, line_no)
    return RunConfig(**values)


def config_to_text(config: RunConfig) -> str:
    lines = ["# run configuration; one 'key = value' per line"]
    for field in dataclasses.fields(RunConfig):
        value = getattr(config, field.name)
        if isinstance(value, tuple):
            rendered = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{field.name} = {rendered}")
    return "\n".join(lines) + "\n"


def save_config(path, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(config))


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
