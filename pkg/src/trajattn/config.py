from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction


@dataclass(frozen=True)
class RunConfig:
    heads: int = 4
    latent_scale: Fraction = Fraction(1, 8)
    rpe_delta: int = 1
    precision: str = "f32"
    # carried for downstream trainers; nothing here trains
    learning_rate: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "latent_scale", Fraction(self.latent_scale).limit_denominator(1 << 16))
        if int(self.heads) != self.heads or self.heads < 1:
            raise ValueError(f"heads must be a positive integer, got {self.heads}")
        if self.latent_scale <= 0:
            raise ValueError(f"latent_scale must be positive, got {self.latent_scale}")
        if int(self.rpe_delta) != self.rpe_delta or self.rpe_delta < 1:
            raise ValueError(f"rpe_delta must be a positive integer, got {self.rpe_delta}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"precision must be 'f32' or 'f64', got {self.precision!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")

    @property
    def dtype(self):
        import numpy as np
        return np.float32 if self.precision == "f32" else np.float64

    def to_json(self) -> dict:
        d = asdict(self)
        d["latent_scale"] = str(self.latent_scale)
        return d


def parse_scale(text) -> Fraction:
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"cannot parse scale {text!r}") from None


def load_config(path=None, **overrides) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then non-None ``overrides``."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if path is not None:
        with open(path) as fh:
            doc = json.load(fh)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "latent_scale" in doc:
            doc["latent_scale"] = parse_scale(doc["latent_scale"])
        cfg = replace(cfg, **doc)
    flags = {k: v for k, v in overrides.items() if v is not None and k in known}
    return replace(cfg, **flags) if flags else cfg
