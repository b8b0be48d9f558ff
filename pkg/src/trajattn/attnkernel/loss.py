from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np


@dataclass(eq=False)
class DenoisingBatch:
    """Clean latents ``x0``, additive ``noise`` at level ``sigma`` and a conditioning payload."""

    x0: np.ndarray
    noise: np.ndarray
    sigma: float
    condition: Any = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0)
        self.noise = np.asarray(self.noise)
        if self.x0.shape != self.noise.shape:
            raise ValueError(f"x0 {self.x0.shape} and noise {self.noise.shape} shapes differ")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def noisy(self) -> np.ndarray:
        return self.x0 + self.sigma * self.noise


def denoising_loss(pred, batch: DenoisingBatch) -> float:
    """Mean squared error between a denoiser prediction and the clean latents."""
    pred = np.asarray(pred)
    if pred.shape != batch.x0.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match x0 {batch.x0.shape}")
    diff = pred.astype(np.float64) - batch.x0.astype(np.float64)
    return float(np.mean(diff * diff))
