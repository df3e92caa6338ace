"""Learning-rate schedules."""

from __future__ import annotations

import math

from s5sep.errors import InvalidInputError


def cosine_warmup_lr(step: int, base_lr: float, warmup_steps: int, total_steps: int) -> float:
    """Linear warm-up from 0 to ``base_lr`` followed by a half-cosine decay to 0.

    Steps past ``total_steps`` are clamped to the final value.
    """
    if step < 0:
        raise InvalidInputError(f"step must be >= 0, got {step}")
    if not 0 <= warmup_steps < total_steps:
        raise InvalidInputError("need 0 <= warmup_steps < total_steps")
    step = min(step, total_steps)
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def layerwise_lr(base_lr: float, block_index: int, n_blocks: int, decay: float) -> float:
    """``base_lr * decay ** (n_blocks - 1 - block_index)``; the last block keeps ``base_lr``."""
    if not 0 <= block_index < n_blocks:
        raise InvalidInputError(f"block_index {block_index} outside 0..{n_blocks - 1}")
    return base_lr * decay ** (n_blocks - 1 - block_index)
