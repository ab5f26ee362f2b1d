"""Availability-masked softmax primitives shared by the choice models."""

from __future__ import annotations

import numpy as np


class AvailabilityError(ValueError):
    """Raised when an observation has no available alternative."""


def masked_log_softmax(logits: np.ndarray, avail: np.ndarray) -> np.ndarray:
    """Log-probabilities over available alternatives; -inf on masked ones.

    Uses max-subtraction over the available entries, so arbitrarily large
    logits cannot overflow.
    """
    logits = np.asarray(logits, dtype=np.float64)
    avail = np.asarray(avail, dtype=bool)
    if logits.shape != avail.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape} vs avail {avail.shape}")
    if not avail.any(axis=-1).all():
        raise AvailabilityError("at least one alternative must be available per row")
    masked = np.where(avail, logits, -np.inf)
    top = masked.max(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        shifted = masked - top
    shifted = np.where(avail, shifted, -np.inf)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - lse


def masked_softmax(logits: np.ndarray, avail: np.ndarray) -> np.ndarray:
    """Probabilities over available alternatives; exact zeros on masked ones."""
    avail = np.asarray(avail, dtype=bool)
    probs = np.exp(masked_log_softmax(logits, avail))
    return np.where(avail, probs, 0.0)
