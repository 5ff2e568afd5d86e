"""Iterative re-warping with a KL-divergence stopping rule.

Each round warps the current image, asks the attention provider for a fresh
map on the result, and stops once successive attention distributions stop
moving (KL below threshold) or the iteration cap is hit. Per-step warps
compose exactly into a single field, which is what downstream consumers need
to map predictions back to the original image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .aggregation import AttentionScoreMatrix
from .warp import WarpField, WarpedImage, compose_fields, field_from_attention, warp_image

KL_SMOOTHING = 1e-10

STOP_KL = "kl_converged"
STOP_MAX = "max_iterations"
STOP_PROVIDER = "provider_exhausted"


@dataclass(frozen=True)
class ChainConfig:
    kl_epsilon: float = 0.2
    max_iterations: int = 5

    def __post_init__(self):
        if self.kl_epsilon < 0:
            raise ValueError("kl_epsilon must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def normalize_distribution(attention) -> np.ndarray:
    """Score matrix -> probability distribution (sums to 1)."""
    scores = attention.scores if isinstance(attention, AttentionScoreMatrix) else np.asarray(attention, dtype=np.float64)
    total = float(scores.sum())
    if total <= 0:
        return np.full(scores.shape, 1.0 / scores.size)
    return scores / total


def kl_divergence(p: np.ndarray, q: np.ndarray, smoothing: float = KL_SMOOTHING) -> float:
    """KL(p || q) with additive smoothing on both sides so zeros stay finite."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    ps = (p + smoothing) / (p.sum() + smoothing * p.size)
    qs = (q + smoothing) / (q.sum() + smoothing * q.size)
    # rounding can push a near-zero sum a hair below 0; the divergence is >= 0
    return max(0.0, float(np.sum(ps * np.log(ps / qs))))


@dataclass(frozen=True)
class ChainStep:
    """One refinement round: its warp, the running composition, and the KL check.

    kl and distribution are None when the round did not re-measure attention
    (the compulsory final iteration, or a provider failure right after the
    warp was applied). distribution lives in the original image frame.
    """

    depth: int
    warp: WarpField = field(repr=False)
    composed: WarpField = field(repr=False)
    kl: Optional[float]
    distribution: Optional[np.ndarray] = field(repr=False)


@dataclass(frozen=True)
class ChainTrace:
    steps: tuple[ChainStep, ...]
    stop_reason: str

    def to_json_dict(self, include_fields: bool = False) -> dict:
        out = {
            "stop_reason": self.stop_reason,
            "iterations": [
                {"depth": s.depth, "kl": s.kl} for s in self.steps
            ],
        }
        if include_fields:
            for rec, s in zip(out["iterations"], self.steps):
                rec["field"] = s.warp.to_json_dict()
        return out


AttentionProvider = Callable[[np.ndarray], "AttentionScoreMatrix | np.ndarray"]


def _pullback_distribution(attention, composed: WarpField) -> np.ndarray:
    """Resample a warped-frame attention map into the original frame, renormalized.

    Successive maps live on different warped frames; pulling each back through
    the running composition makes them comparable under one measure.
    """
    p = normalize_distribution(attention)
    pulled = warp_image(p, composed.inverted()).pixels
    return normalize_distribution(pulled)


def run_chain(
    image: np.ndarray,
    attention_provider: AttentionProvider,
    config: ChainConfig = ChainConfig(),
) -> tuple[WarpedImage, WarpField, ChainTrace]:
    """Iteratively warp ``image`` until attention stabilizes or the cap is hit.

    Returns the final iterated image, the composed single-pass field, and the
    per-step trace. Provider exceptions end the chain with the best result so
    far and stop_reason "provider_exhausted".
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    composed = WarpField.identity(w, h)
    steps: list[ChainStep] = []

    def grab(current: np.ndarray) -> np.ndarray:
        scores = attention_provider(current)
        scores = scores.scores if isinstance(scores, AttentionScoreMatrix) else np.asarray(scores, dtype=np.float64)
        if scores.shape != (h, w):
            raise ValueError(f"provider returned {scores.shape}, image is {(h, w)}")
        return scores

    try:
        attn = grab(img)
    except Exception:
        trace = ChainTrace(steps=(), stop_reason=STOP_PROVIDER)
        return WarpedImage(img.copy(), composed), composed, trace

    prev_dist = normalize_distribution(attn)
    current = img
    stop_reason = STOP_MAX
    for depth in range(1, config.max_iterations + 1):
        step_field = field_from_attention(attn)
        current = warp_image(current, step_field).pixels
        composed = compose_fields(composed, step_field)

        if depth == config.max_iterations:
            steps.append(ChainStep(depth, step_field, composed, None, None))
            stop_reason = STOP_MAX
            break

        try:
            attn = grab(current)
        except Exception:
            steps.append(ChainStep(depth, step_field, composed, None, None))
            stop_reason = STOP_PROVIDER
            break

        dist = _pullback_distribution(attn, composed)
        kl = kl_divergence(dist, prev_dist)
        steps.append(ChainStep(depth, step_field, composed, kl, dist))
        if kl < config.kl_epsilon:
            stop_reason = STOP_KL
            break
        prev_dist = dist

    trace = ChainTrace(steps=tuple(steps), stop_reason=stop_reason)
    return WarpedImage(current, composed), composed, trace
