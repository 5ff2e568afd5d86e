"""Collapse raw multi-layer / multi-head / multi-token attention into a score matrix.

Raw cross-attention arrives as one (out_tokens x img_tokens) matrix per
(layer, head). Aggregation means over the selected layers, all heads and all
output tokens, then reshapes to the token grid. Postprocessing lifts the grid
to pixel resolution (Lanczos), smooths it, and applies a sharpness transform.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import io
from ._kernels import box_smooth, lanczos_resize

EPS_MASS = 1e-8  # uniform floor injected when a matrix has zero total mass

# Named layer presets for common decoder stacks; grid hint is tokens per side.
LAYER_PRESETS: dict[str, dict] = {
    "llava": {"layers": frozenset({20}), "grid": 24},
    "qwen": {"layers": frozenset({16}), "grid": 18},
}


class SharpnessTransform(str, enum.Enum):
    """Elementwise monotone map applied last; sharper ones favor attention peaks."""

    SQRT = "sqrt"
    IDENTITY = "identity"
    SQUARE = "square"
    CUBE = "cube"

    def apply(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        if self is SharpnessTransform.SQRT:
            return np.sqrt(v)
        if self is SharpnessTransform.IDENTITY:
            return v.copy()
        if self is SharpnessTransform.SQUARE:
            return v * v
        return v * v * v


@dataclass(frozen=True)
class AttentionScoreMatrix:
    """Nonnegative pixel-resolution attention scores, shape (height, width)."""

    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2:
            raise ValueError(f"scores must be 2-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores contain non-finite values")
        if np.any(s < 0):
            raise ValueError("scores contain negative values")
        object.__setattr__(self, "scores", s)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @classmethod
    def from_scores(cls, scores: np.ndarray) -> "AttentionScoreMatrix":
        """Build with the zero-mass guard: an all-zero map gets a uniform floor."""
        s = np.asarray(scores, dtype=np.float64)
        if s.size and float(s.sum()) == 0.0:
            s = s + EPS_MASS
        return cls(s)


@dataclass(frozen=True)
class RawAttentionTensor:
    """Per-(layer, head) attention from output tokens to image tokens.

    weights has shape (n_layers, n_heads, n_out_tokens, n_img_tokens) with
    n_img_tokens == grid_h * grid_w; layer_ids labels the first axis with the
    producer's layer numbers so presets can select by id.
    """

    weights: np.ndarray
    layer_ids: tuple[int, ...]
    grid_h: int
    grid_w: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4:
            raise ValueError(f"weights must be 4-D, got shape {w.shape}")
        if len(self.layer_ids) != w.shape[0]:
            raise ValueError(
                f"{len(self.layer_ids)} layer ids for {w.shape[0]} layer records"
            )
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise ValueError("duplicate layer ids")
        if w.shape[3] != self.grid_h * self.grid_w:
            raise ValueError(
                f"img_tokens {w.shape[3]} != grid {self.grid_h}x{self.grid_w}"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("attention weights contain non-finite values")
        if np.any(w < 0):
            raise ValueError("attention weights contain negative values")
        object.__setattr__(self, "weights", w)

    @classmethod
    def load(cls, stack_path: str | Path, sidecar_path: str | Path) -> "RawAttentionTensor":
        """Read an ATW1 stack (layer-major, then head) plus its JSON sidecar."""
        import json

        meta = json.loads(Path(sidecar_path).read_text())
        for key in ("layers", "heads", "out_tokens", "grid_h", "grid_w"):
            if key not in meta:
                raise io.FormatError(f"sidecar missing key {key!r}")
        n_layers = int(meta["layers"])
        n_heads = int(meta["heads"])
        n_out = int(meta["out_tokens"])
        grid_h = int(meta["grid_h"])
        grid_w = int(meta["grid_w"])
        layer_ids = tuple(int(i) for i in meta.get("layer_ids", range(n_layers)))

        records = io.read_atw1_stack(stack_path)
        if len(records) != n_layers * n_heads:
            raise io.FormatError(
                f"stack has {len(records)} records, sidecar implies {n_layers * n_heads}"
            )
        expect = (n_out, grid_h * grid_w)
        for i, rec in enumerate(records):
            if rec.shape != expect:
                raise io.FormatError(
                    f"record {i} has shape {rec.shape}, expected {expect}"
                )
        weights = np.stack(records).reshape(n_layers, n_heads, n_out, grid_h * grid_w)
        return cls(weights=weights, layer_ids=layer_ids, grid_h=grid_h, grid_w=grid_w)

    def save(self, stack_path: str | Path, sidecar_path: str | Path) -> None:
        n_layers, n_heads, n_out, n_img = self.weights.shape
        records = [
            self.weights[l, h] for l in range(n_layers) for h in range(n_heads)
        ]
        io.write_atw1_stack(stack_path, records)
        io.atomic_write_json(
            sidecar_path,
            {
                "layers": n_layers,
                "heads": n_heads,
                "out_tokens": n_out,
                "grid_h": self.grid_h,
                "grid_w": self.grid_w,
                "layer_ids": list(self.layer_ids),
            },
        )


def aggregate(raw: RawAttentionTensor, layer_select: Iterable[int]) -> np.ndarray:
    """Mean attention over the selected layers, all heads and output tokens.

    Token t maps to grid cell (t // grid_w, t % grid_w); returns a
    (grid_h, grid_w) array.
    """
    selected = sorted(set(int(i) for i in layer_select))
    if not selected:
        raise ValueError("layer_select is empty")
    id_to_pos = {lid: pos for pos, lid in enumerate(raw.layer_ids)}
    missing = [i for i in selected if i not in id_to_pos]
    if missing:
        raise ValueError(f"layer ids {missing} not in tensor (has {list(raw.layer_ids)})")
    positions = [id_to_pos[i] for i in selected]
    flat = raw.weights[positions].mean(axis=(0, 1, 2))
    return flat.reshape(raw.grid_h, raw.grid_w)


def postprocess(
    grid: np.ndarray,
    target_h: int,
    target_w: int,
    smooth_k: int = 3,
    transform: SharpnessTransform = SharpnessTransform.IDENTITY,
) -> AttentionScoreMatrix:
    """Token grid -> pixel-resolution score matrix.

    Order: Lanczos upsample, clamp negatives (ringing) to 0, k x k box smooth,
    sharpness transform. smooth_k == 1 skips smoothing; equal dims skip the
    resample entirely so the grid passes through untouched.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {grid.shape}")
    if target_h <= 0 or target_w <= 0:
        raise ValueError(f"target dims must be positive, got {target_h}x{target_w}")
    if target_h < grid.shape[0] or target_w < grid.shape[1]:
        raise ValueError(
            f"target {target_h}x{target_w} smaller than grid {grid.shape[0]}x{grid.shape[1]}"
        )
    if smooth_k < 1 or smooth_k % 2 == 0:
        raise ValueError(f"smooth_k must be odd and >= 1, got {smooth_k}")

    out = grid
    if (target_h, target_w) != grid.shape:
        out = lanczos_resize(grid, target_h, target_w)
    out = np.maximum(out, 0.0)
    if smooth_k > 1:
        out = box_smooth(out, smooth_k)
    out = transform.apply(out)
    return AttentionScoreMatrix.from_scores(out)


def resize_attention(scores: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Resize a full-resolution map to new dims (either direction), clamped at 0."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape == (target_h, target_w):
        return scores.copy()
    return np.maximum(lanczos_resize(scores, target_h, target_w), 0.0)
