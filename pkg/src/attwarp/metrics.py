"""Localization and expansion metrics over attention maps and warp fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .warp import (
    BoundingBox,
    WarpField,
    _scores,
    boxes_from_pixel_lists,
    field_from_attention,
    warp_box_forward,
)


def _as_box_list(box) -> list[BoundingBox]:
    if isinstance(box, BoundingBox):
        return [box]
    return list(box)


def pointing_game(attention, box) -> bool:
    """True iff the attention argmax pixel falls inside the box (or any of them).

    Ties resolve to the smallest row-major index, so corpus numbers are
    reproducible bit for bit.
    """
    a = _scores(attention)
    flat = int(np.argmax(a))
    row, col = divmod(flat, a.shape[1])
    return any(b.contains_pixel(row, col) for b in _as_box_list(box))


def proportion(attention, box) -> float:
    """Fraction of total attention mass inside the box (union when several)."""
    a = _scores(attention)
    total = float(a.sum())
    if total <= 0:
        raise ValueError("attention matrix has zero total mass")
    h, w = a.shape
    mask = np.zeros((h, w), dtype=bool)
    for b in _as_box_list(box):
        rows, cols = b.pixel_slices(h, w)
        mask[rows, cols] = True
    return float(a[mask].sum()) / total


@dataclass(frozen=True)
class ExpansionStats:
    """Per-box area ratios after forward warping, with zero-area boxes set aside."""

    ratios: tuple[float, ...]
    zero_area_boxes: int

    @property
    def fraction_expanded(self) -> float:
        if not self.ratios:
            return 0.0
        return sum(r > 1.0 for r in self.ratios) / len(self.ratios)

    @property
    def mean_increase(self) -> float:
        if not self.ratios:
            return 0.0
        return sum(r - 1.0 for r in self.ratios) / len(self.ratios)


def expansion_stats(boxes: Sequence[BoundingBox], warp_field: WarpField) -> ExpansionStats:
    ratios = []
    zero = 0
    for box in boxes:
        if box.area == 0:
            zero += 1
            continue
        warped = warp_box_forward(box, warp_field)
        ratios.append(warped.area / box.area)
    return ExpansionStats(ratios=tuple(ratios), zero_area_boxes=zero)


# ---------------------------------------------------------------------------
# corpus evaluation
# ---------------------------------------------------------------------------

@dataclass
class SampleMetrics:
    image_path: str
    pointing_hit: bool
    proportion: float
    expansion_ratios: list[float]
    zero_area_boxes: int


@dataclass
class MetricReport:
    samples: list[SampleMetrics] = dc_field(default_factory=list)
    skipped: int = 0

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def pointing_rate(self) -> float:
        if not self.samples:
            return math.nan
        return sum(s.pointing_hit for s in self.samples) / len(self.samples)

    @property
    def proportion_mean(self) -> float:
        if not self.samples:
            return math.nan
        return sum(s.proportion for s in self.samples) / len(self.samples)

    def _all_ratios(self) -> list[float]:
        return [r for s in self.samples for r in s.expansion_ratios]

    @property
    def fraction_expanded(self) -> float:
        ratios = self._all_ratios()
        if not ratios:
            return math.nan
        return sum(r > 1.0 for r in ratios) / len(ratios)

    @property
    def mean_area_increase(self) -> float:
        ratios = self._all_ratios()
        if not ratios:
            return math.nan
        return sum(r - 1.0 for r in ratios) / len(ratios)

    @property
    def zero_area_boxes(self) -> int:
        return sum(s.zero_area_boxes for s in self.samples)

    def to_json_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "skipped": self.skipped,
            "pointing_game_rate": self.pointing_rate,
            "proportion_mean": self.proportion_mean,
            "boxes_total": len(self._all_ratios()),
            "fraction_expanded": self.fraction_expanded,
            "mean_area_increase": self.mean_area_increase,
            "zero_area_boxes": self.zero_area_boxes,
            "samples": [
                {
                    "image_path": s.image_path,
                    "pointing_hit": s.pointing_hit,
                    "proportion": s.proportion,
                    "expansion_ratios": s.expansion_ratios,
                    "zero_area_boxes": s.zero_area_boxes,
                }
                for s in self.samples
            ],
        }

    def to_text_table(self) -> str:
        rows = [
            ("samples", f"{self.n_samples}"),
            ("skipped lines", f"{self.skipped}"),
            ("pointing game rate", f"{self.pointing_rate:.4f}"),
            ("proportion (mean)", f"{self.proportion_mean:.4f}"),
            ("boxes", f"{len(self._all_ratios())}"),
            ("fraction expanded", f"{self.fraction_expanded:.4f}"),
            ("mean area increase", f"{self.mean_area_increase:+.4f}"),
            ("zero-area boxes", f"{self.zero_area_boxes}"),
        ]
        width = max(len(k) for k, _ in rows)
        lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
        return "\n".join(lines) + "\n"


def evaluate_sample(attention, raw_boxes: Sequence[Sequence[float]], image_path: str = "") -> SampleMetrics:
    """All three metrics for one (attention map, ground-truth boxes) pair.

    The warp field for expansion is built from the sample's own attention.
    """
    boxes = boxes_from_pixel_lists(raw_boxes)
    fld = field_from_attention(attention)
    exp = expansion_stats(boxes, fld)
    return SampleMetrics(
        image_path=image_path,
        pointing_hit=pointing_game(attention, boxes),
        proportion=proportion(attention, boxes),
        expansion_ratios=list(exp.ratios),
        zero_area_boxes=exp.zero_area_boxes,
    )


def evaluate_annotations(path: str | Path, warn=None) -> MetricReport:
    """Run the metric suite over a JSON-lines annotation file.

    Malformed lines and unreadable attention maps are skipped (optionally
    reported through ``warn``) and counted in the report.
    """
    report = MetricReport()
    for lineno, rec, err in io.iter_annotations(path):
        if rec is None:
            report.skipped += 1
            if warn:
                warn(f"line {lineno}: {err}")
            continue
        try:
            attention = io.load_attention_raster(rec["attention_path"])
            sample = evaluate_sample(attention, rec["boxes"], rec["image_path"])
        except Exception as exc:
            report.skipped += 1
            if warn:
                warn(f"line {lineno}: {exc}")
            continue
        report.samples.append(sample)
    return report
