"""Rectilinear warping: axis marginals, cumulative profiles, and the warp field.

The warp treats the attention score matrix as an unnormalized 2-D density,
reduces it to per-axis marginals, and places output samples by inverting the
cumulative marginal: dense regions receive more output samples and expand,
sparse regions compress. Both axis maps are monotone, so the warp preserves
left-right / top-bottom order and the grid stays rectilinear (the Jacobian is
diagonal).

Coordinate conventions (these make the identity warp exact and keep golden
files portable):

* Pixel k of an axis of length n samples at coordinate k (0-based integer
  centers) and owns the interval [k, k+1) of the continuous axis [0, n].
* The discrete cumulative profile extends to a piecewise-linear function on
  [0, n] with value 0 at 0 and 1 at n; knot k holds the mass of the first k
  pixels.
* The output->input map is fx(u) = inverse_cumulative(u / n) * n evaluated at
  output coordinate u; at integer u this is the sampling grid for the image
  warp. The input->output map is its functional inverse, n * cumulative(x / n).
* Bounding boxes live on the continuous axis: the full image is
  (0, 0, W, H), and a box given as inclusive pixel indices [x0, y0, x1, y1]
  converts via BoundingBox.from_pixels, which adds 1 to the max corner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._kernels import bilinear_warp
from .aggregation import EPS_MASS, AttentionScoreMatrix

HORIZONTAL = "horizontal"
VERTICAL = "vertical"


def _scores(a) -> np.ndarray:
    if isinstance(a, AttentionScoreMatrix):
        return a.scores
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"attention matrix must be 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class AxisProfile:
    """1-D marginal attention mass along one axis."""

    values: np.ndarray
    axis: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("profile must be a nonempty 1-D array")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("profile must be finite and nonnegative")
        if self.axis not in (HORIZONTAL, VERTICAL):
            raise ValueError(f"axis must be horizontal or vertical, got {self.axis!r}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class AxisCdf:
    """Normalized cumulative profile; same length as its profile, ends at 1."""

    cumulative: np.ndarray
    axis: str

    def __post_init__(self):
        c = np.asarray(self.cumulative, dtype=np.float64)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("cumulative must be a nonempty 1-D array")
        if c[0] < 0 or np.any(np.diff(c) < 0):
            raise ValueError("cumulative must be nondecreasing from >= 0")
        if abs(c[-1] - 1.0) > 1e-9:
            raise ValueError(f"cumulative must end at 1, got {c[-1]!r}")
        object.__setattr__(self, "cumulative", c)


def marginals(attention) -> tuple[AxisProfile, AxisProfile]:
    """Column sums (horizontal profile, length W) and row sums (vertical, length H)."""
    a = _scores(attention)
    mx = a.sum(axis=0)
    my = a.sum(axis=1)
    return AxisProfile(mx, HORIZONTAL), AxisProfile(my, VERTICAL)


def cdf(profile: AxisProfile, mass_floor: float = EPS_MASS) -> AxisCdf:
    """Prefix sums normalized to end at 1.

    mass_floor is added to every entry first; it keeps the cumulative strictly
    increasing (no flat runs, so the inverse is single-valued) and turns an
    all-zero profile into the uniform one.
    """
    v = profile.values + mass_floor
    c = np.cumsum(v)
    if c[-1] <= 0:
        raise ValueError("profile has zero total mass and no floor to fall back on")
    c = c / c[-1]
    return AxisCdf(c, profile.axis)


class PiecewiseLinearMap:
    """Monotone piecewise-linear map given by knot arrays (x nondecreasing).

    Evaluation at a value inside a flat run of x returns the leftmost knot's y.
    Outside the knot range the map clamps to the end values.
    """

    __slots__ = ("x", "y")

    def __init__(self, x: np.ndarray, y: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape != y.shape or x.ndim != 1 or x.size < 2:
            raise ValueError("knot arrays must be equal-length 1-D with >= 2 knots")
        if np.any(np.diff(x) < 0) or np.any(np.diff(y) < 0):
            raise ValueError("knots must be nondecreasing")
        self.x = x
        self.y = y

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=np.float64)
        scalar = t_arr.ndim == 0
        t_flat = np.atleast_1d(t_arr)
        idx = np.searchsorted(self.x, t_flat, side="left")
        idx = np.clip(idx, 0, len(self.x) - 1)
        out = np.empty_like(t_flat)

        exact = self.x[idx] == t_flat
        out[exact] = self.y[idx[exact]]

        below = t_flat < self.x[0]
        out[below] = self.y[0]
        above = t_flat > self.x[-1]
        out[above] = self.y[-1]

        interior = ~(exact | below | above)
        if np.any(interior):
            i = idx[interior]
            x0, x1 = self.x[i - 1], self.x[i]
            y0, y1 = self.y[i - 1], self.y[i]
            frac = (t_flat[interior] - x0) / (x1 - x0)
            out[interior] = y0 + frac * (y1 - y0)
        return float(out[0]) if scalar else out

    def inverse(self) -> "PiecewiseLinearMap":
        return PiecewiseLinearMap(self.y, self.x)

    def compose(self, inner: "PiecewiseLinearMap") -> "PiecewiseLinearMap":
        """Exact composition self(inner(t)) as a new piecewise-linear map.

        Knots: inner's own, plus the preimages under inner of self's knots.
        """
        pulled = inner.inverse()(self.x)
        xs = np.union1d(inner.x, pulled)
        ys = self(inner(xs))
        return PiecewiseLinearMap(xs, np.maximum.accumulate(ys))


@dataclass(frozen=True)
class WarpField:
    """Per-axis monotone maps between output and input coordinates.

    x_map / y_map go output -> input on the continuous axes [0, W] / [0, H].
    Their inverses are the forward (input -> output) maps. fx_grid / fy_grid
    are the maps sampled at integer output positions and clamped to the pixel
    center range; they drive bilinear sampling and the JSON serialization.
    """

    width: int
    height: int
    x_map: PiecewiseLinearMap
    y_map: PiecewiseLinearMap

    @classmethod
    def from_cdfs(cls, cdf_x: AxisCdf, cdf_y: AxisCdf) -> "WarpField":
        w = cdf_x.cumulative.size
        h = cdf_y.cumulative.size
        knots_x = np.concatenate(([0.0], cdf_x.cumulative)) * w
        knots_y = np.concatenate(([0.0], cdf_y.cumulative)) * h
        return cls(
            width=w,
            height=h,
            x_map=PiecewiseLinearMap(knots_x, np.arange(w + 1, dtype=np.float64)),
            y_map=PiecewiseLinearMap(knots_y, np.arange(h + 1, dtype=np.float64)),
        )

    @classmethod
    def identity(cls, width: int, height: int) -> "WarpField":
        ramp_x = np.arange(width + 1, dtype=np.float64)
        ramp_y = np.arange(height + 1, dtype=np.float64)
        return cls(
            width=width,
            height=height,
            x_map=PiecewiseLinearMap(ramp_x, ramp_x),
            y_map=PiecewiseLinearMap(ramp_y, ramp_y),
        )

    def fx(self, u):
        """Output x coordinate(s) -> input x coordinate(s)."""
        return self.x_map(u)

    def fy(self, u):
        return self.y_map(u)

    def inverse_x(self, x):
        """Input x coordinate(s) -> output x coordinate(s)."""
        return self.x_map.inverse()(x)

    def inverse_y(self, y):
        return self.y_map.inverse()(y)

    @property
    def fx_grid(self) -> np.ndarray:
        return np.clip(self.x_map(np.arange(self.width, dtype=np.float64)), 0.0, self.width - 1.0)

    @property
    def fy_grid(self) -> np.ndarray:
        return np.clip(self.y_map(np.arange(self.height, dtype=np.float64)), 0.0, self.height - 1.0)

    def inverted(self) -> "WarpField":
        return WarpField(self.width, self.height, self.x_map.inverse(), self.y_map.inverse())

    def to_json_dict(self) -> dict:
        """Serializable form: fx/fy samples plus exact knots for lossless reload."""
        return {
            "width": self.width,
            "height": self.height,
            "fx": self.fx_grid.tolist(),
            "fy": self.fy_grid.tolist(),
            "x_knots_out": self.x_map.x.tolist(),
            "x_knots_in": self.x_map.y.tolist(),
            "y_knots_out": self.y_map.x.tolist(),
            "y_knots_in": self.y_map.y.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "WarpField":
        w, h = int(d["width"]), int(d["height"])
        if "x_knots_out" in d:
            x_map = PiecewiseLinearMap(np.asarray(d["x_knots_out"]), np.asarray(d["x_knots_in"]))
            y_map = PiecewiseLinearMap(np.asarray(d["y_knots_out"]), np.asarray(d["y_knots_in"]))
            return cls(w, h, x_map, y_map)
        # fx/fy-only payloads rebuild an approximate map from the samples
        fx = np.asarray(d["fx"], dtype=np.float64)
        fy = np.asarray(d["fy"], dtype=np.float64)
        if fx.size != w or fy.size != h:
            raise ValueError("fx/fy lengths do not match width/height")
        x_map = PiecewiseLinearMap(np.arange(w, dtype=np.float64), fx)
        y_map = PiecewiseLinearMap(np.arange(h, dtype=np.float64), fy)
        return cls(w, h, x_map, y_map)


def build_warp(cdf_x: AxisCdf, cdf_y: AxisCdf) -> WarpField:
    if cdf_x.axis != HORIZONTAL or cdf_y.axis != VERTICAL:
        raise ValueError("build_warp expects (horizontal cdf, vertical cdf)")
    return WarpField.from_cdfs(cdf_x, cdf_y)


def field_from_attention(attention, mass_floor: float = EPS_MASS) -> WarpField:
    """Score matrix -> warp field (marginals, cumulative profiles, inversion)."""
    mx, my = marginals(attention)
    return build_warp(cdf(mx, mass_floor), cdf(my, mass_floor))


def compose_fields(earlier: WarpField, later: WarpField) -> WarpField:
    """Field equivalent to warping by ``earlier`` first, then by ``later``.

    Rectilinear warps compose per axis: the combined output -> input map is
    earlier_map(later_map(u)). The composition is exact (piecewise linear in,
    piecewise linear out), so chained warps collapse to one resampling pass.
    """
    if (earlier.width, earlier.height) != (later.width, later.height):
        raise ValueError("cannot compose fields with different dimensions")
    return WarpField(
        earlier.width,
        earlier.height,
        earlier.x_map.compose(later.x_map),
        earlier.y_map.compose(later.y_map),
    )


@dataclass(frozen=True)
class WarpedImage:
    """Warped pixels plus the field that produced them."""

    pixels: np.ndarray
    provenance: WarpField = field(repr=False)


def warp_image(image: np.ndarray, warp_field: WarpField) -> WarpedImage:
    """Bilinear resample of the image at the field's output grid.

    Output dims equal input dims; channels pass through unchanged. Sample
    coordinates are clamped to the pixel-center range (edge replication).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim not in (2, 3):
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {img.shape}")
    h, w = img.shape[:2]
    if (w, h) != (warp_field.width, warp_field.height):
        raise ValueError(
            f"image is {w}x{h}, field is {warp_field.width}x{warp_field.height}"
        )
    out = bilinear_warp(img, warp_field.fx_grid, warp_field.fy_grid)
    return WarpedImage(pixels=out, provenance=warp_field)


# ---------------------------------------------------------------------------
# bounding boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box on the continuous pixel plane.

    Pixel k covers [k, k+1), so the full image is (0, 0, W, H) and a box given
    as inclusive pixel indices converts via from_pixels. Zero-area boxes
    (x_min == x_max or y_min == y_max) are legal.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box {self}")

    @classmethod
    def from_pixels(cls, x0: int, y0: int, x1: int, y1: int) -> "BoundingBox":
        """Inclusive pixel-index bounds -> continuous box (max corner + 1)."""
        return cls(float(x0), float(y0), float(x1) + 1.0, float(y1) + 1.0)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def clamp(self, width: float, height: float) -> "BoundingBox":
        return BoundingBox(
            min(max(self.x_min, 0.0), width),
            min(max(self.y_min, 0.0), height),
            min(max(self.x_max, 0.0), width),
            min(max(self.y_max, 0.0), height),
        )

    def contains_pixel(self, row: int, col: int) -> bool:
        return self.x_min <= col < self.x_max and self.y_min <= row < self.y_max

    def pixel_slices(self, height: int, width: int) -> tuple[slice, slice]:
        """Rows/cols of pixels whose cells start inside the box, clipped to dims."""
        c = self.clamp(width, height)
        x0 = int(np.ceil(c.x_min))
        y0 = int(np.ceil(c.y_min))
        x1 = int(np.ceil(c.x_max))
        y1 = int(np.ceil(c.y_max))
        return slice(y0, y1), slice(x0, x1)


def warp_box_forward(box: BoundingBox, warp_field: WarpField) -> BoundingBox:
    """Map a box from input space to output (warped) space via the forward maps.

    The warped extent along an axis equals the axis dimension times the
    attention mass fraction the box covers, so boxes holding above-uniform
    mass density expand.
    """
    xs = warp_field.inverse_x(np.array([box.x_min, box.x_max]))
    ys = warp_field.inverse_y(np.array([box.y_min, box.y_max]))
    return BoundingBox(xs[0], ys[0], xs[1], ys[1]).clamp(warp_field.width, warp_field.height)


def warp_box_inverse(box: BoundingBox, warp_field: WarpField) -> BoundingBox:
    """Map a box from output (warped) space back to input space."""
    xs = warp_field.fx(np.array([box.x_min, box.x_max]))
    ys = warp_field.fy(np.array([box.y_min, box.y_max]))
    return BoundingBox(xs[0], ys[0], xs[1], ys[1]).clamp(warp_field.width, warp_field.height)


def boxes_from_pixel_lists(raw_boxes: Sequence[Sequence[float]]) -> list[BoundingBox]:
    """Annotation boxes (inclusive pixel bounds) -> continuous boxes."""
    return [BoundingBox.from_pixels(*b) for b in raw_boxes]
