"""Batch command-line surface: warp, chain, metrics, export-targets, aggregate.

Exit codes: 0 success, 1 hard failure, 2 partial (some files failed, metric
lines skipped, or a chain ended because its attention provider ran out).
Flags can also be supplied through --config (a JSON object keyed by flag
name); explicit flags win. ATTWARP_OUTPUT_DIR overrides the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io
from .aggregation import (
    LAYER_PRESETS,
    AttentionScoreMatrix,
    RawAttentionTensor,
    SharpnessTransform,
    aggregate,
    postprocess,
    resize_attention,
)
from .chains import STOP_PROVIDER, ChainConfig, run_chain
from .metrics import evaluate_annotations
from .warp import field_from_attention, marginals, warp_image
from ._kernels import lanczos_resize

EXIT_OK = 0
EXIT_HARD = 1
EXIT_PARTIAL = 2


def _warn(msg: str) -> None:
    print(f"attwarp: {msg}", file=sys.stderr)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise ValueError("--config must hold a JSON object")
    return cfg


def _opt(args, cfg: dict, name: str, default):
    """Flag value with precedence: explicit CLI > config file > default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in cfg:
        return cfg[name]
    return default


def _out_dir(args, cfg: dict) -> Path:
    env = os.environ.get("ATTWARP_OUTPUT_DIR")
    chosen = env or _opt(args, cfg, "out-dir", ".")
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _provenance(out_dir: Path, stem: str, command: str, config: dict, inputs: list[str], outputs: list[str]) -> None:
    record = {
        "tool": "attwarp",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): io.sha256_file(p) for p in inputs},
        "outputs": outputs,
    }
    io.atomic_write_json(out_dir / f"{stem}.provenance.json", record)


# ---------------------------------------------------------------------------
# shared input preparation
# ---------------------------------------------------------------------------

def _resize_image(img: np.ndarray, h: int, w: int) -> np.ndarray:
    if img.shape[:2] == (h, w):
        return img
    out = np.stack([lanczos_resize(img[:, :, c], h, w) for c in range(img.shape[2])], axis=2)
    return np.clip(out, 0.0, 1.0)


def _pad_to(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    ph, pw = h - arr.shape[0], w - arr.shape[1]
    top, left = ph // 2, pw // 2
    pad = [(top, ph - top), (left, pw - left)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, pad)


def prepare_inputs(
    image_path: str,
    attention_path: str,
    resize: int | None,
    resize_policy: str,
    smooth_k: int,
    transform: SharpnessTransform,
) -> tuple[np.ndarray, AttentionScoreMatrix]:
    """Load an (image, attention) pair and put both on one pixel grid.

    The resize policy applies identically to both inputs. Grid-sized maps
    (dims differing from the image) are routed through postprocess; maps
    already at image resolution only get the smoothing and transform steps.
    """
    img = io.load_image(image_path)
    attn = io.load_attention_raster(attention_path)
    orig_h, orig_w = img.shape[:2]
    is_grid = attn.shape != (orig_h, orig_w)
    if is_grid and (attn.shape[0] > orig_h or attn.shape[1] > orig_w):
        raise ValueError(
            f"attention {attn.shape} neither matches image {(orig_h, orig_w)} nor is a coarser grid"
        )

    if resize is None:
        canvas_h = content_h = orig_h
        canvas_w = content_w = orig_w
    elif resize_policy == "stretch":
        canvas_h = content_h = resize
        canvas_w = content_w = resize
    elif resize_policy == "longside-pad":
        scale = resize / max(orig_h, orig_w)
        content_h = max(1, round(orig_h * scale))
        content_w = max(1, round(orig_w * scale))
        canvas_h = canvas_w = resize
    else:
        raise ValueError(f"unknown resize policy {resize_policy!r}")

    img = _resize_image(img, content_h, content_w)
    if is_grid:
        scores = postprocess(attn, content_h, content_w, smooth_k=smooth_k, transform=transform)
    else:
        full = resize_attention(attn, content_h, content_w)
        scores = postprocess(full, content_h, content_w, smooth_k=smooth_k, transform=transform)

    if (canvas_h, canvas_w) != (content_h, content_w):
        img = _pad_to(img, canvas_h, canvas_w)
        scores = AttentionScoreMatrix.from_scores(_pad_to(scores.scores, canvas_h, canvas_w))
    return img, scores


# ---------------------------------------------------------------------------
# warp
# ---------------------------------------------------------------------------

def _warp_one(image_path: str, attention_path: str, out_dir: Path, opts: dict) -> None:
    img, scores = prepare_inputs(
        image_path,
        attention_path,
        opts["resize"],
        opts["resize_policy"],
        opts["smooth_k"],
        opts["transform"],
    )
    fld = field_from_attention(scores)
    warped = warp_image(img, fld)
    stem = Path(image_path).stem
    io.save_image_png(out_dir / f"{stem}.warped.png", warped.pixels)
    io.atomic_write_json(out_dir / f"{stem}.field.json", fld.to_json_dict())
    _provenance(
        out_dir,
        stem,
        "warp",
        {k: (v.value if isinstance(v, SharpnessTransform) else v) for k, v in opts.items()},
        [image_path, attention_path],
        [f"{stem}.warped.png", f"{stem}.field.json"],
    )


def cmd_warp(args) -> int:
    cfg = _load_config(args.config)
    images = args.images or cfg.get("images") or []
    attentions = args.attention if args.attention is not None else cfg.get("attentions", [])
    if not images:
        _warn("no input images")
        return EXIT_HARD
    if len(images) != len(attentions):
        _warn(f"{len(images)} images but {len(attentions)} attention maps")
        return EXIT_HARD
    opts = {
        "resize": _opt(args, cfg, "resize", None),
        "resize_policy": _opt(args, cfg, "resize-policy", "stretch"),
        "smooth_k": int(_opt(args, cfg, "smooth-k", 3)),
        "transform": SharpnessTransform(_opt(args, cfg, "transform", "identity")),
    }
    out_dir = _out_dir(args, cfg)
    jobs = int(_opt(args, cfg, "jobs", os.cpu_count() or 1))

    seen_stems = set()
    duplicates = set()
    for path in images:
        stem = Path(path).stem
        if stem in seen_stems:
            duplicates.add(path)
        seen_stems.add(stem)

    failures = 0
    def run(pair):
        image_path, attention_path = pair
        if image_path in duplicates:
            return f"{image_path}: output stem collides with an earlier input"
        try:
            _warp_one(image_path, attention_path, out_dir, opts)
            return None
        except Exception as exc:
            return f"{image_path}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for err in pool.map(run, zip(images, attentions)):
            if err:
                failures += 1
                _warn(err)

    if failures == len(images):
        return EXIT_HARD
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# chain
# ---------------------------------------------------------------------------

class _FileProvider:
    """Serves precomputed per-depth attention maps; raises when exhausted."""

    def __init__(self, paths: list[str], image_shape, smooth_k, transform):
        self.paths = list(paths)
        self.index = 0
        self.shape = image_shape
        self.smooth_k = smooth_k
        self.transform = transform

    def __call__(self, image: np.ndarray) -> AttentionScoreMatrix:
        if self.index >= len(self.paths):
            raise RuntimeError("attention map list exhausted")
        attn = io.load_attention_raster(self.paths[self.index])
        self.index += 1
        return _to_image_grid(attn, self.shape, self.smooth_k, self.transform)


class _CommandProvider:
    """Runs a shell template with {image} and {out} placeholders per request."""

    def __init__(self, template: str, image_shape, smooth_k, transform):
        self.template = template
        self.shape = image_shape
        self.smooth_k = smooth_k
        self.transform = transform

    def __call__(self, image: np.ndarray) -> AttentionScoreMatrix:
        with tempfile.TemporaryDirectory(prefix="attwarp-chain-") as tmp:
            img_path = Path(tmp) / "frame.png"
            out_path = Path(tmp) / "attn.atw1"
            io.save_image_png(img_path, image)
            cmd = [
                part.replace("{image}", str(img_path)).replace("{out}", str(out_path))
                for part in shlex.split(self.template)
            ]
            subprocess.run(cmd, check=True, capture_output=True)
            attn = io.read_atw1(out_path)
        return _to_image_grid(attn, self.shape, self.smooth_k, self.transform)


def _to_image_grid(attn: np.ndarray, shape, smooth_k, transform) -> AttentionScoreMatrix:
    h, w = shape
    if attn.shape != (h, w):
        if attn.shape[0] > h or attn.shape[1] > w:
            attn = resize_attention(attn, h, w)
    return postprocess(attn, h, w, smooth_k=smooth_k, transform=transform)


def cmd_chain(args) -> int:
    cfg = _load_config(args.config)
    image_path = args.image or cfg.get("image")
    if not image_path:
        _warn("chain needs --image")
        return EXIT_HARD
    attentions = args.attention if args.attention is not None else cfg.get("attentions")
    provider_cmd = _opt(args, cfg, "provider-cmd", None)
    if not attentions and not provider_cmd:
        _warn("chain needs --attention maps or --provider-cmd")
        return EXIT_HARD

    smooth_k = int(_opt(args, cfg, "smooth-k", 3))
    transform = SharpnessTransform(_opt(args, cfg, "transform", "identity"))
    config = ChainConfig(
        kl_epsilon=float(_opt(args, cfg, "kl-epsilon", 0.2)),
        max_iterations=int(_opt(args, cfg, "max-iterations", 5)),
    )
    out_dir = _out_dir(args, cfg)

    try:
        img = io.load_image(image_path)
        shape = img.shape[:2]
        if attentions:
            provider = _FileProvider(attentions, shape, smooth_k, transform)
        else:
            provider = _CommandProvider(provider_cmd, shape, smooth_k, transform)
        warped, composed, trace = run_chain(img, provider, config)
    except Exception as exc:
        _warn(f"{image_path}: {exc}")
        return EXIT_HARD

    stem = Path(image_path).stem
    io.save_image_png(out_dir / f"{stem}.chain.png", warped.pixels)
    io.atomic_write_json(out_dir / f"{stem}.chain.field.json", composed.to_json_dict())

    trace_dict = trace.to_json_dict()
    for rec, step in zip(trace_dict["iterations"], trace.steps):
        name = f"{stem}.chain.step{step.depth}.field.json"
        io.atomic_write_json(out_dir / name, step.warp.to_json_dict())
        rec["field"] = name
    io.atomic_write_json(out_dir / f"{stem}.chain.trace.json", trace_dict)

    inputs = [image_path] + (list(attentions[: provider.index]) if attentions else [])
    _provenance(
        out_dir,
        f"{stem}.chain",
        "chain",
        {
            "kl_epsilon": config.kl_epsilon,
            "max_iterations": config.max_iterations,
            "smooth_k": smooth_k,
            "transform": transform.value,
            "provider_cmd": provider_cmd,
        },
        inputs,
        [f"{stem}.chain.png", f"{stem}.chain.field.json", f"{stem}.chain.trace.json"],
    )
    if trace.stop_reason == STOP_PROVIDER:
        _warn(f"{image_path}: provider exhausted at depth {len(trace.steps)}")
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def cmd_metrics(args) -> int:
    cfg = _load_config(args.config)
    annotations = args.annotations or cfg.get("annotations")
    if not annotations:
        _warn("metrics needs --annotations")
        return EXIT_HARD
    out_dir = _out_dir(args, cfg)
    try:
        report = evaluate_annotations(annotations, warn=_warn)
    except OSError as exc:
        _warn(str(exc))
        return EXIT_HARD

    payload = report.to_json_dict()
    payload["provenance"] = {
        "tool": "attwarp",
        "version": __version__,
        "command": "metrics",
        "inputs": {str(annotations): io.sha256_file(annotations)},
    }
    io.atomic_write_json(out_dir / "metrics.json", payload)
    io.atomic_write_text(out_dir / "metrics.txt", report.to_text_table())
    print(report.to_text_table(), end="")

    if report.n_samples == 0:
        return EXIT_HARD
    return EXIT_PARTIAL if report.skipped else EXIT_OK


# ---------------------------------------------------------------------------
# export-targets
# ---------------------------------------------------------------------------

def cmd_export_targets(args) -> int:
    cfg = _load_config(args.config)
    attentions = args.attention if args.attention is not None else cfg.get("attentions", [])
    if not attentions:
        _warn("export-targets needs --attention maps")
        return EXIT_HARD
    out_dir = _out_dir(args, cfg)
    failures = 0
    for path in attentions:
        try:
            attn = io.load_attention_raster(path)
            mx, my = marginals(attn)
            total_x = float(mx.values.sum())
            total_y = float(my.values.sum())
            if total_x <= 0 or total_y <= 0:
                raise ValueError("attention map has zero total mass")
            stem = Path(path).stem
            out_name = f"{stem}.targets.json"
            io.atomic_write_json(
                out_dir / out_name,
                {
                    "mx": (mx.values / total_x).tolist(),
                    "my": (my.values / total_y).tolist(),
                },
            )
            _provenance(out_dir, f"{stem}.targets", "export-targets", {}, [path], [out_name])
        except Exception as exc:
            failures += 1
            _warn(f"{path}: {exc}")
    if failures == len(attentions):
        return EXIT_HARD
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# aggregate
# ---------------------------------------------------------------------------

def cmd_aggregate(args) -> int:
    cfg = _load_config(args.config)
    raw_path = args.raw or cfg.get("raw")
    sidecar = args.sidecar or cfg.get("sidecar")
    out_path = args.out or cfg.get("out")
    if not (raw_path and sidecar and out_path):
        _warn("aggregate needs --raw, --sidecar and --out")
        return EXIT_HARD

    preset = _opt(args, cfg, "preset", None)
    layers = args.layers if args.layers is not None else cfg.get("layers")
    if preset:
        layers = sorted(LAYER_PRESETS[preset]["layers"])
    if not layers:
        _warn("aggregate needs --layers or --preset")
        return EXIT_HARD

    target_h = _opt(args, cfg, "target-h", None)
    target_w = _opt(args, cfg, "target-w", None)
    if (target_h is None) != (target_w is None):
        _warn("--target-h and --target-w go together")
        return EXIT_HARD

    try:
        raw = RawAttentionTensor.load(raw_path, sidecar)
        grid = aggregate(raw, [int(i) for i in layers])
        if target_h is not None:
            scores = postprocess(
                grid,
                int(target_h),
                int(target_w),
                smooth_k=int(_opt(args, cfg, "smooth-k", 3)),
                transform=SharpnessTransform(_opt(args, cfg, "transform", "identity")),
            )
            result = scores.scores
        else:
            result = grid
        io.write_atw1(out_path, result)
        out_dir = Path(out_path).parent
        _provenance(
            out_dir,
            Path(out_path).stem,
            "aggregate",
            {
                "layers": [int(i) for i in layers],
                "preset": preset,
                "target_h": target_h,
                "target_w": target_w,
            },
            [raw_path, sidecar],
            [Path(out_path).name],
        )
    except Exception as exc:
        _warn(str(exc))
        return EXIT_HARD
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attwarp",
        description="Attention-guided rectilinear image warping",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the flags")
    common.add_argument("--out-dir", dest="out_dir", help="output directory")

    p_warp = sub.add_parser("warp", parents=[common], help="warp images by their attention maps")
    p_warp.add_argument("images", nargs="*", help="input images (PNG/JPEG)")
    p_warp.add_argument("--attention", nargs="*", help="one map per image (.atw1 or grayscale .png)")
    p_warp.add_argument("--transform", choices=[t.value for t in SharpnessTransform])
    p_warp.add_argument("--smooth-k", dest="smooth_k", type=int, help="odd box-smoothing size, 1 disables")
    p_warp.add_argument("--resize", type=int, help="target size for the resize policy")
    p_warp.add_argument("--resize-policy", dest="resize_policy", choices=["stretch", "longside-pad"])
    p_warp.add_argument("--jobs", type=int, help="parallel workers (default: all cores)")
    p_warp.set_defaults(func=cmd_warp)

    p_chain = sub.add_parser("chain", parents=[common], help="iterative warping with KL stopping")
    p_chain.add_argument("--image", help="input image")
    p_chain.add_argument("--attention", nargs="*", help="precomputed per-depth maps, in order")
    p_chain.add_argument("--provider-cmd", dest="provider_cmd", help="command template with {image} and {out}")
    p_chain.add_argument("--kl-epsilon", dest="kl_epsilon", type=float)
    p_chain.add_argument("--max-iterations", dest="max_iterations", type=int)
    p_chain.add_argument("--transform", choices=[t.value for t in SharpnessTransform])
    p_chain.add_argument("--smooth-k", dest="smooth_k", type=int)
    p_chain.set_defaults(func=cmd_chain)

    p_metrics = sub.add_parser("metrics", parents=[common], help="localization metrics over an annotation file")
    p_metrics.add_argument("--annotations", help="JSON lines with image_path, attention_path, boxes")
    p_metrics.set_defaults(func=cmd_metrics)

    p_export = sub.add_parser("export-targets", parents=[common], help="normalized axis marginals as JSON")
    p_export.add_argument("--attention", nargs="*", help="attention maps to export")
    p_export.set_defaults(func=cmd_export_targets)

    p_agg = sub.add_parser("aggregate", parents=[common], help="raw attention stack -> score matrix")
    p_agg.add_argument("--raw", help="ATW1 stack of per-(layer, head) matrices")
    p_agg.add_argument("--sidecar", help="JSON sidecar with layers/heads/out_tokens/grid dims")
    p_agg.add_argument("--layers", nargs="*", type=int, help="layer ids to average")
    p_agg.add_argument("--preset", choices=sorted(LAYER_PRESETS))
    p_agg.add_argument("--target-h", dest="target_h", type=int)
    p_agg.add_argument("--target-w", dest="target_w", type=int)
    p_agg.add_argument("--smooth-k", dest="smooth_k", type=int)
    p_agg.add_argument("--transform", choices=[t.value for t in SharpnessTransform])
    p_agg.add_argument("--out", help="output .atw1 path")
    p_agg.set_defaults(func=cmd_aggregate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:  # pragma: no cover
        return EXIT_HARD


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
