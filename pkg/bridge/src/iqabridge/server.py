"""Request loop and the two model backends (stub and ONNX checkpoint).

Protocol, one JSON object per line, answered in order with matching ids:

    {"id": 7, "op": "score", "image": "img.png"}
        -> {"id": 7, "score": 3.25}
    {"id": 8, "op": "features", "image": "img.png", "out": "img.fmx"}
        -> {"id": 8, "out": "img.fmx"}

A line that cannot be parsed into a request yields {"id": -1, "error": ...}
and the loop keeps serving; a request that fails yields an error response
with its own id.  EOF on stdin shuts the server down cleanly.
"""

import argparse
import json
import sys
from typing import IO

import numpy as np
from PIL import Image, UnidentifiedImageError

from iqabridge.fmx import write_feature_matrix

__all__ = ["StubModel", "OnnxModel", "load_image", "serve", "main"]


def load_image(path: str) -> np.ndarray:
    """Decode an image file to a float32 (H, W, 3) array in [0, 1]."""
    try:
        with Image.open(path) as img:
            if img.mode in ("I;16", "I"):
                arr = np.asarray(img, dtype=np.float32) / 65535.0
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise RuntimeError(f"cannot decode image {path!r}: {exc}") from exc
    return np.clip(arr, 0.0, 1.0)


def _patch_stats(pixels: np.ndarray, stride: int) -> np.ndarray:
    """Deterministic per-patch statistics standing in for a headless backbone.

    Channels: mean R/G/B, luma std/min/max, mean absolute horizontal and
    vertical luma differences.  Grid is floor(H/stride) x floor(W/stride).
    """
    h, w = pixels.shape[:2]
    rows, cols = h // stride, w // stride
    if rows < 1 or cols < 1:
        raise RuntimeError(f"image {h}x{w} is smaller than one {stride}px patch")
    crop = pixels[: rows * stride, : cols * stride]
    patches = crop.reshape(rows, stride, cols, stride, 3).transpose(0, 2, 1, 3, 4)
    luma = (
        0.2126 * patches[..., 0] + 0.7152 * patches[..., 1] + 0.0722 * patches[..., 2]
    )
    dx = np.abs(np.diff(luma, axis=3))
    dy = np.abs(np.diff(luma, axis=2))
    feats = np.stack(
        [
            patches[..., 0].mean(axis=(2, 3)),
            patches[..., 1].mean(axis=(2, 3)),
            patches[..., 2].mean(axis=(2, 3)),
            luma.std(axis=(2, 3)),
            luma.min(axis=(2, 3)),
            luma.max(axis=(2, 3)),
            dx.mean(axis=(2, 3)),
            dy.mean(axis=(2, 3)),
        ],
        axis=-1,
    )
    return feats.astype(np.float32)


class StubModel:
    """Constant-score model with the patch-statistics feature extractor."""

    def __init__(self, value: float, stride: int):
        if not np.isfinite(value):
            raise RuntimeError(f"stub score must be finite, got {value!r}")
        self.value = float(value)
        self.stride = stride

    def score(self, image_path: str) -> float:
        load_image(image_path)  # the contract still demands a readable image
        return self.value

    def features(self, image_path: str) -> np.ndarray:
        return _patch_stats(load_image(image_path), self.stride)


class OnnxModel:
    """Wraps an ONNX checkpoint taking one NCHW float32 input in [0, 1].

    ``score`` is the mean of the first output; ``features`` expects a 4-D
    (1, C, h, w) output and emits it as an (h, w, C) matrix.
    """

    def __init__(self, checkpoint: str, stride: int):
        try:
            import onnxruntime
        except ImportError as exc:
            raise RuntimeError(
                "onnxruntime is required for --checkpoint; install "
                "iqabridge[onnx] or use --stub"
            ) from exc
        try:
            self.session = onnxruntime.InferenceSession(
                checkpoint, providers=["CPUExecutionProvider"]
            )
        except Exception as exc:
            raise RuntimeError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
        self.input_name = self.session.get_inputs()[0].name
        self.stride = stride

    def _run(self, image_path: str) -> list:
        pixels = load_image(image_path)
        batch = pixels.transpose(2, 0, 1)[None].astype(np.float32)
        return self.session.run(None, {self.input_name: batch})

    def score(self, image_path: str) -> float:
        value = float(np.mean(self.session_output(image_path)))
        if not np.isfinite(value):
            raise RuntimeError("model produced a non-finite score")
        return value

    def session_output(self, image_path: str) -> np.ndarray:
        return np.asarray(self._run(image_path)[0])

    def features(self, image_path: str) -> np.ndarray:
        out = self.session_output(image_path)
        if out.ndim != 4 or out.shape[0] != 1:
            raise RuntimeError(
                f"features need a (1, C, h, w) model output, got shape {out.shape}"
            )
        return out[0].transpose(1, 2, 0).astype(np.float32)


def _handle(model, request: dict) -> dict:
    rid = request["id"]
    op = request.get("op")
    try:
        if op == "score":
            return {"id": rid, "score": model.score(str(request["image"]))}
        if op == "features":
            out_path = request.get("out")
            if not isinstance(out_path, str) or not out_path:
                raise RuntimeError("features request needs an 'out' path")
            write_feature_matrix(model.features(str(request["image"])), out_path)
            return {"id": rid, "out": out_path}
        raise RuntimeError(f"unknown op {op!r}")
    except KeyError as exc:
        return {"id": rid, "error": f"request is missing field {exc}"}
    except Exception as exc:
        return {"id": rid, "error": str(exc)}


def serve(model, stdin: IO[str] | None = None, stdout: IO[str] | None = None) -> int:
    """Answer requests line by line until EOF; never dies on a bad request."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    for raw in stdin:
        raw = raw.strip()
        if not raw:
            continue
        try:
            request = json.loads(raw)
            if not isinstance(request, dict) or not isinstance(request.get("id"), int):
                raise ValueError("request must be an object with an integer 'id'")
        except ValueError as exc:
            response = {"id": -1, "error": f"malformed request line: {exc}"}
        else:
            response = _handle(model, request)
        print(json.dumps(response, separators=(",", ":")), file=stdout, flush=True)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="iqabridge",
        description="serve quality scores and FMX feature matrices over stdio",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--stub", type=float, metavar="SCORE",
                        help="serve this constant score; no model runtime needed")
    source.add_argument("--checkpoint", metavar="PATH",
                        help="ONNX model to host (needs onnxruntime)")
    parser.add_argument("--stride", type=int, default=32,
                        help="patch size of the stub feature grid (default 32)")
    args = parser.parse_args(argv)
    if args.stride < 1:
        parser.error("--stride must be positive")

    try:
        if args.stub is not None:
            model = StubModel(args.stub, args.stride)
        else:
            model = OnnxModel(args.checkpoint, args.stride)
    except RuntimeError as exc:
        print(f"iqabridge: error: {exc}", file=sys.stderr)
        return 2
    return serve(model)


if __name__ == "__main__":
    sys.exit(main())
