"""End-to-end protocol behavior of the server subprocess."""

import json
import struct
import subprocess
import sys
from importlib.util import find_spec

import numpy as np
import pytest
from PIL import Image


def _write_png(path, height, width, seed=0):
    rng = np.random.default_rng(seed)
    Image.fromarray(rng.integers(0, 256, (height, width, 3), dtype=np.uint8)).save(path)


def _run(args, lines):
    """Send request lines, close stdin, return (response dicts, exit status)."""
    proc = subprocess.run(
        [sys.executable, "-m", "iqabridge", *args],
        input="".join(line + "\n" for line in lines),
        capture_output=True,
        text=True,
        timeout=60,
    )
    responses = [json.loads(line) for line in proc.stdout.splitlines() if line]
    return responses, proc.returncode


@pytest.fixture(scope="module")
def small_png(tmp_path_factory):
    path = tmp_path_factory.mktemp("img") / "small.png"
    _write_png(path, 64, 96)
    return str(path)


class TestScore:
    def test_constant_stub_score(self, small_png):
        reqs = [
            json.dumps({"id": 1, "op": "score", "image": small_png}),
            json.dumps({"id": 2, "op": "score", "image": small_png}),
        ]
        responses, status = _run(["--stub", "3.25"], reqs)
        assert status == 0
        assert responses == [{"id": 1, "score": 3.25}, {"id": 2, "score": 3.25}]

    def test_missing_image_is_request_error(self, tmp_path):
        req = json.dumps({"id": 5, "op": "score", "image": str(tmp_path / "gone.png")})
        responses, status = _run(["--stub", "1"], [req])
        assert status == 0
        assert responses[0]["id"] == 5
        assert "error" in responses[0]


class TestFeatures:
    def test_grid_dimensions_at_stride_32(self, tmp_path):
        image = tmp_path / "big.png"
        _write_png(image, 768, 1024, seed=1)
        out = tmp_path / "big.fmx"
        req = json.dumps(
            {"id": 3, "op": "features", "image": str(image), "out": str(out)}
        )
        responses, status = _run(["--stub", "2"], [req])
        assert status == 0
        assert responses == [{"id": 3, "out": str(out)}]
        header = out.read_bytes()[:16]
        assert header[:4] == b"FMX1"
        rows, cols, channels = struct.unpack("<3I", header[4:])
        assert (rows, cols, channels) == (24, 32, 8)

    def test_stride_flag_changes_grid(self, small_png, tmp_path):
        out = tmp_path / "s.fmx"
        req = json.dumps(
            {"id": 1, "op": "features", "image": small_png, "out": str(out)}
        )
        responses, _ = _run(["--stub", "2", "--stride", "16"], [req])
        assert responses[0] == {"id": 1, "out": str(out)}
        rows, cols, _ = struct.unpack("<3I", out.read_bytes()[4:16])
        assert (rows, cols) == (4, 6)

    def test_deterministic_output_bytes(self, small_png, tmp_path):
        outs = [tmp_path / "a.fmx", tmp_path / "b.fmx"]
        reqs = [
            json.dumps({"id": i, "op": "features", "image": small_png, "out": str(o)})
            for i, o in enumerate(outs, start=1)
        ]
        _, status = _run(["--stub", "2"], reqs)
        assert status == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_undersized_image_is_request_error(self, tmp_path):
        image = tmp_path / "tiny.png"
        _write_png(image, 16, 16)
        req = json.dumps(
            {"id": 9, "op": "features", "image": str(image), "out": str(tmp_path / "t.fmx")}
        )
        responses, status = _run(["--stub", "2"], [req])
        assert status == 0
        assert responses[0]["id"] == 9 and "error" in responses[0]

    def test_missing_out_path_is_request_error(self, small_png):
        req = json.dumps({"id": 4, "op": "features", "image": small_png})
        responses, _ = _run(["--stub", "2"], [req])
        assert responses[0]["id"] == 4 and "error" in responses[0]


class TestLoop:
    def test_malformed_line_recovery(self, small_png):
        lines = [
            "this is not json",
            json.dumps({"id": 7, "op": "score", "image": small_png}),
        ]
        responses, status = _run(["--stub", "1.5"], lines)
        assert status == 0
        assert responses[0]["id"] == -1 and "error" in responses[0]
        assert responses[1] == {"id": 7, "score": 1.5}

    def test_non_object_and_bad_id_lines(self, small_png):
        lines = [
            json.dumps([1, 2, 3]),
            json.dumps({"op": "score", "image": small_png, "id": "seven"}),
            json.dumps({"id": 2, "op": "score", "image": small_png}),
        ]
        responses, status = _run(["--stub", "1"], lines)
        assert status == 0
        assert responses[0]["id"] == -1
        assert responses[1]["id"] == -1
        assert responses[2] == {"id": 2, "score": 1.0}

    def test_unknown_op_keeps_id(self, small_png):
        lines = [
            json.dumps({"id": 11, "op": "explode", "image": small_png}),
            json.dumps({"id": 12, "op": "score", "image": small_png}),
        ]
        responses, status = _run(["--stub", "1"], lines)
        assert status == 0
        assert responses[0]["id"] == 11 and "error" in responses[0]
        assert responses[1]["id"] == 12

    def test_eof_exits_cleanly(self):
        responses, status = _run(["--stub", "1"], [])
        assert responses == [] and status == 0

    def test_responses_keep_request_order(self, small_png, tmp_path):
        lines = []
        for i in range(1, 21):
            if i % 3 == 0:
                lines.append(json.dumps({
                    "id": i, "op": "features", "image": small_png,
                    "out": str(tmp_path / f"{i}.fmx"),
                }))
            else:
                lines.append(json.dumps({"id": i, "op": "score", "image": small_png}))
        responses, status = _run(["--stub", "4"], lines)
        assert status == 0
        assert [r["id"] for r in responses] == list(range(1, 21))


class TestStartup:
    def test_requires_a_model_source(self):
        proc = subprocess.run(
            [sys.executable, "-m", "iqabridge"], capture_output=True, text=True
        )
        assert proc.returncode == 2

    @pytest.mark.skipif(find_spec("onnxruntime") is not None, reason="onnxruntime present")
    def test_checkpoint_without_runtime_fails_fast(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "iqabridge", "--checkpoint", str(tmp_path / "m.onnx")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "onnxruntime" in proc.stderr

    def test_non_finite_stub_rejected(self):
        proc = subprocess.run(
            [sys.executable, "-m", "iqabridge", "--stub", "nan"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "finite" in proc.stderr
