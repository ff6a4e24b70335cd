"""Client for external model servers speaking line-delimited JSON over stdio.

Protocol: one request per line, one response line per request, in request
order.  Requests are {"id": int, "op": "score"|"features", "image": path}
plus "out" for features; responses are {"id", "score"} or {"id", "out"} or
{"id", "error"}.  A server must answer a malformed request line with
{"id": -1, "error": ...} and keep serving.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from qregion.features import export_feature_matrix, import_feature_matrix

__all__ = ["BridgeError", "BridgeClient", "verify_protocol"]


class BridgeError(RuntimeError):
    """Server unavailable, protocol violation, or error response."""


class BridgeClient:
    """Drives one server subprocess; requests are answered in order."""

    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise BridgeError("empty bridge command")
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"cannot start bridge {argv[0]!r}: {exc}") from exc
        self._next_id = 0

    def _round_trip(self, request: dict) -> dict:
        line = json.dumps(request, separators=(",", ":"))
        proc = self._proc
        if proc.poll() is not None:
            raise BridgeError(f"bridge exited with status {proc.returncode}")
        try:
            proc.stdin.write(line + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError(f"bridge closed its stdin: {exc}") from exc
        reply = proc.stdout.readline()
        if not reply:
            raise BridgeError("bridge closed its stdout mid-request")
        try:
            payload = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"bridge sent invalid JSON: {reply!r}") from exc
        if not isinstance(payload, dict):
            raise BridgeError(f"bridge sent a non-object response: {reply!r}")
        if payload.get("id") != request["id"]:
            raise BridgeError(
                f"response id {payload.get('id')!r} does not match request id "
                f"{request['id']}"
            )
        if "error" in payload:
            raise BridgeError(f"bridge error: {payload['error']}")
        return payload

    def _fresh_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def score(self, image_path: str) -> float:
        """Predicted quality score for the image at `image_path`."""
        payload = self._round_trip(
            {"id": self._fresh_id(), "op": "score", "image": str(image_path)}
        )
        score = payload.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise BridgeError(f"score response lacks a numeric score: {payload!r}")
        if not np.isfinite(score):
            raise BridgeError(f"bridge returned non-finite score {score!r}")
        return float(score)

    def features(self, image_path: str, out_path: str) -> str:
        """Ask the server to write the image's feature matrix; returns its path."""
        payload = self._round_trip(
            {
                "id": self._fresh_id(),
                "op": "features",
                "image": str(image_path),
                "out": str(out_path),
            }
        )
        out = payload.get("out")
        if not isinstance(out, str) or not out:
            raise BridgeError(f"features response lacks an output path: {payload!r}")
        return out

    def close(self) -> int:
        """Signal EOF and wait for the server to exit; returns its status."""
        proc = self._proc
        if proc.stdin and not proc.stdin.closed:
            try:
                proc.stdin.close()
            except OSError:
                pass
        try:
            return proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
            raise BridgeError("bridge did not exit after EOF")

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc_info) -> None:
        try:
            self.close()
        except BridgeError:
            if exc_info[0] is None:
                raise


def _write_test_image(path: Path) -> None:
    rng = np.random.default_rng(1234)
    pixels = (rng.random((64, 96, 3)) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n96 64\n255\n")
        fh.write(pixels.tobytes())


def verify_protocol(command: str | Sequence[str], image_path: str | None = None) -> None:
    """Contract test for a bridge server; raises BridgeError on any violation.

    Checks: numeric score responses with matching ids, a features response
    whose file loads and re-exports byte-identically, recovery after a
    malformed request line (id -1 error, loop keeps serving), and clean exit
    on EOF.
    """
    with tempfile.TemporaryDirectory(prefix="qregion-bridge-") as td:
        tdir = Path(td)
        if image_path is None:
            image_path = str(tdir / "probe.ppm")
            _write_test_image(Path(image_path))

        client = BridgeClient(command)
        try:
            first = client.score(image_path)
            second = client.score(image_path)
            if first != second:
                raise BridgeError(
                    f"scores for the same image differ: {first} vs {second}"
                )

            fmx_path = client.features(image_path, str(tdir / "probe.fmx"))
            if not Path(fmx_path).is_file():
                raise BridgeError(f"features response names a missing file {fmx_path!r}")
            matrix = import_feature_matrix(fmx_path)
            export_feature_matrix(matrix, tdir / "echo.fmx")
            if (tdir / "echo.fmx").read_bytes() != Path(fmx_path).read_bytes():
                raise BridgeError("feature file does not round-trip byte-identically")

            proc = client._proc
            proc.stdin.write("this is not json\n")
            proc.stdin.flush()
            reply = proc.stdout.readline()
            if not reply:
                raise BridgeError("server died on a malformed request line")
            try:
                payload = json.loads(reply)
            except json.JSONDecodeError as exc:
                raise BridgeError(f"malformed-line response is not JSON: {reply!r}") from exc
            if payload.get("id") != -1 or "error" not in payload:
                raise BridgeError(
                    f"malformed line must yield an id -1 error, got {reply!r}"
                )

            client.score(image_path)  # loop must still be alive
        except BaseException:
            try:
                client.close()
            except BridgeError:
                pass
            raise
        status = client.close()
        if status != 0:
            raise BridgeError(f"server exited with status {status} after EOF")
