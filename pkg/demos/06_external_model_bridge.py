"""Driving an external scoring process over the line-delimited JSON protocol.

Any executable that answers {"id", "op", "image", "out"?} requests on stdin
can stand in for the built-in predictor.  Here the companion `iqabridge`
stub plays that role; a real deployment would point it at an actual
checkpoint instead.  Skips cleanly when iqabridge is not installed.
"""

import sys
import tempfile
from importlib.util import find_spec
from pathlib import Path

from qregion.bridge import BridgeClient, verify_protocol
from qregion.dataio import encode_image
from qregion.features import import_feature_matrix
from qregion.synthetic import generate_image


def main():
    if find_spec("iqabridge") is None:
        print("iqabridge is not installed; run `pip install -e bridge/` first")
        return

    command = [sys.executable, "-m", "iqabridge", "--stub", "3.25"]
    print("contract test (ids, ordering, FMX round trip, malformed-line recovery)...")
    verify_protocol(command)
    print("passed\n")

    with tempfile.TemporaryDirectory() as td:
        image_path = Path(td) / "demo.png"
        encode_image(generate_image(seed=31, height=64, width=96), image_path)
        with BridgeClient(command) as client:
            print(f"score({image_path.name}) -> {client.score(image_path)}")
            fmx_path = client.features(image_path, str(Path(td) / "demo.fmx"))
            features = import_feature_matrix(fmx_path)
            print(
                f"features -> {features.rows}x{features.cols}x{features.channels} "
                f"matrix from the server's own extractor"
            )
    print("\nCLI equivalent: qregion importance <images...> "
          "--predictor \"bridge:iqabridge --stub 3.25\"")


if __name__ == "__main__":
    main()
