"""Line-delimited JSON bridge between quality models and the analysis toolkit.

The server reads one JSON request per stdin line and answers with exactly one
JSON line per request, in order.  It can run fully self-contained (``--stub``)
or host an ONNX checkpoint (``--checkpoint``) when onnxruntime is installed.
"""

from iqabridge.fmx import write_feature_matrix
from iqabridge.server import main, serve

__version__ = "0.1.0"

__all__ = ["main", "serve", "write_feature_matrix", "__version__"]
