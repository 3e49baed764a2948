"""Model/ATE server speaking protocol v1 over stdio or a local socket.

Backends: "tabpfn" (outcome/propensity classifier), "causalpfn" (direct ATE
with native credible intervals), and "reference-logistic" (a self-contained
IRLS logistic used for cross-implementation protocol conformance checks).
"""

from .config import ServerConfig
from .protocol import decode_line, encode_message
from .server import serve

__version__ = "0.1.0"

__all__ = ["ServerConfig", "decode_line", "encode_message", "serve"]
