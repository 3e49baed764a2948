"""The serving loop: request dispatch, stdio mode, and a forking TCP mode.

One request is in flight per connection, by construction: the handler reads
a line, answers it, then reads the next. Connections never share mutable
state; the TCP server forks one worker process per connection, and each
connection owns a private ModelStore.
"""

import json
import socketserver
import sys

from .backends import BackendError, ModelStore, make_backend
from .protocol import (
    PROTOCOL_VERSION,
    BadMessage,
    binary_labels,
    decode_line,
    encode_message,
    floats_out,
    matrix_field,
    vector_field,
)


class ConnectionHandler:
    """Protocol-v1 dispatcher for a single connection."""

    def __init__(self, backend, max_models: int):
        self.backend = backend
        self.store = ModelStore(max_models)

    def handle_line(self, line: str) -> dict:
        """One request line to one reply dict; never raises."""
        try:
            msg = decode_line(line)
            cmd = msg.get("cmd")
            if cmd == "hello":
                return self._hello(msg)
            if cmd == "fit":
                return self._fit(msg)
            if cmd == "predict_proba":
                return self._predict(msg)
            if cmd == "free":
                return self._free(msg)
            if cmd == "estimate_ate":
                return self._estimate_ate(msg)
            return {"ok": False, "error": f"unknown command {cmd!r}"}
        except (BadMessage, BackendError, KeyError) as exc:
            detail = exc.args[0] if exc.args else str(exc)
            return {"ok": False, "error": str(detail)}
        except Exception as exc:  # noqa: BLE001 - the server must survive
            return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}

    def _hello(self, msg):
        v = msg.get("v")
        if v != PROTOCOL_VERSION:
            return {"ok": False, "error": f"unsupported protocol version {v!r}"}
        return {
            "v": PROTOCOL_VERSION,
            "ok": True,
            "capabilities": list(self.backend.capabilities),
        }

    def _fit(self, msg):
        if "fit_predict" not in self.backend.capabilities:
            return {"ok": False,
                    "error": f"backend {self.backend.name} does not fit models"}
        X = matrix_field(msg, "features")
        y = binary_labels(vector_field(msg, "labels", rows=X.shape[0]), "labels")
        model = self.backend.fit(X, y)
        return {"ok": True, "model_id": self.store.put(model)}

    def _predict(self, msg):
        model_id = msg.get("model_id")
        if not isinstance(model_id, str):
            raise BadMessage("missing field 'model_id'")
        model = self.store.get(model_id)
        X = matrix_field(msg, "features")
        probs = floats_out(self.backend.predict_proba(model, X))
        if len(probs) != X.shape[0]:
            return {"ok": False,
                    "error": f"backend returned {len(probs)} probabilities "
                             f"for {X.shape[0]} rows"}
        return {"ok": True, "probs": probs}

    def _free(self, msg):
        model_id = msg.get("model_id")
        if not isinstance(model_id, str):
            raise BadMessage("missing field 'model_id'")
        self.store.free(model_id)
        return {"ok": True}

    def _estimate_ate(self, msg):
        if "estimate_ate" not in self.backend.capabilities:
            return {"ok": False,
                    "error": f"backend {self.backend.name} does not estimate "
                             "effects directly; use fit/predict_proba"}
        z = matrix_field(msg, "features")
        x = binary_labels(vector_field(msg, "treatment", rows=z.shape[0]),
                          "treatment")
        y = vector_field(msg, "outcome", rows=z.shape[0])
        ate, lo, hi = self.backend.estimate_ate(z, x, y)
        out = floats_out([ate, lo, hi])
        return {"ok": True, "ate": out[0], "lo": out[1], "hi": out[2]}


def _serve_stream(handler: ConnectionHandler, reader, writer) -> None:
    for line in reader:
        if not line.strip():
            continue
        reply = handler.handle_line(line)
        writer.write(encode_message(reply))
        writer.flush()


def serve(cfg) -> None:
    """Answer protocol-v1 requests until the peer disconnects (stdio) or the
    process is terminated (socket mode)."""
    backend = make_backend(cfg)
    print("pfn-bridge " + json.dumps(cfg.provenance(), sort_keys=True),
          file=sys.stderr, flush=True)

    if cfg.listen == "stdio":
        handler = ConnectionHandler(backend, cfg.max_models)
        _serve_stream(handler, sys.stdin, sys.stdout)
        return

    host, port = cfg.host_port

    class _Handler(socketserver.StreamRequestHandler):
        def handle(self):
            handler = ConnectionHandler(backend, cfg.max_models)
            reader = (raw.decode("utf-8") for raw in self.rfile)

            class _W:
                def write(inner, text):
                    self.wfile.write(text.encode("utf-8"))

                def flush(inner):
                    self.wfile.flush()

            try:
                _serve_stream(handler, reader, _W())
            except (BrokenPipeError, ConnectionResetError):
                pass

    class _Server(socketserver.ForkingTCPServer):
        allow_reuse_address = True

    with _Server((host, port), _Handler) as srv:
        actual = srv.server_address
        print(f"pfn-bridge listening on {actual[0]}:{actual[1]}",
              file=sys.stderr, flush=True)
        srv.serve_forever()
