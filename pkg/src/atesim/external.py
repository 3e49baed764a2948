"""Client for external model servers speaking protocol v1.

Protocol v1 is line-delimited JSON over a local socket or a stdio pipe:

    -> {"v":1,"cmd":"hello"}                                  <- {"v":1,"ok":true,"capabilities":[...]}
    -> {"cmd":"fit","model":"default","features":[[...]],"labels":[...]}
                                                              <- {"ok":true,"model_id":"m1"}
    -> {"cmd":"predict_proba","model_id":"m1","features":[[...]]}
                                                              <- {"ok":true,"probs":[...]}
    -> {"cmd":"free","model_id":"m1"}                         <- {"ok":true}
    -> {"cmd":"estimate_ate","features":[[...]],"treatment":[...],"outcome":[...]}
                                                              <- {"ok":true,"ate":r,"lo":r,"hi":r}

Errors come back as {"ok":false,"error":"..."}. Numbers are serialized as
decimal with at least 15 significant digits (json repr gives 17). Requests
within a connection are strictly serialized; concurrent callers should use a
connection pool.

Endpoints: "stdio:<command line>" spawns the server as a subprocess and talks
over its stdin/stdout; "tcp:HOST:PORT" (or plain "HOST:PORT") connects a
socket.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import threading

import numpy as np

from .errors import FitError, ProtocolError

PROTOCOL_VERSION = 1


def _to_jsonable(arr):
    return np.asarray(arr, dtype=float).tolist()


class Session:
    """One protocol connection; requests are serialized by an internal lock."""

    def __init__(self, endpoint: str, timeout: float | None = None):
        self.endpoint = endpoint
        self._lock = threading.Lock()
        self._proc = None
        self._sock = None
        if endpoint.startswith("stdio:"):
            cmd = shlex.split(endpoint[len("stdio:"):])
            if not cmd:
                raise ProtocolError("stdio endpoint has no command")
            self._proc = subprocess.Popen(
                cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
            self._reader = self._proc.stdout
            self._writer = self._proc.stdin
        else:
            addr = endpoint[len("tcp:"):] if endpoint.startswith("tcp:") else endpoint
            host, _, port = addr.rpartition(":")
            if not host or not port.isdigit():
                raise ProtocolError(f"bad endpoint {endpoint!r}; want stdio:CMD or tcp:HOST:PORT")
            try:
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
            except OSError as exc:
                raise ProtocolError(f"cannot connect to {endpoint}: {exc}") from exc
            self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")
            self._writer = self._sock.makefile("w", encoding="utf-8", newline="\n")
        self.capabilities = self._hello()

    def _hello(self):
        reply = self.request({"v": PROTOCOL_VERSION, "cmd": "hello"})
        if reply.get("v") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: server spoke v={reply.get('v')!r}, want {PROTOCOL_VERSION}"
            )
        return tuple(reply.get("capabilities", ()))

    def request(self, message: dict) -> dict:
        with self._lock:
            line = json.dumps(message)
            try:
                self._writer.write(line + "\n")
                self._writer.flush()
                raw = self._reader.readline()
            except (BrokenPipeError, OSError, ValueError) as exc:
                raise ProtocolError(f"connection to {self.endpoint} failed: {exc}") from exc
        if not raw:
            raise ProtocolError(f"server at {self.endpoint} closed the connection")
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed server reply: {raw!r}") from exc
        if not isinstance(reply, dict) or "ok" not in reply:
            raise ProtocolError(f"malformed server reply: {raw!r}")
        return reply

    def fit(self, features, labels) -> str:
        reply = self.request({
            "cmd": "fit",
            "model": "default",
            "features": _to_jsonable(features),
            "labels": _to_jsonable(labels),
        })
        if not reply["ok"]:
            raise FitError(f"server fit failed: {reply.get('error', '<no message>')}")
        model_id = reply.get("model_id")
        if not isinstance(model_id, str):
            raise ProtocolError(f"fit reply lacks model_id: {reply!r}")
        return model_id

    def predict_proba(self, model_id: str, features) -> np.ndarray:
        rows = len(features)
        reply = self.request({
            "cmd": "predict_proba",
            "model_id": model_id,
            "features": _to_jsonable(features),
        })
        if not reply["ok"]:
            raise FitError(f"server predict failed: {reply.get('error', '<no message>')}")
        probs = np.asarray(reply.get("probs", ()), dtype=float)
        if probs.shape != (rows,):
            raise ProtocolError(f"predict_proba returned {probs.shape[0] if probs.ndim else 0} "
                                f"probabilities for {rows} rows")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ProtocolError("server returned probabilities outside [0,1]")
        return probs

    def free(self, model_id: str) -> None:
        reply = self.request({"cmd": "free", "model_id": model_id})
        if not reply["ok"]:
            raise ProtocolError(f"free failed: {reply.get('error', '<no message>')}")

    def estimate_ate(self, z, x, y):
        if "estimate_ate" not in self.capabilities:
            raise ProtocolError(f"server at {self.endpoint} lacks the estimate_ate capability")
        reply = self.request({
            "cmd": "estimate_ate",
            "features": _to_jsonable(z),
            "treatment": _to_jsonable(x),
            "outcome": _to_jsonable(y),
        })
        if not reply["ok"]:
            raise ProtocolError(f"server estimate_ate failed: {reply.get('error', '<no message>')}")
        try:
            ate, lo, hi = float(reply["ate"]), float(reply["lo"]), float(reply["hi"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed estimate_ate reply: {reply!r}") from exc
        if lo > hi:
            raise ProtocolError(f"server interval out of order: [{lo}, {hi}]")
        return ate, lo, hi

    def close(self) -> None:
        try:
            if self._proc is not None:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            if self._sock is not None:
                self._reader.close()
                self._writer.close()
                self._sock.close()
        except Exception:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_session(endpoint: str, timeout: float | None = None) -> Session:
    return Session(endpoint, timeout=timeout)


class RemoteModel:
    """predict_proba handle for one fitted server-side model."""

    kind = "external"

    def __init__(self, session: Session, model_id: str, n_features: int):
        self._session = session
        self.model_id = model_id
        self.n_features = n_features
        self._freed = False

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise FitError(f"predict_proba expects {self.n_features} columns")
        return self._session.predict_proba(self.model_id, X)

    def free(self) -> None:
        if not self._freed:
            self._freed = True
            self._session.free(self.model_id)

    def __del__(self):
        try:
            self.free()
        except Exception:
            pass


class ExternalModelFactory:
    """fit(X, y) -> RemoteModel, round-tripping through one pooled session.

    task ("propensity" or "outcome") is client-side metadata recorded for
    diagnostics; the wire protocol does not carry it.
    """

    def __init__(self, endpoint: str, task: str, pool_size: int = 1,
                 timeout: float | None = None):
        if task not in ("propensity", "outcome"):
            raise ValueError(f"task must be propensity or outcome, got {task!r}")
        self.endpoint = endpoint
        self.task = task
        self._sessions = [open_session(endpoint, timeout=timeout) for _ in range(pool_size)]
        for s in self._sessions:
            if "fit_predict" not in s.capabilities:
                s.close()
                raise ProtocolError(f"server at {endpoint} lacks the fit_predict capability")
        self._next = 0
        self._lock = threading.Lock()

    def _session(self) -> Session:
        with self._lock:
            s = self._sessions[self._next % len(self._sessions)]
            self._next += 1
            return s

    def __call__(self, X, y) -> RemoteModel:
        X = np.asarray(X, dtype=float)
        session = self._session()
        model_id = session.fit(X, y)
        return RemoteModel(session, model_id, X.shape[1])

    def close(self) -> None:
        for s in self._sessions:
            s.close()


def connect_external_model(endpoint: str, task: str, pool_size: int = 1,
                           timeout: float | None = None) -> ExternalModelFactory:
    """Handshake with a protocol-v1 server and return a model factory.

    The factory's fit/predict_proba semantics match in-process models from the
    estimators' viewpoint; server-side fit/predict error payloads surface as
    FitError (retryable in the bootstrap), transport and handshake problems as
    ProtocolError.
    """
    return ExternalModelFactory(endpoint, task, pool_size=pool_size, timeout=timeout)
