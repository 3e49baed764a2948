"""Line-delimited protocol v1 stub for client tests.

Usage: stub_server.py MODE [--log PATH]

Modes:
  const      fit always succeeds, predict_proba returns 0.5 everywhere,
             estimate_ate returns (0.123, 0.1, 0.15)
  logistic   wraps the in-process logistic fit (cross-check reference)
  crude      estimate_ate returns the crude mean difference with +/-0.05 bounds
  zeroprob   predict_proba returns exact 0.0 everywhere
  badlen     predict_proba returns one extra probability
  oob        predict_proba returns 1.5 everywhere
  fiterror   fit replies with an error payload
  badversion hello advertises protocol v2
  badbounds  estimate_ate returns lo > hi
  malformed  replies with a non-JSON line after the handshake
  flaky      estimate_ate fails on every second call, counted across
             processes via the file named by --log

With --log, appends one JSON line per request: {"cmd":..., "n":...}.
"""

import json
import sys


def main():
    mode = sys.argv[1]
    log_path = None
    if len(sys.argv) > 3 and sys.argv[2] == "--log":
        log_path = sys.argv[3]

    models = {}
    counter = 0

    def log(cmd, n):
        if log_path:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"cmd": cmd, "n": n}) + "\n")

    def reply(obj):
        sys.stdout.write(json.dumps(obj) + "\n")
        sys.stdout.flush()

    for line in sys.stdin:
        req = json.loads(line)
        cmd = req.get("cmd")
        log(cmd, len(req.get("features", ())))

        if cmd == "hello":
            v = 2 if mode == "badversion" else 1
            reply({"v": v, "ok": True,
                   "capabilities": ["fit_predict", "estimate_ate"]})
            continue
        if mode == "malformed":
            sys.stdout.write("this is not a json line\n")
            sys.stdout.flush()
            continue

        if cmd == "fit":
            if mode == "fiterror":
                reply({"ok": False, "error": "synthetic fit failure"})
                continue
            counter += 1
            mid = f"m{counter}"
            if mode == "logistic":
                import numpy as np

                from atesim.models import fit_logistic

                X = np.asarray(req["features"], dtype=float)
                y = np.asarray(req["labels"], dtype=float)
                models[mid] = fit_logistic(X, y)
            else:
                models[mid] = True
            reply({"ok": True, "model_id": mid})
        elif cmd == "predict_proba":
            mid = req.get("model_id")
            if mid not in models:
                reply({"ok": False, "error": f"unknown model {mid}"})
                continue
            rows = req["features"]
            if mode == "logistic":
                import numpy as np

                probs = models[mid].predict_proba(np.asarray(rows, dtype=float))
                reply({"ok": True, "probs": [float(p) for p in probs]})
            elif mode == "zeroprob":
                reply({"ok": True, "probs": [0.0] * len(rows)})
            elif mode == "badlen":
                reply({"ok": True, "probs": [0.5] * (len(rows) + 1)})
            elif mode == "oob":
                reply({"ok": True, "probs": [1.5] * len(rows)})
            else:
                reply({"ok": True, "probs": [0.5] * len(rows)})
        elif cmd == "free":
            if models.pop(req.get("model_id"), None) is None:
                reply({"ok": False, "error": "unknown model"})
            else:
                reply({"ok": True})
        elif cmd == "estimate_ate":
            if mode == "flaky":
                n_seen = 0
                if log_path:
                    try:
                        with open(log_path + ".count", "r", encoding="utf-8") as fh:
                            n_seen = int(fh.read().strip() or 0)
                    except FileNotFoundError:
                        pass
                    with open(log_path + ".count", "w", encoding="utf-8") as fh:
                        fh.write(str(n_seen + 1))
                if n_seen % 2 == 1:
                    reply({"ok": False, "error": "synthetic intermittent failure"})
                else:
                    reply({"ok": True, "ate": 0.2, "lo": 0.1, "hi": 0.3})
            elif mode == "crude":
                x = req["treatment"]
                y = req["outcome"]
                t = [yi for yi, xi in zip(y, x) if xi == 1]
                c = [yi for yi, xi in zip(y, x) if xi == 0]
                ate = sum(t) / len(t) - sum(c) / len(c)
                reply({"ok": True, "ate": ate, "lo": ate - 0.05, "hi": ate + 0.05})
            elif mode == "badbounds":
                reply({"ok": True, "ate": 0.1, "lo": 0.2, "hi": 0.0})
            else:
                reply({"ok": True, "ate": 0.123, "lo": 0.1, "hi": 0.15})
        else:
            reply({"ok": False, "error": f"unknown cmd {cmd!r}"})


if __name__ == "__main__":
    main()
