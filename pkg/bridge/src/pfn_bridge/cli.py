"""Command line entry point: `pfn-bridge --listen stdio --backend tabpfn`."""

import argparse
import json
import sys

from .backends import BackendError
from .config import BACKENDS, ServerConfig
from .server import serve


def build_parser():
    ap = argparse.ArgumentParser(
        prog="pfn-bridge",
        description="Protocol-v1 model/ATE server",
    )
    ap.add_argument("--listen", default="stdio",
                    help="'stdio' or HOST:PORT (default: stdio)")
    ap.add_argument("--backend", default="reference-logistic", choices=BACKENDS)
    ap.add_argument("--device", default="cpu",
                    help="device hint passed to the backend (default: cpu)")
    ap.add_argument("--max-models", type=int, default=8,
                    help="LRU capacity of each connection's model store")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="extra backend setting, repeatable; values parse as "
                         "JSON when possible, else stay strings")
    return ap


def parse_settings(pairs):
    settings = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ValueError(f"--set expects KEY=VALUE, got {pair!r}")
        try:
            settings[key] = json.loads(value)
        except json.JSONDecodeError:
            settings[key] = value
    return settings


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = ServerConfig(
            listen=args.listen,
            backend=args.backend,
            device=args.device,
            max_models=args.max_models,
            extra_settings=parse_settings(args.set),
        )
    except ValueError as exc:
        print(f"pfn-bridge: {exc}", file=sys.stderr)
        return 1
    try:
        serve(cfg)
    except BackendError as exc:
        print(f"pfn-bridge: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
