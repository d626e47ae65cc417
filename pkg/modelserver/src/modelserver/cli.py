"""`modelserver` launcher."""

from __future__ import annotations

import argparse
import threading
import sys

import uvicorn

from .app import GatewayConfig, create_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelserver", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8600)
    parser.add_argument("--encoder", default="stub:384:0",
                        help="stub[:dim[:seed]] or hf:<model id>")
    parser.add_argument("--tagger", default="rule")
    parser.add_argument("--max-batch", type=int, default=64)
    parser.add_argument("--record", default=None, metavar="DIR",
                        help="append request/response fixtures under DIR")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = GatewayConfig(
        encoder_spec=args.encoder,
        tagger_spec=args.tagger,
        port=args.port,
        max_batch=args.max_batch,
        record_dir=args.record,
    )
    # Serve 503 while the models load in the background.
    app = create_app(config, defer_load=True)
    threading.Thread(target=app.state.load_models, daemon=True).start()
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
