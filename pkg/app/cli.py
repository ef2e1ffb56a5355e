import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from app.config import LOG_FORMAT, get_settings
from app.exceptions import ConfigurationError, exit_code_for
from app.experiment import load_experiment, resolve_config_path
from app.pipeline import Peer, run_command

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="config file or bundled config name")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (1 is deterministic)")
    parser.add_argument("--paper-scale", action="store_true", help="apply the [paper_scale] table")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdfnet",
        description="Neural-network densities and characteristic functions of polynomial SDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    derive = sub.add_parser("derive", help="print the compiled residual operator")
    _add_common(derive)

    train = sub.add_parser("train", help="train a network and write a checkpoint and loss trace")
    _add_common(train)

    simulate = sub.add_parser("simulate", help="Monte Carlo paths and estimator outputs")
    _add_common(simulate)

    compare = sub.add_parser("compare", help="compare a trained network against oracles")
    _add_common(compare)
    compare.add_argument("--checkpoint", type=Path, default=None)
    compare.add_argument("--ensemble", type=Path, default=None)
    compare.add_argument("--peer-config", default=None, help="second experiment for cross-checks")
    compare.add_argument("--peer-checkpoint", type=Path, default=None)

    serve = sub.add_parser("serve", help="run the experiment-run service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--verbose", action="store_true")
    return parser


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)


def _serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)
    return 0


def _run(args: argparse.Namespace) -> int:
    settings = get_settings()
    path = resolve_config_path(args.config, settings.CONFIG_DIR)
    config = load_experiment(path, paper_scale=args.paper_scale, seed=args.seed)
    out_dir = args.out or Path(settings.RUNS_DIR) / config.name
    threads = args.threads if args.threads is not None else settings.THREADS

    peer = None
    if args.command == "compare" and args.peer_config:
        if args.peer_checkpoint is None:
            raise ConfigurationError("--peer-config needs --peer-checkpoint")
        peer_path = resolve_config_path(args.peer_config, settings.CONFIG_DIR)
        peer = Peer(
            config=load_experiment(peer_path, paper_scale=args.paper_scale, seed=args.seed),
            checkpoint=args.peer_checkpoint,
        )

    metrics = run_command(
        args.command,
        config,
        out_dir,
        threads=threads,
        checkpoint=getattr(args, "checkpoint", None),
        ensemble=getattr(args, "ensemble", None),
        peer=peer,
    )
    if args.command == "derive":
        print(metrics["text"])
    else:
        print(json.dumps(metrics, indent=2, default=float))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    if args.command == "serve":
        return _serve(args)
    try:
        return _run(args)
    except Exception as e:
        code = exit_code_for(e)
        if code == 1:
            logger.error("%s failed: %s", args.command, e, exc_info=True)
        else:
            logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
