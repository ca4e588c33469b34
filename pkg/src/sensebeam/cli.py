"""``sensebeam`` command line.

Exit codes: 0 success, 2 configuration error, 3 I/O or input-file error,
4 numerical failure (NaN/inf detected).
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiment as ex
from .channel import DatasetParseError
from .config import ConfigError, load_config

log = logging.getLogger("sensebeam")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="global seed (run.seed)")
    common.add_argument("--out", help="output directory (run.out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="sensebeam", parents=[common],
        description="Sensing-budgeted beam prediction: dataset, DNN, DQN and evaluation commands.",
        epilog="Any configuration key can be overridden as --section.key VALUE (e.g. --dqn.epochs 50).")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="write the synthetic dataset and gains sidecar")
    sub.add_parser("train-dnn", parents=[common], help="train the beam-prediction network")
    t = sub.add_parser("train-dqn", parents=[common], help="train the sensing agent for env.alpha / env.V")
    t.add_argument("--resume", action="store_true", help="continue from an existing checkpoint")
    e = sub.add_parser("evaluate", parents=[common], help="evaluate policies on the held-out split")
    e.add_argument("--policy", action="append", choices=ex.POLICIES,
                   help="policy to evaluate (repeatable; default: all)")
    s = sub.add_parser("sweep-alpha", parents=[common], help="average accuracy versus sensing budget")
    s.add_argument("--alphas", type=_floats, default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    s.add_argument("--policy", action="append", choices=ex.POLICIES)
    q = sub.add_parser("queue-trace", parents=[common], help="running sensing rate and queue per (V, alpha)")
    q.add_argument("--V-list", dest="Vs", type=_floats, default=[1.0, 10.0, 100.0])
    q.add_argument("--alphas", type=_floats, default=[0.3, 0.5, 0.8])
    return p


def split_overrides(argv: list[str]) -> tuple[list[str], dict[str, str]]:
    """Pull ``--section.key value`` / ``--section.key=value`` pairs out of argv."""
    rest, overrides = [], {}
    i = 0
    while i < len(argv):
        a = argv[i]
        if a.startswith("--") and "." in a.split("=", 1)[0]:
            if "=" in a:
                k, v = a[2:].split("=", 1)
            else:
                if i + 1 >= len(argv):
                    raise ConfigError(f"{a} needs a value")
                k, v = a[2:], argv[i + 1]
                i += 1
            overrides[k] = v
        else:
            rest.append(a)
        i += 1
    return rest, overrides


def run(argv: list[str]) -> int:
    rest, overrides = split_overrides(argv)
    args = build_parser().parse_args(rest)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.out is not None:
        overrides["run.out"] = args.out
    cfg = load_config(args.config, overrides)

    if args.command == "generate":
        data, gains = ex.cmd_generate(cfg)
        print(data)
        print(gains)
    elif args.command == "train-dnn":
        _, history = ex.cmd_train_dnn(cfg)
        print(f"trained {len(history)} epochs, final loss {history[-1]:.5f}")
    elif args.command == "train-dqn":
        _, history = ex.cmd_train_dqn(cfg, resume=args.resume)
        if history:
            h = history[-1]
            print(f"epoch {h.epoch}: mean cost {h.mean_cost:.4f}, sense rate {h.sense_rate:.4f}, mean Q {h.mean_Q:.3f}")
    elif args.command == "evaluate":
        for r in ex.cmd_evaluate(cfg, args.policy or ex.POLICIES):
            print(f"{r.policy:11s} top1 {r.top1:.4f} top2 {r.top2:.4f} top3 {r.top3:.4f} "
                  f"avg {r.avg_accuracy:.4f} sense {r.sense_rate:.4f}")
    elif args.command == "sweep-alpha":
        for r in ex.cmd_sweep_alpha(cfg, args.alphas, args.policy or ex.POLICIES):
            print(f"alpha {r.alpha:g} {r.policy:11s} avg {r.avg_accuracy:.4f} sense {r.sense_rate:.4f}")
    elif args.command == "queue-trace":
        for s in ex.cmd_queue_trace(cfg, args.Vs, args.alphas):
            print(f"V {s['V']:g} alpha {s['alpha']:g}: rate {s['final_sense_rate']:.4f} "
                  f"converged at slot {s['converged_at']}, max Q {s['max_Q']:.2f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (OSError, DatasetParseError) as e:
        log.error("%s", e)
        return EXIT_IO
    except FloatingPointError as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
