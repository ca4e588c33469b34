"""Shared argument handling for the experiment scripts."""

import argparse
import logging
import sys

from sensebeam import experiment as ex
from sensebeam.cli import split_overrides
from sensebeam.config import load_config


def parse(description: str, extra=None):
    argv_rest, overrides = split_overrides(sys.argv[1:])
    p = argparse.ArgumentParser(description=description,
                                epilog="Config keys may be overridden as --section.key VALUE.")
    p.add_argument("--config")
    p.add_argument("--out", default="runs/default")
    if extra:
        extra(p)
    args = p.parse_args(argv_rest)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    overrides.setdefault("run.out", args.out)
    return args, load_config(args.config, overrides)


def prepare(cfg) -> None:
    """Generate the dataset and train the beam predictor unless already on disk."""
    if not (cfg.out / "dataset.csv").exists():
        ex.cmd_generate(cfg)
    if not (cfg.out / "dnn.npz").exists():
        ex.cmd_train_dnn(cfg)
