"""Shared bits for the experiment scripts: argument parsing and optional plotting."""

import argparse
import json
from pathlib import Path


def parser(description, default_out):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default=default_out, help="output directory")
    p.add_argument("--seed", type=int, default=20240611)
    p.add_argument("--no-plot", action="store_true", help="skip PNG output even if matplotlib is present")
    return p


def prepare(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def pyplot(args):
    if args.no_plot:
        return None
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    return plt


def dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    print(json.dumps(obj, indent=2, sort_keys=True))
