"""Command line interface: simulate, topology, slope.

Exit codes: 0 ok, 2 configuration error, 3 identifiability failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, IdentifiabilityError, TomographyError
from .harness import SimConfig, build_scenario, fit_regret_slope, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IDENTIFIABILITY = 3
EXIT_IO = 4


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _IoError(f"cannot read config {path!r}: {exc}") from None
    return SimConfig.from_json(text)


class _IoError(TomographyError):
    pass


def cmd_simulate(args):
    config = _load_config(args.config)
    result = run_experiment(config, write=False)
    try:
        paths = result.write_outputs(args.out)
    except OSError as exc:
        raise _IoError(f"cannot write outputs: {exc}") from None
    for path in paths:
        print(path)
    for cfg in config.policies:
        final = result.aggregate[cfg.label]
        print(
            f"{cfg.label}: final regret={final['regret_mean'][-1]:.6g} "
            f"mse={final['mse_mean'][-1]:.6g} slope={result.slopes[cfg.label]:.3f}"
        )
    return EXIT_OK


def cmd_topology(args):
    config = _load_config(args.config)
    ctx = build_scenario(config, 0)
    topo = ctx.probe_set.topology
    matrix = ctx.probe_set.matrix
    print(f"nodes: {topo.node_count}")
    print(f"links: {topo.link_count}")
    print(f"kind: {topo.kind}")
    print(f"probes: {ctx.probe_set.probe_count} ({ctx.probe_set.mode})")
    for i, probe in enumerate(ctx.probe_set.probes, start=1):
        print(f"  probe {i}: {probe.label()}")
    rank = np.linalg.matrix_rank(matrix.entries)
    print(f"rank(Q): {rank}")
    if matrix.square:
        print("Q^-1:")
        for row in matrix.kappa:
            print("  [" + " ".join(format(v, " .4f") for v in row) + "]")
    return EXIT_OK


def cmd_slope(args):
    try:
        with open(args.input, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise _IoError(f"cannot read {args.input!r}: {exc}") from None
    if not rows:
        raise ConfigError("input CSV has no data rows")
    needed = {"policy", "t", "regret_mean"}
    if not needed.issubset(rows[0].keys()):
        raise ConfigError(f"input CSV must carry columns {sorted(needed)}")
    by_policy = {}
    for row in rows:
        by_policy.setdefault(row["policy"], []).append(
            (float(row["t"]), float(row["regret_mean"]))
        )
    out = {}
    for label, pairs in by_policy.items():
        pairs.sort()
        t = np.array([p[0] for p in pairs])
        reg = np.array([p[1] for p in pairs])
        out[label] = fit_regret_slope(t, reg, window=args.window)
        print(f"{label}: slope={out[label]:.4f}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tomosim",
        description="Online probe-allocation simulator for network tomography",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    p_sim.add_argument("--config", required=True, help="JSON config file")
    p_sim.add_argument("--out", default=None, help="override config output_dir")
    p_sim.set_defaults(func=cmd_simulate)

    p_topo = sub.add_parser("topology", help="inspect topology and probe set")
    p_topo.add_argument("--config", required=True, help="JSON config file")
    p_topo.set_defaults(func=cmd_topology)

    p_slope = sub.add_parser("slope", help="fit regret slopes from aggregate CSV")
    p_slope.add_argument("--input", required=True, help="aggregate.csv path")
    p_slope.add_argument("--window", type=float, default=10.0)
    p_slope.add_argument("--json-out", default=None)
    p_slope.set_defaults(func=cmd_slope)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IdentifiabilityError as exc:
        print(f"identifiability error: {exc}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except _IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
