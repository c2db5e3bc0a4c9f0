"""Command-line driver: run, sweep, verify, echo-config."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import ScenarioConfig, dump_config, parse_config
from .errors import ConfigError
from .experiment import (
    build_scenario,
    evaluate_method,
    game_config,
    resolve_xi,
    sweep_alpha,
    sweep_compression,
    to_db,
    write_sweep_csv,
    write_trace_csv,
)
from .game import verify_nash
from .transceiver import TransceiverState

log = logging.getLogger("semgame")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_IO = 3
EXIT_PARSE = 4
SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semgame", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, type=Path, help="scenario YAML file")
        p.add_argument("--seed", type=int, help="override the channel seed")
        p.add_argument("--scheme", choices=["gauss-seidel", "jacobi"])
        p.add_argument("--iters", type=int, help="override game.max_iterations")
        p.add_argument("--out", type=Path, help="output directory (default: output.directory)")

    common(sub.add_parser("run", help="play the game once and verify the equilibrium"))
    sw = sub.add_parser("sweep", help="compression or MUI-scaling sweep")
    common(sw)
    sw.add_argument("--axis", required=True, choices=["xi", "alpha"])
    common(sub.add_parser("verify", help="re-check the equilibrium stored by a previous run"))
    ec = sub.add_parser("echo-config", help="print the fully resolved configuration")
    ec.add_argument("--config", required=True, type=Path)
    ec.add_argument("--out", type=Path, help="write to this file instead of stdout")
    return parser


def _out_dir(args, config: ScenarioConfig) -> Path:
    return Path(args.out) if args.out else Path(config.output.directory)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _db(x: float):
    v = to_db(x)
    return None if not np.isfinite(v) else v


def cmd_run(args, config: ScenarioConfig) -> int:
    seed = config.seed if args.seed is None else args.seed
    gcfg = game_config(config, scheme=args.scheme, max_iterations=args.iters)
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    scenario, latents = build_scenario(config, seed)
    res = evaluate_method("game", scenario, latents, gcfg, seed)
    trace = res.trace
    report = verify_nash(res.states, scenario, gcfg.ne_check_trials, gcfg.ne_tolerance, seed)
    digest = config.digest()
    formats = set(config.output.formats)
    write_trace_csv(out / "trace.csv", trace, digest, seed)
    if "npz" in formats:
        arrays = {"seed": np.array(seed), "config_hash": np.array(digest)}
        for l, st in enumerate(res.states):
            arrays[f"F_{l}"] = st.F
            arrays[f"G_{l}"] = st.G
            arrays[f"phi_{l}"] = st.phi
        np.savez(out / "transceivers.npz", **arrays)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": digest,
        "seed": seed,
        "scheme": gcfg.scheme.value,
        "converged": trace.converged,
        "iterations": trace.iterations_used,
        "final_residual": trace.records[-1].residual,
        "nash": {"is_ne": report.is_ne, "worst_relative_improvement": report.worst_improvement,
                 "players": report.per_player},
        "players": [
            {"player": l, "mse": res.player_mse[l], "mse_db": _db(res.player_mse[l]),
             "mui_power_db": _db(res.mui_power[l]), "accuracy": res.accuracy[l],
             "power_used": float(np.sum(res.states[l].phi))}
            for l in range(scenario.num_links)],
        "network": {"mse_db": res.network_mse_db, "accuracy": res.network_accuracy},
        "config": config.to_dict(),
    }
    if "json" in formats:
        _write_json(out / "summary.json", summary)
    log.info("seed %d %s: converged=%s after %d iterations, NE=%s", seed, gcfg.scheme.value,
             trace.converged, trace.iterations_used, report.is_ne)
    print(json.dumps({k: summary[k] for k in ("converged", "iterations", "seed", "scheme")}
                     | {"is_ne": report.is_ne, "network_mse_db": res.network_mse_db}))
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def cmd_sweep(args, config: ScenarioConfig) -> int:
    gcfg = game_config(config, scheme=args.scheme, max_iterations=args.iters)
    seeds = [args.seed] if args.seed is not None else None
    out = _out_dir(args, config)
    if args.axis == "xi":
        resolve_xi(config)  # fail before any computation
        out.mkdir(parents=True, exist_ok=True)
        result = sweep_compression(config, seeds=seeds, gcfg=gcfg)
    else:
        out.mkdir(parents=True, exist_ok=True)
        result = sweep_alpha(config, seeds=seeds, gcfg=gcfg)
    digest = config.digest()
    write_sweep_csv(out / f"sweep_{args.axis}.csv", result, digest)
    _write_json(out / f"sweep_{args.axis}.json", {
        "schema_version": SCHEMA_VERSION,
        "config_hash": digest,
        "axis": result.axis,
        "methods": result.methods,
        "seeds": result.seeds,
        "aggregate": result.aggregate(),
        "config": config.to_dict(),
    })
    print(f"wrote {len(result.records)} rows to {out / f'sweep_{args.axis}.csv'}")
    return EXIT_OK


def cmd_verify(args, config: ScenarioConfig) -> int:
    gcfg = game_config(config)
    path = _out_dir(args, config) / "transceivers.npz"
    with np.load(path) as f:
        seed = int(f["seed"]) if args.seed is None else args.seed
        stored_hash = str(f["config_hash"])
        L = len(config.links)
        states = [TransceiverState(F=f[f"F_{l}"], G=f[f"G_{l}"], phi=f[f"phi_{l}"])
                  for l in range(L)]
    if stored_hash != config.digest():
        log.warning("stored transceivers come from a different config (%s)", stored_hash)
    scenario, _ = build_scenario(config, seed)
    report = verify_nash(states, scenario, gcfg.ne_check_trials, gcfg.ne_tolerance, seed)
    print(json.dumps({"config_hash": stored_hash, "seed": seed, "is_ne": report.is_ne,
                      "worst_relative_improvement": report.worst_improvement,
                      "players": report.per_player}, indent=2))
    return EXIT_OK if report.is_ne else EXIT_NOT_CONVERGED


def cmd_echo(args, config: ScenarioConfig) -> int:
    text = dump_config(config)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "echo-config": cmd_echo}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(f"semgame: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(args.config)
    except FileNotFoundError as err:
        print(f"semgame: cannot read config: {err}", file=sys.stderr)
        return EXIT_IO
    except yaml.YAMLError as err:
        print(f"semgame: malformed config: {err}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as err:
        print(f"semgame: invalid config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, config)
    except ConfigError as err:
        print(f"semgame: invalid config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"semgame: I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
