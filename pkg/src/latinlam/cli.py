"""Command line: ``latinlam run|sweep|oracle|validate|schema``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 the solver
failed to converge, 4 outputs could not be written.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__, oracles
from .config import ConfigError, build_config, config_hash, dump_config, json_schema, parse_config, set_key
from .io import OutputError, write_outputs
from .latin import ConfigurationError
from .scenarios import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror or exc}") from None
    return parse_config(text)


def _value(text: str):
    return yaml.safe_load(text)


def _overrides(cfg, pairs: list[str]):
    data = cfg.to_dict()
    for pair in pairs or []:
        key, sep, val = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        data = set_key(data, key.strip(), _value(val))
    return build_config(data)


def _progress(verbose: bool):
    if not verbose:
        return None

    def show(res):
        last = res.records[-1].eta if res.records else float("nan")
        print(f"step {res.step:4d}  factor {res.factor:.4f}  iterations {res.iterations:4d}  "
              f"eta {last:.3e}  {'ok' if res.converged else 'FAILED'}", file=sys.stderr, flush=True)
    return show


def _run_one(cfg, out: Path, verbose: bool) -> int:
    bundle = run_scenario(cfg, progress=_progress(verbose))
    write_outputs(bundle, out)
    print(f"{cfg.scenario}: {bundle.status}, {len(bundle.steps)} steps, {bundle.total_iterations} iterations, "
          f"{bundle.wall_time:.1f} s -> {out}")
    if bundle.failure:
        print(bundle.failure, file=sys.stderr)
    return EXIT_OK if bundle.converged else EXIT_SOLVER


def cmd_run(args) -> int:
    cfg = _overrides(_load(args.config), args.set)
    out = Path(args.out) if args.out else Path(cfg.output.directory)
    return _run_one(cfg, out, args.verbose)


def _parse_vary(items: list[str]) -> list[tuple[str, list]]:
    out = []
    for item in items:
        key, sep, vals = item.partition("=")
        if not sep or not vals:
            raise ConfigError(f"--vary expects key=v1,v2,..., got {item!r}")
        values = _value(f"[{vals}]")
        out.append((key.strip(), values))
    return out


def cmd_sweep(args) -> int:
    base = _overrides(_load(args.config), args.set)
    vary = _parse_vary(args.vary)
    root = Path(args.out) if args.out else Path(base.output.directory)
    configs = []
    for combo in itertools.product(*(v for _, v in vary)):
        data = base.to_dict()
        for (key, _), val in zip(vary, combo):
            data = set_key(data, key, val)
        configs.append((combo, build_config(data)))       # validate all before running any
    worst = EXIT_OK
    rows = []
    for i, (combo, cfg) in enumerate(configs):
        out = root / f"run_{i:03d}"
        code = _run_one(cfg, out, args.verbose)
        worst = max(worst, code)
        rows.append({"run": out.name, "config_sha256": config_hash(cfg),
                     **{k: v for (k, _), v in zip(vary, combo)}, "exit": code})
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / "sweep.json").write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {root / 'sweep.json'}: {exc.strerror or exc}") from exc
    return worst


_ORACLES = {
    "euler": (oracles.euler_load, ["E", "b", "h", "L"]),
    "buckling": (oracles.local_global_buckling, ["E", "b", "h_ply", "a0", "L0"]),
    "bruno": (oracles.bruno_propagation, ["G_c", "b0", "P_local", "a0"]),
    "dcb": (oracles.dcb_curve, ["E", "b", "h_arm", "a0", "k_n0", "Y_c", "displacement"]),
    "dcb-peak": (lambda E, b, h_arm, a0, k_n0, Y_c: oracles.DCBModel(E, b, h_arm, k_n0, Y_c).peak(a0),
                 ["E", "b", "h_arm", "a0", "k_n0", "Y_c"]),
}


def cmd_oracle(args) -> int:
    fn, names = _ORACLES[args.name]
    if len(args.values) < len(names) or (args.name != "dcb" and len(args.values) > len(names)):
        raise ConfigError(f"oracle {args.name} expects {' '.join(names)}"
                          + (" [more displacements...]" if args.name == "dcb" else ""))
    try:
        vals = [float(v) for v in args.values]
    except ValueError as exc:
        raise ConfigError(f"oracle arguments must be numbers: {exc}") from None
    if args.name == "dcb":
        vals = vals[:6] + [vals[6:]]
    try:
        res = fn(*vals)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if hasattr(res, "tolist"):
        res = res.tolist()
    elif isinstance(res, tuple):
        res = list(res)
    print(json.dumps(res))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _overrides(_load(args.config), args.set)
    sys.stdout.write(dump_config(cfg))
    print(f"# config_sha256={config_hash(cfg)}")
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(json_schema(), indent=1, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="latinlam", description="Multiscale LATIN solver for laminate buckling and delamination.")
    p.add_argument("--version", action="version", version=f"latinlam {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="per-step progress on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("config", help="YAML configuration file")
    r.add_argument("--out", help="output directory (default: output.directory)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted key")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep", help="run the cartesian product of varied keys")
    s.add_argument("config")
    s.add_argument("--vary", action="append", required=True, metavar="KEY=V1,V2", help="values for a dotted key")
    s.add_argument("--out")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(fn=cmd_sweep)

    o = sub.add_parser("oracle", help="evaluate an analytic reference value")
    o.add_argument("name", choices=sorted(_ORACLES))
    o.add_argument("values", nargs="*")
    o.set_defaults(fn=cmd_oracle)

    v = sub.add_parser("validate", help="check a configuration and print it with defaults filled")
    v.add_argument("config")
    v.add_argument("--set", action="append", metavar="KEY=VALUE")
    v.set_defaults(fn=cmd_validate)

    sc = sub.add_parser("schema", help="print the configuration JSON schema")
    sc.set_defaults(fn=cmd_schema)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"latinlam: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"latinlam: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
