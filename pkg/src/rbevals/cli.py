"""Command-line runner: one subcommand per construction, one report per run.

Exit codes: 0 all rows pass, 1 some row fails, 2 bad configuration,
3 input/output failure. ``RBEVALS_OUT`` overrides ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
import warnings
from importlib import metadata

from . import checks
from . import sequential as sq
from .checks import Row

OUT_ENV = "RBEVALS_OUT"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
PRESENTATION_KEYS = ("out", "format", "timing", "jobs")


class ConfigError(ValueError):
    pass


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got {text!r}") from exc


def parse_bets(text: str) -> tuple:
    """Comma list of bets, or ``geometric:base,count``."""
    if text.startswith("geometric:"):
        base, _, count = text[len("geometric:") :].partition(",")
        return sq.geometric_bets(float(base), int(count))
    return tuple(_floats(text))


def _bets(text):
    try:
        return parse_bets(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _rules(text):
    try:
        return [sq.parse_rule(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--timing", action="store_true", help="record wall-clock duration in the report")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for Monte Carlo blocks")

    parser = argparse.ArgumentParser(prog="rbevals", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("bernoulli", parents=[common])
    p.add_argument("--p0", type=float, required=True)
    p.add_argument("--lambda-exp", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=_floats, default=[0.7])

    p = sub.add_parser("cauchy", parents=[common])
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("regression", parents=[common])
    p.add_argument("--design", required=True, help="JSON file with X, sigma2, d, theta_star")
    p.add_argument("--grid", type=_floats, default=[-2.0, -1.0, 0.0, 1.0, 2.0])
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("pareto", parents=[common])
    p.add_argument("--alpha0", type=float, required=True)
    p.add_argument("--alpha1", type=float, required=True)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("eprocess", parents=[common])
    p.add_argument("--p0", type=float, default=0.5)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--bets", type=_bets, required=True)
    p.add_argument("--burnin", type=int, required=True)
    p.add_argument("--rules", type=_rules, required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("jensen", parents=[common])
    p.add_argument("--spaces", type=int, default=500)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("compound", parents=[common])
    p.add_argument("--spaces", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("ebh", parents=[common])
    p.add_argument("--e-values", type=_floats, required=True)
    p.add_argument("--alpha", type=float, required=True)

    p = sub.add_parser("replay", parents=[common])
    p.add_argument("report", help="a JSON or CSV report written by an earlier run")
    return parser


# -- config echo ---------------------------------------------------------------


def config_echo(args: argparse.Namespace) -> dict:
    """The experiment's parameters as JSON-ready values, presentation dropped."""
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in PRESENTATION_KEYS:
            continue
        if k == "bets":
            v = list(v)
        elif k == "rules":
            v = ",".join(r.label() for r in v)
        out[k] = v
    return out


def config_to_argv(config: dict) -> list[str]:
    argv = [config["subcommand"]]
    for k, v in config.items():
        if k == "subcommand":
            continue
        if isinstance(v, list):
            v = ",".join(repr(float(x)) for x in v)
        argv += [f"--{k.replace('_', '-')}", str(v)]
    return argv


# -- dispatch ------------------------------------------------------------------


def run_rows(args: argparse.Namespace) -> list[Row]:
    c = args.subcommand
    if c == "bernoulli":
        return checks.bernoulli_rows(args.p0, args.lambda_exp, args.n, args.p)
    if c == "cauchy":
        return checks.cauchy_rows(args.draws, args.seed, args.jobs)
    if c == "regression":
        try:
            with open(args.design, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise IOError(f"cannot read design file: {exc}") from exc
        try:
            return checks.regression_rows(text, args.draws, args.seed, args.grid)
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"malformed design document: {exc}") from exc
    if c == "pareto":
        return checks.pareto_rows(args.alpha0, args.alpha1, args.m, args.n, args.draws, args.seed)
    if c == "eprocess":
        return checks.eprocess_rows(args.p0, args.p, args.bets, args.burnin, args.rules, args.paths, args.seed)
    if c == "jensen":
        return checks.jensen_rows(args.spaces, args.seed)
    if c == "compound":
        return checks.compound_rows(args.spaces, args.seed)
    if c == "ebh":
        return checks.ebh_rows(args.e_values, args.alpha)
    raise ConfigError(f"unknown subcommand {c!r}")


def make_report(config: dict, rows: list[Row], duration: float | None = None, extra: dict | None = None) -> dict:
    report = {
        "version": version(),
        "config": config,
        "passed": all(r.passed for r in rows),
        "rows": [r.to_dict() for r in rows],
    }
    if extra:
        report.update(extra)
    if duration is not None:
        report["duration_s"] = duration
    return report


# -- encodings -------------------------------------------------------------------


def _flatten(prefix: str, obj, out: dict):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, out)
    else:
        out[prefix] = obj


def encode(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    header = {k: v for k, v in report.items() if k != "rows"}
    flat_rows = []
    for row in report["rows"]:
        flat = {}
        _flatten("", header, flat)
        _flatten("row", row, flat)
        # JSON-encode cells so that replay recovers types
        flat_rows.append({k: json.dumps(v) for k, v in flat.items()})
    fields = list(flat_rows[0]) if flat_rows else []
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(flat_rows)
    return buf.getvalue()


def _unflatten(flat: dict) -> dict:
    out: dict = {}
    for key, v in flat.items():
        node = out
        *path, leaf = key.split(".")
        for part in path:
            node = node.setdefault(part, {})
        node[leaf] = v
    return out


def decode(text: str) -> dict:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    records = [_unflatten({k: json.loads(v) for k, v in rec.items()}) for rec in csv.DictReader(io.StringIO(text))]
    if not records:
        raise ConfigError("empty CSV report")
    report = {k: v for k, v in records[0].items() if k != "row"}
    report["rows"] = [r["row"] for r in records]
    return report


def write_output(text: str, out_path: str | None):
    if not out_path:
        sys.stdout.write(text)
        return
    try:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOError(f"cannot write report: {exc}") from exc


# -- replay --------------------------------------------------------------------


def replay(path: str, parser: argparse.ArgumentParser) -> tuple[dict, list[Row]]:
    try:
        with open(path, encoding="utf-8") as fh:
            original = decode(fh.read())
    except OSError as exc:
        raise IOError(f"cannot read report: {exc}") from exc
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"malformed report: {exc}") from exc
    if "config" not in original:
        raise ConfigError("report has no config echo")
    if original.get("version") != version():
        warnings.warn(f"report version {original.get('version')} differs from {version()}", stacklevel=2)
    args = parser.parse_args(config_to_argv(original["config"]))
    args.jobs = 1
    rows = run_rows(args)
    old = [Row.from_dict(r) for r in original.get("rows", [])]
    differing = [r.name for r in rows if r.to_dict() not in [o.to_dict() for o in old if o.name == r.name]]
    missing = [o.name for o in old if o.name not in {r.name for r in rows}]
    diffs = differing + missing
    flags = Row("replay identical to original", float(len(diffs)), 0.0, "<=", 0.0, 0.0, "; ".join(diffs))
    return config_echo(args), rows + [flags]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out_path = os.environ.get(OUT_ENV) or args.out
    start = time.perf_counter()
    try:
        if args.subcommand == "replay":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                config, rows = replay(args.report, parser)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            extra = {"replay_of": os.path.basename(args.report)}
        else:
            config, rows, extra = config_echo(args), run_rows(args), None
    except IOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    duration = time.perf_counter() - start
    report = make_report(config, rows, duration if args.timing else None, extra)
    if not args.timing:
        print(f"done in {duration:.2f} s", file=sys.stderr)
    try:
        write_output(encode(report, args.format), out_path)
    except IOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
