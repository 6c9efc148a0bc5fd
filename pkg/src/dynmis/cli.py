"""``dynmis`` command line: gen, run, fit."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields

from .graph import format_stream, load_stream
from .sim import RunConfig, Simulation
from .verify import InsufficientData, fit_loglog
from .workloads import SpecError, WorkloadSpec, generate


class ConfigError(ValueError):
    pass


_INT_KEYS = {"n", "updates", "seed", "burst", "verify_every"}
_FLOAT_KEYS = {"p_delete"}
_BOOL_KEYS = {"trace"}


def _coerce(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _BOOL_KEYS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key == "targets":
        return tuple(int(x) for x in raw.replace(",", " ").split())
    return raw


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return out


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=["m_max", "m_avg"])
    p.add_argument("--solver", choices=["greedy", "ggr20-sim", "derand-ghaffari"])
    p.add_argument("--family")
    p.add_argument("--updates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--p-delete", dest="p_delete", type=float)
    p.add_argument("--targets", type=lambda s: _coerce("targets", s))
    p.add_argument("--burst", type=int)
    p.add_argument("--stream")
    p.add_argument("--verify-every", dest="verify_every", type=int)
    p.add_argument("--trace", type=lambda s: _coerce("trace", s))
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynmis", description="Dynamic distributed MIS simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate an update stream")
    g.add_argument("--family", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--updates", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--p-delete", dest="p_delete", type=float, default=0.5)
    g.add_argument("--targets", type=lambda s: _coerce("targets", s), default=())
    g.add_argument("--burst", type=int, default=0)
    g.add_argument("--out", help="write here instead of stdout")

    r = sub.add_parser("run", help="replay a stream and verify every step")
    r.add_argument("--config", help="flat key=value file; flags override it")
    _add_run_flags(r)

    f = sub.add_parser("fit", help="log-log slope of amortized cost over runs")
    f.add_argument("--inputs", nargs="+", required=True, help="stats CSV files, one per run")
    f.add_argument("--metric", choices=["msgs_total", "rounds"], default="msgs_total")
    return ap


def cmd_gen(args) -> int:
    spec = WorkloadSpec(args.family, args.n, args.updates, args.seed, args.p_delete,
                        tuple(args.targets), args.burst)
    header = f"family={spec.family.value} n={spec.n} updates={spec.updates} seed={spec.seed}"
    text = format_stream(generate(spec), header)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def config_from_args(args) -> RunConfig:
    values: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(parse_config(fh.read()))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(**values)


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    if cfg.stream:
        events = load_stream(cfg.stream)
    else:
        events = generate(WorkloadSpec(cfg.family, cfg.n, cfg.updates, cfg.seed, cfg.p_delete,
                                       cfg.targets, cfg.burst))
    res = Simulation(cfg).run(events)
    summary = res.summary()
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "stats.csv"), "w", encoding="utf-8") as fh:
            fh.write(res.stats_csv())
        with open(os.path.join(cfg.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        with open(os.path.join(cfg.out, "episodes.jsonl"), "w", encoding="utf-8") as fh:
            fh.write(res.episode_log())
        print(json.dumps({"ok": res.ok, "updates": len(res.rows), "failures": len(res.failures),
                          "out": cfg.out}))
    else:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if res.ok else 1


def read_stats(path: str) -> list[dict]:
    """Rows of one stats CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InsufficientData(f"{path} has no rows")
    return rows


def cmd_fit(args) -> int:
    xs, ys = [], []
    for path in args.inputs:
        rows = read_stats(path)
        xs.append(max(int(r["m_current"]) for r in rows))
        ys.append(sum(int(r[args.metric]) for r in rows) / len(rows))
    try:
        fit = fit_loglog(xs, ys)
    except InsufficientData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"slope": fit.slope, "constant": fit.constant, "points": fit.points,
                      "m": xs, "amortized": ys}, indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "gen":
            return cmd_gen(args)
        if args.cmd == "run":
            return cmd_run(args)
        return cmd_fit(args)
    except (SpecError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
