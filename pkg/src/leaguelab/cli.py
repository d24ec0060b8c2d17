"""Command-line front door.

    leaguelab train   --config run.toml --out runs/a [--seed S] [--workers W] [--checkpoint ckpt.json]
    leaguelab nash    --checkpoint runs/a/checkpoint.json
    leaguelab eval    --checkpoint ... AGENT OPPONENT
    leaguelab export  --checkpoint ... {archive,ratings,payoffs,lineage} [--out file.json]
    leaguelab report  --out runs/a [--checkpoint ...]
    leaguelab reproduce {pbt,coevolution,qd,asynchrony,preemption} [--seeds N] [--units U]

Exit codes: 0 success, 1 usage error, 2 runtime error. Errors go to stderr as
one JSON object per line.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import checkpoint as ckpt
from .analysis import league_nash
from .config import ExperimentConfig, dump_config, load_config
from .errors import CheckpointError, ConfigError, LeagueError, NotFoundError
from .games import softmax
from .runtime import LeagueState, init_state, run_league

log = logging.getLogger("leaguelab")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fail(code: int, kind: str, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code, **extra}) + "\n")
    return code


def _load_state(path: Optional[str]) -> LeagueState:
    if not path:
        raise UsageError("--checkpoint is required")
    if not Path(path).is_file():
        raise UsageError(f"checkpoint not found: {path}")
    return ckpt.load_checkpoint(path)


# train

class _JsonlSink:
    """Append-only JSON Lines file, flushed per record."""

    def __init__(self, path: Path):
        self.fh = open(path, "a", encoding="utf-8")

    def write(self, rec: dict) -> None:
        self.fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def cmd_train(args) -> int:
    if args.checkpoint:
        state = _load_state(args.checkpoint)
        config = state.config
        if args.config:
            raise UsageError("--config and --checkpoint are exclusive; a resumed run keeps its stored config")
    else:
        config = load_config(args.config) if args.config else ExperimentConfig()
        state = None
    overrides = {}
    if args.seed is not None:
        if state is not None:
            raise UsageError("--seed cannot change the seed of a resumed run")
        overrides["runtime.seed"] = args.seed
    if args.workers is not None:
        overrides["runtime.workers"] = args.workers
    if args.units is not None:
        overrides["runtime.total_units"] = args.units
    if args.out is not None:
        overrides["output.dir"] = args.out
    if overrides:
        config = config.replace(**overrides)
    if state is None:
        state = init_state(config)
    else:
        state.config = config

    out = Path(config.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_config(config), encoding="utf-8")
    metrics = _JsonlSink(out / "metrics.jsonl")
    matches = _JsonlSink(out / "matches.jsonl")
    commits = _JsonlSink(out / "commits.jsonl")
    digests = []

    def flush_logs(s: LeagueState) -> None:
        for r in s.match_log:
            matches.write(json.loads(r.to_json()))
        for p in s.commit_log:
            commits.write(p.to_dict())
        # logs live on disk from here on; keep memory flat over long runs
        s.match_log.clear()
        s.commit_log.clear()

    def on_checkpoint(s: LeagueState) -> None:
        flush_logs(s)
        digest = ckpt.save_checkpoint(s, out / "checkpoint.json")
        digests.append({"at": s.clock, "sha256": digest})
        log.info("checkpoint at %d: %s", s.clock, digest[:12])

    def on_metrics(rec: dict) -> None:
        metrics.write({"kind": "metrics", **rec})

    try:
        final = run_league(config, state, on_checkpoint=on_checkpoint, on_metrics=on_metrics).state
        for row in final.archive.records():
            metrics.write({"kind": "archive", "at": final.clock, **row})
    finally:
        # partial metrics are already on disk; close so nothing is lost on abort
        metrics.close()
        matches.close()
        commits.close()
    _emit({"out": str(out), "units": final.clock, "checkpoints": digests,
           "coverage": final.archive.coverage(), "qd_score": final.archive.qd_score(),
           "exploits": final.counters["exploits"]})
    return EXIT_OK


# analysis commands

def cmd_nash(args) -> int:
    state = _load_state(args.checkpoint)
    doc = league_nash(state, population=args.population, theta=args.theta)
    doc["at"] = state.clock
    _emit(doc)
    return EXIT_OK


def cmd_eval(args) -> int:
    state = _load_state(args.checkpoint)
    league = state.league
    for ident in (args.agent, args.opponent):
        if ident not in league:
            raise UsageError(f"unknown agent id {ident!r}")
    p = softmax(league.get(args.agent).logits)
    q = softmax(league.get(args.opponent).logits)
    payoff = 0.0 if args.agent == args.opponent else float(p @ state.game.payoff @ q)
    _emit({"a": args.agent, "b": args.opponent, "payoff_a": payoff,
           "policy_a": p.tolist(), "policy_b": q.tolist()})
    return EXIT_OK


def export_doc(state: LeagueState, what: str) -> dict:
    league = state.league
    if what == "archive":
        return {"what": what, "at": state.clock, "R": state.archive.R, "coverage": state.archive.coverage(),
                "qd_score": state.archive.qd_score(), "cells": state.archive.records()}
    if what == "ratings":
        agents = [{"id": a.id, "rating": a.rating, "active": a.active, "matches_played": a.matches_played,
                   "policy": softmax(a.logits).tolist()} for a in league.members()]
        return {"what": what, "at": state.clock, "agents": agents}
    if what == "payoffs":
        ids = [m.id for m in league.members()]
        A, mask = state.table.matrix(ids)
        return {"what": what, "at": state.clock, "ids": ids, "matrix": A.tolist(), "observed": mask.tolist()}
    if what == "lineage":
        return {"what": what, "at": state.clock,
                "records": [{"child": r.child, "parent": r.parent, "event": r.event, "time": r.time,
                             "detail": r.detail} for r in league.lineage]}
    raise UsageError(f"unknown export {what!r}")


def cmd_export(args) -> int:
    state = _load_state(args.checkpoint)
    doc = export_doc(state, args.what)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
        _emit({"what": args.what, "written": args.out})
    else:
        _emit(doc)
    return EXIT_OK


def _read_jsonl(path: Path) -> list:
    if not path.is_file():
        return []
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_csv(path: Path, rows: list, columns: list) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([r.get(c) for c in columns])
    return path


def cmd_report(args) -> int:
    from . import plotting

    if not args.out:
        raise UsageError("--out (the run directory) is required")
    run_dir = Path(args.out)
    if not run_dir.is_dir():
        raise UsageError(f"run directory not found: {run_dir}")
    state = _load_state(args.checkpoint or str(run_dir / "checkpoint.json"))
    fig_dir = run_dir / "report"
    fig_dir.mkdir(exist_ok=True)
    metrics = [m for m in _read_jsonl(run_dir / "metrics.jsonl") if m.get("kind", "metrics") == "metrics"]
    written = []
    if metrics:
        cols = ["at", "rating_mean", "rating_min", "rating_max", "exploitability",
                "mean_policy_exploitability", "coverage", "qd_score", "hall_size", "exploits"]
        written.append(_write_csv(fig_dir / "metrics.csv", metrics, cols))
        written.append(plotting.plot_metrics(metrics, fig_dir))
    archive = state.archive.records()
    written.append(_write_csv(fig_dir / "archive.csv",
                              [{"cell": " ".join(map(str, r["cell"])), "agent": r["agent"],
                                "quality": r["quality"]} for r in archive], ["cell", "agent", "quality"]))
    written.append(plotting.plot_archive(archive, state.archive.R, fig_dir))
    nash = league_nash(state)
    if nash["probs"] is not None:
        rows = [{"id": i, "prob": p} for i, p in zip(nash["ids"], nash["probs"])]
        written.append(_write_csv(fig_dir / "nash.csv", rows, ["id", "prob"]))
    written.append(plotting.plot_nash(nash, fig_dir))
    written.append(plotting.plot_ratings(export_doc(state, "ratings")["agents"], fig_dir))
    # delimited summary on stdout for downstream tools
    sys.stdout.write("key\tvalue\n")
    summary = {"at": state.clock, "coverage": state.archive.coverage(), "qd_score": state.archive.qd_score(),
               "nash_support": len(nash["support"]), "nash_exploitability": nash["exploitability"],
               "game_exploitability": nash["game_exploitability"]}
    for k, v in summary.items():
        sys.stdout.write(f"{k}\t{v}\n")
    for p in written:
        sys.stdout.write(f"file\t{p}\n")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from . import experiments as ex

    seeds = range(args.seeds)
    rows = []
    if args.scenario == "pbt":
        for s in seeds:
            on = ex.pbt_efficacy(s, args.units or 5000, pbt=True)
            off = ex.pbt_efficacy(s, args.units or 5000, pbt=False)
            rows.append({"seed": s, "best_pbt_on": on["best"], "best_bad_half_pbt_off": off["best_bad_half"]})
    elif args.scenario in ("coevolution", "qd"):
        betas = (50.0, 0.0) if args.scenario == "qd" else (50.0,)
        for s in seeds:
            for b in betas:
                rows.append(ex.coevolution_run(s, args.units or 50_000, b))
    elif args.scenario == "asynchrony":
        for s in seeds:
            r = ex.asynchrony_run(s, args.units or 4000, args.workers or 4)
            r.pop("spreads")
            rows.append(r)
    elif args.scenario == "preemption":
        rows = [ex.preemption_run(s, args.units or 4000) for s in seeds]
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(path, rows, list(rows[0]))
    _emit({"scenario": args.scenario, "rows": rows})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="leaguelab", description="Population-based league training on matrix games.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="run a league and write checkpoints, metrics and match logs")
    t.add_argument("--config", help="flat TOML config with dotted keys")
    t.add_argument("--seed", type=int, help="override runtime.seed")
    t.add_argument("--workers", type=int, help="override runtime.workers")
    t.add_argument("--units", type=int, help="override runtime.total_units (units to add when resuming)")
    t.add_argument("--out", help="override output.dir")
    t.add_argument("--checkpoint", help="resume from this checkpoint")
    t.set_defaults(func=cmd_train)

    n = sub.add_parser("nash", help="Nash distribution over the league's empirical game")
    n.add_argument("--checkpoint", required=True)
    n.add_argument("--population", choices=["active", "all"])
    n.add_argument("--theta", type=float, help="support threshold (default 1/(4n))")
    n.set_defaults(func=cmd_nash)

    e = sub.add_parser("eval", help="exact expected payoff between two stored agents")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("agent")
    e.add_argument("opponent")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="emit an archive, ratings, payoff-matrix or lineage document")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("what", choices=["archive", "ratings", "payoffs", "lineage"])
    x.add_argument("--out", help="write to this file instead of stdout")
    x.set_defaults(func=cmd_export)

    r = sub.add_parser("report", help="render figures and CSV tables for a run directory")
    r.add_argument("--out", required=True, help="run directory written by train")
    r.add_argument("--checkpoint", help="checkpoint to analyse (default: <out>/checkpoint.json)")
    r.set_defaults(func=cmd_report)

    q = sub.add_parser("reproduce", help="rerun one of the reference scenarios")
    q.add_argument("scenario", choices=["pbt", "coevolution", "qd", "asynchrony", "preemption"])
    q.add_argument("--seeds", type=int, default=10)
    q.add_argument("--units", type=int)
    q.add_argument("--workers", type=int)
    q.add_argument("--out", help="also write the rows as CSV")
    q.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "config", str(exc), key=exc.key)
    except NotFoundError as exc:
        return _fail(EXIT_USAGE, "not_found", str(exc))
    except CheckpointError as exc:
        return _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))
    except BrokenPipeError:
        # reader closed stdout early (e.g. piped into head); not an error of ours
        sys.stdout = None
        return EXIT_OK
    except (LeagueError, ArithmeticError, ValueError, OSError) as exc:
        return _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
