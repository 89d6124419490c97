"""Command-line entry point: ``converge-lab <command> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .analysis import analyze
from .errors import ConvergeLabError, ParseError
from .flows import GALLERY_NAMES, gallery
from .integrate import Trajectory
from .scenario import (Scenario, comparable, dumps, load_scenario, run_scenario,
                       scenario_from_dict)


def _common(p):
    p.add_argument("--out", help="output prefix for the CSV and JSON files")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--t-max", type=float, dest="t_max", help="override the final time")
    p.add_argument("--tol", type=float, help="relative tolerance (absolute is 1e-2 of it)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="converge-lab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate and analyse one scenario")
    p.add_argument("scenario")
    _common(p)

    p = sub.add_parser("analyze", help="analyse a trajectory CSV")
    p.add_argument("csv")
    p.add_argument("--limit", type=float, nargs="+", help="known limit point for the decay fit")
    p.add_argument("--alpha", type=float, help="Cauchy test window length")
    p.add_argument("--burn-in", type=float, default=0.5, dest="burn_in")
    p.add_argument("--out", help="write the report to <out>.json")

    p = sub.add_parser("gallery", help="list or run gallery entries")
    gsub = p.add_subparsers(dest="gallery_command", required=True)
    gsub.add_parser("list")
    g = gsub.add_parser("run")
    g.add_argument("name")
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    g.add_argument("--analyses", default="omega,cauchy,l2,fit,stability")
    _common(g)

    for name, help_ in (("loja", "estimate the Lojasiewicz exponent"),
                        ("stability", "locate and classify equilibria")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("scenario")
        _common(p)

    p = sub.add_parser("batch", help="run every *.toml scenario in a directory")
    p.add_argument("directory")
    p.add_argument("--out", help="output directory (default: next to each scenario)")
    p.add_argument("--serial", action="store_true", help="disable process parallelism")
    return ap


def _parse_value(v: str):
    try:
        return json.loads(v)
    except json.JSONDecodeError:
        return v


def _emit(doc, out=None):
    text = dumps(doc)
    if out:
        Path(f"{out}.json").write_text(text)
    print(text)


def _run(sc: Scenario, args, analyses=None) -> int:
    sc = sc.with_overrides(args.seed, args.t_max, args.tol)
    if analyses is not None:
        sc = Scenario(sc.name, sc.system, sc.initial, sc.integrator, tuple(analyses), sc.analysis,
                      sc.seed if sc.seed is not None else 0, sc.source)
    rep = run_scenario(sc, args.out)
    print(dumps(rep))
    return 0 if not rep["errors"] and "error" not in rep.get("integration", {}) else 1


def _batch_one(path: str, out_dir):
    try:
        sc = load_scenario(path)
        prefix = None
        if out_dir is not None:
            prefix = str(Path(out_dir) / Path(path).stem)
        else:
            prefix = str(Path(path).with_suffix(""))
        rep = run_scenario(sc, prefix)
        ok = not rep["errors"] and "error" not in rep.get("integration", {})
        return {"scenario": path, "ok": ok, "report": comparable(rep)}
    except ConvergeLabError as exc:
        return {"scenario": path, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def batch(directory, out_dir=None, parallel: bool = True) -> dict:
    """Run all scenarios in ``directory``; failures are isolated per file."""
    files = sorted(str(p) for p in Path(directory).glob("*.toml"))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    cap = int(os.environ.get("CONVERGE_LAB_THREADS", os.cpu_count() or 1))
    workers = max(1, min(cap, len(files)))
    if parallel and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_batch_one, files, [out_dir] * len(files)))
    else:
        results = [_batch_one(f, out_dir) for f in files]
    return {"scenarios": results, "n": len(results),
            "failures": sum(1 for r in results if not r["ok"])}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _run(load_scenario(args.scenario), args)
        if args.command in ("loja", "stability"):
            return _run(load_scenario(args.scenario), args, [args.command])
        if args.command == "analyze":
            traj = Trajectory.from_csv(args.csv)
            rep = analyze(traj, None, limit=args.limit, alpha=args.alpha,
                          burn_in_fraction=args.burn_in)
            _emit(rep.to_dict(), args.out)
            return 0
        if args.command == "gallery":
            if args.gallery_command == "list":
                for name in GALLERY_NAMES:
                    print(f"{name}\t{gallery(name).expected_label()}")
                return 0
            params = dict(kv.split("=", 1) for kv in args.param)
            doc = {"name": args.name, "system": {"gallery": args.name,
                                                 "params": {k: _parse_value(v) for k, v in params.items()}},
                   "analyses": [a for a in args.analyses.split(",") if a]}
            if args.name == "palis_demelo" and params.get("mode") == "radial":
                doc["system"]["params"].pop("mode")
                doc["system"]["mode"] = "radial"
            if "loja" in doc["analyses"]:
                doc["seed"] = args.seed if args.seed is not None else 0
            return _run(scenario_from_dict(doc, f"gallery:{args.name}"), args)
        if args.command == "batch":
            summary = batch(args.directory, args.out, not args.serial)
            print(dumps(summary))
            return 0 if summary["failures"] == 0 else 1
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except ConvergeLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
