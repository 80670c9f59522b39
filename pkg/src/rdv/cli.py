"""rdv command line: run, verify, tamper, states, sweep."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .audit import report, summary_lines
from .core import CorruptDump, dump_chain
from .scenario import ScenarioError, load
from .simnet import enumerate_correctness_states, run
from .tamper import GROUPS, tamper, verify_dump

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_CORRUPT = 0, 1, 2, 3

log = logging.getLogger("rdv")


def _load_scenario(path: str):
    try:
        return load(path)
    except FileNotFoundError:
        print(f"error: {path}: no such file", file=sys.stderr)
    except ScenarioError as e:
        print(f"error: {path}: {e}", file=sys.stderr)
    return None


def cmd_run(scenario: str, seed: Optional[int], out: Optional[str]) -> int:
    cfg = _load_scenario(scenario)
    if cfg is None:
        return EXIT_CORRUPT
    result = run(cfg, seed)
    rep = report(result)
    rep["scenario_path"] = scenario
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "chain.bin").write_bytes(dump_chain(result.chains[result.reference]))
        (d / "ledger.bin").write_bytes(result.final_ledger.snapshot())
        (d / "ledger.json").write_text(json.dumps(result.final_ledger.to_json(), indent=2))
        (d / "events.jsonl").write_text(result.event_log())
        (d / "report.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
    print("\n".join(summary_lines(rep)))
    return EXIT_OK if rep["ok"] else EXIT_VIOLATION


def cmd_verify(path: str) -> int:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    ok, detail = verify_dump(data)
    if ok:
        print("ok")
        return EXIT_OK
    if detail.startswith("corrupt"):
        print(f"error: {detail}", file=sys.stderr)
        return EXIT_CORRUPT
    print(f"violation at {detail}")
    return EXIT_VIOLATION


def cmd_tamper(path: str, trials: int, seed: int = 0, group: Optional[str] = None) -> int:
    try:
        data = Path(path).read_bytes()
        rep = tamper(data, trials, seed, group)
    except (OSError, CorruptDump) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    print(json.dumps(rep.to_json(), indent=2))
    if rep.trials:
        print(f"detected {rep.detected}/{rep.trials}")
    return EXIT_OK if rep.detected == rep.trials else EXIT_VIOLATION


def cmd_states(n: int) -> int:
    rows = enumerate_correctness_states(n)
    for r in rows:
        beh = ",".join(str(b) for b in r.behaviors)
        obs = r.observed
        print(f"{beh:<36} {r.state:<8} block={int(obs.block)} roster={list(obs.roster)} "
              f"penalized={list(obs.penalized)} {'ok' if r.ok else 'MISMATCH'}")
    good = sum(r.ok for r in rows)
    print(f"{good}/{len(rows)} combinations match the reference: "
          f"{'PASS' if good == len(rows) else 'FAIL'}")
    return EXIT_OK if good == len(rows) else EXIT_VIOLATION


def cmd_sweep(scenario: str, trials: int, seed: int, workers: int) -> int:
    cfg = _load_scenario(scenario)
    if cfg is None:
        return EXIT_CORRUPT

    def one(s):
        return report(run(cfg, s))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        reps = list(pool.map(one, range(seed, seed + trials)))
    for rep in reps:
        print(f"seed {rep['seed']}: {'PASS' if rep['ok'] else 'FAIL'} height {rep['height']} "
              f"tip {rep['tip'][:16]}")
    bad = sum(not r["ok"] for r in reps)
    print(f"{trials - bad}/{trials} runs passed")
    return EXIT_OK if not bad else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdv", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="simulate a scenario file")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    v = sub.add_parser("verify", help="check a chain dump")
    v.add_argument("dump")
    t = sub.add_parser("tamper", help="mutate a chain dump and measure detection")
    t.add_argument("dump")
    t.add_argument("--trials", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--group", choices=sorted(GROUPS))
    s = sub.add_parser("states", help="enumerate single-round voter behaviors")
    s.add_argument("--n", type=int, default=3)
    w = sub.add_parser("sweep", help="run a scenario over consecutive seeds")
    w.add_argument("scenario")
    w.add_argument("--trials", type=int, default=20)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("RDV_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    if args.cmd == "run":
        return cmd_run(args.scenario, args.seed, args.out)
    if args.cmd == "verify":
        return cmd_verify(args.dump)
    if args.cmd == "tamper":
        if args.trials < 0:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return cmd_tamper(args.dump, args.trials, args.seed, args.group)
    if args.cmd == "states":
        if not 1 <= args.n <= 4:
            print("error: --n must be between 1 and 4", file=sys.stderr)
            return EXIT_USAGE
        return cmd_states(args.n)
    if args.trials < 1:
        print("error: --trials must be positive", file=sys.stderr)
        return EXIT_USAGE
    return cmd_sweep(args.scenario, args.trials, args.seed, args.workers)


if __name__ == "__main__":
    sys.exit(main())
