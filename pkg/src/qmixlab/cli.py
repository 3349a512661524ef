"""Command-line client for the experiment harness.

Every subcommand is a thin wrapper over the service layer: by default the
work runs in-process, and with ``--server URL`` the same request goes to a
running service instead. ``serve`` starts that service.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional

from .config import load_config
from .runner import METRICS_FILE, format_qtot_table
from .service import schemas
from .service.core import (
    config_from_request,
    effective_config,
    evaluate_checkpoint,
    qtot_tables,
    report_to_model,
    run_to_completion,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmixlab",
                                     description="multi-agent value-mixing experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one experiment")
    run.add_argument("--config", help="YAML config file (env, algorithm, overrides)")
    run.add_argument("--env", help="two_step | micro_combat")
    run.add_argument("--algo", help="iql | vdn | vdn_s | qmix | qmix_lin | qmix_ns | heuristic")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", help="output directory for checkpoint/metrics/replays")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override one config field (repeatable)")
    run.add_argument("--server", help="submit to a running service instead")

    ev = sub.add_parser("eval", help="evaluate a saved checkpoint greedily")
    ev.add_argument("--checkpoint", required=True, help="checkpoint file or run directory")
    ev.add_argument("--episodes", type=int, default=20)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--server", help="evaluate via a running service instead")

    dq = sub.add_parser("dump-qtot", help="print joint values for the two-step game states")
    dq.add_argument("--checkpoint", required=True)
    dq.add_argument("--server")

    pc = sub.add_parser("print-config", help="show every effective config value")
    pc.add_argument("--env", default="two_step")
    pc.add_argument("--algo", default="qmix")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--config", help="YAML config file to inspect")

    sv = sub.add_parser("serve", help="start the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.add_argument("--out-root", help="directory where jobs write their artifacts")

    return parser


def _parse_override(text: str):
    if "=" not in text:
        raise SystemExit(f"--set expects KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _run_request(args) -> schemas.RunRequest:
    if args.config:
        cfg = load_config(args.config)
        doc = cfg.to_dict()
        doc.pop("overridden", None)
        env = doc.pop("env")
        algo = doc.pop("algorithm")
        seed = doc.pop("seed")
    else:
        if not args.env or not args.algo:
            raise SystemExit("run needs either --config or both --env and --algo")
        env, algo, seed, doc = args.env, args.algo, 0, {}
    if args.env:
        env = args.env
    if args.algo:
        algo = args.algo
    if args.seed is not None:
        seed = args.seed
    for item in args.set:
        key, value = _parse_override(item)
        doc[key] = value
    return schemas.RunRequest(env=env, algorithm=algo, seed=seed, overrides=doc)


def _print_report(report: schemas.ReportModel) -> None:
    for point in report.points:
        metrics = ", ".join(f"{k}={v:.4g}" for k, v in point.metrics.items())
        print(f"episode {point.episode:>6}  env_steps {point.env_steps:>8}  {metrics}")
    for name, value in report.baselines.items():
        print(f"baseline {name} = {value:.4g}")


def _cmd_run(args) -> int:
    req = _run_request(args)
    if args.server:
        import httpx

        with httpx.Client(base_url=args.server, timeout=30.0) as client:
            resp = client.post("/experiments", json=req.model_dump())
            resp.raise_for_status()
            job = schemas.JobInfo(**resp.json())
            print(f"submitted {job.job_id} ({job.algorithm} on {job.env}, seed {job.seed})")
            while job.status in ("queued", "running"):
                time.sleep(1.0)
                job = schemas.JobInfo(**client.get(f"/experiments/{job.job_id}").json())
            if job.status == "error":
                print(f"job failed: {job.detail}", file=sys.stderr)
                return 1
            _print_report(job.report)
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                csv_text = client.get(f"/experiments/{job.job_id}/metrics.csv").text
                (out / METRICS_FILE).write_text(csv_text)
                print(f"wrote {out / METRICS_FILE}")
        return 0
    config = config_from_request(req)
    result = run_to_completion(config, args.out)
    _print_report(report_to_model(result.report))
    if result.out_dir:
        print(f"artifacts in {result.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    req = schemas.EvalRequest(checkpoint=args.checkpoint, episodes=args.episodes, seed=args.seed)
    if args.server:
        import httpx

        resp = httpx.post(f"{args.server}/evaluations", json=req.model_dump(), timeout=600.0)
        resp.raise_for_status()
        out = schemas.EvalResponse(**resp.json())
    else:
        out = evaluate_checkpoint(req)
    print(f"{out.algorithm} on {out.env}: mean return {out.mean_return:.4g} "
          f"over {out.episodes} greedy episodes"
          + (f", win rate {out.win_rate:.2%}" if out.win_rate is not None else ""))
    return 0


def _cmd_dump_qtot(args) -> int:
    req = schemas.QtotRequest(checkpoint=args.checkpoint)
    if args.server:
        import httpx

        resp = httpx.post(f"{args.server}/qtot-tables", json=req.model_dump(), timeout=60.0)
        resp.raise_for_status()
        out = schemas.QtotResponse(**resp.json())
    else:
        out = qtot_tables(req)
    print(format_qtot_table({"kind": out.kind, "states": out.states, "tables": out.tables}))
    return 0


def _cmd_print_config(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        rows = cfg.effective_rows()
        env, algo, seed = cfg.env, cfg.algorithm, cfg.seed
    else:
        resp = effective_config(args.env, args.algo, seed=args.seed)
        rows = [(r.name, r.value, r.provenance) for r in resp.rows]
        env, algo, seed = resp.env, resp.algorithm, resp.seed
    print(f"env={env} algorithm={algo} seed={seed}")
    width = max(len(name) for name, _, _ in rows)
    for name, value, provenance in rows:
        print(f"  {name:<{width}}  {value!s:<12}  [{provenance}]")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(args.out_root), host=args.host, port=args.port)
    return 0


def main(argv: Optional[list] = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "eval": _cmd_eval,
        "dump-qtot": _cmd_dump_qtot,
        "print-config": _cmd_print_config,
        "serve": _cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
