"""Command line entry point.

    lakesim <experiment> --config <path> [--out <dir>] [--seed <u64>]
    lakesim serve [--host H] [--port P]

By default experiments run in-process; with --server the CLI is a thin
client that submits the config to a running service and polls for the
report.  Exit status is 0 on success and nonzero with a machine-readable
failure record (failure.json in the output directory) otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .config import EXPERIMENTS, parse_config
from .errors import LakeSimError


def _build_parser():
    parser = argparse.ArgumentParser(prog="lakesim")
    sub = parser.add_subparsers(dest="command", required=True)
    for exp in EXPERIMENTS:
        p = sub.add_parser(exp, help=f"run the {exp} experiment")
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="RNG seed override")
        p.add_argument("--server", default=None,
                       help="submit to a running service at this base URL")
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _run_remote(server, config, out, poll=0.5):
    import httpx

    payload = {"config": json.loads(config.model_dump_json()), "out_dir": out}
    with httpx.Client(base_url=server, timeout=60.0) as client:
        resp = client.post("/api/experiments", json=payload)
        resp.raise_for_status()
        job_id = resp.json()["job_id"]
        while True:
            status = client.get(f"/api/experiments/{job_id}").json()
            if status["state"] in ("done", "failed"):
                break
            time.sleep(poll)
        if status["state"] == "failed":
            print(json.dumps(status, indent=2), file=sys.stderr)
            return 1
        report = client.get(f"/api/experiments/{job_id}/report").json()
        print(json.dumps({"job_id": job_id, "out_dir": status["out_dir"],
                          "report": report}, indent=2, sort_keys=True))
        return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        uvicorn.run("lakesim.service.app:app", host=args.host, port=args.port)
        return 0

    try:
        config = parse_config(args.config)
    except LakeSimError as exc:
        print(json.dumps({"status": "failed",
                          "error": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 2
    if config.experiment != args.command:
        config = config.model_copy(update={"experiment": args.command})
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})

    if args.server:
        return _run_remote(args.server, config, args.out)

    from . import experiments

    try:
        result = experiments.run(config, out_dir=args.out)
    except OSError as exc:
        print(json.dumps({"status": "failed", "error": f"OSError: {exc}"}),
              file=sys.stderr)
        return 3
    if not result.ok:
        print(json.dumps({"status": "failed", "error": result.failure}),
              file=sys.stderr)
        return 2
    print(json.dumps({"status": "ok", "out_dir": str(result.out_dir)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
