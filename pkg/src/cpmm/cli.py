"""Command-line front end: a thin client over the market service.

By default commands run against an in-process service instance (ASGI
transport, no sockets); --server points them at a remote deployment instead.
Exit codes: 0 success, 1 fixture/assertion failure, 2 usage or validation
error, 3 runtime error.

    cpmm run --scenario default --seed 7 --out out/
    cpmm experiment convergence --scenario default --out out/
    cpmm verify-fixtures
    cpmm demo
    cpmm serve --port 8402
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from .canonical import canonical_bytes
from .scenario import ScenarioError, scenario_to_record
from .scenarios_bundled import resolve_scenario_path

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=1800.0)
    from starlette.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), base_url="http://cpmm.local")


def _load_scenario_arg(spec: str) -> dict:
    config = resolve_scenario_path(spec)
    return scenario_to_record(config)


def _write(out_dir: Path, name: str, data: bytes) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_bytes(data)
    return path


def cmd_run(args) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
    except (FileNotFoundError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    body = {
        "scenario": scenario,
        "seed": args.seed,
        "full_protocol": args.full_protocol,
        "include_series": True,
    }
    with make_client(args.server) as client:
        response = client.post("/runs", json=body)
    if response.status_code == 422:
        print(f"error: {response.json()['detail']}", file=sys.stderr)
        return EXIT_USAGE
    if response.status_code != 200:
        print(f"error: service returned {response.status_code}: {response.text}", file=sys.stderr)
        return EXIT_RUNTIME
    payload = response.json()
    out_dir = Path(args.out)
    _write(out_dir, "metrics.tsv", payload["metrics_table"].encode("utf-8"))
    summary = dict(payload["summary"], scenario=payload["scenario"], seed=payload["seed"])
    _write(out_dir, "summary.json", canonical_bytes(summary))
    print(f"run complete: scenario={payload['scenario']} seed={payload['seed']} "
          f"trades={payload['summary']['trades']} efficiency={payload['summary']['efficiency']}")
    print(f"wrote {out_dir / 'metrics.tsv'} and {out_dir / 'summary.json'}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
    except (FileNotFoundError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    body = {"scenario": scenario, "seed": args.seed}
    with make_client(args.server) as client:
        response = client.post(f"/experiments/{args.name}", json=body)
    if response.status_code == 422:
        print(f"error: {response.json()['detail']}", file=sys.stderr)
        return EXIT_USAGE
    if response.status_code != 200:
        print(f"error: service returned {response.status_code}: {response.text}", file=sys.stderr)
        return EXIT_RUNTIME
    payload = response.json()
    out_dir = Path(args.out)
    _write(out_dir, f"{args.name}_report.json",
           json.dumps(payload, indent=2, sort_keys=True).encode("utf-8"))
    status = "PASS" if payload["passed"] else "FAIL"
    print(f"{args.name}: {status}")
    for key, value in sorted(payload["report"].items()):
        if isinstance(value, (int, float, bool, str)) or value is None:
            print(f"  {key}: {value}")
    print(f"wrote {out_dir / (args.name + '_report.json')}")
    return EXIT_OK if payload["passed"] else EXIT_ASSERTION


def cmd_verify_fixtures(args) -> int:
    with make_client(args.server) as client:
        response = client.post("/fixtures/verify")
    if response.status_code != 200:
        print(f"error: service returned {response.status_code}", file=sys.stderr)
        return EXIT_RUNTIME
    payload = response.json()
    for result in payload["results"]:
        mark = "ok" if result["ok"] else f"MISMATCH ({result['detail']})"
        print(f"{result['name']}: {mark}")
    return EXIT_OK if payload["ok"] else EXIT_ASSERTION


def cmd_demo(args) -> int:
    with make_client(args.server) as client:
        response = client.post("/demo")
    if response.status_code != 200:
        print(f"error: service returned {response.status_code}", file=sys.stderr)
        return EXIT_RUNTIME
    payload = response.json()
    for line in payload["transcript"]:
        print(line)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpmm", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a market scenario and write metrics")
    run_p.add_argument("--scenario", required=True, help="scenario file path or bundled name")
    run_p.add_argument("--seed", type=int, default=None, help="seed override")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--full-protocol", action="store_true",
                       help="drive every trade through the full negotiation protocol")
    run_p.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    run_p.set_defaults(func=cmd_run)

    exp_p = sub.add_parser("experiment", help="run a named property experiment")
    exp_p.add_argument("name", choices=["convergence", "efficiency", "sybil", "regret", "elasticity"])
    exp_p.add_argument("--scenario", required=True, help="scenario file path or bundled name")
    exp_p.add_argument("--seed", type=int, default=None)
    exp_p.add_argument("--out", default="out")
    exp_p.add_argument("--server", default=None)
    exp_p.set_defaults(func=cmd_experiment)

    fix_p = sub.add_parser("verify-fixtures", help="re-encode golden wire fixtures byte-exactly")
    fix_p.add_argument("--server", default=None)
    fix_p.set_defaults(func=cmd_verify_fixtures)

    demo_p = sub.add_parser("demo", help="replay the marketplace walkthrough transcript")
    demo_p.add_argument("--server", default=None)
    demo_p.set_defaults(func=cmd_demo)

    serve_p = sub.add_parser("serve", help="start the market service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8402)
    serve_p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except httpx.HTTPError as exc:
        print(f"error: transport failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
