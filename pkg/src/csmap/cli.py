"""Command-line client for the simulation service.

The CLI is a thin client: every command talks to the service API.  By
default the service runs in-process (an ASGI transport, no sockets); pass
``--server URL`` to use a remote instance instead.  Artifacts returned by
the service are written below the output directory exactly as received,
atomically per file.

Exit codes: 0 success / clean verification; 1 unexpected verification
failure; 2 usage or configuration error; 3 violations found but expected
(a desynchronized run behaving as predicted).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_EXPECTED = 3

OUT_ROOT_ENV = "CSMAP_OUT_ROOT"


class _InProcessTransport(httpx.BaseTransport):
    """Sync bridge to the ASGI app so the CLI needs no running server."""

    def __init__(self, app):
        self._transport = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        async def call() -> httpx.Response:
            response = await self._transport.handle_async_request(request)
            await response.aread()
            return response

        response = asyncio.run(call())
        return httpx.Response(
            status_code=response.status_code,
            headers=response.headers,
            content=response.content,
        )


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from .service import create_app

    transport = _InProcessTransport(create_app())
    return httpx.Client(transport=transport, base_url="http://csmap.local", timeout=None)


def default_out_dir(name: str) -> Path:
    root = os.environ.get(OUT_ROOT_ENV, "csmap-out")
    return Path(root) / name


def write_artifacts(out_dir: Path, artifacts: dict[str, str]) -> None:
    for rel in sorted(artifacts):
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, "w", newline="") as handle:
                handle.write(artifacts[rel])
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _print_summary(rows: list[dict]) -> None:
    for row in rows:
        bits = [f"point={row.get('point')}"]
        for key in ("packets", "collisions", "mean_ber", "max_delay_rounds", "regimes_seen"):
            value = row.get(key)
            if value not in (None, ""):
                bits.append(f"{key}={value}")
        print("  " + " ".join(bits))


def _post(client: httpx.Client, path: str, payload: dict):
    try:
        response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None
    if response.status_code == 400:
        print(f"error: {response.json().get('detail')}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    response.raise_for_status()
    return response.json()


def cmd_run(args) -> int:
    if (args.scenario is None) == (args.preset is None):
        print("error: provide a scenario file or --preset (not both)", file=sys.stderr)
        return EXIT_USAGE
    payload: dict = {"include_trace": not args.no_trace}
    if args.scenario is not None:
        try:
            payload["scenario"] = Path(args.scenario).read_text()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        payload["preset"] = args.preset
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.duration is not None:
        payload["duration_s"] = args.duration
    with make_client(args.server) as client:
        body = _post(client, "/runs", payload)
    out_dir = Path(args.out) if args.out else default_out_dir(body["name"])
    write_artifacts(out_dir, body["artifacts"])
    print(f"run {body['name']}: {len(body['points'])} point(s) -> {out_dir}")
    _print_summary(body["summary"])
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        trace_text = Path(args.trace).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    with make_client(args.server) as client:
        body = _post(client, "/verify", {"trace": trace_text})
    for check in body["checks"]:
        tag = {"pass": "PASS", "expected_violations": "EXPECTED", "fail": "FAIL"}[check["status"]]
        print(f"{tag:8s} {check['name']}: {check['detail']}")
        for violation in check["violations"]:
            print(f"         - {violation}")
    status = body["status"]
    if status == "pass":
        return EXIT_OK
    if status == "expected_violations":
        print("verdict: violations found, all expected for this run mode")
        return EXIT_EXPECTED
    print("verdict: unexpected violations")
    return EXIT_FAIL


def cmd_sweep(args) -> int:
    try:
        text = Path(args.scenario).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        values = [float(v) for v in args.values]
    except ValueError as exc:
        print(f"error: bad sweep value: {exc}", file=sys.stderr)
        return EXIT_USAGE

    base = {"scenario": text, "param": args.param, "include_trace": args.trace}
    if args.seed is not None:
        base["seed"] = args.seed

    def run_chunk(chunk: list[float]) -> dict:
        with make_client(args.server) as client:
            return _post(client, "/sweeps", {**base, "values": chunk})

    workers = max(1, args.workers)
    if workers == 1:
        bodies = [run_chunk(values)]
    else:
        chunks = [values[i::workers] for i in range(workers) if values[i::workers]]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            bodies = list(pool.map(run_chunk, chunks))

    artifacts: dict[str, str] = {}
    rows_by_value: dict[float, dict] = {}
    for body in bodies:
        for rel, content in body["artifacts"].items():
            if rel.startswith("points/"):
                artifacts[rel] = content
        for row in body["summary"]:
            rows_by_value[row["value"]] = row
    rows = [rows_by_value[v] for v in values]
    from .trace import csv_text  # local import: CLI stays a thin client otherwise

    artifacts[f"plotdata/sweep_{args.param.replace('.', '_')}.csv"] = csv_text(
        ["value", "mean_ber", "max_ber", "packets", "collisions"],
        [[r["value"], r["mean_ber"], r["max_ber"], r["packets"], r["collisions"]] for r in rows],
    )
    from .runner import SUMMARY_COLUMNS

    artifacts["summary.csv"] = csv_text(
        SUMMARY_COLUMNS, [[r.get(c) for c in SUMMARY_COLUMNS] for r in rows]
    )
    out_dir = Path(args.out) if args.out else default_out_dir(f"sweep_{args.param.replace('.', '_')}")
    write_artifacts(out_dir, artifacts)
    print(f"sweep {args.param}: {len(values)} point(s) -> {out_dir}")
    _print_summary(rows)
    return EXIT_OK


def cmd_presets(args) -> int:
    with make_client(args.server) as client:
        response = client.get("/presets")
        response.raise_for_status()
    for preset in response.json():
        print(f"{preset['name']:18s} {preset['description']}")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        import uvicorn
    except ImportError:
        print("error: uvicorn is not installed (pip install 'csmap[serve]')", file=sys.stderr)
        return EXIT_USAGE
    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csmap",
        description="Client for the CSMA/AP-T simulation service",
    )
    parser.add_argument("--server", help="service URL (default: in-process service)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file or preset")
    p_run.add_argument("scenario", nargs="?", help="scenario file path")
    p_run.add_argument("--preset", help="built-in preset name")
    p_run.add_argument("--seed", type=int, help="seed override")
    p_run.add_argument("--duration", type=float, help="run-duration override, seconds")
    p_run.add_argument("--out", help=f"output directory (default ${OUT_ROOT_ENV}/<name>)")
    p_run.add_argument("--no-trace", action="store_true", help="skip trace.jsonl artifacts")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="verify a trace.jsonl file")
    p_verify.add_argument("trace", help="trace.jsonl path")
    p_verify.set_defaults(func=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="run a scenario across parameter values")
    p_sweep.add_argument("scenario", help="scenario file path")
    p_sweep.add_argument("--param", required=True, help="section.key to vary")
    p_sweep.add_argument("--values", required=True, nargs="+", help="values to sweep")
    p_sweep.add_argument("--seed", type=int, help="seed override")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--trace", action="store_true", help="keep per-point traces")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel request workers")
    p_sweep.set_defaults(func=cmd_sweep)

    p_presets = sub.add_parser("presets", help="list built-in presets")
    p_presets.set_defaults(func=cmd_presets)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:  # helpers abort with an exit code
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
