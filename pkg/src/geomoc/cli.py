"""Command-line client for the experiment service.

``geomoc run`` and ``geomoc compare`` are thin HTTP clients: by default
they mount the FastAPI app in process (no socket), or target a running
server with --server. ``geomoc serve`` starts that server. Artifact and
report files are written atomically (write to a temporary name in the
target directory, then rename), so failed runs never leave partial
files.

Exit codes: 0 all checks pass, 1 check failure (or comparison out of
tolerance), 2 configuration/usage error, 3 solver failure. The
GEOMOC_SEED environment variable overrides the config seed. Numbers
print with 17 significant digits.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
import tempfile
from pathlib import Path

import httpx

from .trajio import fmt17

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _client_post(path: str, payload: dict, server: str | None):
    """POST to a remote server or to the in-process app."""
    if server is not None:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            response = client.post(path, json=payload)
        return response.status_code, response.json()

    async def _post_asgi():
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://geomoc.local", timeout=600.0) as client:
            response = await client.post(path, json=payload)
            return response.status_code, response.json()

    return asyncio.run(_post_asgi())


def _write_atomic(directory: Path, name: str, content: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=directory, prefix=f".{name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(content)
        target = directory / name
        os.replace(tmp_name, target)
        return target
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def _load_config(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        print(f"config error: cannot read {path}: {exc}", file=sys.stderr)
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"config error: {path}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return None


def _format_validation_detail(detail) -> str:
    if isinstance(detail, list):
        lines = []
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p not in ("body", "config"))
            lines.append(f"  {loc or '<config>'}: {item.get('msg', 'invalid')}")
        return "\n".join(lines)
    return f"  {detail}"


def cmd_run(args) -> int:
    doc = _load_config(args.config)
    if doc is None:
        return EXIT_CONFIG
    env_seed = os.environ.get("GEOMOC_SEED")
    if env_seed is not None:
        try:
            doc["seed"] = int(env_seed)
        except ValueError:
            print(f"config error: GEOMOC_SEED={env_seed!r} is not an integer", file=sys.stderr)
            return EXIT_CONFIG
    payload = {"config": doc, "tol_scale": args.tol_scale, "threads": args.threads}
    status, body = _client_post("/run", payload, args.server)
    if status == 422 or status == 400:
        print("config error:", file=sys.stderr)
        print(_format_validation_detail(body.get("detail", body)), file=sys.stderr)
        return EXIT_CONFIG
    if status != 200:
        print(f"server error: HTTP {status}: {body}", file=sys.stderr)
        return EXIT_SOLVER
    if body["status"] == "solver_failure":
        print(f"solver failure: {body['message']}", file=sys.stderr)
        return EXIT_SOLVER

    out_dir = Path(args.out if args.out is not None else doc.get("out") or ".")
    for artifact in body["artifacts"]:
        path = _write_atomic(out_dir, artifact["name"], artifact["content"])
        print(f"wrote {path}")
    report = {
        "kind": body["kind"],
        "seed": body["seed"],
        "checks": {
            c["name"]: {"value": c["value"], "tolerance": c["tolerance"], "pass": c["passed"]}
            for c in body["checks"]
        },
        "passed": body["status"] == "passed",
    }
    path = _write_atomic(out_dir, "report.json", json.dumps(report, indent=2) + "\n")
    print(f"wrote {path}")
    for c in body["checks"]:
        verdict = "PASS" if c["passed"] else "FAIL"
        print(f"{verdict} {c['name']}: value={fmt17(c['value'])} tolerance={fmt17(c['tolerance'])}")
    if body["status"] == "passed":
        print("all checks passed")
        return EXIT_OK
    print("check failure", file=sys.stderr)
    return EXIT_CHECK_FAILED


def cmd_compare(args) -> int:
    try:
        text_a = Path(args.a).read_text()
        text_b = Path(args.b).read_text()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status, body = _client_post("/compare", {"a": text_a, "b": text_b, "tol": args.tol}, args.server)
    if status in (400, 422):
        print("comparison error:", file=sys.stderr)
        print(_format_validation_detail(body.get("detail", body)), file=sys.stderr)
        return EXIT_CONFIG
    if status != 200:
        print(f"server error: HTTP {status}: {body}", file=sys.stderr)
        return EXIT_SOLVER
    for col in body["columns"]:
        print(f"{col['column']}: max_abs={fmt17(col['max_abs'])} max_rel={fmt17(col['max_rel'])}")
    print(f"overall: max_abs={fmt17(body['max_abs'])} max_rel={fmt17(body['max_rel'])} rows={body['rows']}")
    if body["within_tol"]:
        print(f"within tolerance {fmt17(body['tolerance'])}")
        return EXIT_OK
    print(f"exceeds tolerance {fmt17(body['tolerance'])}", file=sys.stderr)
    return EXIT_CHECK_FAILED


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geomoc", description="geometric optimal-control experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("config", help="path to the experiment config (JSON, discriminated by 'kind')")
    run_p.add_argument("--out", default=None, help="output directory (default: config 'out' or cwd)")
    run_p.add_argument("--threads", type=int, default=1, help="sample/trajectory parallelism bound")
    run_p.add_argument("--tol-scale", type=float, default=1.0, dest="tol_scale", help="multiply all check tolerances")
    run_p.add_argument("--server", default=None, help="run against a remote service instead of in-process")
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare", help="column-wise diff of two trajectory CSV files")
    cmp_p.add_argument("a")
    cmp_p.add_argument("b")
    cmp_p.add_argument("--tol", type=float, required=True, help="max absolute deviation allowed")
    cmp_p.add_argument("--server", default=None)
    cmp_p.set_defaults(func=cmd_compare)

    serve_p = sub.add_parser("serve", help="start the HTTP service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8321)
    serve_p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
