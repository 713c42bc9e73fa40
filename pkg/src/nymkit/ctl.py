"""Command surface: one dispatch table serving both the CLI and the local
control API.

The control API is a unix-socket service speaking newline-delimited JSON
frames `{id, verb, args}` -> `{id, ok, body}` / `{id, ok, error}` plus
`{event, ...}` notifications on subscribed connections. The CLI is a thin
client over the same socket, so both surfaces reach the identical engine
entry points by construction. A small HTTP bridge (POST /api/command,
GET /api/events as server-sent events) exposes the same dispatch to the
web console; it binds to localhost only.

Secrets are read from the environment (NYMKIT_PASSWORD, NYMKIT_CLOUD_SECRET)
or an interactive prompt, never from argv.
"""

from __future__ import annotations

import base64
import json
import os
import socket
import socketserver
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

import click

from . import metrics, sanivm, snapstore
from .config import EngineConfig, load_config
from .hostnym import HostDiskImage, PersistenceChoice
from .nymcore import NymEngine, NymMode
from .transports import TransportKind

DEFAULT_SOCK = "/tmp/nymkit.sock"


class CtlError(Exception):
    pass


class AddressInUseError(CtlError):
    pass


def _plan_from_args(args: dict, kind) -> sanivm.ScrubPlan:
    if args.get("paranoia") is not None:
        return sanivm.ScrubPlan.for_paranoia(int(args["paranoia"]), kind)
    names = args.get("plan") or []
    return sanivm.ScrubPlan(transforms=tuple(sanivm.Transform(n) for n in names))


def _media_from_args(engine: NymEngine, args: dict) -> sanivm.MediaFile:
    if args.get("payload_b64"):
        return sanivm.MediaFile(name=args.get("file", "inline"),
                                payload=base64.b64decode(args["payload_b64"]))
    catalog = engine.sanivm.catalog
    if catalog is None:
        raise CtlError("no host sources mounted")
    return catalog.as_media(args["path"])


def _findings_json(findings) -> list:
    return [{"field": f.field, "severity": f.severity.value,
             "rationale": f.rationale} for f in findings]


# --- dispatch table: the single point both CLI and API go through ----------

def _cmd_create(engine: NymEngine, args: dict) -> dict:
    nym = engine.create_nym(
        NymMode(args.get("mode", "ephemeral")),
        transport_kind=TransportKind(args["transport"]) if args.get("transport") else None)
    return {"nym_id": nym.nym_id, "mode": nym.mode.value, "state": nym.state.value,
            "transport": nym.transport.kind.value}


def _cmd_load(engine: NymEngine, args: dict) -> dict:
    nym = engine.load_nym(args["name"], args["password"],
                          engine.get_backend(args.get("backend", "local")))
    return {"nym_id": nym.nym_id, "mode": nym.mode.value, "state": nym.state.value}


def _cmd_store(engine: NymEngine, args: dict) -> dict:
    receipt = engine.store_nym(args["nym_id"], args["name"], args["password"],
                               engine.get_backend(args.get("backend", "local")))
    return {"object": receipt.object_name, "version": receipt.version,
            "digest": receipt.archive_digest, "bytes": receipt.archive_size}


def _cmd_snapshot(engine: NymEngine, args: dict) -> dict:
    receipt = engine.snapshot_nym(args["nym_id"], args["name"], args["password"],
                                  engine.get_backend(args.get("backend", "local")))
    return {"object": receipt.object_name, "version": receipt.version,
            "digest": receipt.archive_digest, "boot_image": True}


def _cmd_terminate(engine: NymEngine, args: dict) -> dict:
    engine.terminate_nym(args["nym_id"])
    return {"nym_id": args["nym_id"], "state": "terminated"}


def _cmd_pause(engine: NymEngine, args: dict) -> dict:
    engine.pause_nym(args["nym_id"])
    return {"nym_id": args["nym_id"], "state": "paused"}


def _cmd_resume(engine: NymEngine, args: dict) -> dict:
    engine.resume_nym(args["nym_id"])
    return {"nym_id": args["nym_id"], "state": "running"}


def _cmd_list(engine: NymEngine, args: dict) -> dict:
    return {"nyms": engine.summary()}


def _cmd_session_end(engine: NymEngine, args: dict) -> dict:
    action = engine.session_end_policy(args["nym_id"])
    return {"nym_id": args["nym_id"], "action": action.value}


def _cmd_scrub(engine: NymEngine, args: dict) -> dict:
    media = _media_from_args(engine, args)
    findings = engine.sanivm.analyze(media)
    body = {"file": media.name, "kind": media.kind.value,
            "findings": _findings_json(findings)}
    if args.get("plan") or args.get("paranoia") is not None:
        plan = _plan_from_args(args, media.kind)
        cleaned = engine.sanivm.scrub(media, plan)
        body["after"] = _findings_json(engine.sanivm.analyze(cleaned))
        body["plan"] = [t.value for t in plan.transforms]
    return body


def _cmd_transfer(engine: NymEngine, args: dict) -> dict:
    media = _media_from_args(engine, args)
    plan = _plan_from_args(args, media.kind)
    dest = engine.transfer_file(args["nym_id"], media, plan,
                                override=bool(args.get("override")))
    return {"nym_id": args["nym_id"], "dest": dest}


def _cmd_request_transfer(engine: NymEngine, args: dict) -> dict:
    media = _media_from_args(engine, args)
    dest = engine.request_transfer(args["nym_id"], media,
                                   timeout=float(args.get("timeout", 30.0)))
    return {"nym_id": args["nym_id"], "dest": dest}


def _cmd_approve(engine: NymEngine, args: dict) -> dict:
    plan = None
    if args.get("plan") is not None or args.get("paranoia") is not None:
        kind = sanivm.MediaKind(args.get("kind", "image"))
        plan = _plan_from_args(args, kind)
    engine.resolve_approval(args["request_id"], plan=plan,
                            override=bool(args.get("override")),
                            cancel=bool(args.get("cancel")))
    return {"request_id": args["request_id"], "resolved": True}


def _cmd_pending(engine: NymEngine, args: dict) -> dict:
    return {"pending": [{
        "request_id": p.request_id, "nym_id": p.nym_id, "file": p.file_name,
        "findings": _findings_json(p.findings),
    } for p in engine.pending_approvals()]}


def _cmd_probe(engine: NymEngine, args: dict) -> dict:
    report = engine.probe()
    body = {"attempted": len(report.attempted), "delivered": len(report.delivered),
            "violations": [(s.short(), d.short(), proto)
                           for s, d, proto in report.violations]}
    if args.get("full"):
        body["records"] = report.to_ldjson().splitlines()
    return body


def _cmd_report(engine: NymEngine, args: dict) -> dict:
    col = engine.collector
    ram_h, ram_r = metrics.export_ram_per_nym(col.ksm_samples)
    bw_h, bw_r = metrics.export_bandwidth(col.bandwidth_results)
    ph_h, ph_r = metrics.export_phase_breakdown(col.phase_report())
    body = {
        "ram_per_nym": {"header": ram_h, "rows": ram_r},
        "bandwidth": {"header": bw_h, "rows": bw_r},
        "phases": {"header": ph_h, "rows": ph_r},
        "size_series": {},
    }
    for name, series in col.size_series.items():
        s_h, s_r = metrics.export_size_series(series)
        body["size_series"][name] = {"header": s_h, "rows": s_r,
                                     "mode": series.mode}
    return body


def _cmd_host_boot(engine: NymEngine, args: dict) -> dict:
    disk = HostDiskImage.from_bytes(Path(args["image"]).read_bytes())
    target = engine.repair_host_disk(disk) if args.get("repair") else disk
    kind = TransportKind(args["transport"]) if args.get("transport") else None
    nym = engine.boot_installed_os(target, transport_kind=kind)
    if args.get("persistence"):
        engine.set_persistence_policy(nym, PersistenceChoice(args["persistence"]))
    return {"nym_id": nym.nym_id, "os": disk.os_label.value,
            "repaired": bool(args.get("repair")),
            "transport": nym.transport.kind.value}


def _cmd_mount(engine: NymEngine, args: dict) -> dict:
    root = Path(args["dir"])
    view = {f"/{p.relative_to(root)}": p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}
    catalog = engine.mount_host_sources(view)
    return {"mounted": len(catalog.paths())}


def _cmd_sources(engine: NymEngine, args: dict) -> dict:
    catalog = engine.sanivm.catalog
    return {"paths": catalog.paths() if catalog else []}


def _cmd_login(engine: NymEngine, args: dict) -> dict:
    backend = engine.get_backend(args.get("backend", "cloud"))
    token = backend.login(args["username"], args["secret"])
    return {"backend": backend.locator, "session": bool(token)}


def _cmd_dump(engine: NymEngine, args: dict) -> dict:
    """Deterministic state digest used by parity tests."""
    nyms = []
    for nym in engine.nyms.values():
        nyms.append({
            "mode": nym.mode.value, "state": nym.state.value,
            "anon_digest": nym.anon_stack.extract_writable().digest()
            if nym.anon_stack else None,
            "comm_digest": nym.comm_stack.extract_writable().digest()
            if nym.comm_stack else None,
            "guard": (nym.transport.circuit.entry_guard
                      if nym.transport and nym.transport.circuit else None),
            "storage": nym.storage_name,
        })
    stored = [{"object": r.object_name, "version": r.version,
               "anon_digest": r.anon_digest, "comm_digest": r.comm_digest}
              for r in engine.receipts]
    return {"nyms": nyms, "stored": stored,
            "audit": engine.sanivm.audit_ldjson().splitlines()}


DISPATCH = {
    "create": _cmd_create,
    "load": _cmd_load,
    "store": _cmd_store,
    "snapshot": _cmd_snapshot,
    "terminate": _cmd_terminate,
    "pause": _cmd_pause,
    "resume": _cmd_resume,
    "list": _cmd_list,
    "session-end": _cmd_session_end,
    "scrub": _cmd_scrub,
    "transfer": _cmd_transfer,
    "request-transfer": _cmd_request_transfer,
    "approve": _cmd_approve,
    "pending": _cmd_pending,
    "probe": _cmd_probe,
    "report": _cmd_report,
    "host-boot": _cmd_host_boot,
    "mount": _cmd_mount,
    "sources": _cmd_sources,
    "login": _cmd_login,
    "dump": _cmd_dump,
}


def dispatch(engine: NymEngine, verb: str, args: dict) -> dict:
    if verb not in DISPATCH:
        raise CtlError(f"unknown verb {verb!r}")
    return DISPATCH[verb](engine, args or {})


def parse_overrides(pairs) -> dict:
    """--set key=value flags; values coerced like config-file values."""
    from .config import _coerce
    overrides = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise CtlError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = _coerce(value)
    return overrides


def build_engine(config_path: Optional[str] = None,
                 overrides: Optional[dict] = None,
                 local_store: Optional[str] = None) -> NymEngine:
    config = load_config(config_path, overrides) if (config_path or overrides) \
        else EngineConfig()
    engine = NymEngine(config)
    engine.register_backend(
        "local", snapstore.LocalDirBackend(local_store or "/tmp/nymkit-store"))
    engine.register_backend("cloud", snapstore.MockCloudBackend("cloudbox"),
                            host="cloud.example")
    return engine


# --- control socket service -------------------------------------------------

class ControlServer:
    """Unix-socket control API; one thread per client connection."""

    def __init__(self, engine: NymEngine, sock_path: str):
        self.engine = engine
        self.sock_path = sock_path
        if os.path.exists(sock_path):
            probe = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            try:
                probe.connect(sock_path)
            except OSError:
                os.unlink(sock_path)  # stale socket from a dead server
            else:
                probe.close()
                raise AddressInUseError(sock_path)

        engine_ref = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                subscription = None
                try:
                    for raw in self.rfile:
                        line = raw.strip()
                        if not line:
                            continue
                        frame = json.loads(line.decode("utf-8"))
                        if frame.get("verb") == "subscribe":
                            subscription = engine_ref.engine.subscribe()
                            self._reply({"id": frame.get("id"), "ok": True,
                                         "body": {"subscribed": True}})
                            self._stream_events(subscription)
                            return
                        self._reply(engine_ref.handle_frame(frame))
                except (ConnectionError, json.JSONDecodeError, BrokenPipeError):
                    pass
                finally:
                    if subscription is not None:
                        engine_ref.engine.unsubscribe(subscription)

            def _reply(self, obj):
                self.wfile.write(json.dumps(obj).encode("utf-8") + b"\n")
                self.wfile.flush()

            def _stream_events(self, subscription):
                while True:
                    event = subscription.get()
                    if event is None:
                        return
                    self._reply(event)

        class Server(socketserver.ThreadingUnixStreamServer):
            daemon_threads = True
            allow_reuse_address = True

        self._server = Server(sock_path, Handler)
        self._thread: Optional[threading.Thread] = None

    def handle_frame(self, frame: dict) -> dict:
        frame_id = frame.get("id")
        try:
            body = dispatch(self.engine, frame.get("verb", ""), frame.get("args"))
            return {"id": frame_id, "ok": True, "body": body}
        except Exception as exc:
            return {"id": frame_id, "ok": False,
                    "error": {"type": type(exc).__name__, "message": str(exc)}}

    def start(self) -> "ControlServer":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if os.path.exists(self.sock_path):
            os.unlink(self.sock_path)


def send_command(sock_path: str, verb: str, args: Optional[dict] = None,
                 frame_id: int = 1) -> dict:
    """One-shot client call against a running control socket."""
    conn = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    conn.connect(sock_path)
    try:
        payload = json.dumps({"id": frame_id, "verb": verb, "args": args or {}})
        conn.sendall(payload.encode("utf-8") + b"\n")
        buf = b""
        while not buf.endswith(b"\n"):
            chunk = conn.recv(65536)
            if not chunk:
                break
            buf += chunk
        reply = json.loads(buf.decode("utf-8"))
    finally:
        conn.close()
    if not reply.get("ok"):
        error = reply.get("error", {})
        raise CtlError(f"{error.get('type', 'Error')}: {error.get('message', '')}")
    return reply["body"]


# --- HTTP bridge for the web console -----------------------------------------

class HttpBridge:
    """Localhost HTTP facade over the same dispatch table: POST /api/command,
    GET /api/events (SSE), static console files under /."""

    def __init__(self, engine: NymEngine, port: int = 0,
                 static_dir: Optional[str] = None):
        self.engine = engine
        bridge = self
        static = Path(static_dir) if static_dir else None

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                pass

            def _chunk(self, payload: bytes):
                self.wfile.write(f"{len(payload):X}\r\n".encode() + payload + b"\r\n")
                self.wfile.flush()

            def _json(self, code: int, obj: dict):
                data = json.dumps(obj).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(data)

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.end_headers()

            def do_POST(self):
                if self.path != "/api/command":
                    self._json(404, {"ok": False, "error": {"type": "NotFound"}})
                    return
                length = int(self.headers.get("Content-Length", "0"))
                frame = json.loads(self.rfile.read(length).decode("utf-8"))
                try:
                    body = dispatch(bridge.engine, frame.get("verb", ""),
                                    frame.get("args"))
                    self._json(200, {"ok": True, "body": body})
                except Exception as exc:
                    self._json(200, {"ok": False,
                                     "error": {"type": type(exc).__name__,
                                               "message": str(exc)}})

            def do_GET(self):
                if self.path == "/api/events":
                    self.send_response(200)
                    self.send_header("Content-Type", "text/event-stream")
                    self.send_header("Cache-Control", "no-cache")
                    self.send_header("Access-Control-Allow-Origin", "*")
                    self.send_header("Transfer-Encoding", "chunked")
                    self.end_headers()
                    subscription = bridge.engine.subscribe()
                    try:
                        # greet once subscribed so clients can synchronize
                        self._chunk(b'data: {"event": "subscribed"}\n\n')
                        while True:
                            event = subscription.get()
                            if event is None:
                                self._chunk(b"")
                                return
                            data = json.dumps(event)
                            self._chunk(f"data: {data}\n\n".encode("utf-8"))
                    except (ConnectionError, BrokenPipeError):
                        pass
                    finally:
                        bridge.engine.unsubscribe(subscription)
                    return
                self._serve_static()

            def _serve_static(self):
                path = self.path.split("?")[0]
                if path == "/":
                    path = "/index.html"
                candidate = (static / path.lstrip("/")) if static else None
                if candidate and candidate.is_file():
                    data = candidate.read_bytes()
                    ctype = {"html": "text/html", "js": "text/javascript",
                             "css": "text/css"}.get(
                        candidate.suffix.lstrip("."), "application/octet-stream")
                    self.send_response(200)
                    self.send_header("Content-Type", ctype)
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                else:
                    self._json(404, {"ok": False,
                                     "error": {"type": "NotFound",
                                               "message": path}})

        self._server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self._server.daemon_threads = True
        self.port = self._server.server_address[1]
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "HttpBridge":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


# --- CLI ----------------------------------------------------------------------

def _sock_option(func):
    return click.option("--sock", envvar="NYMKIT_SOCK", default=DEFAULT_SOCK,
                        show_default=True, help="control socket path")(func)


def _password(prompt: str = "Password") -> str:
    value = os.environ.get("NYMKIT_PASSWORD")
    if value is None:
        value = click.prompt(prompt, hide_input=True)
    return value


def _run(sock: str, verb: str, args: dict) -> None:
    try:
        body = send_command(sock, verb, args)
    except (CtlError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(body, indent=2))


@click.group()
def main():
    """Nym manager control CLI (talks to a running `nym serve`)."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--local-store", type=click.Path(), default=None,
              help="directory for the local storage backend")
@click.option("--sources", type=click.Path(exists=True), default=None,
              help="host directory to mount read-only in the SaniVM")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="override any engine config value (repeatable)")
@_sock_option
def serve(config_path, local_store, sources, overrides, sock):
    """Run the engine and its control socket."""
    engine = build_engine(config_path, parse_overrides(overrides),
                          local_store=local_store)
    if sources:
        dispatch(engine, "mount", {"dir": sources})
    try:
        server = ControlServer(engine, sock)
    except AddressInUseError:
        click.echo(f"error: socket {sock} already in use", err=True)
        sys.exit(1)
    click.echo(f"nymkit engine listening on {sock}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()


@main.command("serve-http")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8731, show_default=True)
@click.option("--local-store", type=click.Path(), default=None)
@click.option("--sources", type=click.Path(exists=True), default=None)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="built console assets to serve at /")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="override any engine config value (repeatable)")
def serve_http(config_path, port, local_store, sources, static_dir, overrides):
    """Run the engine behind the localhost HTTP bridge (console backend)."""
    engine = build_engine(config_path, parse_overrides(overrides),
                          local_store=local_store)
    if sources:
        dispatch(engine, "mount", {"dir": sources})
    bridge = HttpBridge(engine, port=port, static_dir=static_dir)
    click.echo(f"nymkit console bridge on http://127.0.0.1:{bridge.port}",)
    sys.stdout.flush()
    try:
        bridge.serve_forever()
    except KeyboardInterrupt:
        bridge.stop()


@main.command()
@click.option("--mode", type=click.Choice([m.value for m in NymMode]),
              default="ephemeral", show_default=True)
@click.option("--transport", type=click.Choice([k.value for k in TransportKind]),
              default=None)
@_sock_option
def create(mode, transport, sock):
    """Start a fresh nym."""
    _run(sock, "create", {"mode": mode, "transport": transport})


@main.command()
@click.argument("name")
@click.option("--backend", default="local", show_default=True)
@_sock_option
def load(name, backend, sock):
    """Load an existing nym from storage."""
    _run(sock, "load", {"name": name, "backend": backend,
                        "password": _password()})


@main.command()
@click.argument("nym_id")
@click.argument("name")
@click.option("--backend", default="local", show_default=True)
@_sock_option
def store(nym_id, name, backend, sock):
    """Encrypt and store a nym's writable state."""
    _run(sock, "store", {"nym_id": nym_id, "name": name, "backend": backend,
                         "password": _password()})


@main.command()
@click.argument("nym_id")
@click.argument("name")
@click.option("--backend", default="local", show_default=True)
@_sock_option
def snapshot(nym_id, name, backend, sock):
    """Snapshot a preconfigured nym as its boot image."""
    _run(sock, "snapshot", {"nym_id": nym_id, "name": name, "backend": backend,
                            "password": _password()})


@main.command()
@click.argument("nym_id")
@_sock_option
def terminate(nym_id, sock):
    """Terminate a nym (secure erase, amnesia)."""
    _run(sock, "terminate", {"nym_id": nym_id})


@main.command("list")
@_sock_option
def list_cmd(sock):
    """List nyms and their states."""
    _run(sock, "list", {})


@main.command()
@click.argument("path")
@click.option("--plan", multiple=True,
              type=click.Choice([t.value for t in sanivm.Transform]))
@click.option("--paranoia", type=click.IntRange(0, 2), default=None)
@_sock_option
def scrub(path, plan, paranoia, sock):
    """Analyze (and optionally preview-scrub) a mounted source file."""
    _run(sock, "scrub", {"path": path, "plan": list(plan), "paranoia": paranoia})


@main.command()
@click.argument("nym_id")
@click.argument("path")
@click.option("--plan", multiple=True,
              type=click.Choice([t.value for t in sanivm.Transform]))
@click.option("--paranoia", type=click.IntRange(0, 2), default=None)
@click.option("--override", is_flag=True,
              help="explicitly accept unresolved high-severity risks")
@_sock_option
def transfer(nym_id, path, plan, paranoia, override, sock):
    """Scrub a mounted source file and place it in a nym's inbound folder."""
    _run(sock, "transfer", {"nym_id": nym_id, "path": path, "plan": list(plan),
                            "paranoia": paranoia, "override": override})


@main.command()
@click.option("--full", is_flag=True, help="include per-pair records")
@_sock_option
def probe(full, sock):
    """Sweep the isolation matrix and report violations."""
    _run(sock, "probe", {"full": full})


@main.command()
@click.option("--out", type=click.Path(), default=None,
              help="write CSV exports to this directory")
@_sock_option
def report(out, sock):
    """Export the metrics reports (RAM, bandwidth, sizes, phases)."""
    try:
        body = send_command(sock, "report", {})
    except (CtlError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        for key in ("ram_per_nym", "bandwidth", "phases"):
            table = body[key]
            (outdir / f"{key}.csv").write_text(
                metrics.rows_to_csv(table["header"], table["rows"]))
        for name, table in body["size_series"].items():
            (outdir / f"size_{name}.csv").write_text(
                metrics.rows_to_csv(table["header"], table["rows"]))
        click.echo(f"wrote exports to {outdir}")
    else:
        click.echo(json.dumps(body, indent=2))


@main.command()
@click.argument("username")
@click.option("--backend", default="cloud", show_default=True)
@_sock_option
def login(username, backend, sock):
    """Log in to a storage service (mock cloud)."""
    secret = os.environ.get("NYMKIT_CLOUD_SECRET") \
        or click.prompt("Cloud secret", hide_input=True)
    _run(sock, "login", {"backend": backend, "username": username,
                         "secret": secret})


@main.command("host-boot")
@click.argument("image", type=click.Path(exists=True))
@click.option("--repair", is_flag=True, help="run the driver repair pass first")
@click.option("--persistence",
              type=click.Choice([p.value for p in PersistenceChoice]), default=None)
@click.option("--anonymizer", "transport",
              type=click.Choice([k.value for k in TransportKind]), default=None,
              help="override the default incognito transport (see warning)")
@_sock_option
def host_boot(image, repair, persistence, transport, sock):
    """Boot an installed-OS disk image as a (non-anonymous) nym."""
    if transport and transport != TransportKind.INCOGNITO.value:
        click.echo("warning: host nyms are non-anonymous by design; routing "
                   "the installed OS through an anonymizer does NOT anonymize "
                   "it (its contents already identify you)", err=True)
    _run(sock, "host-boot", {"image": image, "repair": repair,
                             "persistence": persistence,
                             "transport": transport})


if __name__ == "__main__":
    main()
