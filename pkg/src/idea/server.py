"""A standing database that executes scripts sent over TCP.

Each connection sends one script and half-closes its write side. The reply is
one JSON line per statement: ``{"ok": true, "result": ...}`` or
``{"ok": false, "error": "..."}`` for the statement that failed (the rest of
the script is skipped).
"""

from __future__ import annotations

import json
import socketserver
import threading

from .database import Database
from .datamodel import print_json
from .ddl import parse_script
from .errors import BindError, IdeaError

MAX_SCRIPT_BYTES = 16 << 20


def _result_json(value):
    if value is None:
        return "null"
    if isinstance(value, list):
        return "[" + ",".join(print_json(v) for v in value) + "]"
    return print_json(value)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        data = self.rfile.read(MAX_SCRIPT_BYTES)
        out = self.wfile
        try:
            stmts = parse_script(data.decode("utf-8"))
        except (IdeaError, UnicodeDecodeError) as e:
            out.write((json.dumps({"ok": False, "error": str(e)}) + "\n").encode())
            return
        db = self.server.db
        for s in stmts:
            try:
                with self.server.lock:
                    r = db.execute_statement(s)
                out.write(f'{{"ok": true, "result": {_result_json(r)}}}\n'.encode())
            except Exception as e:  # noqa: BLE001 - reported to the client
                out.write((json.dumps({"ok": False, "error": f"{type(e).__name__}: {e}"})
                           + "\n").encode())
                return


class ScriptServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, host, port, nodes=1, **db_options):
        try:
            super().__init__((host, port), _Handler)
        except OSError as e:
            raise BindError(f"cannot listen on {host}:{port}: {e.strerror or e}") from None
        self.db = Database(nodes=nodes, **db_options)
        self.lock = threading.Lock()

    @property
    def address(self):
        return self.server_address[:2]

    def server_close(self):
        super().server_close()
        self.db.close()


def send_script(host, port, script, timeout=30.0):
    """Client side: send ``script``, return the decoded reply lines."""
    import socket

    with socket.create_connection((host, port), timeout=timeout) as s:
        s.sendall(script.encode("utf-8"))
        s.shutdown(socket.SHUT_WR)
        chunks = []
        while True:
            b = s.recv(65536)
            if not b:
                break
            chunks.append(b)
    return [json.loads(line) for line in b"".join(chunks).decode("utf-8").splitlines() if line]


__all__ = ["ScriptServer", "send_script"]
