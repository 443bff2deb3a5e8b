"""Batch client for the rotscore NDJSON scoring service."""

from __future__ import annotations

import json
import queue
import socket
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

Endpoint = Union[str, Sequence[str]]


class TransportError(ConnectionError):
    pass


@dataclass
class ClientConfig:
    # "host:port" for TCP, or an argv list that starts `rotscore serve`.
    endpoint: Endpoint
    timeout: float = 30.0
    retries: int = 2
    env: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


class _Stdio:
    def __init__(self, argv, env):
        self.proc = subprocess.Popen(
            list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
            env=env or None,
        )
        self.lines: queue.Queue = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)

    def send(self, text: str):
        try:
            self.proc.stdin.write(text)
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as e:
            raise TransportError(str(e)) from e

    def recv(self, deadline: float) -> str:
        try:
            line = self.lines.get(timeout=max(0.0, deadline - time.monotonic()))
        except queue.Empty:
            raise TimeoutError("batch timed out") from None
        if line is None:
            raise TransportError("service exited")
        return line

    def close(self):
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()


class _Tcp:
    def __init__(self, address: str, timeout: float):
        host, _, port = address.rpartition(":")
        self.sock = socket.create_connection((host, int(port)), timeout=timeout)
        self.reader = self.sock.makefile("r", encoding="utf-8")

    def send(self, text: str):
        self.sock.sendall(text.encode("utf-8"))

    def recv(self, deadline: float) -> str:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TimeoutError("batch timed out")
        self.sock.settimeout(remaining)
        try:
            line = self.reader.readline()
        except socket.timeout:
            raise TimeoutError("batch timed out") from None
        if not line:
            raise TransportError("connection closed")
        return line

    def close(self):
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


class Client:
    """One connection to the service; reconnects on transport failure."""

    def __init__(self, config: ClientConfig):
        self.config = config
        self._conn = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def _connect(self):
        if self._conn is None:
            ep = self.config.endpoint
            try:
                if isinstance(ep, str):
                    self._conn = _Tcp(ep, self.config.timeout)
                else:
                    self._conn = _Stdio(ep, self.config.env)
            except OSError as e:
                raise TransportError(str(e)) from e
        return self._conn

    def score_batch(self, requests: Sequence[Any]) -> list:
        """Responses in request order. Scoring failures come back as
        records with ok == False; only transport problems raise."""
        last = None
        for _ in range(self.config.retries + 1):
            try:
                return self._once(requests)
            except (TransportError, OSError) as e:
                # includes TimeoutError; a half-read batch leaves the
                # connection out of step, so always reconnect
                last = e
                self.close()
        if isinstance(last, TimeoutError):
            raise last
        raise TransportError(f"gave up after {self.config.retries + 1} attempts: {last}")

    def _once(self, requests):
        conn = self._connect()
        lines = [r if isinstance(r, str) else json.dumps(r) for r in requests]
        conn.send("".join(line.replace("\n", " ") + "\n" for line in lines))
        deadline = time.monotonic() + self.config.timeout
        responses = []
        for _ in lines:
            responses.append(json.loads(conn.recv(deadline)))
        return _in_request_order(requests, responses)


def _in_request_order(requests, responses):
    by_id: dict = {}
    for r in responses:
        by_id.setdefault(r.get("id"), []).append(r)
    out = [None] * len(requests)
    for i, req in enumerate(requests):
        rid = req.get("id") if isinstance(req, dict) else None
        if rid is not None and by_id.get(rid):
            out[i] = by_id[rid].pop(0)
    leftovers = [r for rs in by_id.values() for r in rs]
    for i in range(len(out)):
        if out[i] is None:
            out[i] = leftovers.pop(0)
    return out


def score_batch(requests: Sequence[Any], config: ClientConfig) -> list:
    with Client(config) as c:
        return c.score_batch(requests)
