"""Master-side transports and the worker loop.

A transport performs one exchange per round: broadcast the iterate to
machines 1..m-1 and collect one gradient report from each. Machine 0 is
the master and computes its own gradient locally, so it never appears on
the wire.
"""
from __future__ import annotations

import logging
import selectors
import socket
import time
from dataclasses import dataclass

import numpy as np

from ..errors import RoundFailure, TransportError
from ..loss import loss_gradient
from .wire import (HEADER_SIZE, MessageKind, RoundMessage, decode,
                   decode_header, encode, frame_size, read_message,
                   send_message)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0


@dataclass
class Exchange:
    gradients: dict           # machine_id -> gradient at the broadcast iterate
    payload_bytes: int
    header_bytes: int


class Worker:
    """Answers model broadcasts with the local gradient."""

    def __init__(self, shard, spec):
        if shard.machine_id == 0:
            raise TransportError("machine 0 is the master, not a worker")
        self.shard = shard
        self.spec = spec

    @property
    def machine_id(self):
        return self.shard.machine_id

    def handle(self, msg):
        if msg.kind is MessageKind.SHUTDOWN:
            return None
        if msg.kind is not MessageKind.MODEL_BROADCAST:
            raise TransportError(f"worker got unexpected {msg.kind.name}")
        grad = loss_gradient(self.spec, self.shard, msg.payload)
        return RoundMessage(MessageKind.GRADIENT_REPORT, msg.round,
                            self.machine_id, grad)


def _check_report(reply, round_, sender, p):
    if reply.kind is not MessageKind.GRADIENT_REPORT:
        raise TransportError(f"machine {sender}: expected a gradient report, got {reply.kind.name}")
    if reply.round != round_:
        raise TransportError(f"machine {sender}: report for round {reply.round}, expected {round_}")
    if reply.sender != sender:
        raise TransportError(f"report claims sender {reply.sender}, connection is machine {sender}")
    if reply.payload_len != p:
        raise TransportError(f"machine {sender}: payload has {reply.payload_len} values, expected {p}")
    if not np.all(np.isfinite(reply.payload)):
        raise TransportError(f"machine {sender}: non-finite gradient")


class InProcessTransport:
    """Calls worker objects directly. Byte counts match the TCP framing."""

    def __init__(self, workers, p):
        self.workers = sorted(workers, key=lambda w: w.machine_id)
        self.p = p

    @classmethod
    def from_dataset(cls, dataset, spec):
        return cls([Worker(s, spec) for s in dataset.shards[1:]], dataset.p)

    @property
    def machine_ids(self):
        return [w.machine_id for w in self.workers]

    def exchange(self, round_, beta):
        msg = RoundMessage(MessageKind.MODEL_BROADCAST, round_, 0, beta)
        grads, payload, header = {}, 0, 0
        for w in self.workers:
            reply = w.handle(msg)
            _check_report(reply, round_, w.machine_id, self.p)
            grads[w.machine_id] = reply.payload
            payload += msg.payload_bytes + reply.payload_bytes
            header += 2 * HEADER_SIZE
        return Exchange(grads, payload, header)

    def close(self):
        pass


class TcpMasterTransport:
    """Listens for m-1 workers and runs exchanges over their sockets."""

    def __init__(self, host, port, m, p, timeout=DEFAULT_TIMEOUT):
        self.m = m
        self.p = p
        self.timeout = timeout
        self.conns = {}
        self._server = socket.create_server((host, port))
        self.address = self._server.getsockname()[:2]

    @property
    def machine_ids(self):
        return sorted(self.conns)

    def accept_workers(self, timeout=DEFAULT_TIMEOUT):
        deadline = time.monotonic() + timeout
        while len(self.conns) < self.m - 1:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                missing = set(range(1, self.m)) - set(self.conns)
                raise TransportError(f"workers {sorted(missing)} never connected")
            self._server.settimeout(remaining)
            try:
                conn, addr = self._server.accept()
            except socket.timeout:
                continue
            conn.settimeout(remaining)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            try:
                hello = read_message(conn)
            except (OSError, TransportError) as exc:
                conn.close()
                log.warning("dropping connection from %s: %s", addr, exc)
                continue
            mid = hello.sender
            if not hello.is_handshake or not 1 <= mid < self.m or mid in self.conns:
                conn.close()
                raise TransportError(f"bad handshake from {addr}: machine {mid}")
            conn.settimeout(None)
            self.conns[mid] = conn
            log.info("worker %d connected from %s", mid, addr)

    def exchange(self, round_, beta):
        msg = RoundMessage(MessageKind.MODEL_BROADCAST, round_, 0, beta)
        frame = encode(msg)
        try:
            for mid in self.machine_ids:
                self.conns[mid].sendall(frame)
        except OSError as exc:
            raise TransportError(f"round {round_}: broadcast failed: {exc}") from None
        replies = self._gather(round_, time.monotonic() + self.timeout)
        grads, payload, header = {}, 0, 0
        for mid in self.machine_ids:
            reply = replies[mid]
            _check_report(reply, round_, mid, self.p)
            grads[mid] = reply.payload
            payload += msg.payload_bytes + reply.payload_bytes
            header += 2 * HEADER_SIZE
        return Exchange(grads, payload, header)

    def _gather(self, round_, deadline):
        sel = selectors.DefaultSelector()
        buffers = {}
        for mid, conn in self.conns.items():
            sel.register(conn, selectors.EVENT_READ, mid)
            buffers[mid] = bytearray()
        done = {}
        try:
            while len(done) < len(self.conns):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                for key, _ in sel.select(remaining):
                    mid = key.data
                    chunk = key.fileobj.recv(1 << 16)
                    if not chunk:
                        sel.unregister(key.fileobj)
                        log.error("machine %d closed its connection", mid)
                        continue
                    buf = buffers[mid]
                    buf += chunk
                    if len(buf) >= HEADER_SIZE:
                        need = frame_size(decode_header(buf)[3])
                        if len(buf) >= need:
                            done[mid] = decode(bytes(buf[:need]))
                            sel.unregister(key.fileobj)
                if all(mid in done for mid in self.conns):
                    break
                if not sel.get_map():
                    break
        finally:
            sel.close()
        missing = set(self.conns) - set(done)
        if missing:
            raise RoundFailure(round_, missing)
        return done

    def close(self):
        for mid in self.machine_ids:
            conn = self.conns.pop(mid)
            try:
                send_message(conn, RoundMessage(MessageKind.SHUTDOWN, 0, 0))
            except OSError:
                pass
            conn.close()
        self._server.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_worker(host, port, worker, connect_timeout=DEFAULT_TIMEOUT):
    """Connect to the master and answer broadcasts until shutdown.

    Returns the number of rounds served.
    """
    deadline = time.monotonic() + connect_timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=connect_timeout)
            break
        except OSError as exc:
            if time.monotonic() >= deadline:
                raise TransportError(f"cannot reach master at {host}:{port}: {exc}") from None
            time.sleep(0.05)
    rounds = 0
    with sock:
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_message(sock, RoundMessage.handshake(worker.machine_id))
        while True:
            try:
                msg = read_message(sock)
            except TransportError:
                log.warning("master closed the connection")
                break
            reply = worker.handle(msg)
            if reply is None:
                break
            send_message(sock, reply)
            rounds += 1
    return rounds
