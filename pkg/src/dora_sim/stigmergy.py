"""Virtual stigmergy: per-robot replicated key/value tables over a lossy broadcast bus.

Each table entry is ordered by ``(lamport, writer_id)``. A local write over
an existing key stores the mean of the old and new values under a fresh
timestamp; remote entries are merged by that order alone, so delivery order
and duplicates do not affect the final tables.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

WRITE_UPDATE = "write_update"
READ_QUERY = "read_query"
READ_REPLY = "read_reply"

DEFAULT_MESSAGE_BYTES = 20
DEFAULT_MAX_ROUNDS = 4


class StigmergyEntry(NamedTuple):
    key: tuple[int, int]
    value: float
    lamport: int
    writer_id: int


def encode_key(cell) -> str:
    return f"{cell[0]}:{cell[1]}"


def decode_key(text: str) -> tuple[int, int]:
    x, y = text.split(":")
    return int(x), int(y)


class StigmergyReplica:
    __slots__ = ("robot_id", "table", "clock", "bus", "reads", "writes", "messages_sent",
                 "bytes_sent")

    def __init__(self, robot_id: int, bus: "BroadcastBus | None" = None):
        self.robot_id = robot_id
        self.table: dict[tuple[int, int], StigmergyEntry] = {}
        self.clock = 0
        self.bus = bus
        self.reads = 0
        self.writes = 0
        self.messages_sent = 0
        self.bytes_sent = 0
        if bus is not None:
            bus.attach(self)

    def vput(self, key, value: float) -> StigmergyEntry:
        key = (key[0], key[1])
        self.writes += 1
        self.clock += 1
        old = self.table.get(key)
        if old is not None:
            value = (old.value + value) / 2.0
        entry = StigmergyEntry(key, value, self.clock, self.robot_id)
        self.table[key] = entry
        if self.bus is not None:
            self.bus.send(self, entry, WRITE_UPDATE)
        return entry

    def vget(self, key) -> float | None:
        """Local value or ``None``; a hit is rebroadcast so peers can reconcile."""
        self.reads += 1
        entry = self.table.get((key[0], key[1]))
        if entry is None:
            return None
        if self.bus is not None:
            self.bus.send(self, entry, READ_REPLY)
        return entry.value

    def on_message(self, entry: StigmergyEntry) -> None:
        if entry.lamport > self.clock:
            self.clock = entry.lamport
        local = self.table.get(entry.key)
        if local is None or (entry.lamport, entry.writer_id) > (local.lamport, local.writer_id):
            self.table[entry.key] = entry
        elif (entry.lamport, entry.writer_id) < (local.lamport, local.writer_id):
            # anti-entropy: answer a stale peer, unless the same fix is already queued
            bus = self.bus
            if bus is not None and local not in bus.queued:
                bus.send(self, local, READ_REPLY)

    def account(self) -> tuple[int, int, int]:
        """Return and reset ``(reads, writes, bytes_sent)`` for the current tick."""
        out = (self.reads, self.writes, self.bytes_sent)
        self.reads = self.writes = self.bytes_sent = 0
        return out

    def value(self, key) -> float | None:
        entry = self.table.get((key[0], key[1]))
        return None if entry is None else entry.value

    def snapshot(self) -> dict:
        return dict(self.table)


@dataclass
class DeliveryReport:
    messages: int = 0
    delivered: int = 0
    dropped: int = 0
    deliveries: int = 0
    bytes: int = 0
    rounds: int = 0


class BroadcastBus:
    """Simulated one-hop broadcast medium shared by the replicas of one map.

    A message is dropped as a whole with ``drop_probability``; otherwise every
    other attached replica (within ``reachable`` when given) receives it.
    Bytes are charged to the sender once per transmission.
    """

    def __init__(
        self,
        drop_probability: float = 0.0,
        message_bytes: int = DEFAULT_MESSAGE_BYTES,
        max_rounds: int = DEFAULT_MAX_ROUNDS,
    ):
        if not 0.0 <= drop_probability <= 1.0:
            raise ValueError("drop_probability must lie in [0, 1]")
        self.drop_probability = drop_probability
        self.message_bytes = message_bytes
        self.max_rounds = max_rounds
        self.replicas: dict[int, StigmergyReplica] = {}
        self.pending: list[tuple[str, int, StigmergyEntry]] = []
        self.queued: set[StigmergyEntry] = set()

    def attach(self, replica: StigmergyReplica) -> None:
        self.replicas[replica.robot_id] = replica
        replica.bus = self

    def detach(self, robot_id: int) -> None:
        """Stop delivering to ``robot_id`` (failed robot)."""
        self.replicas.pop(robot_id, None)

    def send(self, sender: StigmergyReplica, entry: StigmergyEntry, kind: str) -> None:
        self.pending.append((kind, sender.robot_id, entry))
        self.queued.add(entry)
        sender.messages_sent += 1
        sender.bytes_sent += self.message_bytes

    def flush(
        self,
        rng: random.Random,
        reachable: Callable[[int, int], bool] | None = None,
    ) -> DeliveryReport:
        report = DeliveryReport()
        drop = self.drop_probability
        for _ in range(self.max_rounds):
            batch = self.pending
            if not batch:
                break
            self.pending = []
            self.queued = set()
            report.rounds += 1
            recipients = sorted(self.replicas.items())
            for _kind, sender, entry in batch:
                report.messages += 1
                report.bytes += self.message_bytes
                if drop and rng.random() < drop:
                    report.dropped += 1
                    continue
                report.delivered += 1
                key = entry.key
                for rid, replica in recipients:
                    if rid == sender or (reachable is not None and not reachable(sender, rid)):
                        continue
                    report.deliveries += 1
                    if replica.table.get(key) is not entry:
                        replica.on_message(entry)
        return report


def merged_table(replicas: Iterable[StigmergyReplica]) -> dict:
    """Join of several replicas: the greatest entry per key."""
    out: dict = {}
    for replica in replicas:
        for key, entry in replica.table.items():
            cur = out.get(key)
            if cur is None or (entry.lamport, entry.writer_id) > (cur.lamport, cur.writer_id):
                out[key] = entry
    return out


BELIEF_HEADER = ("key_x", "key_y", "value", "lamport", "writer_id")


def table_to_csv(table: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BELIEF_HEADER)
    for key in sorted(table, key=lambda k: (k[1], k[0])):
        e = table[key]
        writer.writerow((key[0], key[1], repr(float(e.value)), e.lamport, e.writer_id))
    return buf.getvalue()


def table_from_csv(text: str) -> dict:
    lines = [line for line in text.splitlines() if line and not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != BELIEF_HEADER:
        raise ValueError(f"expected header {','.join(BELIEF_HEADER)}, got {header}")
    out = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            x, y, value, lamport, writer = row
            key = (int(x), int(y))
            out[key] = StigmergyEntry(key, float(value), int(lamport), int(writer))
        except ValueError:
            raise ValueError(f"malformed belief row {lineno}: {row}") from None
    return out
