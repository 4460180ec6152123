"""Deterministic in-process message transport with per-edge byte accounting."""
from __future__ import annotations

from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from typing import Callable, List, Optional

from ..errors import TransportError

INFRA_ID = "infra"


def role_of(entity: str) -> str:
    if entity == INFRA_ID:
        return "infra"
    if entity.startswith("p"):
        return "party"
    if entity.startswith("a"):
        return "aggregator"
    raise TransportError(f"unknown entity {entity!r}")


@dataclass
class Message:
    sender: str
    receiver: str
    data: bytes


class Transport:
    """FIFO mailboxes; aggregators have no channel to each other.

    ``interceptor(message)`` may return a substitute message or ``None`` to
    withhold it. It sees only what is on the wire.
    """

    def __init__(self):
        self._boxes = defaultdict(deque)
        self.bytes_by_edge: Counter = Counter()
        self.messages_by_edge: Counter = Counter()
        self.log: List[Message] = []
        self.interceptor: Optional[Callable[[Message], Optional[Message]]] = None
        self.offline: set = set()

    def send(self, sender: str, receiver: str, data: bytes) -> bool:
        if role_of(sender) == "aggregator" and role_of(receiver) == "aggregator":
            raise TransportError("aggregators have no peer channel")
        msg = Message(sender, receiver, bytes(data))
        if self.interceptor is not None:
            msg = self.interceptor(msg)
            if msg is None:
                return False
        if sender in self.offline:
            return False
        self.bytes_by_edge[(msg.sender, msg.receiver)] += len(msg.data)
        self.messages_by_edge[(msg.sender, msg.receiver)] += 1
        self.log.append(msg)
        if receiver in self.offline:
            return False
        self._boxes[receiver].append(msg)
        return True

    def deliver(self, receiver: str) -> List[Message]:
        box = self._boxes[receiver]
        out = list(box)
        box.clear()
        return out

    def reset_counters(self):
        self.bytes_by_edge = Counter()
        self.messages_by_edge = Counter()
        self.log = []
