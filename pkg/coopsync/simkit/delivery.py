"""
Latency-delayed message delivery.

Information captured by agent i at time s reaches the ego at s + tau. The
schedule below is a discrete-event queue ordered by arrival time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Generic, Mapping, Optional, Sequence, TypeVar

import numpy as np

from .. import logger
from ..exceptions import ConfigError
from .scenario import LatencySpec

PayloadT = TypeVar("PayloadT")


@dataclass(frozen=True)
class DelayedMessage(Generic[PayloadT]):
    """A payload in flight from one agent to the ego."""

    agent_id: str
    payload: PayloadT
    sent_at_us: int
    delay_us: int

    def __post_init__(self) -> None:
        if self.delay_us < 0:
            raise ConfigError("Delay must be non-negative", f"{self.delay_us}us", field="latency")

    @property
    def arrives_at_us(self) -> int:
        return self.sent_at_us + self.delay_us


def schedule_delivery(
    frames: Mapping[str, Sequence[PayloadT]],
    latency: Mapping[str, LatencySpec],
    seed: int = 0,
    timestamps: Optional[Mapping[str, Sequence[int]]] = None,
) -> list[DelayedMessage[PayloadT]]:
    """
    Attach delays to every agent's stream and order messages by arrival.

    Args:
        frames: Agent id to payloads, oldest first; payloads need a
            ``timestamp_us`` attribute unless ``timestamps`` is given
        latency: Agent id to delay spec; agents not listed get zero delay
        seed: Seed for uniform delay draws
        timestamps: Optional explicit send times per agent

    Returns:
        Messages sorted by (arrival, agent order, send time).

    Examples:
        Fixed 400 ms at 10 Hz: the message available to the ego at t was
        captured at t - 0.4 s, four frames stale.
    """
    messages: list[tuple[int, int, int, DelayedMessage[PayloadT]]] = []
    for order, (agent_id, stream) in enumerate(frames.items()):
        spec = latency.get(agent_id, LatencySpec())
        rng = np.random.default_rng([seed, order, 1])
        stamps = timestamps[agent_id] if timestamps is not None else [p.timestamp_us for p in stream]  # type: ignore[attr-defined]
        for sent_at, payload in zip(stamps, stream):
            msg = DelayedMessage(agent_id, payload, int(sent_at), spec.sample_us(rng))
            messages.append((msg.arrives_at_us, order, msg.sent_at_us, msg))
        logger.debug(f"Scheduled {len(stream)} messages for '{agent_id}' with latency {spec} ms")
    messages.sort(key=lambda item: item[:3])
    return [m for *_, m in messages]
