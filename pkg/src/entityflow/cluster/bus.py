"""Topic bookkeeping and bus latency models for the cluster simulator."""

from __future__ import annotations

import os
import random
from dataclasses import dataclass

INGRESS = "ingress"
EGRESS = "egress"


def operator_topic(class_name: str) -> str:
    return f"op-{class_name}"


@dataclass(frozen=True)
class Topic:
    """A logical topic: ``partitions`` ordered queues with per-partition FIFO delivery."""

    name: str
    partitions: int


@dataclass(frozen=True)
class LatencyModel:
    """Per-hop bus delay. ``kind`` is ``none``, ``fixed`` or ``uniform``; bounds in microseconds."""

    kind: str = "none"
    low_us: float = 0.0
    high_us: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "fixed", "uniform"):
            raise ValueError(f"unknown latency model {self.kind!r}")
        if self.low_us < 0 or self.high_us < 0:
            raise ValueError("latency must be non-negative")
        if self.kind == "uniform" and self.high_us < self.low_us:
            raise ValueError("uniform latency needs low <= high")

    @classmethod
    def none(cls) -> "LatencyModel":
        return cls("none")

    @classmethod
    def fixed(cls, us: float) -> "LatencyModel":
        return cls("fixed", us, us)

    @classmethod
    def uniform(cls, low_us: float, high_us: float) -> "LatencyModel":
        return cls("uniform", low_us, high_us)

    @classmethod
    def parse(cls, text: str) -> "LatencyModel":
        """``none`` | ``fixed:<us>`` | ``uniform:<lo_us>:<hi_us>``."""
        name, _, rest = text.partition(":")
        if name == "none":
            return cls.none()
        parts = [float(x) for x in rest.split(":") if x]
        if name == "fixed" and len(parts) == 1:
            return cls.fixed(parts[0])
        if name == "uniform" and len(parts) == 2:
            return cls.uniform(*parts)
        raise ValueError(f"bad latency model {text!r}")

    @property
    def mean_us(self) -> float:
        return 0.0 if self.kind == "none" else (self.low_us + self.high_us) / 2


class LatencySampler:
    """Draws hop delays (ns) from a model with a seeded RNG (``ENTITYFLOW_SEED``)."""

    def __init__(self, model: LatencyModel, stream: int = 0):
        self.model = model
        seed = int(os.environ.get("ENTITYFLOW_SEED", "0"))
        self.rng = random.Random(seed * 1_000_003 + stream)

    def sample_ns(self) -> int:
        m = self.model
        if m.kind == "none":
            return 0
        if m.kind == "fixed":
            return int(m.low_us * 1000)
        return int(self.rng.uniform(m.low_us, m.high_us) * 1000)
