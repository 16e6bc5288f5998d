"""Traffic classes and packet arrival processes.

Class bindings (inter-arrival / law) are fixed: video 12.5 ms Pareto,
gaming 40 ms uniform, voice 20 ms Poisson, URLLC 0.5 ms Poisson.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASSES = ("video", "gaming", "voice", "urllc")

CLASS_INTER_ARRIVAL_MS = {"video": 12.5, "gaming": 40.0, "voice": 20.0, "urllc": 0.5}
CLASS_ARRIVAL_LAW = {"video": "pareto", "gaming": "uniform", "voice": "poisson", "urllc": "poisson"}
CLASS_PACKET_BYTES = {"video": 8000, "gaming": 2000, "voice": 400, "urllc": 200}


@dataclass
class TrafficSource:
    t_class: str
    inter_arrival_ms: float
    arrival_law: str
    packet_bytes: int

    def __post_init__(self):
        if self.t_class not in CLASSES:
            raise ValueError(f"unknown traffic class {self.t_class!r}")
        if self.inter_arrival_ms != CLASS_INTER_ARRIVAL_MS[self.t_class]:
            raise ValueError(f"{self.t_class}: inter-arrival must be "
                             f"{CLASS_INTER_ARRIVAL_MS[self.t_class]} ms")
        if self.arrival_law != CLASS_ARRIVAL_LAW[self.t_class]:
            raise ValueError(f"{self.t_class}: arrival law must be "
                             f"{CLASS_ARRIVAL_LAW[self.t_class]}")

    @classmethod
    def for_class(cls, t_class: str, packet_bytes: int | None = None) -> "TrafficSource":
        return cls(t_class=t_class,
                   inter_arrival_ms=CLASS_INTER_ARRIVAL_MS[t_class],
                   arrival_law=CLASS_ARRIVAL_LAW[t_class],
                   packet_bytes=packet_bytes or CLASS_PACKET_BYTES[t_class])

    def next_gap_ms(self, rng: np.random.Generator, load_scale: float = 1.0) -> float:
        """Draw the next inter-arrival gap; load_scale > 1 densifies arrivals."""
        mean = self.inter_arrival_ms / max(load_scale, 1e-9)
        if self.arrival_law == "poisson":
            return float(rng.exponential(mean))
        if self.arrival_law == "uniform":
            return float(rng.uniform(0.5 * mean, 1.5 * mean))
        # pareto with shape 2.5 scaled to the target mean
        shape = 2.5
        scale = mean * (shape - 1.0) / shape
        return float(scale * (1.0 + rng.pareto(shape)))
