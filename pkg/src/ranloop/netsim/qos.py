"""Per-class QoS requirements and the drift measure.

Drift is the non-negative deviation of an achieved metric from its
requirement: max(0, A - D) when lower is better, max(0, D - A) when
higher is better.
"""

from __future__ import annotations

from dataclasses import dataclass, field

LOWER_BETTER = "lower"
HIGHER_BETTER = "higher"


class UnknownMetricError(KeyError):
    pass


@dataclass
class QosEntry:
    metric: str
    direction: str            # LOWER_BETTER or HIGHER_BETTER
    required: float           # D_QoS


@dataclass
class QosRequirement:
    t_class: str
    entries: dict[str, QosEntry] = field(default_factory=dict)

    def add(self, metric: str, direction: str, required: float):
        if metric in self.entries:
            raise ValueError(f"metric {metric!r} already registered for {self.t_class}")
        self.entries[metric] = QosEntry(metric, direction, required)
        return self


def qos_drift(req: QosRequirement, achieved: float, metric: str) -> float:
    if metric not in req.entries:
        raise UnknownMetricError(f"metric {metric!r} not registered for class {req.t_class}")
    entry = req.entries[metric]
    if entry.direction == LOWER_BETTER:
        return max(0.0, achieved - entry.required)
    return max(0.0, entry.required - achieved)


def default_requirements() -> dict[str, QosRequirement]:
    """Delay (ms) and packet-loss (%) targets per traffic class."""
    reqs = {
        "video": QosRequirement("video").add("delay_ms", LOWER_BETTER, 25.0)
                                        .add("loss_pct", LOWER_BETTER, 2.0),
        "gaming": QosRequirement("gaming").add("delay_ms", LOWER_BETTER, 35.0)
                                          .add("loss_pct", LOWER_BETTER, 2.0),
        "voice": QosRequirement("voice").add("delay_ms", LOWER_BETTER, 20.0)
                                        .add("loss_pct", LOWER_BETTER, 1.5),
        "urllc": QosRequirement("urllc").add("delay_ms", LOWER_BETTER, 4.0)
                                        .add("loss_pct", LOWER_BETTER, 1.0),
    }
    return reqs
