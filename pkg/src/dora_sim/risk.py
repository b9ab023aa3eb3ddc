"""Failure and information-gain models."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass
from typing import Iterable


class FailurePolicy(str, enum.Enum):
    """When the failure draw happens."""

    PER_CELL_ENTRY = "per_cell_entry"
    PER_STEP = "per_step"


@dataclass(frozen=True)
class InfoModelParams:
    omega: float = 0.01

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be > 0")


def failure_probability(radiation: float) -> float:
    """Bernoulli parameter of a failure given the radiation at the robot's cell."""
    if radiation < 0:
        raise ValueError(f"radiation must be non-negative, got {radiation}")
    return min(radiation, 1.0)


def joint_source_failure_probability(per_source: Iterable[float]) -> float:
    """Product of per-source failure probabilities (independent sources, all must trigger).

    Kept for comparison with :func:`failure_probability`; the simulator does
    not use it.
    """
    p = 1.0
    for r in per_source:
        p *= failure_probability(r)
    return p


def sample_failure(p: float, rng: random.Random) -> bool:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return rng.random() < p


def info_gain_probability(delta_t: float, params: InfoModelParams) -> float:
    """Probability that visiting a cell last seen ``delta_t`` ticks ago yields new information."""
    if delta_t < 0:
        return 1.0
    density = params.omega * math.exp(-params.omega * delta_t)
    return 1.0 - min(1.0, density)
