"""Confidence intervals around specified branch probabilities.

The monitor keeps a count per branch at every choice point. After each
visit it compares the empirical frequency of a branch against a
confidence interval centred on the probability the type specifies for
that branch, at the current sample size. Frequencies outside the
interval are flagged as deviating; the flag clears once the frequency
returns inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist
from typing import Mapping


@lru_cache(maxsize=None)
def z_score(level: float, tail: str = "two") -> float:
    """Normal quantile for a confidence level; ``tail`` is "two" or "one"."""
    if not 0 < level < 1:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    if tail == "two":
        q = 1 - (1 - level) / 2
    elif tail == "one":
        q = level
    else:
        raise ValueError(f"tail must be 'two' or 'one', got {tail!r}")
    return NormalDist().inv_cdf(q)


@dataclass(frozen=True)
class CiMethod:
    """Interval construction: Wald or Wilson score, with its z convention."""

    kind: str = "wald"  # "wald" | "wilson"
    level: float = 0.95
    tail: str = "two"  # "two" | "one"

    def __post_init__(self):
        if self.kind not in ("wald", "wilson"):
            raise ValueError(f"unknown interval method {self.kind!r}")
        z_score(self.level, self.tail)  # validates level and tail

    @property
    def z(self) -> float:
        return z_score(self.level, self.tail)


def ci_bounds(p: float, n: int, method: CiMethod) -> tuple[float, float]:
    """Interval around the specified probability ``p`` at sample size ``n``.

    Wald: p ± z*sqrt(p(1-p)/n).
    Wilson: (p + z^2/2n ± z*sqrt(p(1-p)/n + z^2/4n^2)) / (1 + z^2/n).
    Both clamped to [0, 1].
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    z = method.z
    if method.kind == "wald":
        half = z * math.sqrt(p * (1 - p) / n)
        lo, hi = p - half, p + half
    else:
        denom = 1 + z * z / n
        centre = (p + z * z / (2 * n)) / denom
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
        lo, hi = centre - half, centre + half
    return max(0.0, lo), min(1.0, hi)


@dataclass(frozen=True)
class BranchAssessment:
    label: str
    within: bool
    estimate: float
    ci_lo: float
    ci_hi: float


class ChoiceStats:
    """Observation counts and deviation flags for one choice point.

    Confined to a single session; not safe to share across sessions.
    """

    def __init__(self, choice_point_id: str, spec_probs: Mapping[str, float]):
        self.choice_point_id = choice_point_id
        self.spec_probs = dict(spec_probs)
        self.counts = {label: 0 for label in self.spec_probs}
        self.n = 0
        self.warned = {label: False for label in self.spec_probs}

    def observe(self, label: str) -> None:
        if label not in self.counts:
            raise ValueError(
                f"label {label!r} is not a branch of choice point {self.choice_point_id}"
            )
        self.counts[label] += 1
        self.n += 1

    def estimate(self, label: str) -> float:
        if self.n == 0:
            raise ValueError("no observations yet")
        return self.counts[label] / self.n

    def estimates(self) -> dict[str, float]:
        return {label: self.estimate(label) for label in self.counts}

    def evaluate(self, method: CiMethod, min_samples: int = 1) -> list[BranchAssessment]:
        """Assess every branch and update its deviation flag.

        A branch is within iff lo <= estimate <= hi for the interval around
        its specified probability. Below ``min_samples`` visits everything
        counts as within, which suppresses early warnings.
        """
        if self.n < 1:
            raise ValueError("evaluate requires at least one observation")
        out = []
        for label, p in self.spec_probs.items():
            lo, hi = ci_bounds(p, self.n, method)
            p_hat = self.counts[label] / self.n
            within = (lo <= p_hat <= hi) or self.n < min_samples
            self.warned[label] = not within
            out.append(BranchAssessment(label, within, p_hat, lo, hi))
        return out
