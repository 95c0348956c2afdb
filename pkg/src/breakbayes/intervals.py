"""Interval/set carrier shared by the frequentist and Bayesian pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


class IntervalKind(str, Enum):
    SLOPE_CI = "slope_ci"
    BREAK_CI = "break_ci"
    ILR_SET = "ilr_set"
    HPD_SET = "hpd_set"
    EQUAL_TAILED = "equal_tailed"


@dataclass(frozen=True)
class IntervalSet:
    """A union of disjoint closed intervals with its point estimate.

    For sets built from break-grid indices, ``indices`` lists the member
    indices and ``length`` counts members in units of ``1/T``; otherwise
    ``length`` is the summed interval width.
    """

    kind: IntervalKind
    level: float
    intervals: tuple[tuple[float, float], ...]
    point: float
    length: float
    indices: tuple[int, ...] | None = None
    info: dict = field(default_factory=dict, compare=False)

    @classmethod
    def interval(cls, kind: IntervalKind, level: float, lo: float, hi: float, point: float, **info):
        return cls(kind, level, ((float(lo), float(hi)),), float(point), float(hi - lo), None, info)

    @classmethod
    def from_indices(cls, kind: IntervalKind, level: float, members: Sequence[int], T: int,
                     point: float, **info):
        ks = np.unique(np.asarray(members, dtype=np.int64))
        runs = []
        if ks.size:
            cut = np.flatnonzero(np.diff(ks) > 1) + 1
            for run in np.split(ks, cut):
                runs.append((float(run[0]) / T, float(run[-1]) / T))
        return cls(kind, level, tuple(runs), float(point), ks.size / T,
                   tuple(int(k) for k in ks), info)

    @property
    def lower(self) -> float:
        return self.intervals[0][0]

    @property
    def upper(self) -> float:
        return self.intervals[-1][1]

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)

    def contains_index(self, k: int) -> bool:
        if self.indices is None:
            raise TypeError("not an index set")
        return int(k) in set(self.indices)

    def as_dict(self) -> dict:
        d = {
            "kind": self.kind.value,
            "level": self.level,
            "point": self.point,
            "intervals": [list(iv) for iv in self.intervals],
            "length": self.length,
        }
        d.update({k: v for k, v in self.info.items() if np.isscalar(v)})
        return d
