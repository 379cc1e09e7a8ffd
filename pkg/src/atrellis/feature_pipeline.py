"""Flow-to-vector preprocessing: segmentation, characterization, filling,
normalization.

A flow's first r packets yield r normalized IP lengths followed by r
normalized inter-arrival gaps (first gap 0); short flows are zero-padded.
Lengths scale linearly by max_len; gaps scale as log(1+gap)/log(1+max_gap)
so that millisecond and minute gaps both stay resolvable.  Everything is
clipped to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import EmptyFlow, EmptyTrainingSet, UnorderedTimestamps
from .traffic_model import PacketRecord


@dataclass(frozen=True)
class FeatureConfig:
    r: int = 10
    max_len: float = 1500.0
    max_gap: float = 60.0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if self.max_gap <= 0:
            raise ValueError(f"max_gap must be > 0, got {self.max_gap}")


@dataclass(frozen=True)
class FeatureVector:
    """2r values in [0,1]: r normalized lengths then r normalized gaps."""

    values: np.ndarray
    valid_count: int


def featurize(flow_packets: Sequence[PacketRecord],
              cfg: FeatureConfig) -> FeatureVector:
    if not flow_packets:
        raise EmptyFlow("cannot featurize an empty flow")
    head = list(flow_packets[:cfg.r])
    ts = np.array([p.ts for p in head])
    if np.any(np.diff(ts) < 0):
        raise UnorderedTimestamps("flow packets must be time-ordered")

    n = len(head)
    lengths = np.zeros(cfg.r)
    gaps = np.zeros(cfg.r)
    lengths[:n] = [p.length for p in head]
    gaps[1:n] = np.diff(ts)

    lengths = np.clip(lengths / cfg.max_len, 0.0, 1.0)
    gaps = np.clip(np.log1p(gaps) / np.log1p(cfg.max_gap), 0.0, 1.0)
    lengths[n:] = 0.0
    gaps[n:] = 0.0
    return FeatureVector(np.concatenate([lengths, gaps]), n)


def fit_feature_config(training_flows: List[Sequence[PacketRecord]],
                       r: int = 10) -> FeatureConfig:
    """Pick normalization constants from training data: the 99.9th
    percentile of observed lengths (floor 64) and gaps (floor 1 s)."""
    if not training_flows:
        raise EmptyTrainingSet("need at least one training flow")
    lengths = []
    gaps = []
    for flow in training_flows:
        lengths.extend(p.length for p in flow)
        ts = [p.ts for p in flow]
        gaps.extend(b - a for a, b in zip(ts, ts[1:]))
    max_len = max(64.0, float(np.percentile(lengths, 99.9)))
    max_gap = max(1.0, float(np.percentile(gaps, 99.9))) if gaps else 1.0
    return FeatureConfig(r=r, max_len=max_len, max_gap=max_gap)
