"""Traffic sources: XR video frames, pose/control, FTP model 3."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterator, Optional, Sequence

import numpy as np

MTU_BYTES = 1500

# pdu-set importance pattern, cycled over the sets of a frame
DEFAULT_PSI_PATTERN = (1, 0, 0, 1)


class Direction(Enum):
    DL = "dl"
    UL = "ul"


@dataclass(frozen=True)
class VideoStreamConfig:
    """Quasi-periodic video stream with truncated-Gaussian frame sizes."""

    avg_rate_bps: float
    fps: Fraction
    direction: Direction = Direction.DL
    size_std_frac: float = 0.105
    size_min_frac: float = 0.5
    size_max_frac: float = 1.5
    jitter_std_us: float = 2000.0
    jitter_min_us: float = -4000.0
    jitter_max_us: float = 4000.0
    psdb_us: Optional[int] = None
    sets_per_frame: int = 1
    mtu: int = MTU_BYTES
    psi_pattern: Sequence[int] = DEFAULT_PSI_PATTERN

    def __post_init__(self):
        if not (self.size_min_frac < 1 < self.size_max_frac):
            raise ValueError("size bounds must bracket the mean")
        if not (self.jitter_min_us <= 0 <= self.jitter_max_us):
            raise ValueError("jitter bounds must bracket zero")

    @property
    def period_us(self) -> Fraction:
        return Fraction(1_000_000) / self.fps

    @property
    def mean_frame_bytes(self) -> float:
        return self.avg_rate_bps / float(self.fps) / 8.0


@dataclass(frozen=True)
class VideoFrame:
    index: int
    arrival_time: Fraction
    byte_size: int


@dataclass
class Pdu:
    id: tuple
    pdu_set_id: tuple
    byte_size: int
    arrival_time: Fraction
    psi: int = 0
    is_last_of_set: bool = False
    is_end_of_burst: bool = False
    deadline: Optional[Fraction] = None
    ecn_ce: bool = False

    def __post_init__(self):
        if self.byte_size <= 0:
            raise ValueError("pdu must carry payload")
        if self.deadline is not None and self.deadline <= self.arrival_time:
            raise ValueError("deadline must lie after arrival")


@dataclass
class PduSet:
    id: tuple
    frame_id: int
    pdus: list[Pdu]
    psi: int
    arrival_time: Fraction

    @property
    def total_bytes(self) -> int:
        return sum(p.byte_size for p in self.pdus)


@dataclass
class DataBurst:
    id: int
    pdu_sets: list[PduSet] = field(default_factory=list)


def sample_truncated_gaussian(rng: np.random.Generator, mean: float, std: float,
                              lo: float, hi: float) -> float:
    """Rejection-sample a Gaussian restricted to the open interval (lo, hi)."""
    while True:
        x = rng.normal(mean, std)
        if lo < x < hi:
            return x


class VideoSource:
    """Draws successive frames of one video stream."""

    def __init__(self, config: VideoStreamConfig, rng: np.random.Generator,
                 start_us: Fraction | int = 0):
        self.config = config
        self.rng = rng
        self.start_us = Fraction(start_us)
        self.frame_index = 0

    def next_frame(self) -> VideoFrame:
        cfg = self.config
        mean = cfg.mean_frame_bytes
        lo = cfg.size_min_frac * mean
        hi = cfg.size_max_frac * mean
        while True:
            size = int(round(self.rng.normal(mean, cfg.size_std_frac * mean)))
            if lo < size < hi:
                break
        arrival = self.start_us + self.frame_index * cfg.period_us
        if cfg.direction is Direction.DL:
            jitter = sample_truncated_gaussian(
                self.rng, 0.0, cfg.jitter_std_us, cfg.jitter_min_us, cfg.jitter_max_us)
            arrival += int(round(jitter))
        frame = VideoFrame(self.frame_index, arrival, size)
        self.frame_index += 1
        return frame


def fragment_frame(frame: VideoFrame, mtu: int = MTU_BYTES, sets_per_frame: int = 1,
                   psdb_us: Optional[int] = None,
                   psi_pattern: Sequence[int] = DEFAULT_PSI_PATTERN) -> list[PduSet]:
    """Split a frame into PDU sets and each set into MTU-bounded PDUs."""
    if mtu <= 0:
        raise ValueError("mtu must be positive")
    if sets_per_frame < 1:
        raise ValueError("need at least one set per frame")
    if frame.byte_size == 0:
        return []
    deadline = None if psdb_us is None else frame.arrival_time + psdb_us
    base, rem = divmod(frame.byte_size, sets_per_frame)
    sets = []
    for k in range(sets_per_frame):
        set_bytes = base + (rem if k == sets_per_frame - 1 else 0)
        if set_bytes == 0:
            continue
        psi = psi_pattern[k % len(psi_pattern)]
        set_id = (frame.index, k)
        pdus = []
        offset = 0
        i = 0
        while offset < set_bytes:
            chunk = min(mtu, set_bytes - offset)
            pdus.append(Pdu(id=(frame.index, k, i), pdu_set_id=set_id,
                            byte_size=chunk, arrival_time=frame.arrival_time,
                            psi=psi, deadline=deadline))
            offset += chunk
            i += 1
        pdus[-1].is_last_of_set = True
        sets.append(PduSet(id=set_id, frame_id=frame.index, pdus=pdus,
                           psi=psi, arrival_time=frame.arrival_time))
    sets[-1].pdus[-1].is_end_of_burst = True
    return sets


def pose_source(period_us: int = 4000, size: int = 100,
                psdb_us: Optional[int] = None,
                start_us: int = 0) -> Iterator[PduSet]:
    """Periodic fixed-size control packets, one single-PDU set each."""
    n = 0
    while True:
        t = Fraction(start_us + n * period_us)
        pdu = Pdu(id=("pose", n, 0), pdu_set_id=("pose", n), byte_size=size,
                  arrival_time=t, is_last_of_set=True, is_end_of_burst=True,
                  deadline=None if psdb_us is None else t + psdb_us)
        yield PduSet(id=("pose", n), frame_id=n, pdus=[pdu], psi=0, arrival_time=t)
        n += 1


def ftp3_source(rng: np.random.Generator, file_size: int = 125_000,
                mean_interarrival_s: float = 1.0,
                mtu: int = MTU_BYTES) -> Iterator[list[Pdu]]:
    """Poisson file arrivals, each file cut into plain PDUs without deadlines."""
    t = 0.0
    n = 0
    while True:
        t += rng.exponential(mean_interarrival_s) * 1e6
        arrival = Fraction(int(round(t)))
        pdus = []
        offset = 0
        i = 0
        while offset < file_size:
            chunk = min(mtu, file_size - offset)
            pdus.append(Pdu(id=("ftp", n, i), pdu_set_id=("ftp", n),
                            byte_size=chunk, arrival_time=arrival))
            offset += chunk
            i += 1
        pdus[-1].is_last_of_set = True
        pdus[-1].is_end_of_burst = True
        yield pdus
        n += 1
