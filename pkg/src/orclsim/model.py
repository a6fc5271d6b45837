"""Core domain model: timestamps, multi-rate sample streams, session bundles.

Everything here is immutable after construction and every operation is a pure
function, so streams, windows, and whole sessions can be processed in
parallel without shared state.

Timestamps are fractional seconds since the session epoch.  Within one stream
they are strictly increasing after :func:`synchronize`; raw parser output may
still contain duplicates (logger retries), which synchronization collapses to
the last sample in file order.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

Timestamp = float

UNIT_NORM_TOL = 1e-6

# Physiological plausibility gate for heart-rate readings (bpm).  Out-of-range
# samples are flagged, never dropped.
HR_PLAUSIBLE_RANGE = (20.0, 250.0)


class StreamKind(enum.Enum):
    POSE = "pose"
    GAZE = "gaze"
    HEART_RATE = "heart_rate"
    MOTION = "motion"
    VEHICLE = "vehicle"
    ANNOTATION = "annotation"


class Mode(enum.Enum):
    BICYCLIST = "bicyclist"
    PEDESTRIAN = "pedestrian"


# Default sampling rates per stream kind (Hz), used when a rate cannot be
# inferred from the data itself.
DEFAULT_RATES = {
    StreamKind.POSE: 30.0,
    StreamKind.GAZE: 120.0,
    StreamKind.HEART_RATE: 1.0,
    StreamKind.MOTION: 10.0,
    StreamKind.VEHICLE: 30.0,
    StreamKind.ANNOTATION: 1.0,
}


class _Gap:
    """Sentinel payload for resampled points that precede any real sample."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "GAP"


GAP = _Gap()


def _is_unit(v: tuple[float, float, float], tol: float = UNIT_NORM_TOL) -> bool:
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return math.isfinite(n) and abs(n - 1.0) <= tol


@dataclass(frozen=True)
class PoseSample:
    """Headset pose: world position (m), facing direction, trigger, speed."""

    head_position: tuple[float, float, float]
    head_forward: tuple[float, float, float]  # unit vector
    controller_trigger: float  # brake / interaction input in [0, 1]
    speed: float  # m/s

    def __post_init__(self) -> None:
        if not _is_unit(self.head_forward):
            raise ValueError(f"head_forward is not unit length: {self.head_forward}")
        if not 0.0 <= self.controller_trigger <= 1.0:
            raise ValueError(f"controller_trigger outside [0, 1]: {self.controller_trigger}")


@dataclass(frozen=True)
class GazeSample:
    """Binocular gaze in the head frame.

    Invalid eyes carry NaN direction/pupil fields and ``*_valid=False``; they
    are kept so downstream windowing can account for tracking gaps.
    """

    origin: tuple[float, float, float]  # m, head frame
    left_direction: tuple[float, float, float]
    right_direction: tuple[float, float, float]
    left_pupil_mm: float
    right_pupil_mm: float
    left_valid: bool
    right_valid: bool

    def __post_init__(self) -> None:
        for valid, direction, pupil, eye in (
            (self.left_valid, self.left_direction, self.left_pupil_mm, "left"),
            (self.right_valid, self.right_direction, self.right_pupil_mm, "right"),
        ):
            if valid:
                if not _is_unit(direction):
                    raise ValueError(f"{eye} gaze direction is not unit length: {direction}")
                if not (math.isfinite(pupil) and pupil > 0.0):
                    raise ValueError(f"{eye} pupil diameter must be positive: {pupil}")

    def valid_directions(self) -> list[tuple[float, float, float]]:
        out = []
        if self.left_valid:
            out.append(self.left_direction)
        if self.right_valid:
            out.append(self.right_direction)
        return out


@dataclass(frozen=True)
class HrSample:
    """One heart-rate reading in beats per minute."""

    bpm: float

    @property
    def in_range(self) -> bool:
        lo, hi = HR_PLAUSIBLE_RANGE
        return lo <= self.bpm <= hi


@dataclass(frozen=True)
class MotionSample:
    """Wrist-sensor record: accelerometer, gyroscope, or audio amplitude."""

    sensor: str  # "accel" | "gyro" | "audio"
    values: tuple[float, ...]


@dataclass(frozen=True)
class VehicleSample:
    """Simulated vehicle state at one instant."""

    model: str
    position: tuple[float, float, float]
    forward: tuple[float, float, float]
    speed: float


class AnnotationCategory(enum.Enum):
    VEHICLE_INTERACTION = "vehicle_interaction"
    INTERSECTION_APPROACH = "intersection_approach"
    CROSSING_START = "crossing_start"
    CROSSING_IN_LANE = "crossing_in_lane"
    OTHER = "other"


@dataclass(frozen=True)
class AnnotationEvent:
    """Manually annotated event with a free-text label."""

    timestamp: Timestamp
    category: AnnotationCategory
    label: str

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("annotation label must be non-empty")


Sample = tuple  # (Timestamp, payload)


@dataclass(frozen=True)
class SampleStream:
    """An ordered sequence of (timestamp, payload) pairs from one source.

    Construction sorts samples by timestamp (stable, preserving file order for
    equal stamps).  Duplicate timestamps are permitted until synchronization,
    which collapses them.
    """

    kind: StreamKind
    nominal_rate: float  # Hz
    samples: tuple[Sample, ...]
    clock_offset: float = 0.0  # per-source correction applied at sync, seconds

    def __post_init__(self) -> None:
        if not self.nominal_rate > 0.0:
            raise ValueError(f"nominal_rate must be positive: {self.nominal_rate}")
        samples = tuple(self.samples)
        times = [t for t, _ in samples]
        if any(not math.isfinite(t) for t in times):
            raise ValueError("stream timestamps must be finite")
        if any(times[i] > times[i + 1] for i in range(len(times) - 1)):
            samples = tuple(sorted(samples, key=lambda s: s[0]))
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    def times(self) -> list[float]:
        return [t for t, _ in self.samples]

    def payloads(self) -> list[Any]:
        return [p for _, p in self.samples]

    def is_strictly_increasing(self) -> bool:
        ts = self.times()
        return all(ts[i] < ts[i + 1] for i in range(len(ts) - 1))

    def span(self) -> float:
        """Time covered by the samples (0 for fewer than two samples)."""
        if len(self.samples) < 2:
            return 0.0
        return self.samples[-1][0] - self.samples[0][0]


@dataclass(frozen=True)
class SessionRecording:
    """Bundle of independently clocked streams for one experiment run."""

    session_id: str
    participant_id: str
    mode: Mode
    streams: tuple[SampleStream, ...]
    road_network_ref: str = ""

    def __post_init__(self) -> None:
        kinds = [s.kind for s in self.streams]
        if len(kinds) != len(set(kinds)):
            raise ValueError("at most one stream per kind in a session")

    def stream(self, kind: StreamKind) -> SampleStream | None:
        for s in self.streams:
            if s.kind == kind:
                return s
        return None

    def with_streams(self, streams: Iterable[SampleStream]) -> SessionRecording:
        return replace(self, streams=tuple(streams))


def _dedupe_keep_last(samples: Sequence[Sample]) -> tuple[Sample, ...]:
    # Samples are already stably sorted; for equal timestamps the later entry
    # in file order wins (logger retries overwrite earlier partial rows).
    out: list[Sample] = []
    for s in samples:
        if out and out[-1][0] == s[0]:
            out[-1] = s
        else:
            out.append(s)
    return tuple(out)


def synchronize(session: SessionRecording, offsets: Mapping[str, float]) -> SessionRecording:
    """Shift each stream onto the shared session clock.

    ``offsets`` maps stream-kind names (e.g. ``"heart_rate"``) to the seconds
    added to that stream's timestamps.  Streams are re-sorted and duplicate
    timestamps collapse to the last sample in file order.  Unknown source
    names are a configuration error; streams without an offset pass through
    with offset 0.
    """
    from .errors import ConfigurationError

    known = {s.kind.value for s in session.streams}
    for name in offsets:
        if name not in known:
            raise ConfigurationError(f"offset names unknown stream source {name!r}")
    shifted = []
    for s in session.streams:
        off = float(offsets.get(s.kind.value, 0.0))
        moved = tuple((t + off, p) for t, p in s.samples)
        shifted.append(
            replace(s, samples=_dedupe_keep_last(sorted(moved, key=lambda x: x[0])), clock_offset=off)
        )
    return session.with_streams(shifted)


def resample_hold(stream: SampleStream, timeline: Sequence[Timestamp]) -> SampleStream:
    """Sample-and-hold (previous value) resampling onto ``timeline``.

    Each timeline point takes the payload of the latest sample at or before
    it.  Points preceding the first sample yield :data:`GAP` rather than an
    extrapolated value; an empty input stream yields all gap markers.
    Resampling an already-held stream onto the same timeline is the identity.
    """
    tl = list(timeline)
    if any(tl[i] >= tl[i + 1] for i in range(len(tl) - 1)):
        raise ValueError("timeline must be strictly increasing")
    times = stream.times()
    payloads = stream.payloads()
    out = []
    for t in tl:
        i = bisect_right(times, t) - 1
        out.append((t, payloads[i] if i >= 0 else GAP))
    return replace(stream, samples=tuple(out))


def window_slice(stream: SampleStream, t0: Timestamp, t1: Timestamp) -> SampleStream:
    """Samples with ``t0 <= t < t1`` (half-open), order preserved."""
    if t0 > t1:
        raise ValueError(f"window start {t0} exceeds end {t1}")
    times = stream.times()
    i0 = bisect_left(times, t0)
    i1 = bisect_left(times, t1)
    return replace(stream, samples=stream.samples[i0:i1])


def held_value_at(stream: SampleStream, t: Timestamp) -> Any:
    """Payload of the latest sample at or before ``t`` (GAP if none)."""
    times = stream.times()
    i = bisect_right(times, t) - 1
    return stream.samples[i][1] if i >= 0 else GAP


def infer_rate(times: Sequence[float], fallback: float) -> float:
    """Mean sampling rate from timestamps; ``fallback`` when undefined."""
    if len(times) < 2:
        return fallback
    span = times[-1] - times[0]
    if span <= 0.0:
        return fallback
    return (len(times) - 1) / span
