"""Domain types, coordinate normalization, and sliding-window extraction.

Positions live in a 10 m x 4 m tracked space.  Sessions are resampled to
2 frames per second; a model sample is 6 observed frames (3 s) plus a
10-frame (5 s) prediction target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TRACKED_EXTENTS = (10.0, 4.0)
FRAME_DT = 0.5
PAST_LEN = 6
FUTURE_LEN = 10
WINDOW_LEN = PAST_LEN + FUTURE_LEN

VISIONS = ("NV", "LV")
TASKS = ("ST", "CT")
LANES = ("one", "two")
DIRECTIONS = ("cross", "return")


@dataclass(frozen=True)
class Position2:
    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class Position3:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class ConditionLabels:
    vision: str
    task: str
    lanes: str
    user_id: int
    scene_id: int
    direction: str

    def __post_init__(self):
        for value, allowed, name in (
            (self.vision, VISIONS, "vision"),
            (self.task, TASKS, "task"),
            (self.lanes, LANES, "lanes"),
            (self.direction, DIRECTIONS, "direction"),
        ):
            if value not in allowed:
                raise ValueError(f"{name}={value!r} not in {allowed}")


@dataclass(frozen=True)
class EntityState:
    """State of one scene entity at a frame."""

    kind: str  # pedestrian | vehicle | button | traffic_light
    key: str
    position: Position2
    present: bool = True
    color: int = -1  # traffic light only: red 0, orange 1, green 2


@dataclass(frozen=True)
class FrameRecord:
    t: float
    head: Position2
    gaze: Position3
    entities: tuple[EntityState, ...] = ()
    active_events: tuple[str, ...] = ()


@dataclass(frozen=True)
class SessionEvent:
    t: float
    kind: str
    target: str = ""


@dataclass(frozen=True)
class SessionLog:
    id: str
    labels: ConditionLabels
    frames: tuple[FrameRecord, ...]
    events: tuple[SessionEvent, ...] = ()

    def validate(self) -> None:
        if len(self.frames) < WINDOW_LEN:
            raise ValueError(
                f"session {self.id}: {len(self.frames)} frames < {WINDOW_LEN}"
            )
        times = [f.t for f in self.frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"session {self.id}: timestamps not strictly increasing")
        for f in self.frames:
            if not (math.isfinite(f.head.x) and math.isfinite(f.head.y)):
                raise ValueError(f"session {self.id}: non-finite head position")

    def head_array(self) -> np.ndarray:
        return np.array([[f.head.x, f.head.y] for f in self.frames], dtype=np.float64)


@dataclass(frozen=True)
class MotionWindow:
    """6 observed positions plus the 10-step future ground truth."""

    past: tuple[Position2, ...]
    future: tuple[Position2, ...]
    t0: int  # frame index of the last observed frame

    def __post_init__(self):
        if len(self.past) != PAST_LEN:
            raise ValueError(f"past length {len(self.past)} != {PAST_LEN}")
        if len(self.future) != FUTURE_LEN:
            raise ValueError(f"future length {len(self.future)} != {FUTURE_LEN}")

    def past_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.past], dtype=np.float64)

    def future_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.future], dtype=np.float64)


def normalize_position(
    p: Position2, extents: tuple[float, float] = TRACKED_EXTENTS
) -> Position2:
    """Divide each coordinate by its tracked-space extent."""
    if extents[0] <= 0 or extents[1] <= 0:
        raise ValueError(f"extents must be positive, got {extents}")
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise ValueError(f"non-finite position ({p.x}, {p.y})")
    return Position2(p.x / extents[0], p.y / extents[1])


def denormalize_position(
    p: Position2, extents: tuple[float, float] = TRACKED_EXTENTS
) -> Position2:
    if extents[0] <= 0 or extents[1] <= 0:
        raise ValueError(f"extents must be positive, got {extents}")
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise ValueError(f"non-finite position ({p.x}, {p.y})")
    return Position2(p.x * extents[0], p.y * extents[1])


def _lerp(a: float, b: float, w: float) -> float:
    return a + (b - a) * w


def resample_to_2fps(session: SessionLog) -> SessionLog:
    """Resample a session to a uniform 0.5 s grid.

    Positions and gaze are linearly interpolated; entity states and active
    events use the most recent source frame (zero-order hold).
    """
    frames = session.frames
    if len(frames) < 2:
        raise ValueError(f"session {session.id}: need >= 2 frames to resample")
    t_first = frames[0].t
    t_last = frames[-1].t
    n_out = int(math.floor((t_last - t_first) / FRAME_DT + 1e-9)) + 1
    times = [f.t for f in frames]
    out: list[FrameRecord] = []
    hi = 0
    for k in range(n_out):
        t = t_first + k * FRAME_DT
        while hi + 1 < len(frames) and times[hi + 1] <= t + 1e-12:
            hi += 1
        lo, up = (hi, min(hi + 1, len(frames) - 1))
        if up == lo:
            w = 0.0
        else:
            w = (t - times[lo]) / (times[up] - times[lo])
        w = min(max(w, 0.0), 1.0)
        a, b = frames[lo], frames[up]
        head = Position2(_lerp(a.head.x, b.head.x, w), _lerp(a.head.y, b.head.y, w))
        gaze = Position3(
            _lerp(a.gaze.x, b.gaze.x, w),
            _lerp(a.gaze.y, b.gaze.y, w),
            _lerp(a.gaze.z, b.gaze.z, w),
        )
        out.append(
            FrameRecord(
                t=t, head=head, gaze=gaze, entities=a.entities,
                active_events=a.active_events,
            )
        )
    return SessionLog(
        id=session.id, labels=session.labels, frames=tuple(out), events=session.events
    )


def extract_windows(session: SessionLog, stride: int = 1) -> tuple[MotionWindow, ...]:
    """Slide a 16-frame window over a 2 fps session.

    Sessions shorter than one window yield an empty tuple.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    frames = session.frames
    for a, b in zip(frames, frames[1:]):
        if abs((b.t - a.t) - FRAME_DT) > 1e-6:
            raise ValueError(
                f"session {session.id}: frame spacing {b.t - a.t:.6f}s != {FRAME_DT}s; "
                "resample to 2 fps first"
            )
    n = len(frames)
    if n < WINDOW_LEN:
        return ()
    windows = []
    for start in range(0, n - WINDOW_LEN + 1, stride):
        past = tuple(frames[start + i].head for i in range(PAST_LEN))
        future = tuple(
            frames[start + PAST_LEN + i].head for i in range(FUTURE_LEN)
        )
        windows.append(MotionWindow(past=past, future=future, t0=start + PAST_LEN - 1))
    return tuple(windows)


def window_count(n_frames: int, stride: int = 1) -> int:
    """Number of windows extractable from an n-frame 2 fps session."""
    if n_frames < WINDOW_LEN:
        return 0
    return (n_frames - WINDOW_LEN) // stride + 1
