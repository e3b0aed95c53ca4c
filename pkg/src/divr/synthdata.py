"""Synthetic road-crossing sessions at desk scale.

Scenes are laid out in the 10 m x 4 m tracked space: home, near sidewalk,
road (one or two lanes, split into a crossing band and two road strips),
far sidewalk.  A phase-driven pedestrian walks waypoint plans; complex
tasks press the crossing button and wait for the green light, whose delay
is randomized per session so that the future depends on light state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import (
    TRACKED_EXTENTS,
    ConditionLabels,
    EntityState,
    FrameRecord,
    Position2,
    Position3,
    SessionEvent,
    SessionLog,
)
from .scenegraph import q9

SESSION_SCHEMA = "divr-session/1"
CORPUS_SCHEMA = "divr-corpus/1"

SIM_DT = 0.1
RECORD_EVERY = 5  # 0.5 s frames

ONE_LANE_WIDTH = 2.5
EXTRA_LANE_WIDTH = 3.5  # a second lane widens the road by this much

GAZE_SIGMA = 0.5  # meters, proximity kernel width
NV_GAZE_SCATTER = 0.12
LV_GAZE_SCATTER = 0.36
LV_SPEED_FACTOR = 0.8
LV_NOISE_FACTOR = 1.5

BUTTON_POS = (2.8, 1.1)
LIGHT_POS = (2.8, 2.9)

RED, ORANGE, GREEN = 0, 1, 2


@dataclass(frozen=True)
class Region:
    name: str
    box: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max

    def contains(self, p: Position2) -> bool:
        x0, y0, x1, y1 = self.box
        return x0 <= p.x <= x1 and y0 <= p.y <= y1

    def boundary_distance(self, p: Position2) -> float:
        """Distance from a point to the region box (0 inside)."""
        x0, y0, x1, y1 = self.box
        dx = max(x0 - p.x, 0.0, p.x - x1)
        dy = max(y0 - p.y, 0.0, p.y - y1)
        return math.hypot(dx, dy)

    def centroid(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.box
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


@dataclass(frozen=True)
class VehicleRoute:
    lane_x: float
    direction: int  # +1 drives toward +y, -1 toward -y
    speed: float
    period: float
    phase: float

    def state_at(self, t: float) -> tuple[bool, float]:
        margin = 1.0
        span = TRACKED_EXTENTS[1] + 2.0 * margin
        travel = span / self.speed
        cycle_t = (t + self.phase) % self.period
        if cycle_t >= travel:
            return False, 0.0
        if self.direction > 0:
            return True, -margin + self.speed * cycle_t
        return True, TRACKED_EXTENTS[1] + margin - self.speed * cycle_t


@dataclass(frozen=True)
class SceneLayout:
    lanes: str
    regions: tuple[Region, ...]
    adjacency: tuple[tuple[int, int], ...]
    light_cycle: tuple[float, float, float]  # red, orange, green durations
    vehicles: tuple[VehicleRoute, ...]

    def road_span(self) -> tuple[float, float]:
        w = ONE_LANE_WIDTH + (EXTRA_LANE_WIDTH if self.lanes == "two" else 0.0)
        return 3.0, 3.0 + w

    def region_containing(self, p: Position2) -> int | None:
        for rid, region in enumerate(self.regions):
            if region.contains(p):
                return rid
        return None

    def regions_by_boundary_distance(self, p: Position2) -> list[tuple[int, float]]:
        ranked = [
            (rid, region.boundary_distance(p))
            for rid, region in enumerate(self.regions)
        ]
        ranked.sort(key=lambda item: (item[1], item[0]))
        return ranked

    def region_index(self, name: str) -> int:
        for rid, region in enumerate(self.regions):
            if region.name == name:
                return rid
        raise KeyError(name)

    def surface_points(self) -> np.ndarray:
        return _surface_points(self.lanes)


@lru_cache(maxsize=4)
def _surface_points(lanes: str) -> np.ndarray:
    xs = np.arange(0.125, TRACKED_EXTENTS[0], 0.25)
    ys = np.arange(0.125, TRACKED_EXTENTS[1], 0.25)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    ground = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    button = np.array([[BUTTON_POS[0], BUTTON_POS[1], z] for z in (0.9, 1.1)])
    pole = np.array(
        [[LIGHT_POS[0], LIGHT_POS[1], z] for z in (0.5, 1.0, 1.5, 2.0, 2.5)]
    )
    return np.ascontiguousarray(np.vstack([ground, button, pole]))


def make_layout(
    lanes: str, vehicle_phases: tuple[float, ...] = (0.0, 3.0)
) -> SceneLayout:
    """Regions tile the tracked space exactly; adjacency is the static set of
    region pairs sharing a boundary."""
    if lanes not in ("one", "two"):
        raise ValueError(f"lanes must be 'one' or 'two', got {lanes!r}")
    road_w = ONE_LANE_WIDTH + (EXTRA_LANE_WIDTH if lanes == "two" else 0.0)
    x_road0, x_road1 = 3.0, 3.0 + road_w
    regions = (
        Region("home", (0.0, 0.0, 1.5, 4.0)),
        Region("sidewalk_near", (1.5, 0.0, 3.0, 4.0)),
        Region("crossing", (x_road0, 1.25, x_road1, 2.75)),
        Region("road_lower", (x_road0, 0.0, x_road1, 1.25)),
        Region("road_upper", (x_road0, 2.75, x_road1, 4.0)),
        Region("sidewalk_far", (x_road1, 0.0, 10.0, 4.0)),
    )
    adjacency = (
        (0, 1),  # home - sidewalk_near
        (1, 2), (1, 3), (1, 4),  # near sidewalk touches crossing + road strips
        (2, 3), (2, 4),  # crossing between the road strips
        (2, 5), (3, 5), (4, 5),  # far sidewalk
    )
    n_lanes = 1 if lanes == "one" else 2
    lane_w = road_w / n_lanes
    vehicles = tuple(
        VehicleRoute(
            lane_x=x_road0 + lane_w * (i + 0.5),
            direction=1 if i % 2 == 0 else -1,
            speed=3.0,
            period=6.0,
            phase=vehicle_phases[i % len(vehicle_phases)],
        )
        for i in range(n_lanes)
    )
    return SceneLayout(
        lanes=lanes,
        regions=regions,
        adjacency=adjacency,
        light_cycle=(8.0, 1.5, 12.0),
        vehicles=vehicles,
    )


@dataclass(frozen=True)
class ScenarioSpec:
    labels: ConditionLabels
    layout: SceneLayout
    start: Position2
    plan: tuple[tuple, ...]  # ("move",x,y) | ("dwell",s) | ("press",key,s) | ("wait_green",s)
    noise: float
    speed: float
    gaze_scatter: float
    press_latency: float  # red time between press and orange, CT only
    seed: int
    session_id: str = ""

    def validate(self) -> None:
        if self.speed <= 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        ex, ey = TRACKED_EXTENTS
        for pt in (self.start,) + tuple(
            Position2(s[1], s[2]) for s in self.plan if s[0] == "move"
        ):
            if not (0.0 <= pt.x <= ex and 0.0 <= pt.y <= ey):
                raise ValueError(f"waypoint ({pt.x}, {pt.y}) outside tracked space")


def make_scenario(
    labels: ConditionLabels,
    seed: int,
    speed: float = 1.2,
    noise: float = 0.04,
    vehicle_phases: tuple[float, ...] | None = None,
    press_latency: float | None = None,
    session_id: str = "",
) -> ScenarioSpec:
    """Build the waypoint plan for a (task, direction) scenario."""
    rng = np.random.default_rng(seed)
    phases = vehicle_phases
    if phases is None:
        phases = tuple(rng.uniform(0.0, 6.0, size=2))
    layout = make_layout(labels.lanes, vehicle_phases=phases)
    x0, x1 = layout.road_span()
    home = (0.75, 2.0)
    near_entry = (2.6, 2.0)
    far_exit = (x1 + 0.4, 2.0)
    far_goal = ((x1 + 10.0) / 2.0, 2.0)
    button_spot = (2.55, 1.1)

    if press_latency is None:
        press_latency = float(rng.uniform(1.0, 8.0))

    if labels.direction == "cross":
        start, goal = home, far_goal
        entry_side, exit_side = near_entry, far_exit
        wait_spot = near_entry
        approach = button_spot
    else:
        start, goal = far_goal, home
        entry_side, exit_side = far_exit, near_entry
        wait_spot = far_exit
        approach = (x1 + 0.4, 1.3)

    plan: list[tuple] = [("dwell", 2.0)]
    if labels.task == "CT":
        plan += [
            ("move",) + approach,
            ("press", "button", 0.5),
            ("move",) + wait_spot,
            ("wait_green", 0.5),
        ]
    else:
        plan += [("move",) + entry_side]
    plan += [("move",) + exit_side, ("move",) + goal, ("dwell", 3.0)]

    scatter = LV_GAZE_SCATTER if labels.vision == "LV" else NV_GAZE_SCATTER
    eff_speed = speed * (LV_SPEED_FACTOR if labels.vision == "LV" else 1.0)
    eff_noise = noise * (LV_NOISE_FACTOR if labels.vision == "LV" else 1.0)
    spec = ScenarioSpec(
        labels=labels,
        layout=layout,
        start=Position2(*start),
        plan=tuple(plan),
        noise=eff_noise,
        speed=eff_speed,
        gaze_scatter=scatter,
        press_latency=press_latency,
        seed=int(np.random.default_rng(seed + 1).integers(0, 2**31)),
        session_id=session_id,
    )
    spec.validate()
    return spec


class _LightController:
    """Autonomous cycle for simple tasks; press-driven for complex ones."""

    def __init__(self, cycle: tuple[float, float, float], autonomous: bool,
                 phase: float, press_latency: float):
        self.cycle = cycle
        self.autonomous = autonomous
        self.phase = phase
        self.press_latency = press_latency
        self.press_t: float | None = None

    def press(self, t: float) -> None:
        if self.press_t is None:
            self.press_t = t

    def color(self, t: float) -> int:
        red, orange, green = self.cycle
        if self.autonomous:
            period = red + orange + green
            ct = (t + self.phase) % period
            if ct < red:
                return RED
            if ct < red + orange:
                return ORANGE
            return GREEN
        if self.press_t is None:
            return RED
        dt = t - (self.press_t + self.press_latency)
        if dt < 0:
            return RED
        if dt < orange:
            return ORANGE
        if dt < orange + green:
            return GREEN
        return RED


def generate_session(spec: ScenarioSpec) -> SessionLog:
    """Simulate one session at 10 Hz, recording frames at 2 fps.

    Deterministic given the spec (including its seed).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    layout = spec.layout
    light = _LightController(
        cycle=layout.light_cycle,
        autonomous=spec.labels.task == "ST",
        phase=float(rng.uniform(0.0, sum(layout.light_cycle))),
        press_latency=spec.press_latency,
    )

    pos = np.array([spec.start.x, spec.start.y], dtype=np.float64)
    plan = list(spec.plan)
    step_idx = 0
    timer = 0.0
    waited_reaction = 0.0
    events: list[SessionEvent] = []
    frames: list[FrameRecord] = []
    green_logged = False
    press_count = 0
    gaze_target = np.array([pos[0], pos[1], 0.2])

    ex, ey = TRACKED_EXTENTS
    k = 0
    max_steps = int(240.0 / SIM_DT)  # hard stop against stuck plans
    while step_idx < len(plan) and k < max_steps:
        t = (k // RECORD_EVERY) * 0.5 + (k % RECORD_EVERY) * SIM_DT
        color = light.color(t)
        if not green_logged and color == GREEN:
            events.append(SessionEvent(t=q9(t), kind="light_green", target="traffic_light"))
            green_logged = True

        active: list[str] = []
        step = plan[step_idx]
        kind = step[0]
        if kind == "move":
            target = np.array([step[1], step[2]], dtype=np.float64)
            delta = target - pos
            dist = float(np.hypot(*delta))
            advance = spec.speed * SIM_DT
            if dist <= advance:
                pos = target.copy()
                step_idx += 1
                timer = 0.0
            else:
                pos = pos + delta / dist * advance
            gaze_target = np.array([target[0], target[1], 0.2])
        elif kind == "dwell":
            timer += SIM_DT
            if timer >= step[1] - 1e-9:
                step_idx += 1
                timer = 0.0
        elif kind == "press":
            if timer == 0.0:
                events.append(SessionEvent(t=q9(t), kind="button_press", target=step[1]))
                light.press(t)
                press_count += 1
            active.append(f"press:{step[1]}")
            gaze_target = np.array([BUTTON_POS[0], BUTTON_POS[1], 1.0])
            timer += SIM_DT
            if timer >= step[2] - 1e-9:
                step_idx += 1
                timer = 0.0
        elif kind == "wait_green":
            active.append("wait:traffic_light")
            gaze_target = np.array([LIGHT_POS[0], LIGHT_POS[1], 2.4])
            if color == GREEN:
                waited_reaction += SIM_DT
                if waited_reaction >= step[1] - 1e-9:
                    step_idx += 1
                    waited_reaction = 0.0
        else:
            raise ValueError(f"unknown plan step {kind!r}")

        if k % RECORD_EVERY == 0:
            ft = (k // RECORD_EVERY) * 0.5
            head = pos + rng.normal(0.0, spec.noise, size=2)
            clamped = head.copy()
            clamped[0] = min(max(clamped[0], 0.0), ex)
            clamped[1] = min(max(clamped[1], 0.0), ey)
            if not np.array_equal(clamped, head):
                events.append(SessionEvent(t=q9(ft), kind="clamp", target="user"))
            gx, gy = gaze_target[:2] + rng.normal(0.0, spec.gaze_scatter, size=2)
            gz = max(gaze_target[2] + rng.normal(0.0, spec.gaze_scatter / 2.0), 0.0)
            entities = [
                EntityState(
                    kind="pedestrian", key="user",
                    position=Position2(q9(clamped[0]), q9(clamped[1])),
                ),
                EntityState(kind="button", key="button",
                            position=Position2(*BUTTON_POS)),
                EntityState(kind="traffic_light", key="traffic_light",
                            position=Position2(*LIGHT_POS), color=color),
            ]
            for vi, route in enumerate(layout.vehicles):
                present, vy = route.state_at(ft)
                vy_c = min(max(vy, 0.0), ey)
                entities.append(
                    EntityState(
                        kind="vehicle", key=f"vehicle_{vi}",
                        position=Position2(q9(route.lane_x), q9(vy_c)),
                        present=present,
                    )
                )
            frames.append(
                FrameRecord(
                    t=ft,
                    head=Position2(q9(clamped[0]), q9(clamped[1])),
                    gaze=Position3(q9(gx), q9(gy), q9(gz)),
                    entities=tuple(entities),
                    active_events=tuple(active),
                )
            )
        k += 1

    if step_idx < len(plan):
        raise RuntimeError(
            f"session {spec.session_id or '?'}: plan did not finish in "
            f"{max_steps * SIM_DT:.0f} s (stuck at step {plan[step_idx]})"
        )
    session = SessionLog(
        id=spec.session_id or f"session_{spec.seed}",
        labels=spec.labels,
        frames=tuple(frames),
        events=tuple(events),
    )
    session.validate()
    if spec.labels.task == "CT" and press_count != 1:
        raise RuntimeError(f"CT session recorded {press_count} button presses")
    return session


def default_scenario_mix() -> tuple[tuple[str, str, str, str], ...]:
    """(task, lanes, direction, vision) per session; six scenarios x two visions."""
    six = (
        ("ST", "one", "cross"),
        ("CT", "one", "cross"),
        ("ST", "two", "cross"),
        ("CT", "two", "cross"),
        ("ST", "one", "return"),
        ("CT", "one", "return"),
    )
    return tuple(
        (task, lanes, direction, vision)
        for vision in ("NV", "LV")
        for task, lanes, direction in six
    )


def context_scenario_mix() -> tuple[tuple[str, str, str, str], ...]:
    """Complex-task-heavy mix whose futures hinge on the light state."""
    return tuple(
        (task, lanes, "cross", vision)
        for vision in ("NV", "LV")
        for task, lanes in (("CT", "one"), ("CT", "two"), ("ST", "one"))
    )


def generate_corpus(
    n_users: int,
    mix: tuple[tuple[str, str, str, str], ...] | None = None,
    seed: int = 0,
) -> list[SessionLog]:
    """One session per user per scenario; per-user speed/noise drawn once."""
    if n_users < 1:
        raise ValueError(f"n_users must be >= 1, got {n_users}")
    if mix is None:
        mix = default_scenario_mix()
    sessions = []
    for uid in range(n_users):
        user_rng = np.random.default_rng([seed, uid])
        speed = float(np.clip(user_rng.normal(1.2, 0.1), 0.8, 1.6))
        noise = float(user_rng.uniform(0.03, 0.06))
        for sidx, (task, lanes, direction, vision) in enumerate(mix):
            labels = ConditionLabels(
                vision=vision, task=task, lanes=lanes, user_id=uid,
                scene_id=1 if lanes == "one" else 2, direction=direction,
            )
            scen_seed = int(
                np.random.default_rng([seed, uid, sidx]).integers(0, 2**31)
            )
            spec = make_scenario(
                labels, seed=scen_seed, speed=speed, noise=noise,
                session_id=f"u{uid:03d}_s{sidx:02d}",
            )
            sessions.append(generate_session(spec))
    return sessions


def sample_gaze_cloud(
    frame: FrameRecord, layout: SceneLayout, n_points: int = 256
) -> np.ndarray:
    """Scene surface samples weighted by a gaze-proximity kernel.

    Returns (n_points, 4): xyz plus weight, sorted by weight descending
    (ties broken by coordinates, so output depends only on the frame).
    """
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    pts = layout.surface_points()
    gaze = frame.gaze.as_array()
    d2 = np.sum((pts - gaze) ** 2, axis=1)
    w = np.exp(-d2 / (2.0 * GAZE_SIGMA**2))
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], -w))
    if order.size < n_points:
        reps = int(np.ceil(n_points / order.size))
        order = np.tile(order, reps)
    sel = order[:n_points]
    return np.ascontiguousarray(np.column_stack([pts[sel], w[sel]]))


# session / manifest files ------------------------------------------------


class SessionFormatError(ValueError):
    pass


def write_session(session: SessionLog, path) -> None:
    lab = session.labels
    meta = {
        "id": session.id,
        "labels": {
            "vision": lab.vision, "task": lab.task, "lanes": lab.lanes,
            "user_id": lab.user_id, "scene_id": lab.scene_id,
            "direction": lab.direction,
        },
        "events": [[e.t, e.kind, e.target] for e in session.events],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SESSION_SCHEMA + "\n")
        fh.write(json.dumps(meta, separators=(",", ":")) + "\n")
        for f in session.frames:
            rec = {
                "t": f.t,
                "head": [f.head.x, f.head.y],
                "gaze": [f.gaze.x, f.gaze.y, f.gaze.z],
                "entities": [
                    [e.kind, e.key, e.position.x, e.position.y,
                     int(e.present), e.color]
                    for e in f.entities
                ],
                "active": list(f.active_events),
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_session(path) -> SessionLog:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != SESSION_SCHEMA:
            raise SessionFormatError(
                f"{path}: unknown schema {header!r}, expected {SESSION_SCHEMA!r}"
            )
        try:
            meta = json.loads(fh.readline())
            labels = ConditionLabels(**meta["labels"])
            events = tuple(
                SessionEvent(t=e[0], kind=e[1], target=e[2]) for e in meta["events"]
            )
            frames = []
            for lineno, line in enumerate(fh, start=3):
                if not line.strip():
                    continue
                rec = json.loads(line)
                entities = tuple(
                    EntityState(
                        kind=e[0], key=e[1], position=Position2(e[2], e[3]),
                        present=bool(e[4]), color=e[5],
                    )
                    for e in rec["entities"]
                )
                frames.append(
                    FrameRecord(
                        t=rec["t"],
                        head=Position2(*rec["head"]),
                        gaze=Position3(*rec["gaze"]),
                        entities=entities,
                        active_events=tuple(rec["active"]),
                    )
                )
        except (KeyError, IndexError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise SessionFormatError(f"{path}: malformed session: {exc}") from exc
    return SessionLog(
        id=meta["id"], labels=labels, frames=tuple(frames), events=events
    )


def write_manifest(entries: list[tuple[str, ConditionLabels]], path) -> None:
    """Corpus manifest: one line per session file with its labels."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CORPUS_SCHEMA + "\n")
        for rel, lab in entries:
            rec = {
                "file": rel,
                "labels": {
                    "vision": lab.vision, "task": lab.task, "lanes": lab.lanes,
                    "user_id": lab.user_id, "scene_id": lab.scene_id,
                    "direction": lab.direction,
                },
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def write_corpus(sessions: list[SessionLog], directory) -> Path:
    """Write sessions plus manifest under ``directory``; returns manifest path."""
    directory = Path(directory)
    (directory / "sessions").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in sessions:
        rel = f"sessions/{s.id}.session"
        write_session(s, directory / rel)
        entries.append((rel, s.labels))
    manifest = directory / "manifest.jsonl"
    write_manifest(entries, manifest)
    return manifest
