"""Corpus loading, split protocols, and model-input assembly.

Splits operate on whole sessions (never windows) so that overlapping
windows cannot leak across train/val/test.  Beyond the random 70/15/15
split the generalization protocols hold out users, two-lane scenes,
return-direction tasks, or train-condition subsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    FUTURE_LEN,
    PAST_LEN,
    ConditionLabels,
    MotionWindow,
    SessionLog,
    extract_windows,
    resample_to_2fps,
)
from .model.graphnet import FrameArrays
from .scenegraph import (
    NODE_TYPES,
    HeteroGraphFrame,
    TemporalHeteroGraph,
    build_frame,
    encode_edge,
    encode_node,
)
from .synthdata import (
    CORPUS_SCHEMA,
    SceneLayout,
    SessionFormatError,
    make_layout,
    read_session,
    sample_gaze_cloud,
)

SPLIT_KINDS = (
    "random", "user", "scene", "task", "vision", "diverse_task", "diverse_vision",
)


@dataclass
class LoadResult:
    sessions: list[SessionLog]
    skipped: int
    problems: list[str]


def load_corpus(manifest_path) -> LoadResult:
    """Load every session listed in a corpus manifest.

    Invalid sessions are skipped and reported; an unknown manifest schema is
    a hard error.
    """
    manifest_path = Path(manifest_path)
    import json

    sessions: list[SessionLog] = []
    problems: list[str] = []
    with open(manifest_path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CORPUS_SCHEMA:
            raise ValueError(
                f"{manifest_path}: unknown manifest schema {header!r}, "
                f"expected {CORPUS_SCHEMA!r}"
            )
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                path = manifest_path.parent / rec["file"]
                session = read_session(path)
                session.validate()
                ConditionLabels(**rec["labels"])
                sessions.append(session)
            except (
                KeyError, TypeError, ValueError, OSError, SessionFormatError,
            ) as exc:
                problems.append(f"{manifest_path}:{lineno}: {exc}")
    return LoadResult(sessions=sessions, skipped=len(problems), problems=problems)


@dataclass(frozen=True)
class SplitSpec:
    kind: str
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    held_out_users: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SPLIT_KINDS:
            raise ValueError(f"unknown split kind {self.kind!r}, expected {SPLIT_KINDS}")
        if abs(sum(self.ratios) - 1.0) > 1e-9 or any(r < 0 for r in self.ratios):
            raise ValueError(f"ratios must be non-negative and sum to 1: {self.ratios}")


@dataclass(frozen=True)
class Split:
    kind: str
    train: frozenset[str]
    val: frozenset[str]
    test: frozenset[str]


def _stratified_order(sessions: list[SessionLog], rng) -> list[str]:
    """Shuffle within (vision, task) groups, then interleave round-robin so a
    contiguous slice stays roughly condition-balanced."""
    groups: dict[tuple[str, str], list[str]] = {}
    for s in sessions:
        groups.setdefault((s.labels.vision, s.labels.task), []).append(s.id)
    queues = []
    for key in sorted(groups):
        ids = sorted(groups[key])
        rng.shuffle(ids)
        queues.append(ids)
    order: list[str] = []
    i = 0
    while any(queues):
        q = queues[i % len(queues)]
        if q:
            order.append(q.pop())
        i += 1
    return order


def make_split(corpus: list[SessionLog], spec: SplitSpec) -> Split:
    """Deterministic session-level splits for every protocol kind."""
    ids = [s.id for s in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("corpus contains duplicate session ids")
    rng = np.random.default_rng(spec.seed)
    r_train, r_val, r_test = spec.ratios

    if spec.kind == "user":
        users = sorted({s.labels.user_id for s in corpus})
        if spec.held_out_users >= len(users):
            raise ValueError(
                f"cannot hold out {spec.held_out_users} of {len(users)} users"
            )
        perm = list(users)
        rng.shuffle(perm)
        test_users = set(perm[: spec.held_out_users])
        test = [s.id for s in corpus if s.labels.user_id in test_users]
        pool = [s for s in corpus if s.labels.user_id not in test_users]
        order = _stratified_order(pool, rng)
        n_val = int(len(order) * r_val / (r_train + r_val))
        val = order[:n_val]
        train = order[n_val:]
        return Split(
            kind=spec.kind, train=frozenset(train), val=frozenset(val),
            test=frozenset(test),
        )

    def in_pool(s: SessionLog) -> tuple[bool, bool, bool]:
        """(pool membership, forced into test, excluded entirely)."""
        lab = s.labels
        if spec.kind == "random":
            return True, False, False
        if spec.kind == "scene":
            return lab.lanes == "one", lab.lanes == "two", False
        if spec.kind == "task":
            return lab.direction == "cross", lab.direction == "return", False
        if spec.kind == "vision":
            pool = lab.vision == "NV" and lab.task == "ST"
            return pool, not pool, False
        if spec.kind == "diverse_task":
            pool = lab.vision == "NV"
            return pool, False, not pool
        # diverse_vision
        pool = lab.task == "ST"
        return pool, False, not pool

    pool_sessions = []
    forced_test = []
    for s in corpus:
        pooled, forced, excluded = in_pool(s)
        if excluded:
            continue
        if forced:
            forced_test.append(s.id)
        elif pooled:
            pool_sessions.append(s)

    order = _stratified_order(pool_sessions, rng)
    n = len(order)
    in_pool_test = spec.kind in ("random", "vision", "diverse_task", "diverse_vision")
    if in_pool_test:
        n_test = int(n * r_test)
        n_val = int(n * r_val)
        test = order[:n_test] + forced_test
        val = order[n_test : n_test + n_val]
        train = order[n_test + n_val :]
    else:
        n_val = int(n * r_val / (r_train + r_val))
        test = forced_test
        val = order[:n_val]
        train = order[n_val:]
    return Split(
        kind=spec.kind, train=frozenset(train), val=frozenset(val),
        test=frozenset(test),
    )


# model-input assembly ----------------------------------------------------


@dataclass
class Sample:
    session_id: str
    labels: ConditionLabels
    t0: int
    past: np.ndarray  # (6, 2)
    future: np.ndarray  # (10, 2)
    cloud: np.ndarray  # (n_points, 4)
    frames: list[FrameArrays]
    window: MotionWindow


def frame_to_arrays(frame: HeteroGraphFrame) -> FrameArrays:
    order = sorted(frame.nodes)
    index = {nid: i for i, nid in enumerate(order)}
    node_feats = np.stack([encode_node(*frame.nodes[nid]) for nid in order])
    node_types = np.array(
        [NODE_TYPES.index(frame.nodes[nid][0]) for nid in order], dtype=np.int64
    )
    if frame.edges:
        edge_src = np.array([index[e.src] for e in frame.edges], dtype=np.int64)
        edge_dst = np.array([index[e.dst] for e in frame.edges], dtype=np.int64)
        edge_feats = np.stack([encode_edge(e.relation, e.attr) for e in frame.edges])
    else:
        edge_src = np.zeros(0, dtype=np.int64)
        edge_dst = np.zeros(0, dtype=np.int64)
        edge_feats = np.zeros((0, 9), dtype=np.float64)
    return FrameArrays(
        node_feats=node_feats, node_types=node_types,
        edge_src=edge_src, edge_dst=edge_dst, edge_feats=edge_feats,
    )


def session_frame_graphs(
    session: SessionLog, layout: SceneLayout
) -> list[HeteroGraphFrame]:
    """Per-frame graphs for a resampled session (shared across windows)."""
    return [
        build_frame(f.entities, layout, f.active_events, timestamp=f.t)
        for f in session.frames
    ]


def temporal_graphs_for_session(
    session: SessionLog, layout: SceneLayout, stride: int = 1
) -> list[TemporalHeteroGraph]:
    rs = resample_to_2fps(session)
    graphs = session_frame_graphs(rs, layout)
    out = []
    for w in extract_windows(rs, stride):
        start = w.t0 - PAST_LEN + 1
        out.append(
            TemporalHeteroGraph(frames=tuple(graphs[start : start + PAST_LEN]))
        )
    return out


def assemble_samples(
    sessions: list[SessionLog], n_points: int = 256, stride: int = 1
) -> list[Sample]:
    """Windows plus aligned graph frames and gaze cloud, ready for the model."""
    samples: list[Sample] = []
    for session in sorted(sessions, key=lambda s: s.id):
        layout = make_layout(session.labels.lanes)
        rs = resample_to_2fps(session)
        windows = extract_windows(rs, stride)
        if not windows:
            continue
        graphs = session_frame_graphs(rs, layout)
        arrays = [frame_to_arrays(g) for g in graphs]
        for w in windows:
            start = w.t0 - PAST_LEN + 1
            cloud = sample_gaze_cloud(rs.frames[w.t0], layout, n_points)
            samples.append(
                Sample(
                    session_id=session.id,
                    labels=session.labels,
                    t0=w.t0,
                    past=w.past_array(),
                    future=w.future_array(),
                    cloud=cloud,
                    frames=arrays[start : start + PAST_LEN],
                    window=w,
                )
            )
    return samples


def filter_samples(samples: list[Sample], ids: frozenset[str]) -> list[Sample]:
    return [s for s in samples if s.session_id in ids]
