"""Per-frame heterogeneous scene graphs and their homogeneous variant.

A frame graph has typed nodes (locations, pedestrian, vehicles, button,
traffic light) and typed directed edges (approach, adjacent, interaction)
carrying the attribute tables used as learned features.  A temporal graph
stacks 6 frame graphs aligned with an observation window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .core import TRACKED_EXTENTS, EntityState, Position2

if TYPE_CHECKING:
    from .synthdata import SceneLayout

GRAPH_SCHEMA = "divr-graph/1"

SPACE_DIAGONAL = math.hypot(*TRACKED_EXTENTS)

# half extents (meters) of entity bounding boxes, per kind
_ENTITY_HALF = {
    "pedestrian": (0.2, 0.2),
    "vehicle": (0.5, 1.0),
    "button": (0.1, 0.1),
    "traffic_light": (0.15, 0.15),
}

# a second approach edge appears when an entity is this close (meters) to
# the boundary of a region it is not inside
NEAR_ENTER_DIST = 0.5

COLOR_VALUES = (-1, 0, 1, 2)


class NodeType(Enum):
    LOCATION = "location"
    PEDESTRIAN = "pedestrian"
    VEHICLE = "vehicle"
    BUTTON = "button"
    TRAFFIC_LIGHT = "traffic_light"


class RelationType(Enum):
    APPROACH = "approach"
    ADJACENT = "adjacent"
    INTERACTION = "interaction"


NODE_TYPES = tuple(NodeType)
RELATION_TYPES = tuple(RelationType)

NODE_FEATURE_DIM = 19
EDGE_FEATURE_DIM = 9
HOMO_EDGE_FEATURE_DIM = 6


def q9(x: float) -> float:
    """Quantize to 9 significant decimal digits (the serialized precision)."""
    return float(f"{x:.9g}")


@dataclass(frozen=True)
class NodeAttr:
    id: int
    interactable: int
    localization: int
    movable: int
    color: int
    presence: int
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    x_cent: float
    y_cent: float

    def validate(self, node_type: NodeType) -> None:
        for name in ("interactable", "localization", "movable", "presence"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0/1, got {getattr(self, name)}")
        if self.color not in COLOR_VALUES:
            raise ValueError(f"color {self.color} not in {COLOR_VALUES}")
        if node_type is not NodeType.TRAFFIC_LIGHT and self.color != -1:
            raise ValueError(f"color set on non-traffic-light node {self.id}")
        if (self.localization == 1) != (node_type is NodeType.LOCATION):
            raise ValueError(f"localization flag inconsistent for node {self.id}")
        if not (self.x_min <= self.x_cent <= self.x_max) or not (
            self.y_min <= self.y_cent <= self.y_max
        ):
            raise ValueError(f"centroid outside box for node {self.id}")


@dataclass(frozen=True)
class EdgeAttr:
    id: int
    location_type: int
    dynamic_type: int
    adjacent_type: int
    interaction_type: int
    active: int
    distance: float

    def validate(self, rel: RelationType) -> None:
        expected = {
            RelationType.APPROACH: (1, 0, 0),
            RelationType.ADJACENT: (0, 1, 0),
            RelationType.INTERACTION: (0, 0, 1),
        }[rel]
        got = (self.location_type, self.adjacent_type, self.interaction_type)
        if got != expected:
            raise ValueError(f"edge {self.id}: type flags {got} != {expected} for {rel}")
        if not 0.0 <= self.distance <= 1.0:
            raise ValueError(f"edge {self.id}: distance {self.distance} outside [0,1]")


@dataclass(frozen=True)
class GraphEdge:
    src: int
    dst: int
    relation: RelationType
    attr: EdgeAttr


@dataclass(frozen=True)
class HeteroGraphFrame:
    nodes: dict[int, tuple[NodeType, NodeAttr]]
    edges: tuple[GraphEdge, ...]
    timestamp: float

    def validate(self) -> None:
        for nid, (ntype, attr) in self.nodes.items():
            attr.validate(ntype)
            if attr.id != nid:
                raise ValueError(f"node id mismatch: {attr.id} vs {nid}")
        for e in self.edges:
            if e.src not in self.nodes or e.dst not in self.nodes:
                raise ValueError(f"edge {e.attr.id}: endpoint missing")
            e.attr.validate(e.relation)


@dataclass(frozen=True)
class TemporalHeteroGraph:
    frames: tuple[HeteroGraphFrame, ...]

    def validate(self) -> None:
        if len(self.frames) != 6:
            raise ValueError(f"temporal graph needs 6 frames, got {len(self.frames)}")
        ids = set(self.frames[0].nodes)
        for f in self.frames:
            f.validate()
            if set(f.nodes) != ids:
                raise ValueError("node id set varies across frames")


@dataclass(frozen=True)
class HomoGraphFrame:
    nodes: dict[int, np.ndarray]
    edges: tuple[tuple[int, int, np.ndarray], ...]
    timestamp: float


def _norm_box(
    x_min: float, y_min: float, x_max: float, y_max: float
) -> tuple[float, float, float, float, float, float]:
    ex, ey = TRACKED_EXTENTS
    x0 = min(max(x_min / ex, 0.0), 1.0)
    x1 = min(max(x_max / ex, 0.0), 1.0)
    y0 = min(max(y_min / ey, 0.0), 1.0)
    y1 = min(max(y_max / ey, 0.0), 1.0)
    return (
        q9(x0), q9(y0), q9(x1), q9(y1),
        q9((x0 + x1) / 2.0), q9((y0 + y1) / 2.0),
    )


def _centroid_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Normalized centroid distance; centroids are already in [0,1] coords."""
    ex, ey = TRACKED_EXTENTS
    d = math.hypot((a[0] - b[0]) * ex, (a[1] - b[1]) * ey)
    return q9(min(d / SPACE_DIAGONAL, 1.0))


def build_frame(
    entities: tuple[EntityState, ...],
    layout: "SceneLayout",
    active_events: tuple[str, ...] = (),
    timestamp: float = 0.0,
) -> HeteroGraphFrame:
    """Assemble the typed frame graph from entity states and the scene layout.

    Node ids are assigned by stable ordering: layout regions first, then
    entities in input order.  Adjacent edges are static (both directions);
    approach edges tie mobile entities to the region containing them and,
    when close to a boundary, the region they are about to enter;
    interaction edges pair the pedestrian with button and traffic light,
    active when a matching event is running.
    """
    nodes: dict[int, tuple[NodeType, NodeAttr]] = {}
    region_centroids: list[tuple[float, float]] = []
    for rid, region in enumerate(layout.regions):
        box = _norm_box(*region.box)
        nodes[rid] = (
            NodeType.LOCATION,
            NodeAttr(
                id=rid, interactable=0, localization=1, movable=0, color=-1,
                presence=1, x_min=box[0], y_min=box[1], x_max=box[2],
                y_max=box[3], x_cent=box[4], y_cent=box[5],
            ),
        )
        region_centroids.append((box[4], box[5]))

    n_regions = len(layout.regions)
    seen_keys: set[str] = set()
    entity_ids: dict[str, int] = {}
    for off, ent in enumerate(entities):
        if ent.key in seen_keys:
            raise ValueError(f"duplicate entity key {ent.key!r}")
        seen_keys.add(ent.key)
        nid = n_regions + off
        entity_ids[ent.key] = nid
        ntype = NodeType(ent.kind)
        if ent.present:
            hx, hy = _ENTITY_HALF[ent.kind]
            box = _norm_box(
                ent.position.x - hx, ent.position.y - hy,
                ent.position.x + hx, ent.position.y + hy,
            )
        else:
            box = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        color = ent.color if ntype is NodeType.TRAFFIC_LIGHT else -1
        nodes[nid] = (
            ntype,
            NodeAttr(
                id=nid, interactable=int(ent.kind != "vehicle"),
                localization=0, movable=int(ent.kind in ("pedestrian", "vehicle")),
                color=color, presence=int(ent.present),
                x_min=box[0], y_min=box[1], x_max=box[2], y_max=box[3],
                x_cent=box[4], y_cent=box[5],
            ),
        )

    edges: list[GraphEdge] = []

    def add_edge(src: int, dst: int, rel: RelationType, active: int, dist: float):
        flags = {
            RelationType.APPROACH: (1, 1, 0, 0),
            RelationType.ADJACENT: (0, 0, 1, 0),
            RelationType.INTERACTION: (0, 1, 0, 1),
        }[rel]
        attr = EdgeAttr(
            id=len(edges), location_type=flags[0], dynamic_type=flags[1],
            adjacent_type=flags[2], interaction_type=flags[3],
            active=active, distance=dist,
        )
        edges.append(GraphEdge(src=src, dst=dst, relation=rel, attr=attr))

    for ra, rb in layout.adjacency:
        add_edge(ra, rb, RelationType.ADJACENT, active=1, dist=0.0)
        add_edge(rb, ra, RelationType.ADJACENT, active=1, dist=0.0)

    active_targets = {ev.split(":", 1)[1] for ev in active_events if ":" in ev}

    for ent in entities:
        if not ent.present or ent.kind not in ("pedestrian", "vehicle"):
            continue
        nid = entity_ids[ent.key]
        cent = (nodes[nid][1].x_cent, nodes[nid][1].y_cent)
        containing = layout.region_containing(ent.position)
        if containing is not None:
            add_edge(
                nid, containing, RelationType.APPROACH, active=1,
                dist=_centroid_distance(cent, region_centroids[containing]),
            )
        ranked = layout.regions_by_boundary_distance(ent.position)
        for rid, boundary_dist in ranked:
            if rid == containing:
                continue
            near = boundary_dist <= NEAR_ENTER_DIST
            if containing is None or near:
                add_edge(
                    nid, rid, RelationType.APPROACH, active=0,
                    dist=_centroid_distance(cent, region_centroids[rid]),
                )
            break  # at most one non-containing approach target

    pedestrians = [e for e in entities if e.kind == "pedestrian" and e.present]
    for ped in pedestrians:
        pid = entity_ids[ped.key]
        pcent = (nodes[pid][1].x_cent, nodes[pid][1].y_cent)
        for ent in entities:
            if ent.kind not in ("button", "traffic_light") or not ent.present:
                continue
            tid = entity_ids[ent.key]
            tcent = (nodes[tid][1].x_cent, nodes[tid][1].y_cent)
            active = int(ent.key in active_targets)
            dist = _centroid_distance(pcent, tcent)
            add_edge(pid, tid, RelationType.INTERACTION, active=active, dist=dist)
            add_edge(tid, pid, RelationType.INTERACTION, active=active, dist=dist)

    frame = HeteroGraphFrame(nodes=nodes, edges=tuple(edges), timestamp=q9(timestamp))
    frame.validate()
    return frame


def encode_node(node_type: NodeType, attr: NodeAttr) -> np.ndarray:
    """Fixed 19-dim node feature: type one-hot, flags, color one-hot, box."""
    attr.validate(node_type)
    vec = np.zeros(NODE_FEATURE_DIM, dtype=np.float64)
    vec[NODE_TYPES.index(node_type)] = 1.0
    vec[5] = attr.interactable
    vec[6] = attr.localization
    vec[7] = attr.movable
    vec[8] = attr.presence
    vec[9 + COLOR_VALUES.index(attr.color)] = 1.0
    vec[13:19] = (
        attr.x_min, attr.y_min, attr.x_max, attr.y_max, attr.x_cent, attr.y_cent,
    )
    return vec


def encode_edge(rel: RelationType, attr: EdgeAttr) -> np.ndarray:
    """Fixed 9-dim edge feature: relation one-hot, flags, distance."""
    attr.validate(rel)
    vec = np.zeros(EDGE_FEATURE_DIM, dtype=np.float64)
    vec[RELATION_TYPES.index(rel)] = 1.0
    vec[3] = attr.location_type
    vec[4] = attr.dynamic_type
    vec[5] = attr.adjacent_type
    vec[6] = attr.interaction_type
    vec[7] = attr.active
    vec[8] = attr.distance
    return vec


def to_homogeneous(frame: HeteroGraphFrame) -> HomoGraphFrame:
    """Fold node types into features and drop edge relation types."""
    nodes = {
        nid: encode_node(ntype, attr) for nid, (ntype, attr) in frame.nodes.items()
    }
    edges = tuple(
        (e.src, e.dst, encode_edge(e.relation, e.attr)[3:]) for e in frame.edges
    )
    return HomoGraphFrame(nodes=nodes, edges=edges, timestamp=frame.timestamp)


# serialization ---------------------------------------------------------


class GraphFormatError(ValueError):
    pass


def _node_to_json(nid: int, ntype: NodeType, attr: NodeAttr) -> list:
    return [
        nid, ntype.value,
        [
            attr.id, attr.interactable, attr.localization, attr.movable,
            attr.color, attr.presence, attr.x_min, attr.y_min, attr.x_max,
            attr.y_max, attr.x_cent, attr.y_cent,
        ],
    ]


def _edge_to_json(e: GraphEdge) -> list:
    a = e.attr
    return [
        e.src, e.dst, e.relation.value,
        [
            a.id, a.location_type, a.dynamic_type, a.adjacent_type,
            a.interaction_type, a.active, a.distance,
        ],
    ]


def serialize_graph(g: TemporalHeteroGraph) -> str:
    """One line of structured text per temporal graph; lossless round-trip."""
    g.validate()
    record = {
        "frames": [
            {
                "t": f.timestamp,
                "nodes": [
                    _node_to_json(nid, *f.nodes[nid]) for nid in sorted(f.nodes)
                ],
                "edges": [_edge_to_json(e) for e in f.edges],
            }
            for f in g.frames
        ]
    }
    return json.dumps(record, separators=(",", ":"))


def deserialize_graph(line: str) -> TemporalHeteroGraph:
    try:
        record = json.loads(line)
        frames = []
        for fr in record["frames"]:
            nodes = {}
            for nid, tname, a in fr["nodes"]:
                attr = NodeAttr(
                    id=a[0], interactable=a[1], localization=a[2], movable=a[3],
                    color=a[4], presence=a[5], x_min=a[6], y_min=a[7],
                    x_max=a[8], y_max=a[9], x_cent=a[10], y_cent=a[11],
                )
                nodes[nid] = (NodeType(tname), attr)
            edges = []
            for src, dst, rname, a in fr["edges"]:
                attr = EdgeAttr(
                    id=a[0], location_type=a[1], dynamic_type=a[2],
                    adjacent_type=a[3], interaction_type=a[4], active=a[5],
                    distance=a[6],
                )
                edges.append(
                    GraphEdge(src=src, dst=dst, relation=RelationType(rname), attr=attr)
                )
            frames.append(
                HeteroGraphFrame(nodes=nodes, edges=tuple(edges), timestamp=fr["t"])
            )
        g = TemporalHeteroGraph(frames=tuple(frames))
    except (KeyError, IndexError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise GraphFormatError(f"malformed graph record: {exc}") from exc
    g.validate()
    return g


def write_graph_file(graphs: list[TemporalHeteroGraph], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(GRAPH_SCHEMA + "\n")
        for g in graphs:
            fh.write(serialize_graph(g) + "\n")


def read_graph_file(path) -> list[TemporalHeteroGraph]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != GRAPH_SCHEMA:
            raise GraphFormatError(
                f"{path}: unknown schema {header!r}, expected {GRAPH_SCHEMA!r}"
            )
        graphs = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                graphs.append(deserialize_graph(line))
            except GraphFormatError as exc:
                raise GraphFormatError(f"{path}: line {lineno}: {exc}") from exc
    return graphs
