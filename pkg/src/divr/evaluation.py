"""Displacement metrics, evaluation/ablation protocols, trajectory plots,
and report tables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Parameters
from .ingest import Sample
from .model.network import ModelConfig, predict
from .synthdata import make_layout


def ade(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean distance per step, in meters."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"trajectory shapes differ: {pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise ValueError("empty trajectory")
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)))


def fde(pred: np.ndarray, gt: np.ndarray) -> float:
    """Euclidean distance at the final step only, in meters."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"trajectory shapes differ: {pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise ValueError("empty trajectory")
    return float(np.linalg.norm(pred[-1] - gt[-1]))


@dataclass
class MetricCell:
    ade: float
    fde: float
    count: int


@dataclass
class MetricReport:
    variant: str
    split_kind: str
    cells: dict[str, MetricCell] = field(default_factory=dict)
    ablated: str | None = None

    def row_label(self) -> str:
        tag = f" -{self.ablated}" if self.ablated else ""
        return f"{self.variant}{tag} [{self.split_kind}]"


CONDITION_ORDER = ("all", "NV", "LV", "ST", "CT", "one", "two", "cross", "return")


def _condition_keys(sample: Sample) -> tuple[str, ...]:
    lab = sample.labels
    return ("all", lab.vision, lab.task, lab.lanes, lab.direction)


def evaluate(
    params: Parameters,
    cfg: ModelConfig,
    variant: str,
    samples: list[Sample],
    split_kind: str,
    ablate: str | None = None,
) -> MetricReport:
    """Per-condition ADE/FDE means over all test windows; deterministic in
    window ordering."""
    if not samples:
        raise ValueError("empty test split")
    ordered = sorted(samples, key=lambda s: (s.session_id, s.t0))
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for s in ordered:
        bundle = predict(
            params, cfg, variant, s.past, cloud=s.cloud, frames=s.frames,
            ablate=ablate,
        )
        a = ade(bundle.prediction, s.future)
        f = fde(bundle.prediction, s.future)
        for key in _condition_keys(s):
            acc = sums.setdefault(key, np.zeros(2))
            acc += (a, f)
            counts[key] = counts.get(key, 0) + 1
    cells = {
        key: MetricCell(
            ade=float(sums[key][0] / counts[key]),
            fde=float(sums[key][1] / counts[key]),
            count=counts[key],
        )
        for key in sums
    }
    return MetricReport(
        variant=variant, split_kind=split_kind, cells=cells, ablated=ablate
    )


def ablate_branch(
    params: Parameters,
    cfg: ModelConfig,
    variant: str,
    branch: str,
    samples: list[Sample],
    split_kind: str,
) -> MetricReport:
    """Re-evaluate with one branch's raw input replaced by zeros."""
    return evaluate(params, cfg, variant, samples, split_kind, ablate=branch)


def percent_improvement(base: float, new: float) -> float:
    """(base - new) / base * 100, the comparison bookkeeping used in reports."""
    if base == 0:
        raise ValueError("undefined improvement over a zero baseline")
    return (base - new) / base * 100.0


# trajectory plots --------------------------------------------------------

_SVG_SCALE = 60.0


def _pts(points: np.ndarray) -> str:
    ex_y = 4.0
    return " ".join(
        f"{x * _SVG_SCALE:.1f},{(ex_y - y) * _SVG_SCALE:.1f}" for x, y in points
    )


def render_trajectories(
    samples: list[Sample],
    predictions: list[np.ndarray],
    out_dir,
    limit: int | None = None,
) -> list[Path]:
    """One SVG per sample: red past, green endpoint, blue ground truth,
    magenta prediction, over the scene region outlines."""
    if len(samples) != len(predictions):
        raise ValueError("samples and predictions length mismatch")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (s, pred) in enumerate(zip(samples, predictions)):
        if limit is not None and i >= limit:
            break
        layout = make_layout(s.labels.lanes)
        parts = [
            '<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{10 * _SVG_SCALE:.0f}" height="{4 * _SVG_SCALE:.0f}">'
        ]
        for region in layout.regions:
            x0, y0, x1, y1 = region.box
            parts.append(
                f'<rect x="{x0 * _SVG_SCALE:.1f}" '
                f'y="{(4.0 - y1) * _SVG_SCALE:.1f}" '
                f'width="{(x1 - x0) * _SVG_SCALE:.1f}" '
                f'height="{(y1 - y0) * _SVG_SCALE:.1f}" '
                'fill="none" stroke="#999" stroke-width="1"/>'
            )
        past, future = s.past, s.future
        parts.append(
            f'<polyline points="{_pts(past)}" fill="none" stroke="red" '
            'stroke-width="2"/>'
        )
        ex, ey = past[-1]
        parts.append(
            f'<circle cx="{ex * _SVG_SCALE:.1f}" '
            f'cy="{(4.0 - ey) * _SVG_SCALE:.1f}" r="4" fill="green"/>'
        )
        parts.append(
            f'<polyline points="{_pts(future)}" fill="none" stroke="blue" '
            'stroke-width="2"/>'
        )
        parts.append(
            f'<polyline points="{_pts(pred)}" fill="none" stroke="magenta" '
            'stroke-width="2"/>'
        )
        parts.append("</svg>")
        path = out_dir / f"{s.session_id}_t{s.t0:03d}.svg"
        path.write_text("\n".join(parts), encoding="utf-8")
        paths.append(path)
    return paths


# report emission ---------------------------------------------------------


def report_tables(reports: list[MetricReport]) -> str:
    """Rows per report, columns per condition x {ADE, FDE}; column minima
    are flagged with '*'."""
    if not reports:
        raise ValueError("no reports to tabulate")
    keys = [
        k for k in CONDITION_ORDER if any(k in r.cells for r in reports)
    ]
    headers = ["model"]
    for k in keys:
        headers += [f"{k} ADE", f"{k} FDE"]
    rows = []
    for r in reports:
        row = [r.row_label()]
        for k in keys:
            cell = r.cells.get(k)
            if cell is None:
                row += ["-", "-"]
            else:
                row += [f"{cell.ade:.4f}", f"{cell.fde:.4f}"]
        rows.append(row)
    # flag column minima
    for ci in range(1, len(headers)):
        vals = [
            (ri, float(row[ci]))
            for ri, row in enumerate(rows)
            if row[ci] != "-"
        ]
        if not vals:
            continue
        best = min(v for _, v in vals)
        for ri, v in vals:
            if v == best:
                rows[ri][ci] += "*"
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in rows))
        for i in range(len(headers))
    ]
    lines = [
        " | ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "-+-".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append(" | ".join(row[i].ljust(widths[i]) for i in range(len(row))))
    return "\n".join(lines) + "\n"


def parse_report_table(text: str) -> dict[tuple[str, str], float]:
    """Inverse of ``report_tables`` for the numeric cells."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    headers = [h.strip() for h in lines[0].split("|")]
    out: dict[tuple[str, str], float] = {}
    for line in lines[2:]:
        cells = [c.strip() for c in line.split("|")]
        row_label = cells[0]
        for h, c in zip(headers[1:], cells[1:]):
            if c == "-":
                continue
            out[(row_label, h)] = float(c.rstrip("*"))
    return out


def write_report_records(reports: list[MetricReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            for key in CONDITION_ORDER:
                if key not in r.cells:
                    continue
                cell = r.cells[key]
                fh.write(
                    json.dumps(
                        {
                            "variant": r.variant,
                            "split": r.split_kind,
                            "ablated": r.ablated,
                            "cell": key,
                            "ade": cell.ade,
                            "fde": cell.fde,
                            "count": cell.count,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


def read_report_records(path) -> list[MetricReport]:
    reports: dict[tuple[str, str, str | None], MetricReport] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            key = (rec["variant"], rec["split"], rec["ablated"])
            rep = reports.setdefault(
                key,
                MetricReport(
                    variant=rec["variant"], split_kind=rec["split"],
                    ablated=rec["ablated"],
                ),
            )
            rep.cells[rec["cell"]] = MetricCell(
                ade=rec["ade"], fde=rec["fde"], count=rec["count"]
            )
    return list(reports.values())
