"""Command-line pipeline: synth -> graphs -> split -> train -> eval ->
ablate -> plot -> report.

Configuration comes from a YAML file with per-subcommand sections; flags
override the file, the file overrides defaults.  ``--seed`` propagates to
every stage.  All commands are deterministic given (inputs, config, seed)
and write a manifest recording the resolved config hash.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from pathlib import Path

import yaml

from . import __version__
from .evaluation import (
    ablate_branch,
    evaluate,
    read_report_records,
    render_trajectories,
    report_tables,
    write_report_records,
)
from .ingest import (
    SplitSpec,
    assemble_samples,
    filter_samples,
    load_corpus,
    make_split,
    temporal_graphs_for_session,
)
from .model.network import ModelConfig, load_checkpoint, predict
from .scenegraph import GRAPH_SCHEMA, write_graph_file
from .synthdata import (
    CORPUS_SCHEMA,
    SESSION_SCHEMA,
    context_scenario_mix,
    default_scenario_mix,
    generate_corpus,
    make_layout,
    write_corpus,
)
from .training import TrainConfig, train

SPLIT_SCHEMA = "divr-split/1"

DEFAULTS = {
    "synth": {"users": 2, "mix": "standard", "seed": 0},
    "graphs": {"stride": 1},
    "split": {"kind": "random", "seed": 0, "held_out_users": 10,
              "ratios": [0.70, 0.15, 0.15]},
    "model": {"preset": "tiny", "n_points": 128, "stride": 1},
    "train": {"lr": 1e-4, "weight_decay": 1e-4, "gamma": 0.99, "epochs": 100,
              "batch_size": 16, "seed": 0, "max_steps": None,
              "variant": "divr-het"},
    "eval": {},
    "ablate": {"branch": "graph"},
    "plot": {"limit": 8},
}

MIXES = {"standard": default_scenario_mix, "context": context_scenario_mix}


class MissingArtifact(RuntimeError):
    pass


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifact(
            f"missing {path}; produce it with `divr {producer}` first"
        )
    return path


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = yaml.safe_load(fh) or {}
        if not isinstance(file_cfg, dict):
            raise ValueError(f"{args.config}: top level must be a mapping")
        cfg = _deep_merge(cfg, file_cfg)
    if getattr(args, "seed", None) is not None:
        for section in ("synth", "split", "train"):
            cfg[section]["seed"] = args.seed
    if getattr(args, "preset", None):
        cfg["model"]["preset"] = args.preset
    if getattr(args, "variant", None):
        cfg["train"]["variant"] = args.variant
    if getattr(args, "split", None):
        cfg["split"]["kind"] = args.split
    if getattr(args, "ablate", None):
        cfg["ablate"]["branch"] = args.ablate
    return cfg


def out_root(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("DIVR_OUT", "divr_out"))


def _write_run_manifest(out: Path, command: str, cfg: dict, qualifier: str = "") -> None:
    blob = json.dumps(cfg, sort_keys=True).encode()
    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "package_version": __version__,
        "schemas": {
            "session": SESSION_SCHEMA,
            "corpus": CORPUS_SCHEMA,
            "graph": GRAPH_SCHEMA,
            "split": SPLIT_SCHEMA,
        },
    }
    mdir = out / "manifests"
    mdir.mkdir(parents=True, exist_ok=True)
    name = f"{command}{'_' + qualifier if qualifier else ''}.json"
    (mdir / name).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _load_samples(out: Path, cfg: dict):
    manifest = _require(out / "corpus" / "manifest.jsonl", "synth")
    loaded = load_corpus(manifest)
    for problem in loaded.problems:
        print(f"warning: skipped session: {problem}", file=sys.stderr)
    samples = assemble_samples(
        loaded.sessions,
        n_points=cfg["model"]["n_points"],
        stride=cfg["model"]["stride"],
    )
    return loaded.sessions, samples


def _read_split(out: Path, kind: str):
    path = _require(out / "splits" / f"{kind}.json", f"split --split {kind}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("schema") != SPLIT_SCHEMA:
        raise ValueError(f"{path}: unknown split schema {data.get('schema')!r}")
    return {
        part: frozenset(data[part]) for part in ("train", "val", "test")
    }


def _run_dir(out: Path, cfg: dict) -> Path:
    variant = cfg["train"]["variant"]
    kind = cfg["split"]["kind"]
    seed = cfg["train"]["seed"]
    return out / "runs" / f"{variant}_{kind}_seed{seed}"


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    out = out_root(args)
    section = cfg["synth"]
    mix_name = section["mix"]
    if mix_name not in MIXES:
        raise ValueError(f"unknown mix {mix_name!r}, expected {sorted(MIXES)}")
    sessions = generate_corpus(
        n_users=section["users"], mix=MIXES[mix_name](), seed=section["seed"]
    )
    corpus_dir = out / "corpus"
    manifest = write_corpus(sessions, corpus_dir)
    _write_run_manifest(out, "synth", cfg)
    print(f"wrote {len(sessions)} sessions; manifest at {manifest}")
    return 0


def cmd_graphs(args) -> int:
    cfg = resolve_config(args)
    out = out_root(args)
    manifest = _require(out / "corpus" / "manifest.jsonl", "synth")
    loaded = load_corpus(manifest)
    gdir = out / "graphs"
    gdir.mkdir(parents=True, exist_ok=True)
    total = 0
    for session in sorted(loaded.sessions, key=lambda s: s.id):
        layout = make_layout(session.labels.lanes)
        graphs = temporal_graphs_for_session(
            session, layout, stride=cfg["graphs"]["stride"]
        )
        write_graph_file(graphs, gdir / f"{session.id}.graphs")
        total += len(graphs)
    _write_run_manifest(out, "graphs", cfg)
    print(f"wrote {total} temporal graphs for {len(loaded.sessions)} sessions")
    return 0


def cmd_split(args) -> int:
    cfg = resolve_config(args)
    out = out_root(args)
    manifest = _require(out / "corpus" / "manifest.jsonl", "synth")
    loaded = load_corpus(manifest)
    section = cfg["split"]
    spec = SplitSpec(
        kind=section["kind"], ratios=tuple(section["ratios"]),
        held_out_users=section["held_out_users"], seed=section["seed"],
    )
    split = make_split(loaded.sessions, spec)
    sdir = out / "splits"
    sdir.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": SPLIT_SCHEMA,
        "kind": split.kind,
        "train": sorted(split.train),
        "val": sorted(split.val),
        "test": sorted(split.test),
    }
    path = sdir / f"{spec.kind}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    _write_run_manifest(out, "split", cfg, qualifier=spec.kind)
    print(
        f"split {spec.kind}: train={len(split.train)} val={len(split.val)} "
        f"test={len(split.test)} -> {path}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = out_root(args)
    _sessions, samples = _load_samples(out, cfg)
    split = _read_split(out, cfg["split"]["kind"])
    section = cfg["train"]
    model_cfg = ModelConfig.from_preset(cfg["model"]["preset"])
    train_cfg = TrainConfig(
        lr=section["lr"], weight_decay=section["weight_decay"],
        gamma=section["gamma"], epochs=section["epochs"],
        batch_size=section["batch_size"], seed=section["seed"],
        max_steps=section["max_steps"],
    )
    rdir = _run_dir(out, cfg)
    rdir.mkdir(parents=True, exist_ok=True)
    result = train(
        section["variant"], model_cfg, train_cfg,
        filter_samples(samples, split["train"]),
        filter_samples(samples, split["val"]),
        log_path=rdir / "metrics.jsonl",
        checkpoint_path=rdir / "checkpoint.divr",
    )
    _write_run_manifest(out, "train", cfg,
                        qualifier=f"{section['variant']}_{cfg['split']['kind']}")
    status = "diverged" if result.diverged else "ok"
    print(
        f"trained {section['variant']} [{status}] best_epoch={result.best_epoch} "
        f"steps={result.steps} -> {rdir / 'checkpoint.divr'}"
    )
    return 0


def _eval_common(args, branch: str | None) -> int:
    cfg = resolve_config(args)
    out = out_root(args)
    rdir = _run_dir(out, cfg)
    ckpt = _require(
        rdir / "checkpoint.divr",
        f"train --variant {cfg['train']['variant']} --split {cfg['split']['kind']}",
    )
    params, model_cfg, variant = load_checkpoint(ckpt)
    _sessions, samples = _load_samples(out, cfg)
    split = _read_split(out, cfg["split"]["kind"])
    test = filter_samples(samples, split["test"])
    kind = cfg["split"]["kind"]
    if branch is None:
        report = evaluate(params, model_cfg, variant, test, kind)
        stem = f"eval_{variant}_{kind}_seed{cfg['train']['seed']}"
        command = "eval"
    else:
        report = ablate_branch(params, model_cfg, variant, branch, test, kind)
        stem = f"ablate_{branch}_{variant}_{kind}_seed{cfg['train']['seed']}"
        command = "ablate"
    rep_dir = out / "reports"
    rep_dir.mkdir(parents=True, exist_ok=True)
    table = report_tables([report])
    (rep_dir / f"{stem}.txt").write_text(table, encoding="utf-8")
    write_report_records([report], rep_dir / f"{stem}.jsonl")
    _write_run_manifest(out, command, cfg, qualifier=stem)
    print(table, end="")
    return 0


def cmd_eval(args) -> int:
    return _eval_common(args, branch=None)


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    return _eval_common(args, branch=cfg["ablate"]["branch"])


def cmd_plot(args) -> int:
    cfg = resolve_config(args)
    out = out_root(args)
    rdir = _run_dir(out, cfg)
    ckpt = _require(
        rdir / "checkpoint.divr",
        f"train --variant {cfg['train']['variant']} --split {cfg['split']['kind']}",
    )
    params, model_cfg, variant = load_checkpoint(ckpt)
    _sessions, samples = _load_samples(out, cfg)
    split = _read_split(out, cfg["split"]["kind"])
    test = sorted(
        filter_samples(samples, split["test"]), key=lambda s: (s.session_id, s.t0)
    )
    limit = cfg["plot"]["limit"]
    test = test[:limit] if limit else test
    preds = [
        predict(params, model_cfg, variant, s.past, cloud=s.cloud,
                frames=s.frames).prediction
        for s in test
    ]
    paths = render_trajectories(test, preds, out / "plots", limit=limit)
    _write_run_manifest(out, "plot", cfg)
    print(f"wrote {len(paths)} plots to {out / 'plots'}")
    return 0


def cmd_report(args) -> int:
    cfg = resolve_config(args)
    out = out_root(args)
    rep_dir = _require(out / "reports", "eval")
    reports = []
    for path in sorted(rep_dir.glob("*.jsonl")):
        reports.extend(read_report_records(path))
    if not reports:
        raise MissingArtifact(
            f"no report records under {rep_dir}; produce them with `divr eval` first"
        )
    table = report_tables(reports)
    (rep_dir / "summary.txt").write_text(table, encoding="utf-8")
    _write_run_manifest(out, "report", cfg)
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divr",
        description="Scene-context trajectory prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "synth": cmd_synth,
        "graphs": cmd_graphs,
        "split": cmd_split,
        "train": cmd_train,
        "eval": cmd_eval,
        "ablate": cmd_ablate,
        "plot": cmd_plot,
        "report": cmd_report,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", help="output root (default $DIVR_OUT or ./divr_out)")
        p.add_argument("--seed", type=int, help="seed for every stage")
        p.add_argument("--preset", choices=("paper", "tiny"))
        p.add_argument(
            "--variant", choices=("divr-het", "divr-hom", "mlp", "motion-gaze")
        )
        p.add_argument(
            "--split",
            choices=(
                "random", "user", "scene", "task", "vision",
                "diverse-task", "diverse-vision",
            ),
        )
        p.add_argument("--ablate", choices=("graph", "gaze"))
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.split:
        args.split = args.split.replace("-", "_")
    try:
        return args.fn(args)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
