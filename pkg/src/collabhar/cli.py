"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .classify import OvaModel, predict_proba, smooth_predictions
from .config import DATASET_ENV, ConfigError, load_run_config
from .evaluate import logo_folds, run_experiment, sensor_config_name
from .features import feature_matrix, schema_manifest
from .ingest import SessionFormatError, find_sessions, load_dataset, load_session, write_session
from .preprocess import make_windows
from .scenario import ScriptError, load_script, random_script, save_script
from .simfield import SimConfig, synth_session

EXIT_OK, EXIT_INVALID, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
MANIFEST = "manifest.json"

log = logging.getLogger("collabhar")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_simulate(args) -> int:
    try:
        script = load_script(args.script)
    except ScriptError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read script: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = SimConfig.load(args.sim_config) if args.sim_config else SimConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
    except (OSError, ValueError) as exc:
        print(f"simulator config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    sessions = synth_session(script, config)
    manifest_path = out / MANIFEST
    entries = []
    if manifest_path.exists():
        entries = [e for e in json.loads(manifest_path.read_text())["sessions"]
                   if not (e["day_index"] == script.day and e["agent_id"] in script.agents)]
    for s in sessions:
        stem = out / f"g{s.group_id}_d{s.day_index}_{s.agent_id}"
        path = write_session(s, stem)
        entries.append({
            "file": path.name,
            "agent_id": s.agent_id,
            "group_id": s.group_id,
            "day_index": s.day_index,
            "n_samples": s.n_samples,
            "sha256": _sha256(path),
        })
    entries.sort(key=lambda e: e["file"])
    manifest = {"format": "collabhar-dataset/1", "simulator": config.to_dict(), "sessions": entries}
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(sessions)} sessions to {out}")
    return EXIT_OK


def validate_dataset(root) -> list[str]:
    """Every format or invariant violation found under ``root``."""
    root = Path(root)
    problems = []
    paths = find_sessions(root)
    if not paths:
        return [f"{root}: no session files found"]
    sessions = []
    for p in paths:
        try:
            sessions.append(load_session(p))
        except SessionFormatError as exc:
            problems.append(str(exc))
    manifest = root / MANIFEST
    if manifest.exists():
        try:
            listed = json.loads(manifest.read_text())["sessions"]
        except (ValueError, KeyError) as exc:
            problems.append(f"{manifest}: unreadable manifest ({exc})")
        else:
            for entry in listed:
                f = root / entry["file"]
                if not f.exists():
                    problems.append(f"{manifest}: listed file {entry['file']} missing")
                elif _sha256(f) != entry.get("sha256"):
                    problems.append(f"{manifest}: checksum mismatch for {entry['file']}")
    if len(sessions) == len(paths):
        try:
            logo_folds(sessions)
        except ValueError as exc:
            problems.append(str(exc))
    return problems


def cmd_validate(args) -> int:
    root = args.root or os.environ.get(DATASET_ENV)
    if not root:
        print(f"no dataset root given (argument or {DATASET_ENV})", file=sys.stderr)
        return EXIT_CONFIG
    problems = validate_dataset(root)
    for p in problems:
        print(p)
    if problems:
        print(f"{len(problems)} problem(s) found", file=sys.stderr)
        return EXIT_INVALID
    print(f"{root}: all sessions valid")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = str(Path(args.out).resolve())
        if args.workers is not None:
            cfg.workers = args.workers
        cfg.__post_init__()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sessions = load_dataset(cfg.dataset_root)
    except SessionFormatError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        report = run_experiment(sessions, cfg.experiment(), keep_models=cfg.save_models)
    except ValueError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_report(report, cfg)
    print(f"report written to {cfg.out_dir}")
    return EXIT_OK


def write_report(report, cfg) -> None:
    out = Path(cfg.out_dir)
    (out / "confusion").mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    for stem, text in report.confusion_tables().items():
        (out / "confusion" / f"{stem}.csv").write_text(text)
    schemas = {}
    for sc in cfg.sensor_configs:
        name = sensor_config_name(sc.split("+"))
        schemas[name] = {
            "single": json.loads(schema_manifest(name.split("+"))),
            "pairwise": json.loads(schema_manifest(name.split("+"), pairwise=True)),
        }
    (out / "features_schema.json").write_text(json.dumps(schemas, indent=1, sort_keys=True) + "\n")
    (out / "resolved_config.toml").write_text(cfg.to_toml())
    if report.models:
        (out / "models").mkdir(exist_ok=True)
        for (key, group), model in sorted(report.models.items()):
            stem = key.replace("|", "__").replace("+", "-")
            (out / "models" / f"{stem}__fold{group}.json").write_text(model.to_json())


def cmd_script(args) -> int:
    try:
        groups = tuple(int(g) for g in args.groups.split(","))
    except ValueError:
        print("--groups must be a comma-separated list of integers", file=sys.stderr)
        return EXIT_CONFIG
    script = random_script(args.seed, groups=groups, agents_per_group=args.agents,
                           duration=args.duration, day=args.day)
    save_script(script, args.out)
    print(f"wrote script for {len(script.agents)} agents to {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        model = OvaModel.from_json(Path(args.model).read_text())
        session = load_session(args.session)
    except (OSError, ValueError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    if any(name.startswith("first.") for name in model.schema):
        print("pairwise models need two sessions; only single-user models are supported here", file=sys.stderr)
        return EXIT_CONFIG
    sources = sorted({name.split(".")[0] for name in model.schema})
    windows = [w for w in make_windows(session, args.window, args.step, args.clip) if w.reason != "data-loss"]
    try:
        X = feature_matrix(windows, sources)
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return EXIT_RUNTIME
    labels = smooth_predictions(predict_proba(model, X), args.radius)
    lines = ["start_s,prediction"] + [f"{w.start!r},{model.classes[k]}" for w, k in zip(windows, labels)]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(windows)} predictions to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collabhar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize sessions from an activity script")
    p.add_argument("--script", required=True)
    p.add_argument("--sim-config", "--config", dest="sim_config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check every session file under a dataset root")
    p.add_argument("root", nargs="?")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run the leave-one-group-out experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("script", help="generate a random collaborative-work script")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--groups", default="1,2,3,4")
    p.add_argument("--agents", type=int, default=3)
    p.add_argument("--duration", type=float, default=600.0)
    p.add_argument("--day", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_script)

    p = sub.add_parser("predict", help="label one session's windows with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float, default=5.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--clip", type=float, default=3.0)
    p.add_argument("--radius", type=int, default=3)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped onto the runtime exit code
        log.exception("unexpected failure")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
