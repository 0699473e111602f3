"""Command-line front end.

Subcommands: synth, calibrate (mi|emg), decode (ssvep|mi|emg),
train-memory, retrieve, match-param, eval param, run-task, bench.
Exit code 0 on success, 1 on task failure or invariant violation,
2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import mi as mi_mod
from .emg import EmgCalibration, calibrate_emg, detect_clench
from .embed import EmbedConfig, EmbeddingNet
from .memory import MemoryStore, read_feature_matrix, retrieve, retrieve_gated, train_memory
from .orchestrator import (
    EpisodeOptions,
    SignalProfiles,
    benchmark_csv,
    calibrate_decoders,
    check_safety_invariant,
    run_benchmark,
    run_episode,
    write_event_log,
)
from .parammatch import (
    ParamPoint,
    evaluate_matching,
    make_match_corpus,
    match_point,
    matching_report_csv,
    read_feature_map,
)
from .signal import read_epoch, select_channels, write_epoch
from .ssvep import build_reference_bank, classify_ssvep
from .synth import (
    ClenchProfile,
    MiProfile,
    SsvepStimulus,
    gen_calibration_session,
    gen_clench_window,
    gen_ssvep,
)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _load_config(args.config)
    fs = float(cfg.get("fs", 250.0))
    manifest = {"kind": args.kind, "fs": fs, "seed": args.seed, "files": []}

    if args.kind == "ssvep":
        stim = SsvepStimulus(snr_db=float(cfg.get("snr_db", 0.0)))
        manifest["profile"] = dataclasses.asdict(stim)
        for i in range(args.n or 8):
            target = i % len(stim.frequencies)
            epoch = gen_ssvep(stim, target, seed=args.seed + i, fs=fs)
            name = f"ssvep_{i:03d}.epc"
            write_epoch(out / name, epoch)
            manifest["files"].append(
                {"path": name, "label": epoch.label, "seed": args.seed + i}
            )
    elif args.kind == "mi":
        profile = MiProfile(modulation_db=float(cfg.get("modulation_db", 6.0)))
        manifest["profile"] = dataclasses.asdict(profile)
        epochs = gen_calibration_session(profile, seed=args.seed, fs=fs)
        for i, epoch in enumerate(epochs[: args.n] if args.n else epochs):
            name = f"mi_{i:03d}.epc"
            write_epoch(out / name, epoch)
            manifest["files"].append({"path": name, "label": epoch.label, "seed": args.seed})
    elif args.kind == "clench":
        profile = ClenchProfile()
        manifest["profile"] = dataclasses.asdict(profile)
        for i in range(args.n or 8):
            is_clench = i % 2 == 1
            epoch = gen_clench_window(profile, is_clench, seed=args.seed + i, fs=fs)
            name = f"clench_{i:03d}.epc"
            write_epoch(out / name, epoch)
            manifest["files"].append(
                {"path": name, "label": "clench" if is_clench else "rest", "seed": args.seed + i}
            )
    else:
        print(f"unknown synth kind {args.kind!r}", file=sys.stderr)
        return 2

    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(str(out / "manifest.json"))
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    if args.what == "mi":
        with open(args.session) as fh:
            manifest = json.load(fh)
        base = Path(args.session).parent
        epochs = [read_epoch(base / entry["path"]) for entry in manifest["files"]]
        motor = [select_channels(e, "motor") for e in epochs]
        csp = mi_mod.fit_csp(motor)
        qda = mi_mod.fit_qda(
            [mi_mod.csp_features(csp, e).f for e in motor], [e.label for e in motor]
        )
        with open(args.out, "w") as fh:
            fh.write(mi_mod.models_to_json(csp, qda))
        print(args.out)
        return 0
    if args.what == "emg":
        rest = [read_epoch(p) for p in args.rest]
        clench = [read_epoch(p) for p in args.clench]
        calib = calibrate_emg(rest, clench)
        with open(args.out, "w") as fh:
            json.dump(dataclasses.asdict(calib), fh, indent=2, sort_keys=True)
        print(args.out)
        return 0
    print(f"unknown calibrate target {args.what!r}", file=sys.stderr)
    return 2


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------

def cmd_decode(args) -> int:
    if args.what == "ssvep":
        epoch = read_epoch(args.epoch)
        freqs = tuple(float(f) for f in args.freqs.split(","))
        vis = select_channels(epoch, "visual") if args.select_visual else epoch
        bank = build_reference_bank(freqs, vis.fs, vis.n_samples)
        result = classify_ssvep(vis, bank)
        _print_json(
            {
                "rho": {f"{f:g}": result.rho[f] for f in freqs},
                "ranking": [f"{f:g}" for f in result.ranking],
                "best": f"{result.best:g}",
            }
        )
        return 0
    if args.what == "mi":
        with open(args.model) as fh:
            csp, qda = mi_mod.models_from_json(fh.read())
        epoch = read_epoch(args.epoch)
        if args.select_motor:
            epoch = select_channels(epoch, "motor")
        ranked = mi_mod.classify_mi(csp, qda, epoch)
        _print_json({"ranking": list(ranked), "best": ranked[0]})
        return 0
    if args.what == "emg":
        with open(args.calib) as fh:
            doc = json.load(fh)
        calib = EmgCalibration(
            m_rest=tuple(doc["m_rest"]),
            m_clench=tuple(doc["m_clench"]),
            threshold=doc["threshold"],
            window_s=doc["window_s"],
            overlap_warning=doc["overlap_warning"],
        )
        window = read_epoch(args.window)
        _print_json({"clench": detect_clench(calib, window)})
        return 0
    print(f"unknown decode target {args.what!r}", file=sys.stderr)
    return 2


# ---------------------------------------------------------------------------
# memory
# ---------------------------------------------------------------------------

def cmd_train_memory(args) -> int:
    features, labels = read_feature_matrix(args.features)
    cfg = _load_config(args.config)
    config = EmbedConfig(
        input_dim=features.shape[1],
        hidden_layers=int(cfg.get("hidden_layers", 5)),
        hidden_dim=int(cfg.get("hidden_dim", 1024)),
        output_dim=int(cfg.get("output_dim", 1024)),
        epochs=int(cfg.get("epochs", 100)),
        batch_size=int(cfg.get("batch_size", 40)),
    )
    store = train_memory(features, labels, config=config, seed=args.seed)
    with open(args.out, "w") as fh:
        fh.write(store.net.to_json())
    print(args.out)
    return 0


def cmd_retrieve(args) -> int:
    with open(args.model) as fh:
        net = EmbeddingNet.from_json(fh.read())
    features, labels = read_feature_matrix(args.features)
    store = MemoryStore.build(net, features, labels)
    queries, _ = read_feature_matrix(args.query)
    results = []
    for q in queries:
        if args.gated:
            hit = retrieve_gated(store, q)
            results.append(
                None if hit is None
                else {"object": hit[0], "skill": hit[1], "distance": hit[2]}
            )
        else:
            obj, skill, dist = retrieve(store, q)
            results.append({"object": obj, "skill": skill, "distance": dist})
    _print_json({"results": results, "threshold": store.distance_threshold})
    return 0


# ---------------------------------------------------------------------------
# parameter matching
# ---------------------------------------------------------------------------

def cmd_match_param(args) -> int:
    train_map = read_feature_map(args.train)
    test_map = read_feature_map(args.test)
    x, y = (float(v) for v in args.point.split(","))
    point, sim, cell = match_point(train_map, ParamPoint(x=x, y=y), test_map)
    _print_json(
        {"x": point.x, "y": point.y, "similarity": sim, "cell": list(cell)}
    )
    return 0


def cmd_eval(args) -> int:
    if args.what != "param":
        print(f"unknown eval target {args.what!r}", file=sys.stderr)
        return 2
    seed = args.seed
    if args.corpus:
        index = Path(args.corpus) / "index.json"
        if index.exists():
            with open(index) as fh:
                seed = json.load(fh)["seed"]
        else:
            Path(args.corpus).mkdir(parents=True, exist_ok=True)
            with open(index, "w") as fh:
                json.dump({"seed": seed, "n_pairs": args.pairs}, fh)
    corpus = make_match_corpus(n_pairs=args.pairs, seed=seed)
    summary = evaluate_matching(corpus, seed=seed)
    csv = matching_report_csv(summary)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv)
        print(args.out)
    else:
        sys.stdout.write(csv)
    return 0


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------

def cmd_run_task(args) -> int:
    cfg = _load_config(args.config)
    snr = cfg.get("snr_db", "inf")
    snr = float("inf") if snr in ("inf", None) else float(snr)
    profiles = SignalProfiles.at_noise(snr, float(cfg.get("modulation_db", 40.0)))
    options = EpisodeOptions(
        memory=args.memory,
        param_learning=args.param_learning,
        error_model=float(cfg.get("error_model", 0.0)),
    )
    suite = calibrate_decoders(profiles, seed=args.seed)
    report = run_episode(args.task, profiles, suite, options, seed=args.seed)
    if args.log:
        write_event_log(args.log, report)
    _print_json(report.to_dict())
    if not check_safety_invariant(report):
        print("safety invariant violated", file=sys.stderr)
        return 1
    return 0 if report.success else 1


DEFAULT_SUITE = {
    "tasks": ["WipeSpill"],
    "noise_levels": [{"name": "clean", "snr_db": "inf", "modulation_db": 40.0}],
    "options": [{"name": "plain"}],
}


def cmd_bench(args) -> int:
    suite = _load_config(args.config) or DEFAULT_SUITE
    seeds = [int(s) for s in args.seeds.split(",")]
    results = run_benchmark(suite, seeds, workers=args.workers)
    csv = benchmark_csv(results)
    if args.out_csv:
        with open(args.out_csv, "w") as fh:
            fh.write(csv)
    else:
        sys.stdout.write(csv)
    if args.out_json:
        with open(args.out_json, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noir", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--config", default=None, help="JSON config file")
    # accept the globals after the subcommand too
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=lambda **kw: argparse.ArgumentParser(parents=[common], **kw))

    p = sub.add_parser("synth", help="generate synthetic epochs (EPC1 + manifest)")
    p.add_argument("--kind", choices=("ssvep", "mi", "clench"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None,
                   help="epoch count (default 8; mi defaults to the full session)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit decoders from recorded epochs")
    p.add_argument("what", choices=("mi", "emg"))
    p.add_argument("--session", help="synth manifest (mi)")
    p.add_argument("--rest", nargs="+", help="rest windows (emg)")
    p.add_argument("--clench", nargs="+", help="clench windows (emg)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("decode", help="decode one epoch")
    p.add_argument("what", choices=("ssvep", "mi", "emg"))
    p.add_argument("--epoch")
    p.add_argument("--freqs", default="6,7.5,8.57,10")
    p.add_argument("--model")
    p.add_argument("--calib")
    p.add_argument("--window")
    p.add_argument("--select-visual", action="store_true",
                   help="restrict to visual-cortex channels first")
    p.add_argument("--select-motor", action="store_true",
                   help="restrict to motor-cortex channels first")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train-memory", help="train the retrieval embedding")
    p.add_argument("--features", required=True, help="FMX1 training matrix")
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train_memory)

    p = sub.add_parser("retrieve", help="nearest-neighbor skill retrieval")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, help="FMX1 store matrix")
    p.add_argument("--query", required=True, help="FMX1 query matrix")
    p.add_argument("--gated", action="store_true", help="apply the confidence gate")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("match-param", help="one-shot parameter correspondence")
    p.add_argument("--train", required=True, help="training FMAP")
    p.add_argument("--point", required=True, help="x,y in training image pixels")
    p.add_argument("--test", required=True, help="test FMAP")
    p.set_defaults(func=cmd_match_param)

    p = sub.add_parser("eval", help="evaluate a component on a corpus")
    p.add_argument("what", choices=("param",))
    p.add_argument("--corpus", default=None, help="corpus directory (index.json)")
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run-task", help="run one closed-loop episode")
    p.add_argument("--task", required=True)
    p.add_argument("--memory", action="store_true")
    p.add_argument("--param-learning", action="store_true")
    p.add_argument("--log", default=None, help="JSON-lines event log path")
    p.set_defaults(func=cmd_run_task)

    p = sub.add_parser("bench", help="run the benchmark grid")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-json", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
