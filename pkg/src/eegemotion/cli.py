"""Command line entry point: ``eegemotion <subcommand> [flags]``.

Data go to files under the run directory (or to stdout for ``stream``);
logs go to stderr as ``key=value`` records. Exit codes: 0 success, 1 runtime
error, 2 invalid invocation or configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, PipelineConfig, load_config, parse_synthetic_spec
from .core import DomainError, emotion_map_table
from .dsp import WindowSpec
from .ensemble.forest import ContractError, TrainingError
from .ensemble.modelset import VadModelSet
from .ensemble.serialize import ModelFormatError
from .features import write_feature_table
from .io import RecordingFormatError, generate_synthetic, read_dataset, write_dataset
from .realtime import LineWriter, SessionError, StreamEngine, TcpPublisher, WireFormatError, fan_out, run_replay, serve

log = logging.getLogger("eegemotion.cli")

BUILD_ID = f"eegemotion {__version__}"

RUNTIME_ERRORS = (
    DomainError,
    ContractError,
    TrainingError,
    ModelFormatError,
    RecordingFormatError,
    WireFormatError,
    SessionError,
    FileExistsError,
    OSError,
    ValueError,
)


class _Formatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        msg = record.getMessage().replace("\n", " ")
        return f"ts={self.formatTime(record, '%Y-%m-%dT%H:%M:%S')} level={record.levelname} module={record.name} msg={json.dumps(msg)}"


def _setup_logging(level: str) -> None:
    root = logging.getLogger()
    for h in list(root.handlers):
        root.removeHandler(h)
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(_Formatter())
    root.addHandler(h)
    root.setLevel(level.upper())
    logging.getLogger("numba").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


# -- shared helpers ------------------------------------------------------------


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise ConfigError("run.jobs", "must be >= 1")
        cfg = replace(cfg, run=replace(cfg.run, jobs=args.jobs))
    return cfg


def _data_dir(args, cfg: PipelineConfig) -> Path:
    d = args.data or cfg.data.dir
    if not d:
        raise ConfigError("data.dir", "no dataset given (use --data or [data] dir)")
    return Path(d)


def _run_dir(args, cfg: PipelineConfig):
    from .pipeline import prepare_run_dir

    run = prepare_run_dir(args.run_dir, force=args.force)
    (run / "config" / "config.ini").write_text(cfg.to_ini())
    fh = logging.FileHandler(run / "logs" / f"{args.command}.log", mode="w")
    fh.setFormatter(_Formatter())
    logging.getLogger().addHandler(fh)
    return run


def _report(cfg: PipelineConfig):
    from .pipeline import ExperimentReport

    return ExperimentReport(cfg.config_hash(), cfg.run.seed)


def _write_figures(run: Path, **figs) -> None:
    for name, fn in figs.items():
        fn(run / "figures" / f"{name}.png")


# -- subcommands -----------------------------------------------------------------


def cmd_generate_synthetic(args) -> int:
    spec = parse_synthetic_spec(Path(args.spec).read_text(), args.spec) if args.spec else parse_synthetic_spec("")
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise FileExistsError(f"{out} is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    seed = 0 if args.seed is None else args.seed
    recs = generate_synthetic(spec, seed=seed)
    write_dataset(out, recs)
    log.info("wrote %d recordings to %s", len(recs), out)
    return 0


def cmd_preprocess(args) -> int:
    from .io import Recording
    from .pipeline import preprocess_recording

    cfg = _config(args)
    recs = read_dataset(_data_dir(args, cfg))
    run = _run_dir(args, cfg)
    channels = _channel_set(args.channels, cfg, recs)
    out = []
    for rec in recs:
        seg = preprocess_recording(rec, channels, cfg)
        out.append(Recording(seg.fs, seg.channels, seg.samples, rec.subject_id, rec.trial_id, rec.label))
    write_dataset(run / "preprocessed", out)
    rep = _report(cfg)
    rep.add_table("preprocess", [{"recordings": len(out), "fs": cfg.preprocess.target_fs,
                                  "filter": "causal" if cfg.preprocess.causal else "zero-phase",
                                  "channels": ",".join(channels)}])
    rep.write(run)
    return 0


def _channel_set(which: str, cfg: PipelineConfig, recs) -> list[str]:
    if which == "runtime":
        return list(cfg.channels.runtime)
    if which == "standard":
        return list(cfg.channels.standard)
    common = [ch for ch in recs[0].channels if all(ch in r.channels for r in recs)]
    return common


def cmd_features(args) -> int:
    from .pipeline import extract_features

    cfg = _config(args)
    recs = read_dataset(_data_dir(args, cfg))
    run = _run_dir(args, cfg)
    channels = _channel_set(args.channels, cfg, recs)
    step = args.step_s if args.step_s is not None else cfg.windows.train_step_s
    table = extract_features(recs, channels, WindowSpec(cfg.windows.length_s, step), cfg)
    table.meta.update({"config_hash": cfg.config_hash(), "seed": str(cfg.run.seed), "version": __version__})
    write_feature_table(run / "tables" / "features.tsv", table)
    log.info("%d windows x %d features", *table.X.shape)
    return 0


def cmd_select_channels(args) -> int:
    from . import plotting
    from .pipeline import run_channel_selection

    cfg = _config(args)
    recs = read_dataset(_data_dir(args, cfg))
    run = _run_dir(args, cfg)
    res = run_channel_selection(cfg, recs)
    rep = _report(cfg)
    rows = []
    for line in res.correlation.to_tsv().splitlines()[1:]:
        v = line.split("\t")
        rows.append({"band": v[0], "lobe": v[1], "arousal": v[2], "valence": v[3], "dominance": v[4], "sum": v[5],
                     "sig_arousal": v[6], "sig_valence": v[7], "sig_dominance": v[8]})
    rep.add_table("correlation", rows)
    eii = res.ranking.eii
    rank_rows = [
        {"channel": ch, "valence_gi": res.ranking.gi[i, 0], "arousal_gi": res.ranking.gi[i, 1],
         "dominance_gi": res.ranking.gi[i, 2], "eii": eii[i], "selected": ch in res.selected}
        for i, ch in enumerate(res.ranking.channels)
    ]
    rep.add_table("channel_ranking", rank_rows)
    rep.add_table("selected_channels", [{"rank": k + 1, "channel": ch} for k, ch in enumerate(res.selected)])
    rep.write(run)
    _write_figures(
        run,
        eii=lambda p: plotting.eii_figure(res.ranking, res.selected, p),
        correlation=lambda p: plotting.correlation_figure(res.correlation, p),
    )
    print("\t".join(res.selected))
    return 0


def cmd_sweep_window(args) -> int:
    from . import plotting
    from .pipeline import run_time_window_sweep

    cfg = _config(args)
    recs = read_dataset(_data_dir(args, cfg))
    run = _run_dir(args, cfg)
    res = run_time_window_sweep(cfg, recs)
    rep = _report(cfg)
    rep.add_table("window_sweep", [{**r, "selected": r["window_length_s"] == res.selected_length_s} for r in res.rows])
    rep.write(run)
    _write_figures(run, window_sweep=lambda p: plotting.window_sweep_figure(res.rows, res.selected_length_s, p))
    print(f"{res.selected_length_s:g}")
    return 0


def cmd_train(args) -> int:
    from . import plotting
    from .pipeline import confusion_rows, metrics_rows, train_final, train_per_subject

    cfg = _config(args)
    recs = read_dataset(_data_dir(args, cfg))
    run = _run_dir(args, cfg)
    log.info("training %s on %d recordings (config %s, seed %d)", cfg.model.training, len(recs), cfg.config_hash(), cfg.run.seed)
    if cfg.model.training == "per-subject":
        results, cv = train_per_subject(cfg, recs)
        for subject, res in results.items():
            res.models.save(run / "models" / f"model_{subject}.bin")
    else:
        res = train_final(cfg, recs)
        res.models.save(run / "models" / "model.bin")
        results, cv = {"all": res}, res.cv
    rep = _report(cfg)
    rep.add_table("cv_metrics", metrics_rows(cv, split=cfg.split.mode, training=cfg.model.training))
    rep.add_table("cv_confusion", confusion_rows(cv))
    rep.add_table("top_features", [
        {"subject": s, "component": c, "rank": k + 1, "feature": f}
        for s, res in results.items() for c, feats in res.top_features.items() for k, f in enumerate(feats)
    ])
    figs = {"cv_confusion": lambda p: plotting.confusion_figure(cv, p)}
    sweeps = [(s, r.sweep) for s, r in results.items() if r.sweep is not None]
    if sweeps:
        rep.add_table("feature_sweep", [
            {"subject": s, **r, "chosen": r["n_features"] == sw.chosen_n} for s, sw in sweeps for r in sw.table()
        ])
        if len(sweeps) == 1:
            figs["feature_sweep"] = lambda p: plotting.feature_sweep_figure(sweeps[0][1], p)
    rep.write(run)
    (run / "tables" / "emotion_map.tsv").write_text(emotion_map_table())
    _write_figures(run, **figs)
    avg = sum(r.accuracy for r in cv.values()) / len(cv)
    log.info("models and reports written to %s", run)
    print(f"average_accuracy\t{avg:.6f}")
    return 0


def cmd_evaluate(args) -> int:
    from . import plotting
    from .pipeline import confusion_rows, evaluate_model_set, metrics_rows

    cfg = _config(args)
    models = VadModelSet.load(args.model)
    recs = read_dataset(_data_dir(args, cfg))
    run = _run_dir(args, cfg)
    reports = evaluate_model_set(models, recs, cfg)
    rep = _report(cfg)
    rep.add_table("eval_metrics", metrics_rows(reports, model_config_hash=models.metadata.get("config_hash", "")))
    rep.add_table("eval_confusion", confusion_rows(reports))
    rep.write(run)
    _write_figures(run, eval_confusion=lambda p: plotting.confusion_figure(reports, p))
    avg = sum(r.accuracy for r in reports.values()) / len(reports)
    print(f"average_accuracy\t{avg:.6f}")
    return 0


def cmd_stream(args) -> int:
    models = VadModelSet.load(args.model)
    sinks = [LineWriter(sys.stdout)]
    publisher = None
    if args.emit:
        publisher = TcpPublisher(args.emit)
        log.info("publishing events on %s:%d", *publisher.address)
        sinks.append(publisher)
    sink = fan_out(sinks)

    def factory(header):
        eng = StreamEngine(models, header, cadence_s=args.cadence_s)
        log.info("session: %d channels at %d Hz, window %.3g s, cadence %.3g s",
                 header.n_channels, header.fs, eng.length_s, eng.cadence_s)
        return eng

    try:
        if args.replay:
            stats = run_replay(factory, args.replay, args.speed, sink)
        else:
            stats = serve(factory, args.listen, sink)
    finally:
        if publisher is not None:
            publisher.close()
    log.info("frames=%d events=%d gaps=%d dropped=%d", stats.frames, stats.events, stats.gaps, stats.dropped)
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eegemotion", description="EEG emotion recognition: offline pipeline and streaming inference.")
    p.add_argument("--version", action="version", version=BUILD_ID)
    sub = p.add_subparsers(dest="command", required=True, metavar="<command>")

    def common(sp, data=True, run=True):
        sp.add_argument("--config", help="pipeline config file (INI); defaults are used when omitted")
        sp.add_argument("--seed", type=int, help="override run.seed")
        sp.add_argument("--jobs", type=int, help="worker threads for tree fitting (override run.jobs)")
        sp.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"], help="stderr log level")
        if data:
            sp.add_argument("--data", help="dataset directory with a manifest.tsv (overrides [data] dir)")
        if run:
            sp.add_argument("--run-dir", default="run", help="output directory (default: ./run)")
            sp.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")

    sp = sub.add_parser("generate-synthetic", help="write a labelled synthetic dataset")
    sp.add_argument("--spec", help="synthetic dataset spec (INI); defaults are used when omitted")
    sp.add_argument("--out", required=True, help="output dataset directory")
    sp.add_argument("--seed", type=int, help="generator seed (default 0)")
    sp.add_argument("--force", action="store_true", help="replace a non-empty output directory")
    sp.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"], help="stderr log level")
    sp.set_defaults(func=cmd_generate_synthetic)

    chan_help = "channel set: all channels common to every recording, the runtime set, or the standard set"
    sp = sub.add_parser("preprocess", help="downsample, band-pass and re-reference recordings")
    common(sp)
    sp.add_argument("--channels", default="all", choices=["all", "runtime", "standard"], help=chan_help)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("features", help="write the windowed feature table")
    common(sp)
    sp.add_argument("--channels", default="runtime", choices=["all", "runtime", "standard"], help=chan_help)
    sp.add_argument("--step-s", type=float, help="window step in seconds (default windows.train_step_s)")
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("select-channels", help="correlation table and importance-based channel ranking")
    common(sp)
    sp.set_defaults(func=cmd_select_channels)

    sp = sub.add_parser("sweep-window", help="cross-validated accuracy per window length")
    common(sp)
    sp.set_defaults(func=cmd_sweep_window)

    sp = sub.add_parser("train", help="rank features, cross-validate and fit the final model set")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a saved model set on a dataset")
    common(sp)
    sp.add_argument("--model", required=True, help="model file written by train")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("stream", help="emit one event line per window from a replayed file or a live socket")
    sp.add_argument("--model", required=True, help="model file written by train")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--listen", metavar="ADDR", help="accept one framed EEG connection on host:port")
    src.add_argument("--replay", metavar="FILE", help="wire capture or recording file to replay")
    sp.add_argument("--speed", default="max", choices=["1x", "max"], help="replay pacing (default max)")
    sp.add_argument("--cadence-s", type=float, help="seconds between events (default: the model's window length)")
    sp.add_argument("--emit", metavar="tcp://HOST:PORT", help="also publish event lines to TCP subscribers")
    sp.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"], help="stderr log level")
    sp.set_defaults(func=cmd_stream)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream closed stdout (e.g. `| head`); not an error of ours
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 0
    except ConfigError as exc:
        print(f"error: kind=config field={exc.field_path} message={json.dumps(str(exc))}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"error: kind={type(exc).__name__} message={json.dumps(str(exc))}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
