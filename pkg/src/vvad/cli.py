"""``vvad`` command line.

Every command reads an optional YAML config (``--cfg``) whose top-level
sections are ``synth``, ``pipeline``, ``model``, ``train`` and ``seed``.
Flags override file values, which override built-in defaults. Each run writes
``<name>.resolved.yaml`` and ``<name>.log`` next to its outputs.

Exit codes: 0 success, 1 invalid usage or input, 2 runtime failure.
"""

import argparse
import dataclasses
import logging
import sys
import zlib
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ValidationError

log = logging.getLogger("vvad")

COMMANDS = ("pipeline", "synth", "train", "predict", "eval", "crossval", "noise-study", "report")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def substream_seed(root, name):
    """Independent child seed for the named random stream of a run."""
    return int(np.random.SeedSequence([root, zlib.crc32(name.encode())]).generate_state(1)[0])


def _load_cfg(path):
    if path is None:
        return {}
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a mapping")
    return data


def _merge(cls, file_section, flags):
    """Build dataclass ``cls`` from defaults < file section < non-None flags."""
    names = {f.name for f in dataclasses.fields(cls)}
    file_section = file_section or {}
    unknown = set(file_section) - names
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    values = dict(file_section)
    values.update({k: v for k, v in flags.items() if v is not None and k in names})
    for k, v in values.items():
        if isinstance(v, list):
            values[k] = tuple(v)
    return cls(**values)


def _snapshot(path, command, **sections):
    data = {"command": command, "version": __version__}
    for name, value in sections.items():
        data[name] = dataclasses.asdict(value) if dataclasses.is_dataclass(value) else value
    with open(path, "w") as fh:
        yaml.safe_dump(_plain(data), fh, sort_keys=False)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _setup_logging(log_path):
    root = logging.getLogger("vvad")
    root.setLevel(logging.INFO)
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s",
                            datefmt="%Y-%m-%dT%H:%M:%S%z")
    handler = logging.FileHandler(log_path, mode="w")
    handler.setFormatter(fmt)
    root.addHandler(handler)
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(fmt)
    stream.setLevel(logging.WARNING)
    root.addHandler(stream)


def _sidecar(out, suffix):
    out = Path(out)
    return out.parent / f"{out.stem}{suffix}"


# commands


def cmd_pipeline(args, cfg):
    from .audio import EnergyVadProvider, SegmentFileProvider
    from .io import read_jsonl, write_jsonl
    from .pipeline import PipelineConfig, read_detections, run_pipeline, shot_split

    pcfg = _merge(PipelineConfig, cfg.get("pipeline"), {
        "clip_len": args.clip_len, "speech_cov": args.speech_cov, "fps": args.fps,
        "iou_threshold": args.iou_threshold, "dist_threshold": args.dist_threshold,
        "single_face_silent": args.single_face_silent or None,
    })
    pcfg.validate()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _setup_logging(_sidecar(out, ".log"))
    _snapshot(_sidecar(out, ".resolved.yaml"), "pipeline", pipeline=pcfg,
              inputs={"detections": args.detections, "vad": args.vad, "shots": args.shots})

    if Path(args.vad).is_dir():
        provider = EnergyVadProvider(args.vad)
    else:
        provider = SegmentFileProvider(args.vad)
    detections = read_detections(read_jsonl(args.detections))
    records = []
    for shot in read_jsonl(args.shots):
        vid = str(shot["video_id"])
        if "boundaries" in shot:
            boundaries = [int(b) for b in shot["boundaries"]]
            n_frames = int(shot["n_frames"])
        elif "frame_diffs" in shot:
            boundaries = shot_split(shot["frame_diffs"], float(shot.get("threshold", 0.3)))
            n_frames = int(shot.get("n_frames", len(shot["frame_diffs"]) + 1))
        else:
            raise UsageError(f"shots record for {vid} needs 'boundaries' or 'frame_diffs'")
        vcfg = dataclasses.replace(pcfg, fps=float(shot["fps"])) if "fps" in shot else pcfg
        vad = provider.segments(vid)
        clips, tracks = run_pipeline(detections.get(vid, []), vad, boundaries, n_frames, vcfg, vid)
        log.info("%s: %d tracks, %d clips", vid, len(tracks), len(clips))
        records.extend(c.to_dict() for c in clips)
    write_jsonl(out, records)
    return 0


def cmd_synth(args, cfg):
    from .datasets import write_synthetic_dataset
    from .synthetic import SynthConfig, generate

    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    section = dict(cfg.get("synth") or {})
    extras = {k: section.pop(k) for k in ("test_fraction", "flow", "flow_size", "format") if k in section}
    scfg = _merge(SynthConfig, section, {
        "n_clips": args.n, "clip_len": args.clip_len, "speak_amp": args.speak_amp,
        "speak_freq": args.speak_freq, "head_motion": args.head_motion,
        "noise_sigma": args.noise_sigma, "seed": substream_seed(seed, "synth"),
    })
    test_fraction = args.test_fraction if args.test_fraction is not None else extras.get("test_fraction", 0.2)
    flow = args.flow or extras.get("flow", False)
    flow_size = args.flow_size if args.flow_size is not None else extras.get("flow_size", 48)
    fmt = args.format or extras.get("format", "npy")
    try:
        scfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _setup_logging(out / "synth.log")
    _snapshot(out / "synth.resolved.yaml", "synth", seed=seed,
              synth={**dataclasses.asdict(scfg), "test_fraction": test_fraction, "flow": flow,
                     "flow_size": flow_size, "format": fmt})
    clips = generate(scfg)
    train_path, test_path = write_synthetic_dataset(
        out, clips, test_fraction=test_fraction, split_seed=substream_seed(seed, "split"),
        flow=flow, flow_size=flow_size, landmark_format=fmt, jobs=args.jobs,
    )
    log.info("wrote %d clips to %s and %s", len(clips), train_path, test_path)
    return 0


def _model_cfg(arch, section):
    from .models import LAND_LSTM, LandLstmConfig, OfConvNetConfig

    cls = LandLstmConfig if arch == LAND_LSTM else OfConvNetConfig
    return _merge(cls, section, {})


def _train_cfg(args, cfg, seed):
    from .training import TrainConfig

    return _merge(TrainConfig, cfg.get("train"), {
        "max_epochs": getattr(args, "max_epochs", None), "batch_size": getattr(args, "batch_size", None),
        "patience": getattr(args, "patience", None), "lr": getattr(args, "lr", None),
        "seed": substream_seed(seed, "train"),
    })


def cmd_train(args, cfg):
    from .datasets import labels_of, load_inputs, load_manifest
    from .evaluation import write_history_csv
    from .models import build_model, save_checkpoint
    from .training import train

    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    mcfg = _model_cfg(args.arch, cfg.get("model"))
    tcfg = _train_cfg(args, cfg, seed)
    mcfg.validate()
    tcfg.validate()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _setup_logging(_sidecar(out, ".log"))
    _snapshot(_sidecar(out, ".resolved.yaml"), "train", arch=args.arch, seed=seed, model=mcfg,
              train=tcfg, inputs={"manifest": args.manifest})

    records = load_manifest(args.manifest)
    inputs = load_inputs(records, args.manifest, args.arch, jobs=args.jobs)
    model = build_model(args.arch, mcfg, seed=substream_seed(seed, "init"))
    result = train(model, inputs, labels_of(records), tcfg)
    save_checkpoint(out, result.model, result.history, seed)
    write_history_csv(_sidecar(out, ".history.csv"), result.history)
    log.info("best epoch %s of %s", result.best_epoch, result.stopped_epoch)
    return 0


def cmd_predict(args, cfg):
    from .datasets import clip_id, load_inputs, load_manifest
    from .io import write_jsonl
    from .models import load_checkpoint, predict

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _setup_logging(_sidecar(out, ".log"))
    _snapshot(_sidecar(out, ".resolved.yaml"), "predict",
              inputs={"model": args.model, "manifest": args.manifest})
    model, _ = load_checkpoint(args.model)
    records = load_manifest(args.manifest)
    inputs = load_inputs(records, args.manifest, model.arch, jobs=args.jobs)
    preds = predict(model, inputs, [clip_id(r) for r in records])
    write_jsonl(out, [p.to_dict() for p in preds])
    return 0


def cmd_eval(args, cfg):
    from .datasets import load_inputs, load_manifest, samples_from
    from .evaluation import ModelPredictor, cross_dataset, holdout_eval
    from .io import write_json
    from .models import load_checkpoint

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _setup_logging(_sidecar(out, ".log"))
    _snapshot(_sidecar(out, ".resolved.yaml"), "eval",
              inputs={"model": args.model, "manifest": args.manifest,
                      "source": args.source, "target": args.target})
    model, _ = load_checkpoint(args.model)
    records = load_manifest(args.manifest)
    samples = samples_from(records, load_inputs(records, args.manifest, model.arch, jobs=args.jobs))
    predictor = ModelPredictor(model)
    if args.source or args.target:
        report = cross_dataset(predictor, samples, args.source or "source", args.target or "target")
    else:
        report = holdout_eval(predictor, samples)
    write_json(out, report.to_dict())
    log.info("acc %.4f tpr %.4f tnr %.4f", report.acc, report.tpr, report.tnr)
    return 0


def cmd_crossval(args, cfg):
    from .datasets import labels_of, load_inputs, load_manifest
    from .evaluation import crossval, write_table
    from .io import write_json

    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    mcfg = _model_cfg(args.arch, cfg.get("model"))
    tcfg = _train_cfg(args, cfg, seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _setup_logging(_sidecar(out, ".log"))
    _snapshot(_sidecar(out, ".resolved.yaml"), "crossval", arch=args.arch, seed=seed, k=args.k,
              model=mcfg, train=tcfg, inputs={"manifest": args.manifest})
    records = load_manifest(args.manifest)
    inputs = load_inputs(records, args.manifest, args.arch, jobs=args.jobs)
    report = crossval(args.arch, inputs, labels_of(records), k=args.k,
                      seed=substream_seed(seed, "folds"), train_cfg=tcfg, model_cfg=mcfg)
    write_json(out, report.to_dict())
    write_table(_sidecar(out, ".csv"), [(args.arch, report)])
    return 0


def cmd_noise_study(args, cfg):
    from .datasets import labels_of, load_inputs, load_manifest, samples_from
    from .evaluation import noise_study
    from .io import write_json
    from .synthetic import NoiseSpec

    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    mcfg = _model_cfg(args.arch, cfg.get("model"))
    tcfg = _train_cfg(args, cfg, seed)
    try:
        spec = NoiseSpec(args.flip_speaking, args.flip_silent, substream_seed(seed, "noise"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _setup_logging(_sidecar(out, ".log"))
    _snapshot(_sidecar(out, ".resolved.yaml"), "noise-study", arch=args.arch, seed=seed,
              noise=dataclasses.asdict(spec), model=mcfg, train=tcfg,
              inputs={"manifest": args.manifest, "test_manifest": args.test_manifest})
    train_recs = load_manifest(args.manifest)
    test_recs = load_manifest(args.test_manifest)
    train_inputs = load_inputs(train_recs, args.manifest, args.arch, jobs=args.jobs)
    test = samples_from(test_recs, load_inputs(test_recs, args.test_manifest, args.arch, jobs=args.jobs))
    result = noise_study(args.arch, train_inputs, labels_of(train_recs), test, spec, tcfg, mcfg)
    write_json(out, result.to_dict())
    log.info("clean acc %.4f noisy acc %.4f gap %.4f", result.clean.acc, result.noisy.acc, result.gap)
    return 0


def cmd_report(args, cfg):
    import json

    from .evaluation import EvalReport, write_table

    names = args.names or [Path(p).stem for p in args.inputs]
    if len(names) != len(args.inputs):
        raise UsageError("--names must match --inputs one to one")
    rows = []
    for name, path in zip(names, args.inputs):
        with open(path) as fh:
            data = json.load(fh)
        if "clean" in data and "noisy" in data:
            rows.append((f"{name} (clean labels)", EvalReport.from_dict(data["clean"])))
            rows.append((f"{name} (noisy labels)", EvalReport.from_dict(data["noisy"])))
        else:
            rows.append((name, EvalReport.from_dict(data)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table(out, rows)
    return 0


def build_parser():
    parser = _Parser(prog="vvad", description="Visual voice activity detection toolkit.")
    parser.add_argument("--version", action="version", version=f"vvad {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--cfg", help="YAML config file")
        p.add_argument("--jobs", type=int, default=1, help="parallel per-clip workers")
        if seed:
            p.add_argument("--seed", type=int, help="root seed of the run")

    p = sub.add_parser("pipeline", help="label face clips from detections, VAD and shots")
    common(p, seed=False)
    p.add_argument("--detections", required=True)
    p.add_argument("--vad", required=True,
                   help="VAD segment JSON lines, or a directory of <video_id>.wav for the energy detector")
    p.add_argument("--shots", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clip-len", type=int)
    p.add_argument("--speech-cov", type=float)
    p.add_argument("--fps", type=float)
    p.add_argument("--iou-threshold", type=float)
    p.add_argument("--dist-threshold", type=float)
    p.add_argument("--single-face-silent", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic labeled clip set")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--clip-len", type=int)
    p.add_argument("--speak-amp", type=float)
    p.add_argument("--speak-freq", type=float)
    p.add_argument("--head-motion", choices=["none", "rigid"])
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--flow", action="store_true", help="also write RGB flow clips")
    p.add_argument("--flow-size", type=int)
    p.add_argument("--format", choices=["npy", "csv"])

    def training_flags(p):
        p.add_argument("--arch", required=True, choices=["land-lstm", "of-convnet"])
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--lr", type=float)

    p = sub.add_parser("train", help="train a classifier on a clip manifest")
    common(p)
    training_flags(p)

    for name, helptext in (("predict", "classify the clips of a manifest"),
                           ("eval", "holdout / cross-dataset evaluation")):
        p = sub.add_parser(name, help=helptext)
        common(p, seed=False)
        p.add_argument("--model", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        if name == "eval":
            p.add_argument("--source", help="training-domain name (cross-dataset report)")
            p.add_argument("--target", help="test-domain name (cross-dataset report)")

    p = sub.add_parser("crossval", help="stratified k-fold cross-validation")
    common(p)
    training_flags(p)
    p.add_argument("--k", type=int, default=5)

    p = sub.add_parser("noise-study", help="clean- vs noisy-label training on a clean test set")
    common(p)
    training_flags(p)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--flip-speaking", type=float, default=0.12)
    p.add_argument("--flip-silent", type=float, default=0.086)

    p = sub.add_parser("report", help="tabulate report JSON files as CSV")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--names", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--cfg", help=argparse.SUPPRESS)
    return parser


HANDLERS = {
    "pipeline": cmd_pipeline, "synth": cmd_synth, "train": cmd_train, "predict": cmd_predict,
    "eval": cmd_eval, "crossval": cmd_crossval, "noise-study": cmd_noise_study, "report": cmd_report,
}


def dispatch(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("vvad: error: a command is required", file=sys.stderr)
        return 1
    try:
        cfg = _load_cfg(args.cfg)
        return HANDLERS[args.command](args, cfg)
    except (ValidationError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"vvad {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("run failed")
        print(f"vvad {args.command}: failed: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
