"""Clip manifests on disk and the model inputs they point to.

A clip manifest is JSON lines with the keys ``source_id, track_id, start,
end, label, boxes, provenance`` and, for clips with extracted features,
``clip_id``, ``landmarks`` and ``flow`` paths relative to the manifest.
"""

from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import train_test_split

from .errors import ValidationError
from .evaluation import Sample
from .io import load_landmarks, read_jsonl, save_landmarks, write_jsonl
from .models import LAND_LSTM, prepare_landmarks
from .pipeline import LabeledClip
from .synthetic import SPEAKING, flow_clip

LABELS = {"speaking": 1, "silent": 0}
LABEL_NAMES = {1: "speaking", 0: "silent"}


def clip_id(rec):
    return rec.get("clip_id") or f"{rec['source_id']}:{rec['track_id']}:{rec['start']}-{rec['end']}"


def load_manifest(path):
    records = read_jsonl(path)
    for rec in records:
        if rec.get("label") not in LABELS:
            raise ValidationError(f"{path}: bad label {rec.get('label')!r} in {clip_id(rec)}")
    return records


def labels_of(records):
    return np.array([LABELS[r["label"]] for r in records], dtype=np.int64)


def _land_input(path):
    return prepare_landmarks(load_landmarks(path))


def load_inputs(records, manifest_path, arch, jobs=1):
    """Model inputs for each record: frontal landmark vectors or flow images."""
    root = Path(manifest_path).parent
    key = "landmarks" if arch == LAND_LSTM else "flow"
    missing = [clip_id(r) for r in records if key not in r]
    if missing:
        raise ValidationError(f"{len(missing)} clip(s) lack a '{key}' file, e.g. {missing[0]}")
    paths = [root / r[key] for r in records]
    if arch == LAND_LSTM:
        if jobs > 1:
            return Parallel(n_jobs=jobs)(delayed(_land_input)(p) for p in paths)
        return [_land_input(p) for p in paths]
    return [np.load(p) for p in paths]


def samples_from(records, inputs):
    return [Sample(clip_id(r), LABELS[r["label"]], r.get("provenance", "auto"), x)
            for r, x in zip(records, inputs)]


def write_synthetic_dataset(out_dir, clips, test_fraction=0.2, split_seed=0, flow=False,
                            flow_size=48, landmark_format="npy", jobs=1):
    """Write landmark (and optionally flow) files plus ``train.jsonl`` / ``test.jsonl``.

    Test clips are marked ``provenance=manual``: synthetic labels are exact,
    playing the role of the hand-checked test split.
    """
    out_dir = Path(out_dir)
    labels = np.array([c.label for c in clips])
    idx = np.arange(len(clips))
    if test_fraction > 0:
        _, test_idx = train_test_split(idx, test_size=test_fraction, stratify=labels,
                                       random_state=split_seed)
        test_set = set(test_idx.tolist())
    else:
        test_set = set()

    if flow:
        if jobs > 1:
            flows = Parallel(n_jobs=jobs)(delayed(flow_clip)(c.geometry, flow_size) for c in clips)
        else:
            flows = [flow_clip(c.geometry, flow_size) for c in clips]

    train_recs, test_recs = [], []
    for i, c in enumerate(clips):
        lm_rel = f"landmarks/{c.clip_id}.{landmark_format}"
        save_landmarks(out_dir / lm_rel, c.landmarks)
        extra = {"clip_id": c.clip_id, "landmarks": lm_rel, "frame_rate": c.frame_rate}
        if flow:
            flow_rel = f"flow/{c.clip_id}.npy"
            (out_dir / "flow").mkdir(parents=True, exist_ok=True)
            np.save(out_dir / flow_rel, flows[i])
            extra["flow"] = flow_rel
        rec = LabeledClip(
            source_id=c.clip_id, track_id=0, start=0, end=len(c.landmarks),
            label="speaking" if c.label == SPEAKING else "silent", boxes=[],
            provenance="manual" if i in test_set else "auto", extra=extra,
        ).to_dict()
        (test_recs if i in test_set else train_recs).append(rec)
    write_jsonl(out_dir / "train.jsonl", train_recs)
    write_jsonl(out_dir / "test.jsonl", test_recs)
    return out_dir / "train.jsonl", out_dir / "test.jsonl"
