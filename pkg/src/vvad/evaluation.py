"""Metrics, cross-validation, holdout and cross-dataset protocols, label-noise study."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .errors import EmptyClass, ProvenanceViolation, TooFewSamples
from .models import SPEAKING, build_model, predict
from .synthetic import NoiseSpec, inject_label_noise
from .training import TrainConfig, train

METRICS = ("tpr", "tnr", "acc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fn: int
    tn: int
    fp: int

    @classmethod
    def from_labels(cls, y_true, y_pred):
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        pos = y_true == SPEAKING
        return cls(
            tp=int(np.sum(pos & (y_pred == SPEAKING))),
            fn=int(np.sum(pos & (y_pred != SPEAKING))),
            tn=int(np.sum(~pos & (y_pred != SPEAKING))),
            fp=int(np.sum(~pos & (y_pred == SPEAKING))),
        )

    @property
    def positives(self):
        return self.tp + self.fn

    @property
    def negatives(self):
        return self.tn + self.fp


@dataclass
class EvalReport:
    tpr: float
    tnr: float
    acc: float
    counts: ConfusionCounts | None = None
    per_fold: list = field(default_factory=list)
    mean: dict | None = None
    sigma: dict | None = None
    tags: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"tpr": self.tpr, "tnr": self.tnr, "acc": self.acc}
        if self.counts is not None:
            c = self.counts
            out["counts"] = {"tp": c.tp, "fn": c.fn, "tn": c.tn, "fp": c.fp}
        if self.per_fold:
            out["per_fold"] = [r.to_dict() for r in self.per_fold]
        if self.mean is not None:
            out["mean"] = {k: self.mean[k] for k in METRICS}
            out["sigma"] = {k: self.sigma[k] for k in METRICS}
        if self.tags:
            out["tags"] = dict(self.tags)
        return out

    @classmethod
    def from_dict(cls, d):
        counts = ConfusionCounts(**d["counts"]) if "counts" in d else None
        return cls(
            tpr=d["tpr"], tnr=d["tnr"], acc=d["acc"], counts=counts,
            per_fold=[cls.from_dict(r) for r in d.get("per_fold", [])],
            mean=d.get("mean"), sigma=d.get("sigma"), tags=d.get("tags", {}),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def metrics(counts):
    """TPR over speaking clips, TNR over silent clips, overall accuracy."""
    if counts.positives == 0 or counts.negatives == 0:
        raise EmptyClass("both classes need at least one sample")
    total = counts.positives + counts.negatives
    return EvalReport(
        tpr=counts.tp / counts.positives,
        tnr=counts.tn / counts.negatives,
        acc=(counts.tp + counts.tn) / total,
        counts=counts,
    )


def kfold(labels, k=5, seed=0):
    """Stratified, shuffled ``(train_idx, test_idx)`` splits."""
    labels = np.asarray(labels)
    _, per_class = np.unique(labels, return_counts=True)
    if len(per_class) < 2 or per_class.min() < k:
        raise TooFewSamples(f"{k}-fold split needs at least {k} clips per class")
    skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return [(np.sort(tr), np.sort(te)) for tr, te in skf.split(np.zeros(len(labels)), labels)]


def aggregate(reports):
    """Fold reports to mean and sample (n - 1) standard deviation per metric."""
    values = {m: np.array([getattr(r, m) for r in reports]) for m in METRICS}
    ddof = 1 if len(reports) > 1 else 0
    mean = {m: float(values[m].mean()) for m in METRICS}
    sigma = {m: float(values[m].std(ddof=ddof)) for m in METRICS}
    return EvalReport(mean["tpr"], mean["tnr"], mean["acc"], per_fold=list(reports),
                      mean=mean, sigma=sigma)


@dataclass
class Sample:
    """One evaluation clip: integer label, provenance and the model input."""

    clip_id: str
    label: int
    provenance: str = "manual"
    data: object = None


def _predict_labels(predictor, samples):
    if hasattr(predictor, "predict_samples"):
        return np.asarray(predictor.predict_samples(samples))
    return np.asarray(predictor(samples))


def holdout_eval(predictor, samples):
    """Evaluate on a manually verified test split.

    ``predictor`` is a callable (or has ``predict_samples``) mapping a list of
    :class:`Sample` to integer labels.
    """
    samples = list(samples)
    if not samples:
        raise TooFewSamples("empty test set")
    auto = [s.clip_id for s in samples if s.provenance != "manual"]
    if auto:
        raise ProvenanceViolation(f"{len(auto)} test clip(s) are not manually labeled, e.g. {auto[0]}")
    y_true = np.array([s.label for s in samples])
    y_pred = _predict_labels(predictor, samples)
    return metrics(ConfusionCounts.from_labels(y_true, y_pred))


def cross_dataset(predictor, samples, source="A", target="B"):
    report = holdout_eval(predictor, samples)
    report.tags = {"source": source, "target": target}
    return report


class ModelPredictor:
    """Adapts a trained network to the predictor interface."""

    def __init__(self, model, batch_size=64):
        self.model = model
        self.batch_size = batch_size

    def predict_samples(self, samples):
        preds = predict(self.model, [s.data for s in samples], [s.clip_id for s in samples],
                        batch_size=self.batch_size)
        return [p.label for p in preds]


def constant_state_subsequences(frame_labels, length=50):
    """Non-overlapping ``length``-frame windows inside runs of constant state.

    Returns ``(start, end, state)`` triples; each run contributes
    ``floor(run_length / length)`` windows from its start.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    out = []
    start = 0
    n = len(frame_labels)
    for i in range(1, n + 1):
        if i == n or frame_labels[i] != frame_labels[start]:
            for a in range(start, i - length + 1, length):
                out.append((a, a + length, frame_labels[start]))
            start = i
    return out


def train_and_evaluate(arch, train_inputs, train_labels, test_samples, train_cfg=None,
                       model_cfg=None):
    train_cfg = train_cfg or TrainConfig()
    model = build_model(arch, model_cfg, seed=train_cfg.seed)
    result = train(model, train_inputs, train_labels, train_cfg)
    return holdout_eval(ModelPredictor(result.model), test_samples), result


def crossval(arch, inputs, labels, k=5, seed=0, train_cfg=None, model_cfg=None):
    """Train and test on each stratified fold; returns the aggregated report."""
    labels = np.asarray(labels)
    reports = []
    for tr, te in kfold(labels, k, seed):
        test = [Sample(str(i), int(labels[i]), "manual", inputs[i]) for i in te]
        report, _ = train_and_evaluate(arch, [inputs[i] for i in tr], labels[tr], test,
                                       train_cfg, model_cfg)
        reports.append(report)
    return aggregate(reports)


@dataclass
class NoiseStudyResult:
    clean: EvalReport
    noisy: EvalReport
    flipped: int

    @property
    def gap(self):
        return self.clean.acc - self.noisy.acc

    def to_dict(self):
        return {"clean": self.clean.to_dict(), "noisy": self.noisy.to_dict(),
                "flipped": self.flipped, "gap": self.gap}


def noise_study(arch, train_inputs, train_labels, test_samples, spec=None, train_cfg=None,
                model_cfg=None):
    """Train on clean labels and on labels with injected noise, test both on clean data.

    Both runs share seeds and splits; only the training labels differ.
    """
    spec = spec or NoiseSpec()
    train_labels = np.asarray(train_labels)
    noisy_labels, mask = inject_label_noise(train_labels, spec)
    clean, _ = train_and_evaluate(arch, train_inputs, train_labels, test_samples, train_cfg, model_cfg)
    noisy, _ = train_and_evaluate(arch, train_inputs, noisy_labels, test_samples, train_cfg, model_cfg)
    return NoiseStudyResult(clean, noisy, int(mask.sum()))


def write_table(path, rows):
    """CSV in the layout ``Method, TPR, TNR, ACC`` with ``value ± sigma`` percentages."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["Method", "TPR", "TNR", "ACC"])
        for name, report in rows:
            cells = []
            for m in METRICS:
                value = getattr(report, m)
                if report.sigma is not None:
                    cells.append(f"{100 * value:.2f} ± {100 * report.sigma[m]:.2f}%")
                else:
                    cells.append(f"{100 * value:.2f}%")
            writer.writerow([name] + cells)


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for h in history:
            writer.writerow([h["epoch"], repr(h["train_loss"]), repr(h["val_loss"]), repr(h["val_acc"])])

