"""Adam training with a stratified validation split and patience-based early stopping."""

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.model_selection import train_test_split

from .errors import SingleClassDataset, ValidationError
from .models import LAND_LSTM, flow_images_to_tensor, pad_sequences

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 64
    val_fraction: float = 0.20
    patience: int = 7
    max_epochs: int = 30
    seed: int = 0

    def validate(self):
        if self.optimizer != "adam":
            raise ValidationError("only the adam optimizer is supported")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValidationError("batch_size, patience and max_epochs must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ValidationError("val_fraction must lie in (0, 1)")


class EarlyStopping:
    """Tracks the best validation loss and its weights.

    ``step`` returns True once ``patience`` consecutive epochs have passed
    without a strictly lower loss.
    """

    def __init__(self, patience=7):
        self.patience = patience
        self.best_loss = float("inf")
        self.best_epoch = None
        self.best_state = None
        self.bad_epochs = 0

    def step(self, epoch, loss, model=None):
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            if model is not None:
                self.best_state = copy.deepcopy(model.state_dict())
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    def restore(self, model):
        if self.best_state is not None:
            model.load_state_dict(self.best_state)


@dataclass
class TrainResult:
    model: torch.nn.Module
    history: list = field(default_factory=list)
    best_epoch: int | None = None
    stopped_epoch: int | None = None


def split_validation(labels, fraction, seed):
    """Stratified, seeded ``(train_idx, val_idx)`` over clip indices."""
    idx = np.arange(len(labels))
    tr, va = train_test_split(idx, test_size=fraction, stratify=labels, random_state=seed)
    return np.sort(tr), np.sort(va)


def _clip_batches(inputs, labels, idx, batch_size, gen):
    order = idx[torch.randperm(len(idx), generator=gen).numpy()] if gen is not None else idx
    for i in range(0, len(order), batch_size):
        sel = order[i:i + batch_size]
        x, lengths = pad_sequences([inputs[j] for j in sel])
        yield (x, lengths), torch.as_tensor(labels[sel], dtype=torch.int64)


def _frame_table(inputs, labels, idx):
    clip_of = np.concatenate([np.full(len(inputs[j]), j) for j in idx])
    frame_of = np.concatenate([np.arange(len(inputs[j])) for j in idx])
    return clip_of, frame_of, labels[clip_of]


def _frame_batches(inputs, table, batch_size, input_size, gen):
    clip_of, frame_of, y = table
    order = torch.randperm(len(y), generator=gen).numpy() if gen is not None else np.arange(len(y))
    for i in range(0, len(order), batch_size):
        sel = order[i:i + batch_size]
        frames = np.stack([inputs[clip_of[k]][frame_of[k]] for k in sel])
        yield flow_images_to_tensor(frames, input_size), torch.as_tensor(y[sel], dtype=torch.int64)


def _forward(model, x):
    return model(*x) if model.arch == LAND_LSTM else model(x)


@torch.no_grad()
def recompute_bn_stats(model, batches):
    """Replace running batch-norm statistics with exact averages over ``batches``.

    Exponential running averages lag behind fast-changing weights; when a
    feature's variance collapses the lag alone can flip every eval-mode
    prediction. Only trainable batch-norm layers are touched.
    """
    layers = [m for m in model.modules()
              if isinstance(m, torch.nn.modules.batchnorm._BatchNorm)
              and any(p.requires_grad for p in m.parameters())]
    if not layers:
        return
    saved = [m.momentum for m in layers]
    for m in layers:
        m.reset_running_stats()
        m.momentum = None  # cumulative average
    model.train()
    for x, _ in batches:
        _forward(model, x)
    for m, momentum in zip(layers, saved):
        m.momentum = momentum


def train(model, inputs, labels, cfg=None, on_epoch=None):
    """Fit ``model`` on clip ``inputs`` with integer ``labels``.

    Land-LSTM minimizes cross-entropy per clip; OF-ConvNet per frame, every
    frame inheriting its clip's label. Batch-norm statistics are recomputed
    on the training split after every epoch. The best-validation-loss weights
    are restored before returning.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise SingleClassDataset("training data holds a single class")

    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    tr_idx, va_idx = split_validation(labels, cfg.val_fraction, cfg.seed)
    per_frame = model.arch != LAND_LSTM
    if per_frame:
        size = model.cfg.input_size
        tr_table = _frame_table(inputs, labels, tr_idx)
        va_table = _frame_table(inputs, labels, va_idx)

        def train_batches():
            return _frame_batches(inputs, tr_table, cfg.batch_size, size, gen)

        def val_batches():
            return _frame_batches(inputs, va_table, cfg.batch_size, size, None)

        def stat_batches():
            return _frame_batches(inputs, tr_table, cfg.batch_size, size, None)
    else:
        def train_batches():
            return _clip_batches(inputs, labels, tr_idx, cfg.batch_size, gen)

        def val_batches():
            return _clip_batches(inputs, labels, va_idx, cfg.batch_size, None)

        def stat_batches():
            return _clip_batches(inputs, labels, tr_idx, cfg.batch_size, None)

    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr)
    stopper = EarlyStopping(cfg.patience)
    result = TrainResult(model)

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        total, count = 0.0, 0
        for x, y in train_batches():
            opt.zero_grad()
            loss = F.cross_entropy(_forward(model, x), y)
            loss.backward()
            opt.step()
            total += loss.item() * len(y)
            count += len(y)
        train_loss = total / count
        recompute_bn_stats(model, stat_batches())

        model.eval()
        total, correct, count = 0.0, 0, 0
        with torch.no_grad():
            for x, y in val_batches():
                logits = _forward(model, x)
                total += F.cross_entropy(logits, y, reduction="sum").item()
                correct += int((logits.argmax(1) == y).sum())
                count += len(y)
        val_loss = total / count
        entry = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "val_acc": correct / count}
        result.history.append(entry)
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f",
                 epoch, train_loss, val_loss, entry["val_acc"])
        if on_epoch is not None:
            on_epoch(entry)
        stop = stopper.step(epoch, val_loss, model)
        result.stopped_epoch = epoch
        if stop:
            break

    stopper.restore(model)
    model.eval()
    result.best_epoch = stopper.best_epoch
    return result
