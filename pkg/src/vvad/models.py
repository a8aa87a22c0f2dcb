"""Land-LSTM and OF-ConvNet classifiers, frame voting and checkpoints."""

import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .errors import BackboneUnavailable, EmptyInput, ShapeMismatch, ValidationError
from .landmarks import flatten, frontalize, load_mean_face

SPEAKING = 1
SILENT = 0

LAND_LSTM = "land-lstm"
OF_CONVNET = "of-convnet"

VGG16_WEIGHT_FILES = ("vgg16_features.pth", "vgg16-397923af.pth")
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class LandLstmConfig:
    input_dim: int = 204
    lstm_layers: int = 2
    hidden_units: int = 128
    fc_units: int = 64
    dropout: float = 0.2
    classes: int = 2

    def validate(self):
        for name in ("input_dim", "lstm_layers", "hidden_units", "fc_units", "classes"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if not 0 <= self.dropout < 1:
            raise ValidationError("dropout must lie in [0, 1)")


class LandLSTM(nn.Module):
    """Stacked bidirectional LSTMs with batch norm in between, a time-shared
    ReLU projection, masked mean pooling over time and a linear head.

    Padding never reaches any layer: sequences are packed, batch norm and the
    projection act on the packed (valid) steps only.
    """

    arch = LAND_LSTM

    def __init__(self, cfg=None):
        super().__init__()
        self.cfg = cfg or LandLstmConfig()
        self.cfg.validate()
        c = self.cfg
        dims = [c.input_dim] + [2 * c.hidden_units] * c.lstm_layers
        self.lstms = nn.ModuleList(
            nn.LSTM(dims[i], c.hidden_units, batch_first=True, bidirectional=True)
            for i in range(c.lstm_layers)
        )
        self.norms = nn.ModuleList(nn.BatchNorm1d(2 * c.hidden_units) for _ in range(c.lstm_layers - 1))
        self.fc = nn.Linear(2 * c.hidden_units, c.fc_units)
        self.dropout = nn.Dropout(c.dropout)
        self.head = nn.Linear(c.fc_units, c.classes)

    def forward(self, x, lengths):
        if x.dim() != 3 or x.shape[2] != self.cfg.input_dim:
            raise ShapeMismatch(f"expected (batch, time, {self.cfg.input_dim}), got {tuple(x.shape)}")
        lengths = torch.as_tensor(lengths, dtype=torch.int64).cpu()
        if len(lengths) != x.shape[0] or lengths.min() < 1 or lengths.max() > x.shape[1]:
            raise ShapeMismatch("lengths do not match the padded batch")
        packed = pack_padded_sequence(x, lengths, batch_first=True, enforce_sorted=False)
        for i, lstm in enumerate(self.lstms):
            packed, _ = lstm(packed)
            if i < len(self.norms):
                packed = packed._replace(data=self.norms[i](packed.data))
        packed = packed._replace(data=self.dropout(F.relu(self.fc(packed.data))))
        steps, _ = pad_packed_sequence(packed, batch_first=True)
        pooled = steps.sum(dim=1) / lengths.to(steps.dtype).unsqueeze(1)
        return self.head(pooled)


@dataclass
class OfConvNetConfig:
    backbone: str = "tiny-cnn"
    finetune_blocks: int | None = None  # None: 2 for vgg16, all for tiny-cnn
    input_size: int = 48
    classes: int = 2
    tiny_blocks: int = 4
    tiny_width: int = 16

    @property
    def n_blocks(self):
        return 5 if self.backbone == "vgg16-pretrained" else self.tiny_blocks

    @property
    def trainable_blocks(self):
        if self.finetune_blocks is not None:
            return self.finetune_blocks
        return 2 if self.backbone == "vgg16-pretrained" else self.n_blocks

    def validate(self):
        if self.backbone not in ("vgg16-pretrained", "tiny-cnn"):
            raise ValidationError(f"unknown backbone {self.backbone!r}")
        n = self.n_blocks
        if self.finetune_blocks is not None and not 0 <= self.finetune_blocks <= n:
            raise ValidationError(f"finetune_blocks must lie in [0, {n}]")
        if self.input_size < 2 ** n and self.backbone == "tiny-cnn":
            raise ValidationError("input_size too small for the number of pooling blocks")


def _tiny_blocks(cfg):
    blocks = []
    c_in = 3
    for i in range(cfg.tiny_blocks):
        c_out = cfg.tiny_width * 2 ** min(i, 3)
        blocks.append(nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
            nn.Conv2d(c_out, c_out, 3, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
        ))
        c_in = c_out
    return blocks, c_in


def find_vgg16_weights():
    cache = os.environ.get("VVAD_CACHE")
    if cache:
        for name in VGG16_WEIGHT_FILES:
            p = Path(cache) / name
            if p.exists():
                return p
    return None


def _vgg16_blocks(load_weights=True):
    from torchvision.models import vgg16

    features = vgg16(weights=None).features
    if load_weights:
        path = find_vgg16_weights()
        if path is None:
            raise BackboneUnavailable(
                "VGG-16 weights not found; put vgg16-397923af.pth under $VVAD_CACHE "
                "or use backbone='tiny-cnn'"
            )
        state = torch.load(path, map_location="cpu", weights_only=True)
        state = {k.removeprefix("features."): v for k, v in state.items()
                 if not k.startswith("classifier.")}
        features.load_state_dict(state)
    blocks, current = [], []
    for layer in features:
        current.append(layer)
        if isinstance(layer, nn.MaxPool2d):
            blocks.append(nn.Sequential(*current))
            current = []
    return blocks, 512


class OFConvNet(nn.Module):
    """Frame-wise classifier over RGB-encoded flow: conv blocks, global average pool, linear head."""

    arch = OF_CONVNET

    def __init__(self, cfg=None, load_pretrained=True):
        super().__init__()
        self.cfg = cfg or OfConvNetConfig()
        self.cfg.validate()
        if self.cfg.backbone == "vgg16-pretrained":
            blocks, channels = _vgg16_blocks(load_pretrained)
            mean, std = IMAGENET_MEAN, IMAGENET_STD
        else:
            blocks, channels = _tiny_blocks(self.cfg)
            mean, std = (0.5, 0.5, 0.5), (0.5, 0.5, 0.5)
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Linear(channels, self.cfg.classes)
        self.register_buffer("mean", torch.tensor(mean).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(std).view(1, 3, 1, 1))
        frozen = len(self.blocks) - self.cfg.trainable_blocks
        for block in self.blocks[:frozen]:
            block.requires_grad_(False)

    def forward(self, images):
        """``images``: ``(N, 3, H, W)`` floats in [0, 1]."""
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeMismatch(f"expected (N, 3, H, W), got {tuple(images.shape)}")
        x = (images - self.mean) / self.std
        for block in self.blocks:
            x = block(x)
        return self.head(x.mean(dim=(2, 3)))


def flow_images_to_tensor(images, input_size=None, dtype=torch.float32):
    """``(N, H, W, 3)`` uint8 flow images to ``(N, 3, S, S)`` floats in [0, 1]."""
    t = torch.as_tensor(np.ascontiguousarray(images)).permute(0, 3, 1, 2).to(dtype) / 255.0
    if input_size is not None and t.shape[-2:] != (input_size, input_size):
        t = F.interpolate(t, size=(input_size, input_size), mode="bilinear", align_corners=False)
    return t


def build_model(arch, cfg=None, seed=0):
    torch.manual_seed(seed)
    if arch == LAND_LSTM:
        return LandLSTM(cfg)
    if arch == OF_CONVNET:
        return OFConvNet(cfg)
    raise ValidationError(f"unknown architecture {arch!r}")


def pad_sequences(seqs, dtype=torch.float32):
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.int64)
    out = torch.zeros(len(seqs), int(lengths.max()), seqs[0].shape[1], dtype=dtype)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = torch.as_tensor(s, dtype=dtype)
    return out, lengths


def prepare_landmarks(seq, template=None):
    """Raw ``(T, 68, 3)`` landmarks to the ``(T, 204)`` frontal input vectors."""
    template = load_mean_face() if template is None else template
    return flatten(frontalize(seq, template)).astype(np.float32)


def vote(per_frame, mode="majority", scores=None):
    """Clip label from frame labels; ties go to silent.

    ``mode="mean"`` thresholds the mean speaking score at 0.5 instead.
    """
    per_frame = list(per_frame)
    if not per_frame:
        raise EmptyInput("no frame decisions to vote on")
    if mode == "majority":
        speaking = sum(1 for p in per_frame if p == SPEAKING)
        return SPEAKING if 2 * speaking > len(per_frame) else SILENT
    if mode == "mean":
        if scores is None:
            raise ValidationError("mean voting needs frame scores")
        return SPEAKING if float(np.mean(scores)) > 0.5 else SILENT
    raise ValidationError(f"unknown vote mode {mode!r}")


@dataclass
class Prediction:
    clip_id: str
    label: int
    score: float
    per_frame: list | None = None

    def to_dict(self):
        rec = {"clip_id": self.clip_id, "label": "speaking" if self.label == SPEAKING else "silent",
               "score": self.score}
        if self.per_frame is not None:
            rec["per_frame"] = ["speaking" if p == SPEAKING else "silent" for p in self.per_frame]
        return rec


@torch.no_grad()
def predict(model, inputs, clip_ids=None, batch_size=64, vote_mode="majority"):
    """Clip predictions; OF-ConvNet classifies every frame and votes."""
    model.eval()
    clip_ids = clip_ids or [str(i) for i in range(len(inputs))]
    preds = []
    if model.arch == LAND_LSTM:
        for i in range(0, len(inputs), batch_size):
            x, lengths = pad_sequences(inputs[i:i + batch_size])
            probs = torch.softmax(model(x, lengths), dim=1)[:, SPEAKING].numpy()
            for cid, p in zip(clip_ids[i:i + batch_size], probs):
                preds.append(Prediction(cid, SPEAKING if p > 0.5 else SILENT, float(p)))
    else:
        for cid, frames in zip(clip_ids, inputs):
            x = flow_images_to_tensor(frames, model.cfg.input_size)
            probs = torch.cat([
                torch.softmax(model(x[j:j + batch_size]), dim=1)[:, SPEAKING]
                for j in range(0, len(x), batch_size)
            ]).numpy()
            frame_labels = [SPEAKING if p > 0.5 else SILENT for p in probs]
            label = vote(frame_labels, vote_mode, probs)
            preds.append(Prediction(cid, label, float(probs.mean()), frame_labels))
    return preds


def save_checkpoint(path, model, history=None, seed=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "arch": model.arch,
        "config": asdict(model.cfg),
        "weights": model.state_dict(),
        "history": history or [],
        "seed": seed,
    }, path)


def load_checkpoint(path):
    """Returns ``(model, checkpoint_dict)`` with the model in eval mode."""
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    if ckpt["arch"] == LAND_LSTM:
        model = LandLSTM(LandLstmConfig(**ckpt["config"]))
    elif ckpt["arch"] == OF_CONVNET:
        # The checkpoint carries every weight, pretrained ones included.
        model = OFConvNet(OfConvNetConfig(**ckpt["config"]), load_pretrained=False)
    else:
        raise ValidationError(f"unknown architecture {ckpt['arch']!r}")
    model.load_state_dict(ckpt["weights"])
    model.eval()
    return model, ckpt
