import itertools

import numpy as np
import pytest
import torch

from vvad.errors import BackboneUnavailable, EmptyInput, ShapeMismatch, ValidationError
from vvad.models import (
    LAND_LSTM,
    OF_CONVNET,
    SILENT,
    SPEAKING,
    LandLSTM,
    LandLstmConfig,
    OFConvNet,
    OfConvNetConfig,
    build_model,
    load_checkpoint,
    pad_sequences,
    predict,
    prepare_landmarks,
    save_checkpoint,
    vote,
)
from vvad.synthetic import SynthConfig, synthesize_clip


def small_lstm(**kw):
    cfg = LandLstmConfig(input_dim=6, hidden_units=5, fc_units=4, dropout=0.0, **kw)
    torch.manual_seed(0)
    return LandLSTM(cfg)


def small_cnn():
    torch.manual_seed(0)
    return OFConvNet(OfConvNetConfig(input_size=8, tiny_blocks=2, tiny_width=3))


def check_gradients(model, loss_fn, n_params=40, eps=1e-6, rtol=1e-3, seed=0):
    """Central finite differences against autograd on random parameter entries."""
    model.double()
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad()
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    checked = 0
    for _ in range(n_params):
        p = params[rng.integers(len(params))]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        analytic = p.grad[idx].item()
        with torch.no_grad():
            orig = p[idx].item()
            p[idx] = orig + eps
            up = loss_fn().item()
            p[idx] = orig - eps
            down = loss_fn().item()
            p[idx] = orig
        numeric = (up - down) / (2 * eps)
        assert abs(analytic - numeric) <= rtol * max(abs(analytic), abs(numeric)) + 1e-8, (
            p.shape, idx, analytic, numeric)
        checked += 1
    return checked


def test_land_lstm_gradients():
    model = small_lstm()
    model.train()
    g = torch.Generator().manual_seed(1)
    x = torch.randn(3, 7, 6, generator=g, dtype=torch.float64)
    lengths = torch.tensor([7, 4, 6])
    y = torch.tensor([1, 0, 1])
    model.double()
    assert check_gradients(model, lambda: torch.nn.functional.cross_entropy(model(x, lengths), y)) == 40


def test_tiny_cnn_gradients():
    model = small_cnn()
    model.train()
    g = torch.Generator().manual_seed(2)
    x = torch.rand(4, 3, 8, 8, generator=g, dtype=torch.float64)
    y = torch.tensor([1, 0, 1, 0])
    model.double()
    assert check_gradients(model, lambda: torch.nn.functional.cross_entropy(model(x), y)) == 40


def test_padding_invariance():
    model = small_lstm()
    model.eval()
    g = torch.Generator().manual_seed(3)
    a, b = torch.randn(5, 6, generator=g), torch.randn(9, 6, generator=g)
    x, lengths = pad_sequences([a, b])
    longer = torch.randn(2, 20, 6, generator=g) * 100
    longer[0, :5], longer[1, :9] = a, b
    assert torch.equal(model(x, lengths), model(longer, lengths))


def test_softmax_rows_sum_to_one():
    model = small_lstm()
    model.eval()
    x, lengths = pad_sequences([torch.randn(4, 6), torch.randn(6, 6)])
    probs = torch.softmax(model(x, lengths), dim=1)
    torch.testing.assert_close(probs.sum(1), torch.ones(2), atol=1e-6, rtol=0)


def test_lstm_shape_errors():
    model = small_lstm()
    with pytest.raises(ShapeMismatch):
        model(torch.zeros(2, 5, 7), torch.tensor([5, 5]))
    with pytest.raises(ShapeMismatch):
        model(torch.zeros(2, 5, 6), torch.tensor([5, 6]))


def test_default_architecture_sizes():
    model = LandLSTM()
    assert [m.hidden_size for m in model.lstms] == [128, 128]
    assert all(m.bidirectional for m in model.lstms)
    assert model.fc.out_features == 64
    cnn = OFConvNet()
    assert len(cnn.blocks) == 4


def test_tiny_cnn_partial_freeze():
    torch.manual_seed(0)
    model = OFConvNet(OfConvNetConfig(input_size=16, tiny_blocks=3, tiny_width=4, finetune_blocks=1))
    before = [p.detach().clone() for p in model.parameters()]
    opt = torch.optim.SGD([p for p in model.parameters() if p.requires_grad], lr=0.1)
    loss = torch.nn.functional.cross_entropy(model(torch.rand(4, 3, 16, 16)), torch.tensor([0, 1, 0, 1]))
    loss.backward()
    opt.step()
    changed = [not torch.equal(a, b) for a, b in zip(before, model.parameters())]
    frozen = sum(1 for _ in model.blocks[:2].parameters())
    assert not any(changed[:frozen])
    assert any(changed[frozen:])


def test_vgg16_freezes_all_but_last_two_blocks():
    model = OFConvNet(OfConvNetConfig(backbone="vgg16-pretrained", input_size=32), load_pretrained=False)
    assert len(model.blocks) == 5
    trainable = [any(p.requires_grad for p in b.parameters()) for b in model.blocks]
    assert trainable == [False, False, False, True, True]
    assert model(torch.rand(1, 3, 32, 32)).shape == (1, 2)


def test_vgg16_without_weights_is_reported(monkeypatch, tmp_path):
    monkeypatch.setenv("VVAD_CACHE", str(tmp_path))
    with pytest.raises(BackboneUnavailable):
        OFConvNet(OfConvNetConfig(backbone="vgg16-pretrained"))


def test_config_validation():
    with pytest.raises(ValidationError):
        OfConvNetConfig(backbone="resnet").validate()
    with pytest.raises(ValidationError):
        OfConvNetConfig(finetune_blocks=9).validate()
    with pytest.raises(ValidationError):
        LandLstmConfig(dropout=1.0).validate()
    with pytest.raises(ValidationError):
        build_model("svm")


def counting_vote(frames):
    return SPEAKING if frames.count(SPEAKING) > frames.count(SILENT) else SILENT


def test_vote_exhaustive_three_frames():
    cases = list(itertools.product([SILENT, SPEAKING], repeat=3))
    assert len(cases) == 8
    for frames in cases:
        assert vote(frames) == counting_vote(list(frames))
        assert vote(frames[::-1]) == vote(frames)


def test_vote_examples():
    assert vote([SPEAKING, SPEAKING, SILENT]) == SPEAKING
    assert vote([SILENT] * 5) == SILENT
    assert vote([SPEAKING, SILENT]) == SILENT
    assert vote([SPEAKING, SILENT], mode="mean", scores=[0.9, 0.4]) == SPEAKING
    with pytest.raises(EmptyInput):
        vote([])
    with pytest.raises(ValidationError):
        vote([SPEAKING], mode="median")


def test_prepare_landmarks_shape():
    clip = synthesize_clip(SynthConfig(n_clips=2, clip_len=12), 0, SPEAKING)
    x = prepare_landmarks(clip.landmarks)
    assert x.shape == (12, 204) and x.dtype == np.float32


def test_predict_and_checkpoint_roundtrip(tmp_path):
    model = build_model(LAND_LSTM, LandLstmConfig(hidden_units=8, fc_units=4), seed=3)
    inputs = [np.random.default_rng(i).normal(size=(10 + i, 204)).astype(np.float32) for i in range(3)]
    preds = predict(model, inputs, ["a", "b", "c"])
    save_checkpoint(tmp_path / "m.pt", model, history=[{"epoch": 1}], seed=3)
    loaded, ckpt = load_checkpoint(tmp_path / "m.pt")
    assert ckpt["seed"] == 3 and ckpt["history"] == [{"epoch": 1}]
    assert [p.to_dict() for p in predict(loaded, inputs, ["a", "b", "c"])] == [p.to_dict() for p in preds]
    assert all(0 <= p.score <= 1 for p in preds)


def test_of_convnet_predict_votes_per_frame():
    model = build_model(OF_CONVNET, OfConvNetConfig(input_size=16, tiny_blocks=2, tiny_width=4), seed=0)
    clip = np.random.default_rng(0).integers(0, 256, size=(5, 24, 24, 3), dtype=np.uint8)
    (pred,) = predict(model, [clip], ["x"])
    assert len(pred.per_frame) == 5
    assert pred.label == vote(pred.per_frame)
    assert set(pred.to_dict()) == {"clip_id", "label", "score", "per_frame"}
