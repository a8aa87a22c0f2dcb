import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from vvad.io import load_landmarks, read_jsonl
from vvad.landmarks import frontalize, inter_ocular_distance, load_mean_face
from vvad.synthetic import (
    SILENT,
    SPEAKING,
    NoiseSpec,
    SynthConfig,
    apply_flip_mask,
    build_mean_face,
    flow_clip,
    generate,
    inject_label_noise,
    mouth_opening,
    render_frames,
    synthesize_clip,
)
from vvad.datasets import write_synthetic_dataset


def opening_variances(clips):
    return np.array([mouth_opening(c.landmarks).var() for c in clips])


def test_bundled_template_is_the_built_mean_face():
    np.testing.assert_allclose(load_mean_face(), build_mean_face(), atol=1e-9)
    face = build_mean_face()
    assert inter_ocular_distance(face) == pytest.approx(1.0)
    # left and right eye corners mirror about x = 0
    assert face[36, 0] == pytest.approx(-face[45, 0])


def test_balanced_classes():
    clips = generate(SynthConfig(n_clips=40, clip_len=10))
    labels = [c.label for c in clips]
    assert labels.count(SPEAKING) == labels.count(SILENT) == 20
    assert all(c.landmarks.shape == (10, 68, 3) for c in clips)


def test_odd_clip_count_rejected():
    with pytest.raises(ValueError):
        generate(SynthConfig(n_clips=3))
    with pytest.raises(ValueError):
        SynthConfig(speak_amp=-1).validate()


def test_same_seed_same_bytes():
    a = generate(SynthConfig(n_clips=6, clip_len=8, seed=3))
    b = generate(SynthConfig(n_clips=6, clip_len=8, seed=3))
    c = generate(SynthConfig(n_clips=6, clip_len=8, seed=4))
    assert all(x.landmarks.tobytes() == y.landmarks.tobytes() for x, y in zip(a, b))
    assert a[0].landmarks.tobytes() != c[0].landmarks.tobytes()


def test_clip_streams_are_independent_of_set_size():
    small = generate(SynthConfig(n_clips=4, clip_len=8, seed=1))
    large = generate(SynthConfig(n_clips=10, clip_len=8, seed=1))
    for x, y in zip(small, large):
        np.testing.assert_array_equal(x.landmarks, y.landmarks)


def test_default_speaking_variance_dominates_every_pair():
    clips = generate(SynthConfig(n_clips=100))
    var = opening_variances(clips)
    labels = np.array([c.label for c in clips])
    assert var[labels == SPEAKING].min() > var[labels == SILENT].max()


def test_zero_amplitude_classes_indistinguishable():
    clips = generate(SynthConfig(n_clips=200, speak_amp=0.0, seed=2))
    var = opening_variances(clips)
    labels = np.array([c.label for c in clips])
    p = mannwhitneyu(var[labels == SPEAKING], var[labels == SILENT]).pvalue
    assert p > 0.01


def test_speaking_mouth_follows_amplitude():
    cfg = SynthConfig(n_clips=2, clip_len=100, noise_sigma=0.0, head_motion="none")
    clip = synthesize_clip(cfg, 0, SPEAKING)
    opening = mouth_opening(clip.landmarks)
    rest = mouth_opening(synthesize_clip(cfg, 0, SILENT).landmarks)[0]
    assert opening.max() - rest == pytest.approx(cfg.speak_amp, abs=0.01)
    assert opening.min() - rest == pytest.approx(0.0, abs=0.01)


def test_rigid_head_motion_is_removed_by_frontalization():
    cfg = SynthConfig(n_clips=2, clip_len=30, noise_sigma=0.0)
    clip = synthesize_clip(cfg, 1, SILENT)
    front = frontalize(clip.landmarks)
    np.testing.assert_allclose(front, np.repeat(front[:1], 30, axis=0), atol=1e-9)
    assert np.ptp(clip.landmarks[:, 30, 0]) > 1.0  # the raw nose tip does move


def test_label_noise_binomial_bounds():
    n = 10_000
    spec = NoiseSpec(0.12, 0.086, seed=0)
    for rate, label in ((0.12, SPEAKING), (0.086, SILENT)):
        _, mask = inject_label_noise(np.full(n, label), spec)
        sd = np.sqrt(n * rate * (1 - rate))
        assert abs(mask.sum() - n * rate) <= 3 * sd
    labels = np.array([SPEAKING, SILENT] * (n // 2))
    _, mask = inject_label_noise(labels, spec)
    for rate, label in ((0.12, SPEAKING), (0.086, SILENT)):
        k = (labels == label).sum()
        assert abs(mask[labels == label].sum() - k * rate) <= 3 * np.sqrt(k * rate * (1 - rate))


def test_flip_mask_is_an_involution():
    labels = np.array([SPEAKING, SILENT] * 50)
    noisy, mask = inject_label_noise(labels, NoiseSpec(0.3, 0.2, seed=1))
    assert (noisy != labels).sum() == mask.sum()
    np.testing.assert_array_equal(apply_flip_mask(noisy, mask), labels)
    same, none = inject_label_noise(labels, NoiseSpec(0.0, 0.0))
    assert not none.any()
    np.testing.assert_array_equal(same, labels)


def test_noise_rate_bounds():
    with pytest.raises(ValueError):
        NoiseSpec(0.5, 0.1)
    with pytest.raises(ValueError):
        NoiseSpec(0.1, -0.1)


def test_render_and_flow_shapes():
    clip = synthesize_clip(SynthConfig(n_clips=2, clip_len=6), 0, SPEAKING)
    frames = render_frames(clip.geometry, size=32)
    assert frames.shape == (6, 32, 32) and frames.dtype == np.uint8
    assert frames.max() > 200
    flows = flow_clip(clip.geometry, size=32)
    assert flows.shape == (5, 32, 32, 3) and flows.dtype == np.uint8


def test_written_dataset_matches_pipeline_manifest(tmp_path):
    clips = generate(SynthConfig(n_clips=20, clip_len=8, seed=5))
    train_path, test_path = write_synthetic_dataset(tmp_path, clips, test_fraction=0.2, landmark_format="csv")
    train, test = read_jsonl(train_path), read_jsonl(test_path)
    assert len(train) == 16 and len(test) == 4
    assert {r["provenance"] for r in train} == {"auto"}
    assert {r["provenance"] for r in test} == {"manual"}
    assert sum(r["label"] == "speaking" for r in test) == 2
    rec = train[0]
    assert list(rec)[:7] == ["source_id", "track_id", "start", "end", "label", "boxes", "provenance"]
    by_id = {c.clip_id: c for c in clips}
    np.testing.assert_allclose(load_landmarks(tmp_path / rec["landmarks"]), by_id[rec["clip_id"]].landmarks)
