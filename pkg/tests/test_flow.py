import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.ndimage import gaussian_filter

from vvad.errors import ShapeMismatch, ValidationError
from vvad.flow import (
    FlowConfig,
    FlowFrame,
    dense_flow,
    flow_to_rgb,
    make_color_wheel,
    saturation,
    wheel_position,
)
from vvad.io import read_flow, read_png, write_flow, write_png

# Unit flow, full saturation, image coordinates (v points down).
COMPASS = {
    (1, 0): (255, 0, 0),
    (0, 1): (255, 233, 0),
    (-1, 0): (0, 197, 255),
    (0, -1): (102, 0, 255),
}


def reference_color(u, v):
    """Scalar re-derivation of the wheel encoding at saturation 1."""
    ramps = [(15, 1, +1), (6, 0, -1), (4, 2, +1), (11, 1, -1), (13, 0, +1), (6, 2, -1)]
    base = [(255, 0, 0), (255, 255, 0), (0, 255, 0), (0, 255, 255), (0, 0, 255), (255, 0, 255)]
    wheel = []
    for (n, ch, sign), start in zip(ramps, base):
        for i in range(n):
            col = list(start)
            step = int(255 * i / n)
            col[ch] = step if sign > 0 else 255 - step
            wheel.append(col)
    angle = np.arctan2(-v, -u) / np.pi
    pos = (angle + 1) / 2 * 55 % 55
    k0 = int(pos) % 55
    k1 = (k0 + 1) % 55
    f = pos - int(pos)
    return tuple(int(255 * ((1 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255) for c in range(3))


def encode(u, v, max_mag=1.0):
    return tuple(int(c) for c in flow_to_rgb(FlowFrame(np.array([[u]]), np.array([[v]])), max_mag)[0, 0])


def test_wheel_layout():
    wheel = make_color_wheel()
    assert wheel.shape == (55, 3)
    np.testing.assert_array_equal(wheel[0], [255, 0, 0])
    np.testing.assert_array_equal(wheel[15], [255, 255, 0])
    np.testing.assert_array_equal(wheel[21], [0, 255, 0])
    np.testing.assert_array_equal(wheel[25], [0, 255, 255])
    np.testing.assert_array_equal(wheel[36], [0, 0, 255])
    np.testing.assert_array_equal(wheel[49], [255, 0, 255])


def test_compass_table():
    for (u, v), rgb in COMPASS.items():
        assert encode(u, v) == rgb
        assert reference_color(u, v) == rgb


def test_eight_directions_match_scalar_reference():
    for k in range(8):
        a = k * np.pi / 4
        u, v = np.cos(a), np.sin(a)
        assert encode(u, v) == reference_color(u, v)


def test_quarter_turn_shifts_wheel():
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=100), rng.normal(size=100)
    # (u, v) -> (-v, u) turns the vector by +90 degrees in image coordinates
    shift = (wheel_position(-v, u) - wheel_position(u, v)) % 55
    np.testing.assert_allclose(shift, 13.75, atol=1e-9)


def test_zero_flow_is_white():
    flow = FlowFrame(np.zeros((4, 4)), np.zeros((4, 4)))
    assert (flow_to_rgb(flow) == 255).all()


def test_saturation_clips_at_max_mag():
    flow = FlowFrame(np.array([[0.5, 3.0]]), np.zeros((1, 2)))
    np.testing.assert_allclose(saturation(flow, 1.0), [[0.5, 1.0]])
    np.testing.assert_allclose(saturation(flow), [[0.5 / 3, 1.0]])
    with pytest.raises(ValueError):
        saturation(flow, 0.0)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_rgb_in_range_and_half_saturation_is_lighter(u, v):
    full = np.array(encode(u, v, max_mag=max(np.hypot(u, v), 1e-9)))
    half = np.array(encode(u / 2, v / 2, max_mag=max(np.hypot(u, v), 1e-9)))
    assert (half >= full).all()


def smooth_texture(seed=0, size=96):
    rng = np.random.default_rng(seed)
    tex = gaussian_filter(rng.uniform(0, 255, (size, size)), 2.0)
    tex = (tex - tex.min()) / (tex.max() - tex.min()) * 255
    return tex


def test_known_shift_recovered():
    tex = smooth_texture()
    a = tex[16:80, 16:80]
    b = tex[16:80, 13:77]  # content moves 3 px right
    flow = dense_flow(a, b)
    inner = (slice(12, -12), slice(12, -12))
    assert np.median(flow.u[inner]) == pytest.approx(3.0, abs=0.1)
    assert abs(np.median(flow.v[inner])) < 0.1


def test_identical_frames_give_zero_flow():
    a = smooth_texture(1)[:64, :64]
    flow = dense_flow(a, a)
    assert np.abs(flow.u).max() < 0.1 and np.abs(flow.v).max() < 0.1


def test_forward_backward_antisymmetric():
    tex = smooth_texture(2)
    a, b = tex[16:80, 16:80], tex[16:80, 14:78]
    fwd, bwd = dense_flow(a, b), dense_flow(b, a)
    inner = (slice(12, -12), slice(12, -12))
    assert abs(np.median(fwd.u[inner] + bwd.u[inner])) < 0.1


def test_rgb_frames_accepted():
    a = np.repeat(smooth_texture(3)[:32, :32, None], 3, axis=2).astype(np.uint8)
    assert dense_flow(a, a, FlowConfig(levels=2, window=9)).u.shape == (32, 32)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        dense_flow(np.zeros((10, 10)), np.zeros((10, 12)))
    with pytest.raises(ShapeMismatch):
        FlowFrame(np.zeros((2, 2)), np.zeros((2, 3)))


def test_flow_file_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=(5, 7)).astype(np.float32), rng.normal(size=(5, 7)).astype(np.float32)
    write_flow(tmp_path / "f.flo", u, v)
    u2, v2 = read_flow(tmp_path / "f.flo")
    np.testing.assert_array_equal(u2, u)
    np.testing.assert_array_equal(v2, v)
    (tmp_path / "bad.flo").write_bytes(b"nope")
    with pytest.raises(ValidationError):
        read_flow(tmp_path / "bad.flo")


def test_png_roundtrip(tmp_path):
    rgb = flow_to_rgb(FlowFrame(np.ones((6, 6)), np.zeros((6, 6))))
    write_png(tmp_path / "f.png", rgb)
    np.testing.assert_array_equal(read_png(tmp_path / "f.png"), rgb)
