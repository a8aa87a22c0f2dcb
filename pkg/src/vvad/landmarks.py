"""Scale normalization and rigid frontalization of 3D facial landmarks.

Landmarks follow the iBUG-68 layout: ``x`` and ``y`` lie in the image plane
(pixels, ``y`` pointing down) and ``z`` is depth with ``+z`` toward the camera.
A single frame is a ``(68, 3)`` array and a sequence is ``(T, 68, 3)``.
"""

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import DegenerateConfiguration, DegenerateFace, ShapeMismatch

N_POINTS = 68
LEFT_EYE_OUTER = 36
RIGHT_EYE_OUTER = 45
MIN_EYE_DISTANCE = 1e-9

MEAN_FACE_FILE = "mean_face_v1.csv"


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        return points @ self.rotation.T + self.translation


def _check_frame(points):
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (N_POINTS, 3):
        raise ShapeMismatch(f"expected ({N_POINTS}, 3) landmarks, got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DegenerateFace("landmarks contain non-finite coordinates")
    return points


def _check_sequence(seq):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[1:] != (N_POINTS, 3):
        raise ShapeMismatch(f"expected (T, {N_POINTS}, 3) landmarks, got {seq.shape}")
    if len(seq) == 0:
        raise ShapeMismatch("landmark sequence is empty")
    return seq


def inter_ocular_distance(points):
    points = np.asarray(points, dtype=np.float64)
    return float(np.linalg.norm(points[..., RIGHT_EYE_OUTER, :] - points[..., LEFT_EYE_OUTER, :]))


def scale_normalize(points):
    """Divide every coordinate by the outer-eye-corner distance."""
    points = _check_frame(points)
    d = inter_ocular_distance(points)
    if d < MIN_EYE_DISTANCE:
        raise DegenerateFace(f"inter-ocular distance {d:.3g} is degenerate")
    return points / d


def fit_rigid(source, target):
    """Least-squares rotation and translation mapping ``source`` onto ``target``.

    Kabsch construction: center both point sets, take the SVD of the
    cross-covariance and flip the weakest singular direction when needed so
    that the rotation is proper.
    """
    source = _check_frame(source)
    target = _check_frame(target)
    src_mean = source.mean(axis=0)
    tgt_mean = target.mean(axis=0)
    P = source - src_mean
    Q = target - tgt_mean

    H = P.T @ Q
    U, S, Vt = np.linalg.svd(H)
    if S[0] <= 0 or S[1] <= 1e-12 * S[0]:
        raise DegenerateConfiguration("source landmarks are collinear")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = Vt.T @ D @ U.T
    t = tgt_mean - R @ src_mean
    return RigidTransform(R, t)


def residual_rms(source, target, transform):
    diff = transform.apply(np.asarray(source, dtype=np.float64)) - target
    return float(np.sqrt(np.mean(np.sum(diff ** 2, axis=1))))


def _kabsch_batch(src, tgt):
    """Vectorized Kabsch over ``(T, 68, 3)`` sources and one ``(68, 3)`` target."""
    src_mean = src.mean(axis=1, keepdims=True)
    tgt_mean = tgt.mean(axis=0)
    H = np.einsum("tpi,pj->tij", src - src_mean, tgt - tgt_mean)
    U, S, Vt = np.linalg.svd(H)
    bad = (S[:, 0] <= 0) | (S[:, 1] <= 1e-12 * S[:, 0])
    d = np.sign(np.linalg.det(np.swapaxes(Vt, 1, 2) @ np.swapaxes(U, 1, 2)))
    D = np.zeros((len(src), 3, 3))
    D[:, 0, 0] = 1.0
    D[:, 1, 1] = 1.0
    D[:, 2, 2] = np.where(d == 0, 1.0, d)
    R = np.swapaxes(Vt, 1, 2) @ D @ np.swapaxes(U, 1, 2)
    t = tgt_mean - np.einsum("tij,tj->ti", R, src_mean[:, 0])
    return R, t, bad


def frontalize(seq, template=None):
    """Scale-normalize each frame and rigidly align it to ``template``.

    Frames are processed independently; the result matches applying
    :func:`scale_normalize` then :func:`fit_rigid` frame by frame. Errors
    carry ``frame_index``.
    """
    seq = _check_sequence(seq)
    if template is None:
        template = load_mean_face()
    template = _check_frame(template)
    finite = np.isfinite(seq).all(axis=(1, 2))
    if not finite.all():
        i = int(np.argmin(finite))
        raise DegenerateFace(f"frame {i}: non-finite coordinates", frame_index=i)
    iod = np.linalg.norm(seq[:, RIGHT_EYE_OUTER] - seq[:, LEFT_EYE_OUTER], axis=1)
    if (iod < MIN_EYE_DISTANCE).any():
        i = int(np.argmax(iod < MIN_EYE_DISTANCE))
        raise DegenerateFace(f"frame {i}: inter-ocular distance {iod[i]:.3g} is degenerate", frame_index=i)
    normed = seq / iod[:, None, None]
    R, t, bad = _kabsch_batch(normed, template)
    if bad.any():
        i = int(np.argmax(bad))
        raise DegenerateConfiguration(f"frame {i}: source landmarks are collinear", frame_index=i)
    return np.einsum("tpj,tij->tpi", normed, R) + t[:, None, :]


def flatten(seq):
    seq = _check_sequence(seq)
    return seq.reshape(len(seq), N_POINTS * 3)


def unflatten(vectors):
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[1] != N_POINTS * 3:
        raise ShapeMismatch(f"expected (T, {N_POINTS * 3}) vectors, got {vectors.shape}")
    return vectors.reshape(len(vectors), N_POINTS, 3)


def random_rotation(rng, max_angle=np.pi):
    """Rotation about a uniformly random axis by an angle drawn from [-max_angle, max_angle]."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    return axis_angle_to_matrix(axis * angle)


def axis_angle_to_matrix(rotvec):
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(rotvec)
    if theta < 1e-15:
        return np.eye(3)
    k = rotvec / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


@lru_cache(maxsize=1)
def _cached_mean_face():
    with resources.files("vvad.data").joinpath(MEAN_FACE_FILE).open("r") as fh:
        from .io import read_landmarks_csv

        arr = read_landmarks_csv(fh)
    arr = arr[0]
    arr.setflags(write=False)
    return arr


def load_mean_face():
    """Frontal template: unit inter-ocular distance, symmetric about ``x = 0``."""
    return _cached_mean_face().copy()
