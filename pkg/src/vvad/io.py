"""File formats: landmark arrays, JSON-lines manifests, flow fields and images.

Landmark CSV layout (one clip per file)::

    frame,point,x,y,z
    0,0,12.5,40.1,-3.0
    ...

with rows ordered by frame then point. ``.npy`` files hold the same data as a
``(frames, 68, 3)`` float64 array.

Raw flow files hold a 16-byte header (8-byte magic ``b"VVADFLOW"``, then
height and width as little-endian uint32) followed by the ``u`` plane and the
``v`` plane as little-endian float32, row-major.
"""

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, ValidationError

LANDMARK_HEADER = ["frame", "point", "x", "y", "z"]
FLOW_MAGIC = b"VVADFLOW"


def read_landmarks_csv(fh):
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != LANDMARK_HEADER:
        raise ValidationError(f"landmark CSV header must be {','.join(LANDMARK_HEADER)}")
    rows = [row for row in reader if row]
    data = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    if len(data) == 0 or len(data) % 68:
        raise ShapeMismatch("landmark CSV must contain 68 rows per frame")
    n_frames = len(data) // 68
    frames = data[:, 0].astype(int).reshape(n_frames, 68)
    points = data[:, 1].astype(int).reshape(n_frames, 68)
    if not (np.all(frames == np.arange(n_frames)[:, None]) and np.all(points == np.arange(68))):
        raise ValidationError("landmark CSV rows must be ordered by frame then point")
    return data[:, 2:].reshape(n_frames, 68, 3)


def write_landmarks_csv(fh, seq):
    seq = np.asarray(seq, dtype=np.float64)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(LANDMARK_HEADER)
    for f, frame in enumerate(seq):
        for p, (x, y, z) in enumerate(frame):
            writer.writerow([f, p, repr(float(x)), repr(float(y)), repr(float(z))])


def load_landmarks(path):
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
    elif path.suffix == ".csv":
        with open(path, newline="") as fh:
            arr = read_landmarks_csv(fh)
    else:
        raise ValidationError(f"unsupported landmark file type: {path}")
    if arr.ndim != 3 or arr.shape[1:] != (68, 3):
        raise ShapeMismatch(f"{path}: expected (frames, 68, 3), got {arr.shape}")
    return arr.astype(np.float64)


def save_landmarks(path, seq):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".npy":
        np.save(path, np.asarray(seq, dtype=np.float64))
    elif path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            write_landmarks_csv(fh, seq)
    else:
        raise ValidationError(f"unsupported landmark file type: {path}")


# JSON lines


def dumps_line(obj):
    return json.dumps(obj, separators=(", ", ": "))


def read_jsonl(path):
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_jsonl(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps_line(rec) + "\n")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# flow


def write_flow(path, u, v):
    u = np.asarray(u, dtype="<f4")
    v = np.asarray(v, dtype="<f4")
    if u.shape != v.shape or u.ndim != 2:
        raise ShapeMismatch("u and v must be equal-shaped 2D arrays")
    h, w = u.shape
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC + struct.pack("<II", h, w))
        fh.write(u.tobytes(order="C"))
        fh.write(v.tobytes(order="C"))


def read_flow(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:8] != FLOW_MAGIC:
            raise ValidationError(f"{path}: not a raw flow file")
        h, w = struct.unpack("<II", header[8:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != 2 * h * w:
        raise ValidationError(f"{path}: truncated flow payload")
    u = data[: h * w].reshape(h, w).astype(np.float64)
    v = data[h * w:].reshape(h, w).astype(np.float64)
    return u, v


def write_png(path, rgb):
    from PIL import Image

    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def read_png(path):
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def landmarks_csv_string(seq):
    buf = io.StringIO()
    write_landmarks_csv(buf, seq)
    return buf.getvalue()
