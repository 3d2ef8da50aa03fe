"""Datasets: file formats, preprocessing, splitting and synthetic generators.

On disk, class ids are ``1..c`` and ``0`` marks an unlabeled sample. In
memory (:class:`Dataset`) they are ``0..c-1`` with ``-1`` for unlabeled,
which is what the graph and estimator code consumes.

Text format::

    rows cols has_labels
    <rows lines of cols whitespace-separated floats>
    <one line of cols integer labels, only when has_labels is 1>

Binary format: a 16-byte header (``b"SRD1"`` then little-endian uint32
rows, cols, has_labels), the feature matrix as little-endian float64 in
row-major order, then ``cols`` float64 labels when present.
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (InvalidConfigError, InvalidSplitError, NormalizationError,
                     ParseError, DataError)

BINARY_MAGIC = b"SRD1"
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray = None
    class_count: int = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a d x n matrix")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or Inf")
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels).astype(int)
            if y.shape != (X.shape[1],):
                raise DataError(
                    f"{y.size} labels for {X.shape[1]} samples")
            object.__setattr__(self, "labels", y)
            if self.class_count is None:
                object.__setattr__(self, "class_count", int(y.max()) + 1 if y.size else 0)

    @property
    def n(self):
        return self.features.shape[1]

    @property
    def dim(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    labeled_per_class: int = 5
    seed: int = 0
    shuffle: bool = True


def _labels_from_file(raw):
    raw = np.asarray(raw)
    if np.any(raw != np.round(raw)) or np.any(raw < 0):
        raise ParseError("labels must be non-negative integers (0 = unlabeled)")
    return raw.astype(int) - 1


def load_text(path):
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines()]
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise ParseError(f"{path}: empty file")
    lineno, head = rows[0]
    try:
        r, c, has = (int(v) for v in head)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: header must be 'rows cols has_labels'") from None
    body = rows[1:]
    expected = r + (1 if has else 0)
    if c == 0:
        expected = 0
    if len(body) != expected:
        raise ParseError(f"{path}: expected {expected} data lines, found {len(body)}")
    X = np.zeros((r, c))
    for i, (ln, toks) in enumerate(body[:r] if c else []):
        if len(toks) != c:
            raise ParseError(f"{path}:{ln}: expected {c} values, found {len(toks)}")
        try:
            X[i] = [float(t) for t in toks]
        except ValueError as e:
            raise ParseError(f"{path}:{ln}: {e}") from None
    labels = None
    if has:
        if c:
            ln, toks = body[r]
            if len(toks) != c:
                raise ParseError(f"{path}:{ln}: expected {c} labels, found {len(toks)}")
            try:
                labels = _labels_from_file([float(t) for t in toks])
            except ValueError as e:
                raise ParseError(f"{path}:{ln}: {e}") from None
        else:
            labels = np.zeros(0, dtype=int)
    if not np.all(np.isfinite(X)):
        raise ParseError(f"{path}: NaN or Inf in features")
    return Dataset(X, labels)


def save_text(ds, path):
    X = ds.features
    with open(path, "w") as fh:
        fh.write(f"{X.shape[0]} {X.shape[1]} {int(ds.labels is not None)}\n")
        if X.shape[1]:
            for row in X:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            if ds.labels is not None:
                fh.write(" ".join(str(int(v) + 1) for v in ds.labels) + "\n")


def load_binary(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: file shorter than the 16-byte header")
    magic, r, c, has = _HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    count = r * c + (c if has else 0)
    if len(data) != _HEADER.size + 8 * count:
        raise ParseError(
            f"{path}: expected {_HEADER.size + 8 * count} bytes, found {len(data)}")
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    X = vals[:r * c].reshape(r, c).astype(float)
    if not np.all(np.isfinite(X)):
        raise ParseError(f"{path}: NaN or Inf in features")
    labels = _labels_from_file(vals[r * c:]) if has else None
    return Dataset(X, labels)


def save_binary(ds, path):
    X = ds.features
    has = ds.labels is not None
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(BINARY_MAGIC, X.shape[0], X.shape[1], int(has)))
        fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())
        if has:
            fh.write((ds.labels + 1).astype("<f8").tobytes())


FORMATS = {"text": (load_text, save_text), "binary": (load_binary, save_binary)}


def load_dataset(path, format="text"):
    try:
        loader = FORMATS[format][0]
    except KeyError:
        raise InvalidConfigError(f"unknown dataset format {format!r}") from None
    if not Path(path).exists():
        raise DataError(f"{path}: no such file")
    return loader(path)


def save_dataset(ds, path, format="text"):
    try:
        FORMATS[format][1](ds, path)
    except KeyError:
        raise InvalidConfigError(f"unknown dataset format {format!r}") from None


def normalize_columns(X):
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise NormalizationError(f"column {int(zero[0])} has zero norm")
    return X / norms


def random_projection(X, target_dim, seed=0, identity=False):
    """Project columns with an i.i.d. N(0, 1/target_dim) matrix."""
    X = np.asarray(X, dtype=float)
    if target_dim <= 0:
        raise InvalidConfigError("target_dim must be >= 1")
    if identity:
        if target_dim != X.shape[0]:
            raise InvalidConfigError("identity projection requires target_dim == d")
        return X.copy()
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((target_dim, X.shape[0])) / np.sqrt(target_dim)
    return R @ X


def split(ds, spec):
    """Pick ``labeled_per_class`` labeled indices per class.

    Returns ``(labeled, unlabeled)`` sorted index arrays.
    """
    if spec.labeled_per_class < 1:
        raise InvalidSplitError("labeled_per_class must be >= 1")
    if ds.labels is None or np.any(ds.labels < 0):
        raise InvalidSplitError("splitting needs a ground-truth label for every sample")
    rng = np.random.default_rng(spec.seed)
    chosen = []
    for c in range(ds.class_count):
        members = np.flatnonzero(ds.labels == c)
        if members.size < spec.labeled_per_class:
            raise InvalidSplitError(
                f"class {c + 1} has {members.size} members, "
                f"fewer than labeled_per_class={spec.labeled_per_class}")
        if spec.shuffle:
            members = rng.permutation(members)
        chosen.append(members[:spec.labeled_per_class])
    labeled = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=int)
    unlabeled = np.setdiff1d(np.arange(ds.n), labeled)
    return labeled, unlabeled


def mask_labels(labels, labeled):
    out = np.full(len(labels), -1, dtype=int)
    out[labeled] = np.asarray(labels)[labeled]
    return out


def synthetic_blobs(classes=3, per_class=50, dim=10, spread=None, seed=0, separation=1.0):
    """Gaussian blobs around the vertices of a scaled simplex.

    Means are ``separation / sqrt(2) * e_c`` so every pair of means is
    ``separation`` apart. ``spread`` is the noise standard deviation and
    defaults to ``0.15 * separation``.
    """
    if classes < 2:
        raise InvalidConfigError("need at least two classes")
    if dim < classes:
        raise InvalidConfigError("dim must be >= classes to place simplex vertices")
    if spread is None:
        spread = 0.15 * separation
    rng = np.random.default_rng(seed)
    means = np.zeros((dim, classes))
    means[np.arange(classes), np.arange(classes)] = separation / np.sqrt(2.0)
    labels = np.repeat(np.arange(classes), per_class)
    X = means[:, labels] + spread * rng.standard_normal((dim, classes * per_class))
    return Dataset(X, labels, classes)


def synthetic_circles(per_class=100, noise=0.05, seed=0):
    """Two concentric circles (radius 1 and 2) in the plane."""
    if per_class < 10:
        raise InvalidConfigError("per_class must be >= 10")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=2 * per_class)
    labels = np.repeat([0, 1], per_class)
    radius = np.where(labels == 0, 1.0, 2.0)
    X = np.vstack([radius * np.cos(theta), radius * np.sin(theta)])
    X = X + noise * rng.standard_normal(X.shape)
    return Dataset(X, labels, 2)
