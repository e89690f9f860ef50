# src/dataio.py
"""
File formats and the synthetic data generator.

Features (.mtlf):  "MTLF" | u16 version=1 | u32 n | u32 d | n*d little-endian float32, row-major.
                   Files ending in .csv/.txt are read as plain CSV (no header).
Labels (.csv):     header row of attribute names, then one row per sample of -1/+1
                   (0/1 only with zero_one=True).
Groups (.txt):     one group per line, "GroupName: attr1, attr2, ..."; '#' starts a comment.
Model (.mtlm):     "MTLM" | u16 version=1 | u32 d | u32 k | u32 m | m x (u32 length + UTF-8 name)
                   | L (d*k float64 LE) | S (k*m float64 LE), row-major.
"""

import csv
import io
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, FormatError
from .file_utils import PathLike, is_csv_path, read_bytes, read_text, write_bytes, write_text
from .model import Dataset, GroupPartition, LatentModel, TaskData, validate

logger = logging.getLogger(__name__)

FEATURES_MAGIC = b"MTLF"
MODEL_MAGIC = b"MTLM"
FORMAT_VERSION = 1
FEATURES_HEADER = struct.Struct("<4sHII")
MODEL_HEADER = struct.Struct("<4sHIII")
NAME_LENGTH = struct.Struct("<I")


# -------------------------
# Features
# -------------------------
def save_features(path: PathLike, x) -> Path:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"features must be 2-D, got {x.ndim}-D")
    if not np.all(np.isfinite(x)):
        raise DataError("features contain NaN or Inf")
    if is_csv_path(path):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in x:
            writer.writerow([repr(float(v)) for v in row])
        return write_text(path, buf.getvalue())
    header = FEATURES_HEADER.pack(FEATURES_MAGIC, FORMAT_VERSION, x.shape[0], x.shape[1])
    with np.errstate(over="ignore"):
        payload = np.ascontiguousarray(x, dtype="<f4")
    overflow = np.argwhere(~np.isfinite(payload))
    if overflow.size:
        r, c = (int(i) for i in overflow[0])
        raise DataError(f"feature value {x[r, c]!r} at row {r} col {c} is outside the float32 range of {path}")
    return write_bytes(path, header + payload.tobytes())


def _load_features_binary(path: PathLike) -> np.ndarray:
    data = read_bytes(path)
    if len(data) < FEATURES_HEADER.size:
        raise FormatError(f"{path}: truncated header: expected {FEATURES_HEADER.size} bytes, got {len(data)}")
    magic, version, n, d = FEATURES_HEADER.unpack_from(data, 0)
    if magic != FEATURES_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0, expected {FEATURES_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte offset 4")
    expected = FEATURES_HEADER.size + 4 * n * d
    if len(data) != expected:
        kind = "truncated payload" if len(data) < expected else "trailing bytes"
        raise FormatError(f"{path}: {kind}: expected {expected} bytes, got {len(data)}")
    raw = np.frombuffer(data, dtype="<f4", count=n * d, offset=FEATURES_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        offset = FEATURES_HEADER.size + 4 * int(bad[0])
        raise FormatError(f"{path}: non-finite value at byte offset {offset}")
    return raw.astype(np.float64).reshape(n, d)


def _load_features_csv(path: PathLike) -> np.ndarray:
    rows: List[List[float]] = []
    width = None
    for line_no, row in enumerate(csv.reader(io.StringIO(read_text(path))), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            values = [float(cell) for cell in row]
        except ValueError:
            raise FormatError(f"{path}: line {line_no}: non-numeric value")
        if not all(np.isfinite(values)):
            raise FormatError(f"{path}: line {line_no}: NaN or Inf value")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise FormatError(f"{path}: line {line_no}: {len(values)} values, expected {width}")
        rows.append(values)
    if not rows:
        return np.zeros((0, 0))
    return np.asarray(rows, dtype=np.float64)


def load_features(path: PathLike) -> np.ndarray:
    if is_csv_path(path):
        return _load_features_csv(path)
    return _load_features_binary(path)


# -------------------------
# Labels
# -------------------------
def load_labels(path: PathLike, zero_one: bool = False) -> Tuple[List[str], np.ndarray]:
    reader = csv.reader(io.StringIO(read_text(path)))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{path}: empty label file")
    names = [cell.strip() for cell in header]
    if not names or any(not name for name in names):
        raise FormatError(f"{path}: header must name every attribute")
    if len(set(names)) != len(names):
        raise FormatError(f"{path}: duplicate attribute names in header")

    allowed = {1.0: 1.0, -1.0: -1.0}
    if zero_one:
        allowed[0.0] = -1.0
    rows: List[List[float]] = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(names):
            raise FormatError(f"{path}: row {row_no} has {len(row)} values, expected {len(names)}")
        values = []
        for col_no, cell in enumerate(row, start=1):
            token = cell.strip()
            try:
                value = allowed[float(token)]
            except (ValueError, KeyError):
                raise FormatError(f"invalid label {token} at row {row_no} col {col_no}")
            values.append(value)
        rows.append(values)
    labels = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(names))
    return names, labels


def save_labels(path: PathLike, names: Sequence[str], labels) -> Path:
    labels = np.asarray(labels)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(names))
    for row in labels:
        writer.writerow([str(int(v)) for v in row])
    return write_text(path, buf.getvalue())


# -------------------------
# Groups
# -------------------------
def parse_groups(text: str, names: Sequence[str], source: str = "<groups>") -> GroupPartition:
    index = {name: i for i, name in enumerate(names)}
    owner = {}
    groups = []
    issues = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            issues.append(f"line {line_no}: expected 'GroupName: attr1, attr2, ...'")
            continue
        group_name, members_text = line.split(":", 1)
        group_name = group_name.strip()
        members = []
        for attr in (a.strip() for a in members_text.split(",")):
            if not attr:
                continue
            if attr not in index:
                issues.append(f"unknown attribute '{attr}' (line {line_no})")
            elif attr in owner:
                issues.append(f"attribute '{attr}' listed in both '{owner[attr]}' and '{group_name}'")
            else:
                owner[attr] = group_name
                members.append(index[attr])
        if not members:
            issues.append(f"group '{group_name}' (line {line_no}) has no valid members")
        groups.append((group_name, tuple(members)))
    for name in names:
        if name not in owner:
            issues.append(f"attribute '{name}' is not in any group")
    if issues:
        raise FormatError(f"{source}: {issues[0]}", issues)
    return GroupPartition(tuple(groups))


def load_groups(path: PathLike, names: Sequence[str]) -> GroupPartition:
    return parse_groups(read_text(path), names, str(path))


def save_groups(path: PathLike, partition: GroupPartition, names: Sequence[str]) -> Path:
    lines = [f"{gname}: {', '.join(names[i] for i in members)}" for gname, members in partition.groups]
    return write_text(path, "\n".join(lines) + "\n")


# -------------------------
# Models
# -------------------------
def save_model(path: PathLike, model: LatentModel) -> Path:
    parts = [MODEL_HEADER.pack(MODEL_MAGIC, FORMAT_VERSION, model.d, model.k, model.m)]
    for name in model.names:
        encoded = name.encode("utf-8")
        parts.append(NAME_LENGTH.pack(len(encoded)))
        parts.append(encoded)
    parts.append(np.ascontiguousarray(model.l, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(model.s, dtype="<f8").tobytes())
    return write_bytes(path, b"".join(parts))


def load_model(path: PathLike) -> LatentModel:
    data = read_bytes(path)

    def need(offset: int, size: int, what: str) -> None:
        if offset + size > len(data):
            raise FormatError(
                f"{path}: truncated {what} at byte offset {offset}: expected {offset + size} bytes, got {len(data)}"
            )

    need(0, MODEL_HEADER.size, "header")
    magic, version, d, k, m = MODEL_HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0, expected {MODEL_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: version mismatch: file has {version}, reader supports {FORMAT_VERSION}")
    offset = MODEL_HEADER.size
    names = []
    for _ in range(m):
        need(offset, NAME_LENGTH.size, "name length")
        (length,) = NAME_LENGTH.unpack_from(data, offset)
        offset += NAME_LENGTH.size
        need(offset, length, "name")
        try:
            names.append(data[offset:offset + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError(f"{path}: invalid UTF-8 name at byte offset {offset}")
        offset += length
    need(offset, 8 * d * k, "L matrix")
    l = np.frombuffer(data, dtype="<f8", count=d * k, offset=offset).reshape(d, k)
    offset += 8 * d * k
    need(offset, 8 * k * m, "S matrix")
    s = np.frombuffer(data, dtype="<f8", count=k * m, offset=offset).reshape(k, m)
    offset += 8 * k * m
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes after S matrix")
    return LatentModel(l.astype(np.float64), s.astype(np.float64), tuple(names))


# -------------------------
# Datasets
# -------------------------
def load_dataset(
    feature_paths: Sequence[PathLike],
    label_paths: Sequence[PathLike],
    zero_one: bool = False,
) -> Dataset:
    """
    Build a Dataset from (features, labels) file pairs. Every column of a label
    file is one task whose pool is the paired feature file.
    """
    if len(feature_paths) != len(label_paths):
        raise DataError(f"{len(feature_paths)} feature files but {len(label_paths)} label files")
    tasks = []
    for fpath, lpath in zip(feature_paths, label_paths):
        x = load_features(fpath)
        names, labels = load_labels(lpath, zero_one=zero_one)
        if labels.shape[0] != x.shape[0]:
            raise DataError(f"{lpath}: {labels.shape[0]} label rows for {x.shape[0]} feature rows in {fpath}")
        tasks.extend(Dataset.shared_features(x, labels, names).tasks)
    return Dataset(tuple(tasks))


# -------------------------
# Synthetic data
# -------------------------
@dataclass(frozen=True)
class SynthSpec:
    d: int
    k_true: int
    m: int
    partition: GroupPartition
    n_per_task: Tuple[int, ...]
    density: float = 0.5
    noise: float = 0.0
    margin_scale: float = 1.0
    n_test: int = 1000
    noisy_test: bool = False
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        n = self.n_per_task
        if isinstance(n, int):
            n = (n,) * self.m
        object.__setattr__(self, "n_per_task", tuple(int(v) for v in n))
        problems = []
        if min(self.d, self.k_true, self.m, self.n_test) < 1:
            problems.append("d, k_true, m and n_test must all be >= 1")
        if len(self.n_per_task) != self.m or any(v < 1 for v in self.n_per_task):
            problems.append(f"n_per_task needs {self.m} counts >= 1")
        if not 0 < self.density <= 1:
            problems.append(f"density must lie in (0, 1], got {self.density}")
        if not 0 <= self.noise < 0.5:
            problems.append(f"label noise must lie in [0, 0.5), got {self.noise}")
        if not self.margin_scale > 0:
            problems.append("margin_scale must be > 0")
        if self.names is not None and len(self.names) != self.m:
            problems.append(f"{len(self.names)} names for {self.m} tasks")
        if problems:
            raise DataError(f"invalid synthetic spec: {problems[0]}", problems)

    def task_names(self) -> Tuple[str, ...]:
        return self.names if self.names is not None else tuple(f"attr{i:02d}" for i in range(self.m))


@dataclass(frozen=True)
class SyntheticData:
    train: Dataset
    test: Dataset
    l_true: np.ndarray
    s_true: np.ndarray

    @property
    def w_true(self) -> np.ndarray:
        return self.l_true @ self.s_true


def _signed(scores: np.ndarray) -> np.ndarray:
    return np.where(scores >= 0.0, 1.0, -1.0)


def generate_synthetic(spec: SynthSpec, seed: int) -> SyntheticData:
    """
    Group-structured ground truth: each group owns a contiguous band of latent
    rows, and the tasks of a group combine only the latent tasks of its band.
    """
    partition = spec.partition
    shape_only = Dataset(tuple(TaskData(name, np.zeros((0, spec.d)), np.zeros(0)) for name in spec.task_names()))
    issues = [str(i) for i in validate(shape_only, partition)]
    if issues:
        raise DataError(f"synthetic partition invalid: {issues[0]}", issues)
    n_groups = partition.n_groups
    if spec.k_true < n_groups:
        raise DataError(f"infeasible spec: {spec.k_true} latent rows cannot give {n_groups} groups a band of width >= 1")

    rng = np.random.default_rng(seed)
    bounds = np.linspace(0, spec.k_true, n_groups + 1).round().astype(int)
    mask = rng.random((spec.d, spec.k_true)) < spec.density
    l_true = np.where(mask, rng.standard_normal((spec.d, spec.k_true)), 0.0)

    group_of = partition.group_of(spec.m)
    s_true = np.zeros((spec.k_true, spec.m))
    for m in range(spec.m):
        lo, hi = bounds[group_of[m]], bounds[group_of[m] + 1]
        s_true[lo:hi, m] = rng.standard_normal(hi - lo)

    x_test = rng.standard_normal((spec.n_test, spec.d))
    # median unsigned margin measured on the (large) test pool
    margins = np.abs(x_test @ (l_true @ s_true))
    for m in range(spec.m):
        median = float(np.median(margins[:, m]))
        if median > 0:
            s_true[:, m] *= spec.margin_scale / median
    w_true = l_true @ s_true

    names = spec.task_names()
    tasks = []
    for m, name in enumerate(names):
        x = rng.standard_normal((spec.n_per_task[m], spec.d))
        y = _signed(x @ w_true[:, m])
        flips = rng.random(y.shape[0]) < spec.noise
        y[flips] *= -1.0
        tasks.append(TaskData(name, x, y))

    test_labels = _signed(x_test @ w_true)
    if spec.noisy_test:
        flips = rng.random(test_labels.shape) < spec.noise
        test_labels[flips] *= -1.0
    logger.debug("synthetic: bands %s, label noise %.3f", bounds.tolist(), spec.noise)
    return SyntheticData(
        train=Dataset(tuple(tasks)),
        test=Dataset.shared_features(x_test, test_labels, names),
        l_true=l_true,
        s_true=s_true,
    )
