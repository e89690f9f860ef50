# src/model.py
"""
Core data model.

- TaskData / Dataset: per-attribute training pools (X_m, y_m). Pools may differ
  per task; `Dataset.shared_features` replicates one X across tasks by reference.
- GroupPartition: disjoint, covering assignment of task indices to named groups.
- LatentModel: W = L @ S, with L (D x K) shared and S (K x M) per task.
- Hyperparams: solver configuration for the alternating trainer.
- TrainReport: per-half-step objective terms and inner iteration counts.

`validate` reports every violated invariant as a list and never raises;
`ensure_valid` turns a non-empty list into a DataError.
"""

import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import CONFIG
from .errors import DataError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TaskData:
    name: str
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "x", x if not x.flags.writeable else _frozen(x.copy()))
        object.__setattr__(self, "y", _frozen(y.copy()))

    @property
    def n(self) -> int:
        return int(self.x.shape[0]) if self.x.ndim == 2 else 0

    @property
    def d(self) -> int:
        return int(self.x.shape[1]) if self.x.ndim == 2 else -1

    def subset(self, rows: np.ndarray) -> "TaskData":
        rows = np.asarray(rows, dtype=np.intp)
        return TaskData(self.name, self.x[rows], self.y[rows])


@dataclass(frozen=True)
class Dataset:
    tasks: Tuple[TaskData, ...]

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))

    @classmethod
    def shared_features(cls, x, labels, names: Sequence[str]) -> "Dataset":
        """One feature matrix for every task; `labels` is N x M. X is shared by reference."""
        x = _frozen(np.array(x, dtype=np.float64))
        labels = np.asarray(labels, dtype=np.float64)
        if labels.ndim != 2 or labels.shape[1] != len(names):
            raise DataError(f"labels shape {labels.shape} does not match {len(names)} task names")
        return cls(tuple(TaskData(name, x, labels[:, m]) for m, name in enumerate(names)))

    @property
    def m(self) -> int:
        return len(self.tasks)

    @property
    def d(self) -> int:
        return self.tasks[0].d if self.tasks else 0

    @property
    def names(self) -> List[str]:
        return [t.name for t in self.tasks]

    @property
    def sizes(self) -> List[int]:
        return [t.n for t in self.tasks]

    def subset(self, rows_per_task: Sequence[np.ndarray]) -> "Dataset":
        return Dataset(tuple(t.subset(r) for t, r in zip(self.tasks, rows_per_task)))

    def permuted(self, order: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.tasks[i] for i in order))


@dataclass(frozen=True)
class GroupPartition:
    groups: Tuple[Tuple[str, Tuple[int, ...]], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "groups", tuple((str(name), tuple(int(i) for i in members)) for name, members in self.groups)
        )

    @classmethod
    def single(cls, m: int, name: str = "all") -> "GroupPartition":
        return cls(((name, tuple(range(m))),))

    @classmethod
    def singletons(cls, names: Sequence[str]) -> "GroupPartition":
        return cls(tuple((name, (i,)) for i, name in enumerate(names)))

    @classmethod
    def contiguous(cls, m: int, g: int, prefix: str = "group") -> "GroupPartition":
        """Split tasks 0..m-1 into g nearly equal contiguous groups."""
        if not 1 <= g <= m:
            raise DataError(f"cannot split {m} tasks into {g} groups")
        bounds = np.linspace(0, m, g + 1).round().astype(int)
        return cls(tuple((f"{prefix}{i}", tuple(range(bounds[i], bounds[i + 1]))) for i in range(g)))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.groups]

    def members(self, g: int) -> np.ndarray:
        return np.asarray(self.groups[g][1], dtype=np.intp)

    def sizes(self) -> List[int]:
        return [len(members) for _, members in self.groups]

    def block_weights(self, size_weighted: bool = False) -> np.ndarray:
        sizes = np.asarray(self.sizes(), dtype=np.float64)
        return np.sqrt(sizes) if size_weighted else np.ones_like(sizes)

    def group_of(self, m: int) -> np.ndarray:
        """Task index -> group index (-1 for uncovered)."""
        out = np.full(m, -1, dtype=np.intp)
        for g, (_, members) in enumerate(self.groups):
            for i in members:
                if 0 <= i < m:
                    out[i] = g
        return out

    def permuted(self, order: Sequence[int]) -> "GroupPartition":
        """Partition for a dataset whose task i is the old task order[i]."""
        new_index = {old: new for new, old in enumerate(order)}
        return GroupPartition(tuple((name, tuple(sorted(new_index[i] for i in members))) for name, members in self.groups))


@dataclass(frozen=True)
class LatentModel:
    l: np.ndarray
    s: np.ndarray
    names: Tuple[str, ...]

    def __post_init__(self):
        l = np.array(self.l, dtype=np.float64)
        s = np.array(self.s, dtype=np.float64)
        if l.ndim != 2 or s.ndim != 2 or l.shape[1] != s.shape[0]:
            raise DataError(f"latent model shapes do not agree: L {l.shape}, S {s.shape}")
        if l.shape[1] < 1:
            raise DataError("latent dimension K must be at least 1")
        if len(self.names) != s.shape[1]:
            raise DataError(f"{len(self.names)} task names for {s.shape[1]} columns of S")
        if not (np.all(np.isfinite(l)) and np.all(np.isfinite(s))):
            raise DataError("latent model has non-finite entries")
        object.__setattr__(self, "l", _frozen(l))
        object.__setattr__(self, "s", _frozen(s))
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_weights(cls, w, names: Sequence[str]) -> "LatentModel":
        """Wrap a plain D x M classifier matrix as L = W, S = I."""
        w = np.asarray(w, dtype=np.float64)
        return cls(w, np.eye(w.shape[1]), tuple(names))

    @property
    def d(self) -> int:
        return int(self.l.shape[0])

    @property
    def k(self) -> int:
        return int(self.l.shape[1])

    @property
    def m(self) -> int:
        return int(self.s.shape[1])

    def with_factors(self, l=None, s=None) -> "LatentModel":
        return LatentModel(self.l if l is None else l, self.s if s is None else s, self.names)


def compose_w(model: LatentModel) -> np.ndarray:
    """W = L @ S; column m is the classifier of task m."""
    return model.l @ model.s


def default_latent_k(d: int, m: int) -> int:
    return max(1, min(d, max(2 * m, 64)))


@dataclass(frozen=True)
class Hyperparams:
    mu: float = 0.1
    gamma: float = 0.01
    lam: float = CONFIG.LAMBDA
    k: Optional[int] = None
    nu: Optional[float] = None
    outer_max: int = CONFIG.OUTER_MAX
    outer_tol: float = 1e-5
    inner_max: int = CONFIG.INNER_MAX
    inner_tol: float = 1e-6
    seed: int = CONFIG.SEED
    ridge_lambda: float = 1.0
    squared_group_norm: bool = False
    group_size_weighting: bool = False
    nu_schedule: str = "fixed"
    nu_decay: float = 0.5
    nu_min_ratio: float = 1e-3
    s_solver: str = "spg"

    def __post_init__(self):
        problems = []
        for name in ("mu", "gamma", "lam"):
            if not getattr(self, name) >= 0:
                problems.append(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("outer_tol", "inner_tol", "ridge_lambda"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0, got {getattr(self, name)}")
        if self.nu is not None and not self.nu > 0:
            problems.append(f"nu must be > 0, got {self.nu}")
        if self.k is not None and self.k < 1:
            problems.append(f"k must be >= 1, got {self.k}")
        if self.outer_max < 1 or self.inner_max < 1:
            problems.append("iteration caps must be >= 1")
        if self.nu_schedule not in ("fixed", "geometric"):
            problems.append(f"unknown nu schedule '{self.nu_schedule}'")
        if not 0 < self.nu_decay < 1:
            problems.append("nu_decay must lie in (0, 1)")
        if self.s_solver not in ("spg", "exact"):
            problems.append(f"unknown S solver '{self.s_solver}'")
        if self.s_solver == "exact" and self.squared_group_norm:
            problems.append("exact S solver has no closed-form prox for the squared group norm")
        if problems:
            raise DataError("invalid hyperparameters", problems)

    def resolve_k(self, d: int, m: int) -> int:
        k = self.k if self.k is not None else default_latent_k(d, m)
        if k > d:
            raise DataError(f"latent dimension K={k} exceeds feature dimension D={d}")
        return k


@dataclass
class HalfStep:
    outer: int
    step: str  # "S" or "L"
    objective: float
    loss: float
    group: float
    l1: float
    frobenius: float
    inner_iters: int
    inner_converged: bool
    slack: float = 0.0


@dataclass
class TrainReport:
    steps: List[HalfStep] = field(default_factory=list)
    converged: bool = False
    n_outer: int = 0
    wall_time: float = 0.0
    nu: float = 0.0
    initial_objective: float = 0.0

    def objectives_after(self, step: str) -> List[float]:
        return [h.objective for h in self.steps if h.step == step]

    def outer_rows(self) -> List[Dict]:
        """One row per outer iteration: the L-step terms plus both inner counts."""
        rows = []
        s_steps = {h.outer: h for h in self.steps if h.step == "S"}
        for h in self.steps:
            if h.step != "L":
                continue
            s = s_steps.get(h.outer)
            rows.append(
                {
                    "index": h.outer,
                    "objective": h.objective,
                    "loss": h.loss,
                    "group_penalty": h.group,
                    "l1_penalty": h.l1,
                    "frobenius_penalty": h.frobenius,
                    "s_iters": s.inner_iters if s else 0,
                    "l_iters": h.inner_iters,
                    "s_objective": s.objective if s else None,
                    "smoothing_slack": s.slack if s else 0.0,
                }
            )
        return rows


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def validate(dataset: Dataset, partition: GroupPartition) -> List[ValidationIssue]:
    """Return every violated invariant of (dataset, partition); empty list means ok."""
    issues: List[ValidationIssue] = []
    tasks = getattr(dataset, "tasks", ())
    if len(tasks) < 1:
        issues.append(ValidationIssue("empty dataset", "dataset has no tasks"))

    seen_names = set()
    d_ref = None
    for m, task in enumerate(tasks):
        label = f"task {m} ('{task.name}')"
        if task.name in seen_names:
            issues.append(ValidationIssue("duplicate task name", f"{label} repeats a name"))
        seen_names.add(task.name)

        x = task.x
        if x.ndim != 2:
            issues.append(ValidationIssue("dimension mismatch", f"{label}: features are {x.ndim}-D, expected 2-D"))
            continue
        if d_ref is None:
            d_ref = x.shape[1]
        elif x.shape[1] != d_ref:
            issues.append(ValidationIssue("dimension mismatch", f"{label}: D={x.shape[1]}, expected {d_ref}"))
        if x.shape[0] != task.y.shape[0]:
            issues.append(
                ValidationIssue("dimension mismatch", f"{label}: {x.shape[0]} feature rows vs {task.y.shape[0]} labels")
            )
        if not np.all(np.isfinite(x)):
            issues.append(ValidationIssue("non-finite features", f"{label}: NaN or Inf in features"))
        bad = ~np.isin(task.y, (-1.0, 1.0))
        if np.any(bad):
            first = int(np.flatnonzero(bad)[0])
            issues.append(ValidationIssue("invalid label", f"{label}: label {task.y[first]!r} at row {first}"))

    m_total = len(tasks)
    groups = getattr(partition, "groups", ())
    if len(groups) < 1:
        issues.append(ValidationIssue("empty partition", "partition has no groups"))
    owner: Dict[int, str] = {}
    for name, members in groups:
        if len(members) == 0:
            issues.append(ValidationIssue("empty group", f"group '{name}' has no members"))
        for i in members:
            if not 0 <= i < m_total:
                issues.append(ValidationIssue("unknown task", f"group '{name}' names task {i}, M={m_total}"))
            elif i in owner:
                issues.append(
                    ValidationIssue("overlapping groups", f"task {i} is in both '{owner[i]}' and '{name}'")
                )
            else:
                owner[i] = name
    for i in range(m_total):
        if i not in owner:
            issues.append(ValidationIssue("uncovered task", f"task {i} ('{tasks[i].name}') belongs to no group"))
    return issues


def ensure_valid(dataset: Dataset, partition: GroupPartition) -> None:
    issues = validate(dataset, partition)
    if issues:
        raise DataError(f"{len(issues)} data problem(s): {issues[0]}", [str(i) for i in issues])


def task_seed(seed: int, name: str) -> List[int]:
    """Per-task sub-seed; depends on the task name, not its position."""
    return [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]


def stratified_folds(dataset: Dataset, folds: int, seed: int) -> Tuple[List[np.ndarray], List[str]]:
    """
    Assign each sample of each task to a fold in 0..folds-1.

    Positives and negatives are dealt round-robin after a per-task seeded shuffle.
    Tasks with fewer than `folds` positives or negatives are split without
    stratification; their names are returned so callers can warn.
    """
    if folds < 2:
        raise DataError(f"folds must be >= 2, got {folds}")
    assignments: List[np.ndarray] = []
    unstratified: List[str] = []
    for task in dataset.tasks:
        rng = np.random.default_rng(task_seed(seed, task.name))
        fold_of = np.empty(task.n, dtype=np.intp)
        pos = np.flatnonzero(task.y > 0)
        neg = np.flatnonzero(task.y <= 0)
        if len(pos) < folds or len(neg) < folds:
            unstratified.append(task.name)
            order = rng.permutation(task.n)
            fold_of[order] = np.arange(task.n) % folds
        else:
            for idx in (pos, neg):
                order = rng.permutation(idx)
                fold_of[order] = np.arange(len(order)) % folds
        assignments.append(fold_of)
    return assignments, unstratified
