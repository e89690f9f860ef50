import numpy as np
import pytest

from src.model import Dataset, GroupPartition, LatentModel, TaskData


def random_dataset(rng, d=20, m=6, n=30, names=None, w=None):
    """Linearly separable pools, one per task, labels from a random W."""
    w = rng.standard_normal((d, m)) if w is None else w
    names = names or [f"t{j}" for j in range(m)]
    tasks = []
    for j in range(m):
        x = rng.standard_normal((n, d))
        y = np.where(x @ w[:, j] >= 0.0, 1.0, -1.0)
        tasks.append(TaskData(names[j], x, y))
    return Dataset(tuple(tasks))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_instance(rng):
    """D=20, K=5, M=6, G=2, N_m=30."""
    dataset = random_dataset(rng)
    partition = GroupPartition.contiguous(6, 2)
    model = LatentModel(rng.standard_normal((20, 5)), rng.standard_normal((5, 6)), tuple(dataset.names))
    return dataset, partition, model
