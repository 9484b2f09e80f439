import numpy as np
import pytest

from mmsbm_rec import (
    FitConfig, dataset_from_triples, init_params, scale_from_values,
)


@pytest.fixture(scope="session")
def scale5():
    return scale_from_values([1, 2, 3, 4, 5])


@pytest.fixture(scope="session")
def scale_half():
    return scale_from_values(np.arange(0.5, 5.01, 0.5))


@pytest.fixture
def toy_dataset(scale5):
    triples = [
        ("a", "x", 3), ("a", "y", 5), ("a", "z", 4),
        ("b", "x", 1), ("b", "y", 2),
        ("c", "x", 3), ("c", "z", 3),
        ("d", "y", 5), ("d", "z", 4), ("d", "x", 4),
    ]
    return dataset_from_triples(triples, scale5)


def make_random_instance(seed, n_users=4, n_items=4, n_user_groups=2,
                         n_item_groups=2, n_labels=3, n_links=None):
    """Small random dataset plus valid random parameters sized to match.

    Every sampled (user, item) pair is distinct; users or items that end up
    with no links are dropped by the dense re-indexing, and the parameters
    are shaped to the realized dataset.
    """
    rng = np.random.default_rng(seed)
    scale = scale_from_values(np.arange(1, n_labels + 1))
    if n_links is None:
        n_links = max(n_users * 2, n_items * 2)
    n_links = min(n_links, n_users * n_items)
    pairs = rng.choice(n_users * n_items, size=n_links, replace=False)
    triples = [
        (int(code // n_items), int(code % n_items),
         int(rng.integers(n_labels)) + 1)
        for code in pairs
    ]
    dataset = dataset_from_triples(triples, scale)
    config = FitConfig(
        n_user_groups=n_user_groups, n_item_groups=n_item_groups,
        seed=int(rng.integers(2**31)),
    )
    params = init_params(config, dataset.n_users, dataset.n_items, scale)
    return dataset, params
