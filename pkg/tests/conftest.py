import sys
from pathlib import Path

import numpy as np
import pytest

# Allow running straight from a source checkout (the compiled backend then
# requires an editable install; the numpy fallback is picked up otherwise).
SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from tabdro.dataset import EncodedDataset  # noqa: E402
from tabdro.kernels import BACKEND  # noqa: E402
from tabdro.schema import CATEGORICAL, CONTINUOUS, FeatureSpec, Schema  # noqa: E402


def assert_backend_equal(a, b):
    """Bit-exact under the compiled kernels; the numpy fallback's BLAS picks
    shape-dependent code paths, so there equality holds to float rounding."""
    if BACKEND == "compiled":
        assert np.array_equal(a, b)
    else:
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def small_schema(cards=(3, 4, 2), n_cont=1) -> Schema:
    feats = [
        FeatureSpec(name=f"cat{j}", kind=CATEGORICAL,
                    vocabulary=[f"v{i}" for i in range(c)])
        for j, c in enumerate(cards)
    ]
    feats += [FeatureSpec(name=f"num{l}", kind=CONTINUOUS, mean=0.0, std=1.0)
              for l in range(n_cont)]
    return Schema(features=feats, target_name="y", target_values=["no", "yes"])


def random_dataset(schema: Schema, n: int, seed: int) -> EncodedDataset:
    rng = np.random.default_rng(seed)
    cards = [f.cardinality for f in schema.categorical]
    cat = np.column_stack([rng.integers(0, c, n) for c in cards]).astype(np.int64)
    cat = cat.reshape(n, len(cards))
    cont = rng.normal(size=(n, schema.n_continuous))
    labels = rng.integers(0, 2, n).astype(np.int64)
    if labels.sum() == 0:
        labels[0] = 1
    elif labels.sum() == n:
        labels[0] = 0
    return EncodedDataset(cat=cat, cont=cont, labels=labels,
                          row_ids=np.arange(n, dtype=np.int64), schema=schema)


@pytest.fixture
def tiny_schema():
    return small_schema()


@pytest.fixture
def tiny_dataset(tiny_schema):
    return random_dataset(tiny_schema, 40, seed=11)
