import pytest

from cybernews.embed import SkipGramConfig, train_skipgram
from cybernews.synthdata import planted_cluster_docs

# Exact-mode config that cleanly separates the planted clusters; shared by the
# embedding, discovery, and acceptance tests.
PLANTED_CONFIG = SkipGramConfig(
    dimension=15,
    window=5,
    epochs=100,
    learning_rate=0.5,
    min_count=1,
    negative_samples=0,
    seed=42,
)


@pytest.fixture(scope="session")
def planted():
    docs, cluster_a, cluster_b = planted_cluster_docs()
    model = train_skipgram(docs, PLANTED_CONFIG)
    return model, cluster_a, cluster_b
