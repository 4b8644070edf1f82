import numpy as np
import pytest

from exact_alloc.corpus import Document
from exact_alloc.packer import PackPolicy, pack_documents


@pytest.fixture
def two_segment_stream():
    """One L=8 sequence holding a 5-token and a 3-token document."""
    docs = [
        Document("a", np.arange(1, 6, dtype=np.uint32)),
        Document("b", np.arange(11, 14, dtype=np.uint32)),
    ]
    return pack_documents(docs, PackPolicy(seq_len=8), vocab_size=32)


@pytest.fixture
def random_docs():
    def make(rng, n_docs, max_len, vocab=100):
        return [
            Document(
                f"d{i}",
                rng.integers(0, vocab, size=int(rng.integers(1, max_len + 1))).astype(np.uint32),
            )
            for i in range(n_docs)
        ]

    return make
