from pathlib import Path

import numpy as np
import pytest

from hgcn_absa.corpus import build_vocab, collect_labels, collect_relations, load_dataset
from hgcn_absa.model import ModelConfig, init_parameters

DATA = Path(__file__).resolve().parents[1] / "data"


def small_config(**overrides) -> ModelConfig:
    """Tiny widths so finite-difference checks stay fast."""
    base = dict(embedding_dim=8, hidden_dim=3, label_dim=4, relation_dim=3,
                cgcn_layers=2, dgcn_layers=2, epochs=2, batch_size=4, seed=11)
    base.update(overrides)
    return ModelConfig(**base)


def build_params(corpus, config, seed=0):
    return init_parameters(config, build_vocab(corpus), collect_labels(corpus),
                           collect_relations(corpus),
                           rng=np.random.default_rng(seed))


@pytest.fixture(scope="session")
def demo_corpus():
    return load_dataset(DATA / "demo.json")
