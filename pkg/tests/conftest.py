"""Shared fixtures: tiny models, datasets, and numeric helpers."""

import numpy as np
import pytest

from adamf.data import FeatureTable, TripleDataset, Vocab
from adamf.model import Model, ModelConfig, init_params
from adamf.rng import SeededRng


def make_dataset(n_entities, triples_by_split, n_relations=1):
    """Hand-built TripleDataset over anonymous entity/relation names."""
    vocab = Vocab()
    for i in range(n_entities):
        vocab.add_entity(f"e{i}")
    for r in range(n_relations):
        vocab.add_relation(f"r{r}")
    arrays = {}
    for split in ("train", "valid", "test"):
        rows = triples_by_split.get(split, [])
        arrays[split] = np.array(rows, dtype=np.int64).reshape(-1, 3)
    filter_tails, filter_heads = {}, {}
    for arr in arrays.values():
        for h, r, t in arr:
            filter_tails.setdefault((int(h), int(r)), set()).add(int(t))
            filter_heads.setdefault((int(r), int(t)), set()).add(int(h))
    return TripleDataset(vocab, arrays["train"], arrays["valid"],
                         arrays["test"], filter_tails, filter_heads)


def random_features(n_entities, dim, modality, rng, absent=()):
    present = np.ones(n_entities, dtype=bool)
    for i in absent:
        present[i] = False
    matrix = rng.normals(n_entities * dim).reshape(n_entities, dim)
    return FeatureTable(modality, dim, matrix, present)


def small_model(n_entities=6, n_relations=2, d=3, seed=0, absent_v=(),
                absent_t=(), **cfg_kwargs):
    """Random double-precision model over tiny feature tables."""
    cfg_kwargs.setdefault("fusion_mode", "adaptive")
    cfg_kwargs.setdefault("precision", "double")
    cfg = ModelConfig(d=d, visual_dim=4, textual_dim=5, noise_dim=3,
                      gamma=4.0, **cfg_kwargs)
    store = init_params(cfg, n_entities, n_relations, seed=seed)
    rng = SeededRng(seed, stream="fixture-features")
    features = {}
    if "v" in cfg.projected_modalities:
        features["v"] = random_features(n_entities, 4, "v",
                                        rng.substream("v"), absent_v)
    if "t" in cfg.projected_modalities:
        features["t"] = random_features(n_entities, 5, "t",
                                        rng.substream("t"), absent_t)
    return Model(cfg, store, features)


def line_model(positions, gamma=4.0, n_relations=1):
    """Structural-only model with hand-set 1-complex-dim embeddings.

    Entity i sits at (positions[i], 0) in the complex plane and every
    relation is the identity rotation, so F((i, r, j)) = |pos_i - pos_j|.
    """
    cfg = ModelConfig(d=1, visual_dim=2, textual_dim=2, noise_dim=2,
                      modalities=("s",), gamma=gamma, precision="double")
    store = init_params(cfg, len(positions), n_relations, seed=0)
    coords = np.zeros((len(positions), 2))
    coords[:, 0] = positions
    store.set("entity.structural", coords)
    store.set("relation.phase", np.zeros((n_relations, 1)))
    return Model(cfg, store)


@pytest.fixture
def rng():
    return SeededRng(1234)
