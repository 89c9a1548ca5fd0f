"""Shared fixtures: small corpora and tiny models for fast unit tests."""

import numpy as np
import pytest

from narparse.model import ModelConfig, SemanticParser, SrcVocab
from narparse.synth_data import (build_vocabs, default_grammar,
                                 generate_dataset, split_dataset)


@pytest.fixture(scope="session")
def small_dataset():
    """300 generated (query tokens, tree) pairs; deterministic."""
    return generate_dataset(default_grammar(), seed=11, size=300)


@pytest.fixture(scope="session")
def small_splits(small_dataset):
    return split_dataset(small_dataset, seed=11)


@pytest.fixture(scope="session")
def small_vocab(small_splits):
    return build_vocabs(small_splits[0], pad_even_lengths=True)


@pytest.fixture(scope="session")
def small_src_vocab(small_splits):
    return SrcVocab.build(small_splits[0])


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(d_model=32, enc_layers=1, enc_heads=2, dec_layers=1,
                       dec_heads=2, intent_layers=1, intent_heads=2,
                       length_layers=1, length_heads=2, dropout=0.0,
                       src_emb_dropout=0.0)


def _make(kind, config, vocab, src_vocab, form="span", seed=0):
    return SemanticParser(kind, config, vocab, src_vocab, seed=seed, form=form)


@pytest.fixture(scope="session")
def tiny_proposed(tiny_config, small_vocab, small_src_vocab):
    return _make("proposed", tiny_config, small_vocab, small_src_vocab)


@pytest.fixture(scope="session")
def tiny_baseline(tiny_config, small_vocab, small_src_vocab):
    return _make("baseline", tiny_config, small_vocab, small_src_vocab)


@pytest.fixture(scope="session")
def tiny_ar(tiny_config, small_vocab, small_src_vocab):
    return _make("ar", tiny_config, small_vocab, small_src_vocab, form="index")


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
