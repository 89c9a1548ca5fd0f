"""Intent-conditioned non-autoregressive semantic parsing at desk scale."""

__version__ = "0.1.0"

from .parse_repr import (FrameSeq, IntentNode, ParseError, SlotNode,
                         frame_length, frame_to_tree, parse_string_to_tree,
                         tokenize, tree_to_frame, validate_frame)
from .synth_data import (GrammarSpec, VocabBundle, build_vocabs,
                         default_grammar, generate_dataset, load_tsv,
                         split_dataset)
from .model import ModelConfig, SemanticParser, SrcVocab, load_model, save_model
from .training import TrainConfig, train
from .beam import (Hypothesis, ar_beam, length_penalty, nar_baseline_beam,
                   nar_proposed_beam, score_hypothesis, select_topk)

__all__ = [
    "FrameSeq", "IntentNode", "ParseError", "SlotNode", "frame_length",
    "frame_to_tree", "parse_string_to_tree", "tokenize", "tree_to_frame",
    "validate_frame", "GrammarSpec", "VocabBundle", "build_vocabs",
    "default_grammar", "generate_dataset", "load_tsv", "split_dataset",
    "ModelConfig", "SemanticParser", "SrcVocab", "load_model", "save_model",
    "TrainConfig", "train", "Hypothesis", "ar_beam", "length_penalty",
    "nar_baseline_beam", "nar_proposed_beam", "score_hypothesis",
    "select_topk",
]
