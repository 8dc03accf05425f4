"""Prompt ensembles built from a black-box masked language model."""

from ._core import (
    Dataset,
    DimensionMismatch,
    Ensemble,
    Error,
    ExhaustedRetries,
    FormatError,
    InsufficientExamples,
    IoError,
    LabeledExample,
    MultipleMasks,
    NoValidCombination,
    PlacementMismatch,
    PromptTemplate,
    ProtocolError,
    SyntheticOracle,
    VocabMismatch,
    accuracy,
    boost,
    decode_pbm,
    encode_pbm,
    l1_assignment,
    learn_verbalizer,
    load_prompts,
    make_synthetic_corpus,
    render,
    sample_few_shot,
    samme_alpha,
    score_matrix,
)

__all__ = [name for name in dir() if not name.startswith("_")]
