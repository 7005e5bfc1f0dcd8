"""Desk-scale text-to-text pipeline for biomedical NLP tasks."""

from .corruption import CorruptionExample, SpanCorruptionConfig, apply_span_mask, corrupt, reconstruct
from .errors import (
    CheckpointError,
    CodecError,
    ConfigError,
    CorruptionError,
    DataFormatError,
    ModelError,
    T2TBioError,
    VocabError,
)
from .model import Batch, ModelConfig, forward, greedy_decode, init_params, loss_and_grads, make_batch
from .task_codec import (
    EntitySpan,
    QAExample,
    TaskExample,
    decode_label,
    decode_ner,
    encode_doc,
    encode_ner,
    encode_nli,
    encode_qa,
    encode_re,
)
from .trainer import CorpusEntry, MixtureEntry, TrainConfig, finetune, optimizer_step, pretrain
from .vocab import Vocabulary, load_vocab, save_vocab, train_vocab

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "CheckpointError",
    "CodecError",
    "ConfigError",
    "CorpusEntry",
    "CorruptionError",
    "CorruptionExample",
    "DataFormatError",
    "EntitySpan",
    "MixtureEntry",
    "ModelConfig",
    "ModelError",
    "QAExample",
    "SpanCorruptionConfig",
    "T2TBioError",
    "TaskExample",
    "TrainConfig",
    "Vocabulary",
    "VocabError",
    "apply_span_mask",
    "corrupt",
    "decode_label",
    "decode_ner",
    "encode_doc",
    "encode_ner",
    "encode_nli",
    "encode_qa",
    "encode_re",
    "finetune",
    "forward",
    "greedy_decode",
    "init_params",
    "load_vocab",
    "loss_and_grads",
    "make_batch",
    "optimizer_step",
    "pretrain",
    "reconstruct",
    "save_vocab",
    "train_vocab",
]
