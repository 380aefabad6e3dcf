"""JSONL dataset loading, a self-contained word tokenizer, and collation.

The dataset is the pipeline's export: one {"prompt", "target"} object per
line. Labels mask every prompt position with -100 so the loss covers only
the target tokens (plus the end marker).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

IGNORE_INDEX = -100


class DatasetSchemaError(ValueError):
    """A dataset line is not a {prompt, target} object."""


@dataclass(frozen=True)
class SftExample:
    prompt: str
    target: str


def load_sft_dataset(path) -> list[SftExample]:
    examples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetSchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict) or not isinstance(record.get("prompt"), str) \
                or not isinstance(record.get("target"), str):
            raise DatasetSchemaError(
                f"{path}:{lineno}: expected an object with string 'prompt' and 'target'"
            )
        examples.append(SftExample(prompt=record["prompt"], target=record["target"]))
    return examples


class WordTokenizer:
    """Whitespace word-level tokenizer built from the dataset itself.

    Keeps the toy CPU path free of any pretrained download. Ids 0..2 are
    pad, end-of-sequence, and unknown.
    """

    PAD_ID = 0
    EOS_ID = 1
    UNK_ID = 2

    def __init__(self, vocab: list[str]):
        self._tokens = list(vocab)
        self._ids = {tok: i + 3 for i, tok in enumerate(self._tokens)}

    @classmethod
    def from_texts(cls, texts) -> "WordTokenizer":
        seen = set()
        for text in texts:
            seen.update(text.split())
        return cls(sorted(seen))

    @property
    def vocab_size(self) -> int:
        return len(self._tokens) + 3

    def encode(self, text: str) -> list[int]:
        return [self._ids.get(tok, self.UNK_ID) for tok in text.split()]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self._tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "WordTokenizer":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


def encode_example(tokenizer: WordTokenizer, example: SftExample, max_seq_len: int):
    """(input_ids, labels) with the prompt masked out of the loss."""
    prompt_ids = tokenizer.encode(example.prompt)
    target_ids = tokenizer.encode(example.target) + [tokenizer.EOS_ID]
    overflow = len(prompt_ids) + len(target_ids) - max_seq_len
    if overflow > 0:
        prompt_ids = prompt_ids[: max(1, len(prompt_ids) - overflow)]
    input_ids = prompt_ids + target_ids
    labels = [IGNORE_INDEX] * len(prompt_ids) + list(target_ids)
    return input_ids[:max_seq_len], labels[:max_seq_len]


def collate(encoded_batch, pad_id: int = WordTokenizer.PAD_ID) -> dict[str, torch.Tensor]:
    width = max(len(ids) for ids, _ in encoded_batch)
    input_ids, attention, labels = [], [], []
    for ids, labs in encoded_batch:
        padding = width - len(ids)
        input_ids.append(ids + [pad_id] * padding)
        attention.append([1] * len(ids) + [0] * padding)
        labels.append(labs + [IGNORE_INDEX] * padding)
    return {
        "input_ids": torch.tensor(input_ids, dtype=torch.long),
        "attention_mask": torch.tensor(attention, dtype=torch.long),
        "labels": torch.tensor(labels, dtype=torch.long),
    }
