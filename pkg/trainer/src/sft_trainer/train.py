"""Training loop: masked-target cross-entropy over low-rank adapters.

Writes an adapter checkpoint plus a JSON training log carrying the
resolved configuration and the loss per step.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .config import DECODER_ONLY, TrainConfig
from .data import WordTokenizer, collate, encode_example, load_sft_dataset
from .lora import inject_lora, load_lora_state, lora_state_dict, mark_only_lora_trainable

logger = logging.getLogger(__name__)

TINY_MODEL_NAME = "tiny-decoder"
ADAPTER_FILE = "adapter.pt"
FULL_STATE_FILE = "model_full.pt"  # built-in tiny base only; real bases reload by id
CONFIG_FILE = "config.json"
LOG_FILE = "training_log.json"
TOKENIZER_FILE = "tokenizer.json"


class OutOfMemoryError(RuntimeError):
    pass


@dataclass
class TrainResult:
    checkpoint_dir: Path
    initial_loss: float
    final_loss: float
    steps: list[dict]


def build_tiny_model(vocab_size: int):
    from transformers import LlamaConfig, LlamaForCausalLM

    config = LlamaConfig(
        vocab_size=vocab_size,
        hidden_size=64,
        intermediate_size=128,
        num_hidden_layers=2,
        num_attention_heads=4,
        num_key_value_heads=4,
        max_position_embeddings=1024,
        pad_token_id=WordTokenizer.PAD_ID,
        eos_token_id=WordTokenizer.EOS_ID,
    )
    return LlamaForCausalLM(config)


def _build_model_and_tokenizer(config: TrainConfig, examples):
    if config.base_model == TINY_MODEL_NAME:
        tokenizer = WordTokenizer.from_texts(
            [e.prompt for e in examples] + [e.target for e in examples]
        )
        return build_tiny_model(tokenizer.vocab_size), tokenizer
    if config.model_kind != DECODER_ONLY:
        raise NotImplementedError(
            "only decoder-only training is implemented; encoder-decoder hyperparameter "
            "defaults are honored in TrainConfig.resolved()"
        )
    from transformers import AutoModelForCausalLM, AutoTokenizer  # requires hub access

    hf_tokenizer = AutoTokenizer.from_pretrained(config.base_model)
    model = AutoModelForCausalLM.from_pretrained(config.base_model)
    return model, _HfTokenizerAdapter(hf_tokenizer)


class _HfTokenizerAdapter:
    """Duck-typed wrapper giving pretrained tokenizers the WordTokenizer surface."""

    def __init__(self, tokenizer):
        self._tok = tokenizer
        self.PAD_ID = tokenizer.pad_token_id or 0
        self.EOS_ID = tokenizer.eos_token_id

    @property
    def vocab_size(self):
        return len(self._tok)

    def encode(self, text):
        return self._tok.encode(text, add_special_tokens=False)

    def save(self, path):
        self._tok.save_pretrained(str(Path(path).parent / "hf_tokenizer"))


def token_weighted_loss(model, batches, device) -> float:
    """Dataset loss in eval mode, averaged over target tokens."""
    model.eval()
    total_nll = 0.0
    total_tokens = 0
    with torch.no_grad():
        for batch in batches:
            batch = {k: v.to(device) for k, v in batch.items()}
            logits = model(input_ids=batch["input_ids"],
                           attention_mask=batch["attention_mask"]).logits
            shifted = logits[:, :-1].reshape(-1, logits.size(-1))
            labels = batch["labels"][:, 1:].reshape(-1)
            nll = nn.functional.cross_entropy(
                shifted.float(), labels, ignore_index=-100, reduction="sum"
            )
            total_nll += float(nll)
            total_tokens += int((labels != -100).sum())
    model.train()
    return total_nll / max(1, total_tokens)


def _make_optimizer(config: TrainConfig, parameters):
    if config.optimizer == "adamw":
        return torch.optim.AdamW(parameters, lr=config.learning_rate,
                                 weight_decay=config.weight_decay)
    if config.optimizer == "adafactor":
        return torch.optim.Adafactor(parameters, lr=config.learning_rate,
                                     weight_decay=config.weight_decay)
    raise ValueError(f"unknown optimizer {config.optimizer!r}")


def _warmup_then_constant(optimizer, warmup_steps: int):
    def multiplier(step: int) -> float:
        return min(1.0, (step + 1) / max(1, warmup_steps))

    return torch.optim.lr_scheduler.LambdaLR(optimizer, multiplier)


def train(dataset_path, config: TrainConfig, out_dir, device: str | None = None) -> TrainResult:
    """Fine-tune adapters on the exported dataset; returns the run summary.

    The checkpoint directory holds the adapter tensors, the resolved
    configuration echo, the tokenizer, and a per-step loss log.
    """
    config = config.resolved()
    device = device or ("cuda" if torch.cuda.is_available() else "cpu")
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)

    examples = load_sft_dataset(dataset_path)
    if not examples:
        raise ValueError(f"dataset {dataset_path} is empty")
    model, tokenizer = _build_model_and_tokenizer(config, examples)
    inject_lora(model, config.lora_targets, config.lora_rank, config.lora_alpha,
                config.lora_dropout, quantize_base=config.quantize_base)
    trainable = mark_only_lora_trainable(model)
    logger.info("trainable adapter parameters: %d", trainable)
    if device == "cuda" and config.precision == "fp16":
        model.half()
        for _, param in model.named_parameters():
            if param.requires_grad:
                param.data = param.data.float()  # adapters stay fp32 for stable updates
    model.to(device)

    encoded = [encode_example(tokenizer, e, config.max_seq_len) for e in examples]

    def epoch_batches():
        order = list(range(len(encoded)))
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            chunk = [encoded[i] for i in order[start:start + config.batch_size]]
            yield collate(chunk, pad_id=tokenizer.PAD_ID)

    eval_batches = [
        collate(encoded[i:i + config.batch_size], pad_id=tokenizer.PAD_ID)
        for i in range(0, len(encoded), config.batch_size)
    ]
    initial_loss = token_weighted_loss(model, eval_batches, device)

    steps_per_epoch = math.ceil(len(encoded) / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    warmup_steps = max(1, round(config.warmup_ratio * total_steps))
    optimizer = _make_optimizer(config, [p for p in model.parameters() if p.requires_grad])
    scheduler = _warmup_then_constant(optimizer, warmup_steps)

    steps: list[dict] = []
    model.train()
    step = 0
    for _ in range(config.epochs):
        for batch in epoch_batches():
            batch = {k: v.to(device) for k, v in batch.items()}
            try:
                loss = model(**batch).loss
                loss.backward()
            except (torch.cuda.OutOfMemoryError, MemoryError) as exc:
                raise OutOfMemoryError(
                    f"out of memory at step {step}; lower batch_size "
                    f"(currently {config.batch_size}) or max_seq_len "
                    f"(currently {config.max_seq_len})"
                ) from exc
            torch.nn.utils.clip_grad_norm_(
                [p for p in model.parameters() if p.requires_grad], config.max_grad_norm
            )
            optimizer.step()
            scheduler.step()
            optimizer.zero_grad()
            steps.append({"step": step, "loss": float(loss.detach()),
                          "lr": scheduler.get_last_lr()[0]})
            step += 1

    final_loss = token_weighted_loss(model, eval_batches, device)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(lora_state_dict(model), out_dir / ADAPTER_FILE)
    if config.base_model == TINY_MODEL_NAME:
        torch.save(model.state_dict(), out_dir / FULL_STATE_FILE)
    (out_dir / CONFIG_FILE).write_text(json.dumps(config.to_dict(), indent=2) + "\n",
                                       encoding="utf-8")
    tokenizer.save(out_dir / TOKENIZER_FILE)
    log = {
        "config": config.to_dict(),
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "trainable_parameters": trainable,
        "steps": steps,
    }
    (out_dir / LOG_FILE).write_text(json.dumps(log, indent=2) + "\n", encoding="utf-8")
    return TrainResult(checkpoint_dir=out_dir, initial_loss=initial_loss,
                       final_loss=final_loss, steps=steps)


def load_checkpoint(checkpoint_dir, device: str = "cpu"):
    """Rebuild the tiny model from a checkpoint directory, adapters loaded."""
    checkpoint_dir = Path(checkpoint_dir)
    config = TrainConfig(**{
        k: (tuple(v) if k == "lora_targets" else v)
        for k, v in json.loads((checkpoint_dir / CONFIG_FILE).read_text()).items()
    })
    if config.base_model != TINY_MODEL_NAME:
        raise NotImplementedError("checkpoint reload is implemented for the built-in tiny model")
    tokenizer = WordTokenizer.load(checkpoint_dir / TOKENIZER_FILE)
    model = build_tiny_model(tokenizer.vocab_size)
    inject_lora(model, config.lora_targets, config.lora_rank, config.lora_alpha,
                config.lora_dropout, quantize_base=config.quantize_base)
    model.load_state_dict(torch.load(checkpoint_dir / FULL_STATE_FILE, weights_only=True))
    load_lora_state(model, torch.load(checkpoint_dir / ADAPTER_FILE, weights_only=True))
    model.to(device)
    model.eval()
    return model, tokenizer, config
