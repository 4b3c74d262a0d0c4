"""Tiny byte-level causal language model with low-rank adapters.

The desk-scale stand-in for a large instruction-tuned base: a small
transformer over raw UTF-8 bytes plus three special tokens. The base weights
are frozen after seeded initialization; only the low-rank adapter matrices
train, mirroring how adapter fine-tuning composes with a fixed base model.
Chat examples are encoded as BOS + query bytes + ANSWER + answer bytes + EOS
with no system prompt.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

BOS = 256
ANSWER = 257
EOS = 258
VOCAB_SIZE = 259


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    max_seq_len: int = 256
    adapter_rank: int = 8
    adapter_alpha: float = 16.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def encode_example(query: str, answer: str, max_seq_len: int) -> tuple[list[int], int]:
    """Byte-encode one chat example; returns (token ids, answer start index).

    The answer start index is the position of the ANSWER token, so loss
    masking can cover exactly the tokens the assistant produces.
    """
    query_bytes = list(query.encode("utf-8"))
    answer_bytes = list(answer.encode("utf-8"))
    ids = [BOS] + query_bytes + [ANSWER] + answer_bytes + [EOS]
    answer_start = 1 + len(query_bytes)
    if len(ids) > max_seq_len:
        # keep the prompt head and as much of the answer as fits
        ids = ids[: max_seq_len - 1] + [EOS]
        answer_start = min(answer_start, max_seq_len - 2)
    return ids, answer_start


def encode_prompt(query: str, max_seq_len: int) -> list[int]:
    ids = [BOS] + list(query.encode("utf-8")) + [ANSWER]
    return ids[-max_seq_len:]


def decode_bytes(ids: list[int]) -> str:
    return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


class LoRALinear(nn.Module):
    """Frozen linear layer plus a trainable low-rank update A @ B."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float) -> None:
        super().__init__()
        self.base = base
        for param in self.base.parameters():
            param.requires_grad_(False)
        self.lora_a = nn.Parameter(torch.zeros(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.normal_(self.lora_a, std=1.0 / rank)
        self.scale = alpha / rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scale * (x @ self.lora_a.T @ self.lora_b.T)


class Block(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        d = config.d_model
        self.ln1 = nn.LayerNorm(d)
        self.ln2 = nn.LayerNorm(d)
        self.n_heads = config.n_heads
        self.qkv = LoRALinear(
            nn.Linear(d, 3 * d), config.adapter_rank, config.adapter_alpha
        )
        self.proj = LoRALinear(
            nn.Linear(d, d), config.adapter_rank, config.adapter_alpha
        )
        self.mlp = nn.Sequential(
            nn.Linear(d, 4 * d), nn.GELU(), nn.Linear(4 * d, d)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln1(x)
        q, k, v = self.qkv(h).split(d, dim=2)
        shape = (b, t, self.n_heads, d // self.n_heads)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        attn = nn.functional.scaled_dot_product_attention(q, k, v, is_causal=True)
        attn = attn.transpose(1, 2).reshape(b, t, d)
        x = x + self.proj(attn)
        return x + self.mlp(self.ln2(x))


class ByteLM(nn.Module):
    """Byte-level causal transformer; only adapter parameters are trainable."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        self.token_emb = nn.Embedding(VOCAB_SIZE, config.d_model)
        self.pos_emb = nn.Embedding(config.max_seq_len, config.d_model)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.n_layers))
        self.ln_out = nn.LayerNorm(config.d_model)
        self.head = nn.Linear(config.d_model, VOCAB_SIZE, bias=False)
        for name, param in self.named_parameters():
            if "lora_" not in name:
                param.requires_grad_(False)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_emb(ids) + self.pos_emb(positions)
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_out(x))

    def adapter_state(self) -> dict[str, torch.Tensor]:
        return {
            name: param.detach().clone()
            for name, param in self.named_parameters()
            if "lora_" in name
        }

    def load_adapter_state(self, state: dict[str, torch.Tensor]) -> None:
        own = dict(self.named_parameters())
        for name, tensor in state.items():
            if name not in own:
                raise KeyError(f"unknown adapter parameter: {name}")
            with torch.no_grad():
                own[name].copy_(tensor)

    @torch.no_grad()
    def greedy_decode(
        self, prompt_ids: list[int], max_new_tokens: int = 64, min_new_tokens: int = 4
    ) -> list[int]:
        """Temperature-0 continuation; EOS is ignored for the first few steps
        so every query receives a nonempty answer."""
        ids = list(prompt_ids)
        generated: list[int] = []
        for step in range(max_new_tokens):
            window = torch.tensor([ids[-self.config.max_seq_len :]])
            logits = self.forward(window)[0, -1]
            if step < min_new_tokens:
                logits[EOS] = -math.inf
                logits[BOS] = -math.inf
                logits[ANSWER] = -math.inf
            nxt = int(torch.argmax(logits).item())
            if nxt == EOS:
                break
            ids.append(nxt)
            generated.append(nxt)
        return generated
