"""Candidate SID generation: beam search, greedy, and ancestral sampling.

Sequences have fixed length M, so decoding is M rounds of expansion with no
length normalization. Beam scores are exact sums of per-level log-softmax
values; ties break on the lexicographically smaller code tuple, which makes
the output order fully reproducible. Constrained mode restricts expansions
to prefixes that exist in the lookup table, so every emitted SID resolves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import PromptContext, ScorerParams, context_vector, log_softmax, prefix_logits
from .quantizer import SemanticId
from .sid_index import LookupTable

MODES = ("beam", "greedy", "sample")


@dataclass(frozen=True)
class DecodeConfig:
    mode: str = "beam"
    beam_width: int = 30
    temperature: float = 1.0
    top_p: float = 0.9
    constrained: bool = False
    seed: int = 0
    num_candidates: int = 30

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be >= 1")

    def metadata(self) -> dict:
        return {
            "mode": self.mode,
            "beam_width": self.beam_width,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "constrained": self.constrained,
            "seed": self.seed,
            "num_candidates": self.num_candidates,
        }


class SidTrie:
    """Prefix tree over the lookup table's SIDs; children come back sorted."""

    def __init__(self, sids: Sequence[SemanticId]):
        self._children: dict[tuple[int, ...], list[int]] = {}
        seen: set[tuple[tuple[int, ...], int]] = set()
        for sid in sids:
            for i in range(len(sid)):
                key = (tuple(sid[:i]), sid[i])
                if key not in seen:
                    seen.add(key)
                    self._children.setdefault(key[0], []).append(sid[i])
        for children in self._children.values():
            children.sort()

    @classmethod
    def from_lookup(cls, lookup: LookupTable) -> "SidTrie":
        return cls(list(lookup.groups))

    def children(self, prefix: tuple[int, ...]) -> list[int]:
        return self._children.get(prefix, [])

    def __len__(self) -> int:
        return len(self._children.get((), []))


def beam_search(params: ScorerParams, ctx: PromptContext, config: DecodeConfig,
                trie: SidTrie | None = None) -> list[tuple[SemanticId, float]]:
    """Width-B beam over the M levels; output sorted by log-prob descending,
    then code tuple ascending."""
    if config.mode != "beam":
        raise ValueError(f"beam_search called with mode {config.mode!r}")
    trie = _check_trie(config, trie)
    m = params.config.m
    vec = context_vector(params, ctx)

    beams: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    for level in range(m):
        prefixes = np.array([b[0] for b in beams], dtype=np.int64).reshape(len(beams), level)
        logp = log_softmax(prefix_logits(params, vec, prefixes, level))
        candidates: list[tuple[tuple[int, ...], float]] = []
        for row, (prefix, score) in enumerate(beams):
            codes = trie.children(prefix) if trie is not None else range(params.config.k)
            for code in codes:
                candidates.append((prefix + (code,), score + float(logp[row, code])))
        candidates.sort(key=lambda c: (-c[1], c[0]))
        beams = candidates[:config.beam_width]
    return [(sid, score) for sid, score in beams]


def sample_decode(params: ScorerParams, ctx: PromptContext, config: DecodeConfig,
                  trie: SidTrie | None = None) -> list[tuple[SemanticId, float]]:
    """Greedy (argmax per level) or ancestral sampling with temperature and
    nucleus truncation. Reported scores are always log-probs under the
    untempered model, so they are comparable to beam scores. Sampled draws
    are returned raw, duplicates included."""
    if config.mode not in ("greedy", "sample"):
        raise ValueError(f"sample_decode called with mode {config.mode!r}")
    trie = _check_trie(config, trie)
    m, k = params.config.m, params.config.k
    vec = context_vector(params, ctx)

    n = 1 if config.mode == "greedy" else config.num_candidates
    rng = np.random.default_rng(config.seed)
    prefixes = np.zeros((n, 0), dtype=np.int64)
    scores = np.zeros(n)
    for level in range(m):
        logits = prefix_logits(params, vec, prefixes, level)
        logp = log_softmax(logits)
        picks = np.empty(n, dtype=np.int64)
        for row in range(n):
            allowed = (np.array(trie.children(tuple(prefixes[row])), dtype=np.int64)
                       if trie is not None else np.arange(k))
            if config.mode == "greedy":
                picks[row] = allowed[int(np.argmax(logits[row, allowed]))]
            else:
                picks[row] = _nucleus_sample(logits[row, allowed], allowed,
                                             config.temperature, config.top_p, rng)
        scores += logp[np.arange(n), picks]
        prefixes = np.hstack([prefixes, picks[:, None]])
    return [(tuple(int(c) for c in prefixes[i]), float(scores[i])) for i in range(n)]


def _nucleus_sample(logits: np.ndarray, allowed: np.ndarray, temperature: float,
                    top_p: float, rng: np.random.Generator) -> int:
    probs = np.exp(log_softmax(logits / temperature))
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cut = int(np.searchsorted(cumulative, top_p, side="left"))
    cut = min(cut, len(order) - 1)
    kept = order[:cut + 1]
    kept_probs = probs[kept] / probs[kept].sum()
    u = rng.random()
    pick = int(np.searchsorted(np.cumsum(kept_probs), u, side="right"))
    pick = min(pick, len(kept) - 1)
    return int(allowed[kept[pick]])


def _check_trie(config: DecodeConfig, trie: SidTrie | None) -> SidTrie | None:
    if not config.constrained:
        return None
    if trie is None or len(trie) == 0:
        raise ValueError("constrained decoding requires a non-empty trie")
    return trie


def prefix_ceiling_recall(candidates_per_example: Sequence[Sequence[SemanticId]],
                          targets: Sequence[SemanticId], n_prefix: int, k: int) -> float:
    """Fraction of examples where some top-k candidate matches the target's
    first ``n_prefix`` codes; n_prefix = M reduces to ordinary SID recall."""
    if not targets:
        raise ValueError("no examples")
    m = len(targets[0])
    if not 1 <= n_prefix <= m:
        raise ValueError(f"n_prefix must be in [1, {m}], got {n_prefix}")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = 0
    for candidates, target in zip(candidates_per_example, targets):
        head = tuple(target[:n_prefix])
        if any(tuple(c[:n_prefix]) == head for c in list(candidates)[:k]):
            hits += 1
    return hits / len(targets)
