"""Segment-sliced retrieval metrics and run-to-run comparison.

Every eval example has exactly one target, so Recall@k and HitRate@k coincide
(both are the hit fraction) and per-example NDCG@k is 1/log2(rank+1) at the
1-based hit rank, 0 on a miss. Metrics are reported overall and per
familiarity segment; candidates below rank k never matter.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .dataset import TrainingExample
from .decoder import DecodeConfig, SidTrie, beam_search, sample_decode
from .model import ScorerParams, context_from_example
from .quantizer import SemanticId
from .sid_index import CONTROL_FAMILIAR, LookupTable, resolve

SEGMENT_OVERALL = "overall"
SEGMENT_FAMILIAR = "nonhab_familiar"
SEGMENT_UNFAMILIAR = "nonhab_unfamiliar"
SEGMENTS = (SEGMENT_OVERALL, SEGMENT_FAMILIAR, SEGMENT_UNFAMILIAR)

METRICS = ("recall", "hitrate", "ndcg")


@dataclass(frozen=True)
class SegmentMetrics:
    count: int
    recall: float | None
    hitrate: float | None
    ndcg: float | None


@dataclass(frozen=True)
class EvalReport:
    k: int
    segments: dict[str, SegmentMetrics]
    eval_set_id: str
    metadata: dict[str, Any]


def evaluate(candidates_per_example: Sequence[Sequence[Any]],
             examples: Sequence[TrainingExample], k: int,
             sid_level: bool = False,
             metadata: Mapping[str, Any] | None = None) -> EvalReport:
    """Score ranked candidate lists against the examples' single targets.

    Candidates are episode ids (post collision resolution) by default, or
    SIDs when ``sid_level`` is set.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not examples:
        raise ValueError("empty eval set")
    if len(candidates_per_example) != len(examples):
        raise ValueError("one candidate list per example required")

    ranks: dict[str, list[int | None]] = {s: [] for s in SEGMENTS}
    for candidates, ex in zip(candidates_per_example, examples):
        target = tuple(ex.target_sid) if sid_level else ex.target_episode_id
        rank = None
        for i, candidate in enumerate(list(candidates)[:k]):
            value = tuple(candidate) if sid_level else candidate
            if value == target:
                rank = i + 1
                break
        segment = (SEGMENT_FAMILIAR if ex.control == CONTROL_FAMILIAR
                   else SEGMENT_UNFAMILIAR)
        ranks[SEGMENT_OVERALL].append(rank)
        ranks[segment].append(rank)

    segments = {name: _segment_metrics(rs) for name, rs in ranks.items()}
    meta = dict(metadata or {})
    meta["sid_level"] = sid_level
    return EvalReport(
        k=k,
        segments=segments,
        eval_set_id=eval_set_id(examples),
        metadata=meta,
    )


def _segment_metrics(ranks: Sequence[int | None]) -> SegmentMetrics:
    if not ranks:
        return SegmentMetrics(count=0, recall=None, hitrate=None, ndcg=None)
    hits = sum(1 for r in ranks if r is not None)
    ndcg = sum(1.0 / math.log2(r + 1) for r in ranks if r is not None)
    n = len(ranks)
    return SegmentMetrics(count=n, recall=hits / n, hitrate=hits / n, ndcg=ndcg / n)


def eval_set_id(examples: Sequence[TrainingExample]) -> str:
    digest = hashlib.blake2b(digest_size=8)
    for key in sorted((ex.user_id, ex.timestamp, ex.target_episode_id) for ex in examples):
        digest.update(f"{key[0]}|{key[1]}|{key[2]};".encode())
    return digest.hexdigest()


def compare(report_a: EvalReport, report_b: EvalReport) -> dict[str, dict[str, float | None]]:
    """Relative deltas (b-a)/a per segment and metric; a zero or missing
    baseline yields None rather than a number."""
    if report_a.k != report_b.k:
        raise ValueError(f"reports use different k: {report_a.k} vs {report_b.k}")
    if report_a.eval_set_id != report_b.eval_set_id:
        raise ValueError("reports were computed on different eval sets")
    out: dict[str, dict[str, float | None]] = {}
    for segment in SEGMENTS:
        a = report_a.segments[segment]
        b = report_b.segments[segment]
        deltas: dict[str, float | None] = {}
        for metric in METRICS:
            va, vb = getattr(a, metric), getattr(b, metric)
            if va is None or vb is None or va == 0.0:
                deltas[metric] = None
            else:
                deltas[metric] = (vb - va) / va
        out[segment] = deltas
    return out


def rank_candidates(params: ScorerParams, examples: Sequence[TrainingExample],
                    lookup: LookupTable, decode: DecodeConfig, k: int,
                    eligible: Callable[[str], bool] | None = None,
                    use_control: bool = True) -> list[list[str]]:
    """Decode candidate SIDs per example and resolve them to episodes with a
    growing exclude set, mirroring the serving path."""
    trie = SidTrie.from_lookup(lookup) if decode.constrained else None
    ranked: list[list[str]] = []
    for ex in examples:
        ctx = context_from_example(ex, use_control)
        if decode.mode == "beam":
            sids = beam_search(params, ctx, decode, trie)
        else:
            sids = sample_decode(params, ctx, decode, trie)
        exclude: set[str] = set()
        episodes: list[str] = []
        for sid, _score in sids:
            episode_id = resolve(lookup, sid, eligible, exclude)
            if episode_id is not None:
                episodes.append(episode_id)
                exclude.add(episode_id)
            if len(episodes) >= k:
                break
        ranked.append(episodes)
    return ranked


def rank_sids(params: ScorerParams, examples: Sequence[TrainingExample],
              decode: DecodeConfig, trie: SidTrie | None = None,
              use_control: bool = True) -> list[list[SemanticId]]:
    """Raw decoded SIDs per example, for SID-level and prefix-ceiling studies."""
    out: list[list[SemanticId]] = []
    for ex in examples:
        ctx = context_from_example(ex, use_control)
        if decode.mode == "beam":
            sids = beam_search(params, ctx, decode, trie)
        else:
            sids = sample_decode(params, ctx, decode, trie)
        out.append([sid for sid, _ in sids])
    return out


def format_report(report: EvalReport) -> str:
    lines = [f"k={report.k}  eval_set={report.eval_set_id}"]
    header = f"{'segment':<20}{'count':>7}{'recall':>10}{'hitrate':>10}{'ndcg':>10}"
    lines.append(header)
    for segment in SEGMENTS:
        sm = report.segments[segment]
        def fmt(v: float | None) -> str:
            return "-" if v is None else f"{v:.4f}"
        lines.append(f"{segment:<20}{sm.count:>7}{fmt(sm.recall):>10}"
                     f"{fmt(sm.hitrate):>10}{fmt(sm.ndcg):>10}")
    return "\n".join(lines)


def write_report(path: str | Path, report: EvalReport) -> None:
    """Key/value lines: one metric per line plus identifying metadata."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"k={report.k}\n")
        fh.write(f"eval_set_id={report.eval_set_id}\n")
        for key, value in sorted(report.metadata.items()):
            fh.write(f"meta.{key}={value}\n")
        for segment in SEGMENTS:
            sm = report.segments[segment]
            fh.write(f"{segment}.count={sm.count}\n")
            for metric in METRICS:
                value = getattr(sm, metric)
                fh.write(f"{segment}.{metric}_at_{report.k}="
                         f"{'' if value is None else repr(value)}\n")
