"""Familiarity labeling and construction of weighted training examples.

A (user, show) pair is habitual at a reference time when its listening total
over the trailing 28 days reaches 10 minutes. The window is half-open:
an event exactly 28 days before the reference time is excluded, an event at
the reference time itself is included. Below the threshold, the pair is
familiar when there is any strictly-earlier listening and unfamiliar
otherwise. Targets of training examples are always non-habitual; histories
may contain anything.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .artifacts import read_jsonl, write_jsonl
from .catalog import Episode, InteractionEvent, UserProfile
from .quantizer import SemanticId
from .sid_index import CONTROL_FAMILIAR, CONTROL_UNFAMILIAR, LookupTable

EXAMPLES_FORMAT = "sidgen.examples"

WINDOW_SECONDS = 28 * 86400
HABITUAL_MINUTES = 10.0


class Familiarity(enum.Enum):
    HABITUAL = "habitual"
    NONHAB_FAMILIAR = "nonhab_familiar"
    NONHAB_UNFAMILIAR = "nonhab_unfamiliar"


@dataclass(frozen=True)
class TrainingExample:
    user_id: str
    history: tuple[tuple[SemanticId, int], ...]  # (sid, timestamp), time-ordered
    user_vector: np.ndarray
    locale: str
    affinity_topics: tuple[int, ...]
    control: str  # "familiar" | "unfamiliar"
    target_sid: SemanticId
    target_episode_id: str
    sample_weight: float
    surface: str
    timestamp: int  # target stream time


@dataclass(frozen=True)
class DatasetConfig:
    history_length: int = 20
    cap_per_episode: int = 5
    exploration_weight: float = 2.0
    surface_mix: Mapping[str, float] | None = None

    def validate(self) -> None:
        if self.history_length < 0:
            raise ValueError("history_length must be >= 0")
        if self.cap_per_episode < 1:
            raise ValueError("cap_per_episode must be >= 1")
        if self.exploration_weight <= 0:
            raise ValueError("exploration_weight must be positive")
        if self.surface_mix is not None:
            if not self.surface_mix or any(v < 0 for v in self.surface_mix.values()):
                raise ValueError("surface_mix must map surfaces to non-negative weights")


def label(events: Sequence[InteractionEvent], ref_time: int) -> Familiarity:
    """Familiarity of one (user, show) pair at ``ref_time``.

    ``events`` must be that pair's streams, time-sorted. Window minutes are
    summed over (ref_time - 28d, ref_time]; lifetime minutes strictly before
    ref_time decide familiar vs unfamiliar below the threshold.
    """
    window_start = ref_time - WINDOW_SECONDS
    window_minutes = 0.0
    lifetime_before = 0.0
    prev = None
    for event in events:
        if prev is not None and event.timestamp < prev:
            raise ValueError("events must be sorted by timestamp")
        prev = event.timestamp
        if window_start < event.timestamp <= ref_time:
            window_minutes += event.listen_minutes
        if event.timestamp < ref_time:
            lifetime_before += event.listen_minutes
    if window_minutes >= HABITUAL_MINUTES:
        return Familiarity.HABITUAL
    if lifetime_before > 0.0:
        return Familiarity.NONHAB_FAMILIAR
    return Familiarity.NONHAB_UNFAMILIAR


def build_examples(events: Sequence[InteractionEvent],
                   profiles: Sequence[UserProfile],
                   lookup: LookupTable,
                   episodes: Sequence[Episode],
                   config: DatasetConfig) -> list[TrainingExample]:
    """One candidate example per non-habitual stream, then deterministic
    popularity capping and optional surface-mix subsampling.

    The history is the user's prior streams as SIDs (most recent last,
    truncated to ``history_length``); habitual streams stay in the history,
    only targets are restricted. The per-episode cap keeps the earliest
    examples (timestamp, then user_id). Output is sorted by (user_id,
    timestamp).
    """
    config.validate()
    profile_of = {p.user_id: p for p in profiles}
    show_of = {e.episode_id: e.show_id for e in episodes}

    ordered = sorted(events, key=lambda e: (e.user_id, e.timestamp, e.episode_id))
    candidates: list[TrainingExample] = []
    user_id = None
    show_events: dict[str, list[InteractionEvent]] = {}
    history: list[tuple[SemanticId, int]] = []
    for event in ordered:
        if event.user_id != user_id:
            user_id = event.user_id
            show_events = {}
            history = []
        profile = profile_of.get(event.user_id)
        if profile is None:
            raise ValueError(f"no profile for user {event.user_id}")
        sid = lookup.sid_of.get(event.episode_id)
        if sid is None:
            raise ValueError(f"episode {event.episode_id} missing from lookup")
        show = show_of.get(event.episode_id)
        if show is None:
            raise ValueError(f"episode {event.episode_id} missing from catalog")

        prior = show_events.setdefault(show, [])
        fam = label(prior, event.timestamp)
        if fam is not Familiarity.HABITUAL:
            control = (CONTROL_FAMILIAR if fam is Familiarity.NONHAB_FAMILIAR
                       else CONTROL_UNFAMILIAR)
            tail = history[len(history) - config.history_length:] if config.history_length else []
            candidates.append(
                TrainingExample(
                    user_id=event.user_id,
                    history=tuple(tail),
                    user_vector=profile.cf_embedding,
                    locale=profile.locale,
                    affinity_topics=profile.affinity_topics,
                    control=control,
                    target_sid=sid,
                    target_episode_id=event.episode_id,
                    sample_weight=config.exploration_weight if event.exploration else 1.0,
                    surface=event.surface,
                    timestamp=event.timestamp,
                )
            )
        prior.append(event)
        history.append((sid, event.timestamp))

    capped = _cap_per_episode(candidates, config.cap_per_episode)
    mixed = _apply_surface_mix(capped, config.surface_mix)
    mixed.sort(key=lambda ex: (ex.user_id, ex.timestamp))
    return mixed


def _cap_per_episode(candidates: list[TrainingExample], cap: int) -> list[TrainingExample]:
    kept: list[TrainingExample] = []
    per_episode: dict[str, int] = {}
    for ex in sorted(candidates, key=lambda ex: (ex.timestamp, ex.user_id)):
        n = per_episode.get(ex.target_episode_id, 0)
        if n < cap:
            per_episode[ex.target_episode_id] = n + 1
            kept.append(ex)
    return kept


def _apply_surface_mix(examples: list[TrainingExample],
                       mix: Mapping[str, float] | None) -> list[TrainingExample]:
    if mix is None:
        return list(examples)
    total_weight = sum(mix.values())
    if total_weight <= 0:
        raise ValueError("surface_mix weights sum to zero")
    shares = {s: w / total_weight for s, w in mix.items() if w > 0}
    by_surface: dict[str, list[TrainingExample]] = {s: [] for s in shares}
    for ex in sorted(examples, key=lambda ex: (ex.user_id, ex.timestamp)):
        if ex.surface in by_surface:
            by_surface[ex.surface].append(ex)
    # largest total where every surface can supply its share
    feasible = min(int(len(by_surface[s]) / p) for s, p in shares.items())
    kept: list[TrainingExample] = []
    for s, p in shares.items():
        kept.extend(by_surface[s][:int(p * feasible + 1e-9)])
    return kept


def split(examples: Sequence[TrainingExample], eval_fraction: float,
          seed: int) -> tuple[list[TrainingExample], list[TrainingExample]]:
    """User-disjoint split: rank users by a seeded hash, the top
    round(eval_fraction * n_users) go to the eval side."""
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must be in (0, 1)")
    users = sorted({ex.user_id for ex in examples})
    if len(users) < 2:
        raise ValueError(f"need at least 2 users to split, got {len(users)}")

    def score(user_id: str) -> int:
        digest = hashlib.blake2b(f"{seed}:{user_id}".encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little")

    ranked = sorted(users, key=lambda u: (score(u), u))
    n_eval = int(round(eval_fraction * len(users)))
    n_eval = min(max(n_eval, 1), len(users) - 1)
    eval_users = set(ranked[:n_eval])
    train = [ex for ex in examples if ex.user_id not in eval_users]
    evals = [ex for ex in examples if ex.user_id in eval_users]
    if not train or not evals:
        raise ValueError("degenerate split produced an empty side")
    return train, evals


def write_examples(path: str | Path, examples: Iterable[TrainingExample]) -> None:
    rows = (
        {
            "user_id": ex.user_id,
            "history": [[list(sid), ts] for sid, ts in ex.history],
            "user_vector": [float(v) for v in ex.user_vector],
            "locale": ex.locale,
            "affinity_topics": list(ex.affinity_topics),
            "control": ex.control,
            "target_sid": list(ex.target_sid),
            "target_episode_id": ex.target_episode_id,
            "sample_weight": ex.sample_weight,
            "surface": ex.surface,
            "timestamp": ex.timestamp,
        }
        for ex in examples
    )
    write_jsonl(path, EXAMPLES_FORMAT, {}, rows)


def read_examples(path: str | Path) -> list[TrainingExample]:
    _header, rows = read_jsonl(path, EXAMPLES_FORMAT)
    out = []
    for row in rows:
        out.append(
            TrainingExample(
                user_id=row["user_id"],
                history=tuple((tuple(sid), int(ts)) for sid, ts in row["history"]),
                user_vector=np.array(row["user_vector"], dtype=float),
                locale=row["locale"],
                affinity_topics=tuple(row["affinity_topics"]),
                control=row["control"],
                target_sid=tuple(row["target_sid"]),
                target_episode_id=row["target_episode_id"],
                sample_weight=float(row["sample_weight"]),
                surface=row["surface"],
                timestamp=int(row["timestamp"]),
            )
        )
    return out
