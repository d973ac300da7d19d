"""Token namespaces, the SID-to-episode lookup table, and collision handling.

Each quantizer level gets its own token namespace, so a code is meaningful
only together with its level. Episodes whose embeddings quantize to the same
SID form a collision group, pre-sorted at build time by popularity (then
episode id) so query-time resolution is a plain scan with no sorting.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .artifacts import read_jsonl, write_jsonl
from .catalog import Episode
from .quantizer import Codebook, SemanticId, encode_many

LOOKUP_FORMAT = "sidgen.lookup"

# reserved token ids, ahead of metadata and SID blocks
BOS_TOKEN = 0
EOS_TOKEN = 1
FAMILIAR_TOKEN = 2
UNFAMILIAR_TOKEN = 3
SOFT_PROMPT_TOKEN = 4
N_RESERVED = 5

CONTROL_FAMILIAR = "familiar"
CONTROL_UNFAMILIAR = "unfamiliar"
CONTROLS = (CONTROL_FAMILIAR, CONTROL_UNFAMILIAR)


@dataclass(frozen=True)
class TokenSpace:
    """Bijective layout of reserved, metadata, and per-level SID tokens."""

    k: int
    m: int
    n_metadata: int = 0

    def __post_init__(self) -> None:
        if self.k < 1 or self.m < 1 or self.n_metadata < 0:
            raise ValueError(f"invalid token space (k={self.k}, m={self.m}, "
                             f"n_metadata={self.n_metadata})")

    @property
    def sid_base(self) -> int:
        return N_RESERVED + self.n_metadata

    @property
    def n_sid_tokens(self) -> int:
        return self.m * self.k

    @property
    def total(self) -> int:
        return self.sid_base + self.n_sid_tokens

    def metadata_token(self, i: int) -> int:
        if not 0 <= i < self.n_metadata:
            raise ValueError(f"metadata index {i} out of range [0, {self.n_metadata})")
        return N_RESERVED + i

    def control_token(self, control: str) -> int:
        if control == CONTROL_FAMILIAR:
            return FAMILIAR_TOKEN
        if control == CONTROL_UNFAMILIAR:
            return UNFAMILIAR_TOKEN
        raise ValueError(f"unknown control {control!r}")

    def sid_token(self, level: int, code: int) -> int:
        """Token id for code ``code`` at 1-based quantizer level ``level``."""
        if not 1 <= level <= self.m:
            raise ValueError(f"level {level} out of range [1, {self.m}]")
        if not 0 <= code < self.k:
            raise ValueError(f"code {code} out of range [0, {self.k})")
        return self.sid_base + (level - 1) * self.k + code

    def sid_level_code(self, token: int) -> tuple[int, int]:
        """Inverse of sid_token: token id back to (level, code)."""
        offset = token - self.sid_base
        if not 0 <= offset < self.n_sid_tokens:
            raise ValueError(f"token {token} is not a SID token")
        return offset // self.k + 1, offset % self.k

    def sid_tokens(self, sid: SemanticId) -> tuple[int, ...]:
        if len(sid) != self.m:
            raise ValueError(f"sid has {len(sid)} codes, token space expects {self.m}")
        return tuple(self.sid_token(level + 1, code) for level, code in enumerate(sid))

    def layout(self) -> dict[str, int]:
        return {"k": self.k, "m": self.m, "n_metadata": self.n_metadata}


@dataclass(frozen=True)
class LookupTable:
    """SID -> ordered collision group, plus the reverse episode -> SID map."""

    k: int
    m: int
    groups: dict[SemanticId, tuple[str, ...]]
    sid_of: dict[str, SemanticId]
    built_at: int
    build_id: str


def build_lookup(episodes: Sequence[Episode], codebook: Codebook,
                 built_at: int | None = None) -> LookupTable:
    """Encode every episode and group collisions, ordered by the tie-break key
    (popularity descending, episode_id ascending). Rebuilding is how
    popularity changes take effect."""
    if not episodes:
        raise ValueError("cannot build a lookup over an empty catalog")
    x = np.stack([e.content_embedding for e in episodes])
    if x.shape[1] != codebook.d:
        raise ValueError(f"catalog embeddings have dim {x.shape[1]}, "
                         f"codebook expects {codebook.d}")
    codes = encode_many(codebook, x)

    raw: dict[SemanticId, list[Episode]] = {}
    for episode, row in zip(episodes, codes):
        raw.setdefault(tuple(int(c) for c in row), []).append(episode)

    groups: dict[SemanticId, tuple[str, ...]] = {}
    sid_of: dict[str, SemanticId] = {}
    for sid in sorted(raw):
        members = sorted(raw[sid], key=lambda e: (-e.popularity, e.episode_id))
        groups[sid] = tuple(e.episode_id for e in members)
        for e in members:
            sid_of[e.episode_id] = sid

    if built_at is None:
        built_at = int(time.time())
    digest = hashlib.blake2b(digest_size=8)
    digest.update(f"{codebook.k}|{codebook.m}|{built_at}".encode())
    for sid, members in groups.items():
        digest.update(f"{sid}:{','.join(members)};".encode())
    return LookupTable(
        k=codebook.k,
        m=codebook.m,
        groups=groups,
        sid_of=sid_of,
        built_at=built_at,
        build_id=digest.hexdigest(),
    )


def resolve(lookup: LookupTable, sid: SemanticId,
            eligible: Callable[[str], bool] | None = None,
            exclude: Iterable[str] = ()) -> str | None:
    """First group member, in build order, that is eligible and not excluded.

    Returns None when the SID has no group or everything is filtered out;
    absence is a valid outcome, not an error.
    """
    if len(sid) != lookup.m:
        raise ValueError(f"sid has {len(sid)} codes, lookup expects {lookup.m}")
    group = lookup.groups.get(tuple(sid))
    if not group:
        return None
    excluded = exclude if isinstance(exclude, (set, frozenset)) else set(exclude)
    for episode_id in group:
        if episode_id in excluded:
            continue
        if eligible is not None and not eligible(episode_id):
            continue
        return episode_id
    return None


@dataclass(frozen=True)
class CollisionReport:
    group_size_histogram: dict[int, int]
    n_groups: int
    n_colliding_groups: int
    intra_group_similarity: float | None  # None when nothing collides


def collision_stats(lookup: LookupTable, episodes: Sequence[Episode]) -> CollisionReport:
    """Group-size histogram and mean pairwise cosine within colliding groups."""
    by_id = {e.episode_id: e for e in episodes}
    histogram: dict[int, int] = {}
    sims: list[float] = []
    for members in lookup.groups.values():
        size = len(members)
        histogram[size] = histogram.get(size, 0) + 1
        if size < 2:
            continue
        vecs = [by_id[eid].content_embedding for eid in members]
        pair_sims = [_cosine(a, b) for a, b in combinations(vecs, 2)]
        sims.append(float(np.mean(pair_sims)))
    return CollisionReport(
        group_size_histogram=histogram,
        n_groups=len(lookup.groups),
        n_colliding_groups=len(sims),
        intra_group_similarity=float(np.mean(sims)) if sims else None,
    )


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


def write_lookup(path: str | Path, lookup: LookupTable) -> None:
    meta = {
        "k": lookup.k,
        "m": lookup.m,
        "built_at": lookup.built_at,
        "build_id": lookup.build_id,
    }
    rows = ({"sid": list(sid), "episodes": list(members)}
            for sid, members in lookup.groups.items())
    write_jsonl(path, LOOKUP_FORMAT, meta, rows)


def read_lookup(path: str | Path) -> LookupTable:
    header, rows = read_jsonl(path, LOOKUP_FORMAT)
    groups: dict[SemanticId, tuple[str, ...]] = {}
    sid_of: dict[str, SemanticId] = {}
    for row in rows:
        sid = tuple(int(c) for c in row["sid"])
        members = tuple(row["episodes"])
        groups[sid] = members
        for eid in members:
            sid_of[eid] = sid
    return LookupTable(
        k=int(header["k"]),
        m=int(header["m"]),
        groups=groups,
        sid_of=sid_of,
        built_at=int(header["built_at"]),
        build_id=str(header["build_id"]),
    )
