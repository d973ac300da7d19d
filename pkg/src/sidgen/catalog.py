"""Deterministic synthetic episode catalog, user profiles, and interaction log.

The generator stands in for proprietary production data. It preserves the
structure the rest of the pipeline exploits: shows cluster around latent
topics (so content embeddings quantize into meaningful groups), popularity is
heavy-tailed (so capping and tie-breaking have bite), and every user's log
contains habitual, lapsed-familiar, and never-heard listening so all three
familiarity segments are populated.

Everything is a pure function of the config; the same seed reproduces the
same catalog, profiles, and events byte for byte.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .artifacts import read_jsonl, write_jsonl

SURFACES = ("home", "search", "explore")

EPOCH_BASE = 1_700_000_000  # fixed origin for synthetic timestamps (seconds)

CATALOG_FORMAT = "sidgen.catalog"
PROFILES_FORMAT = "sidgen.profiles"
EVENTS_FORMAT = "sidgen.events"


@dataclass(frozen=True)
class Episode:
    """One catalog item with its content embedding and serving attributes."""

    episode_id: str
    show_id: str
    text_tokens: tuple[int, ...]
    content_embedding: np.ndarray  # (d,), unit L2 norm
    popularity: int
    locale: str
    playable: bool
    publish_time: int


@dataclass(frozen=True)
class InteractionEvent:
    user_id: str
    episode_id: str
    timestamp: int
    listen_minutes: float
    surface: str
    exploration: bool


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    cf_embedding: np.ndarray  # (d_u,)
    locale: str
    affinity_topics: tuple[int, ...]


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic generator. ``seed`` fully determines output."""

    n_shows: int = 40
    episodes_per_show: int = 6
    n_users: int = 100
    n_topics: int = 6
    d: int = 64
    d_u: int = 32
    horizon_days: int = 56
    seed: int = 0
    noise_scale: float = 0.15
    # distribution knobs
    popularity_exponent: float = 1.2
    popularity_scale: int = 100_000
    unplayable_fraction: float = 0.05
    locales: tuple[str, ...] = ("en", "de", "se")
    exploration_fraction: float = 0.1
    habitual_shows_per_user: int = 2
    familiar_shows_per_user: int = 2
    unfamiliar_streams_per_user: int = 3
    tokens_per_topic: int = 32
    tokens_per_episode: int = 8

    def validate(self) -> None:
        counts = {
            "n_shows": self.n_shows,
            "episodes_per_show": self.episodes_per_show,
            "n_users": self.n_users,
            "n_topics": self.n_topics,
            "d_u": self.d_u,
            "horizon_days": self.horizon_days,
        }
        for name, value in counts.items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        if not 0.0 <= self.exploration_fraction <= 1.0:
            raise ValueError("exploration_fraction must be in [0, 1]")
        if not self.locales:
            raise ValueError("locales must be non-empty")


@dataclass(frozen=True)
class Catalog:
    """Episodes and profiles plus the latent generator state events reuse."""

    episodes: tuple[Episode, ...]
    users: tuple[UserProfile, ...]
    config: SynthConfig
    # latent structure, kept so generate_events can correlate users and shows
    topic_vectors: np.ndarray = field(repr=False)  # (n_topics, d)
    show_topic: tuple[int, ...] = field(repr=False)
    user_topic_prefs: np.ndarray = field(repr=False)  # (n_users, n_topics)

    def episodes_by_id(self) -> dict[str, Episode]:
        return {e.episode_id: e for e in self.episodes}

    def episodes_by_show(self) -> dict[str, tuple[Episode, ...]]:
        by_show: dict[str, list[Episode]] = {}
        for e in self.episodes:
            by_show.setdefault(e.show_id, []).append(e)
        return {s: tuple(v) for s, v in by_show.items()}

    def embedding_matrix(self) -> np.ndarray:
        return np.stack([e.content_embedding for e in self.episodes])


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def generate_catalog(config: SynthConfig) -> Catalog:
    """Generate episodes and user profiles from a latent topic mixture.

    Each show draws a Dirichlet mixture over topics; its episodes share the
    show vector plus isotropic noise of scale ``noise_scale`` and are
    re-normalized to unit length. Popularity follows a Zipf-by-rank law so a
    few episodes dominate and the tail collapses into ties.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)

    topics = rng.normal(size=(config.n_topics, config.d))
    topics = topics / np.linalg.norm(topics, axis=1, keepdims=True)

    # drawn before users so profile vectors stay comparable across runs
    topic_projection = rng.normal(size=(config.d_u, config.n_topics))

    n_episodes = config.n_shows * config.episodes_per_show
    pop_ranks = rng.permutation(n_episodes)
    locale_weights = np.array([2.0**-i for i in range(len(config.locales))])
    locale_weights /= locale_weights.sum()

    episodes: list[Episode] = []
    show_topic: list[int] = []
    for s in range(config.n_shows):
        show_id = f"show{s:04d}"
        mix = rng.dirichlet(np.full(config.n_topics, 0.3))
        dominant = int(np.argmax(mix))
        show_topic.append(dominant)
        show_vec = _unit(topics.T @ mix)
        show_locale = str(rng.choice(list(config.locales), p=locale_weights))
        for j in range(config.episodes_per_show):
            idx = s * config.episodes_per_show + j
            noise = rng.normal(size=config.d) * config.noise_scale
            x = _unit(show_vec + noise)
            tokens = _episode_tokens(rng, config, dominant)
            rank = int(pop_ranks[idx])
            popularity = int(config.popularity_scale / (rank + 1) ** config.popularity_exponent)
            episodes.append(
                Episode(
                    episode_id=f"ep{idx:05d}",
                    show_id=show_id,
                    text_tokens=tokens,
                    content_embedding=x,
                    popularity=popularity,
                    locale=show_locale,
                    playable=bool(rng.random() >= config.unplayable_fraction),
                    publish_time=EPOCH_BASE + int(rng.integers(0, config.horizon_days * 86400)),
                )
            )

    users: list[UserProfile] = []
    prefs_all = np.empty((config.n_users, config.n_topics))
    for u in range(config.n_users):
        prefs = rng.dirichlet(np.full(config.n_topics, 0.5))
        prefs_all[u] = prefs
        top2 = tuple(int(t) for t in np.argsort(-prefs, kind="stable")[:2])
        v_u = _unit(topic_projection @ prefs + rng.normal(size=config.d_u) * 0.05)
        users.append(
            UserProfile(
                user_id=f"user{u:05d}",
                cf_embedding=v_u,
                locale=str(rng.choice(list(config.locales), p=locale_weights)),
                affinity_topics=top2,
            )
        )

    return Catalog(
        episodes=tuple(episodes),
        users=tuple(users),
        config=config,
        topic_vectors=topics,
        show_topic=tuple(show_topic),
        user_topic_prefs=prefs_all,
    )


def _episode_tokens(rng: np.random.Generator, config: SynthConfig, topic: int) -> tuple[int, ...]:
    # mostly topic-block tokens with a couple of global ones mixed in
    block = topic * config.tokens_per_topic
    n_topical = max(1, config.tokens_per_episode - 2)
    topical = rng.integers(block, block + config.tokens_per_topic, size=n_topical)
    vocab = config.n_topics * config.tokens_per_topic
    general = rng.integers(0, vocab, size=config.tokens_per_episode - n_topical)
    return tuple(int(t) for t in np.concatenate([topical, general]))


def generate_events(catalog: Catalog, config: SynthConfig) -> list[InteractionEvent]:
    """Generate one interaction log covering all three familiarity segments.

    Per user: a few habitual shows streamed every 2-6 days at 10-40 minutes
    (so the trailing 28-day total stays comfortably over the habit threshold),
    a few lapsed-familiar shows with one short early listen (< 10 minutes,
    so a later return stream is non-habitual but familiar) and a later
    return, and first-time streams of never-heard shows sampled by topic
    affinity. The exploration flag is set independently per event.
    """
    config.validate()
    if not catalog.episodes:
        raise ValueError("catalog is empty")
    rng = np.random.default_rng([config.seed, 1])

    by_show = catalog.episodes_by_show()
    show_ids = sorted(by_show)
    show_topic = {f"show{s:04d}": t for s, t in enumerate(catalog.show_topic)}
    horizon = config.horizon_days * 86400
    t_end = EPOCH_BASE + horizon

    events: list[InteractionEvent] = []
    for ui, user in enumerate(catalog.users):
        prefs = catalog.user_topic_prefs[ui]
        affinity = np.array([prefs[show_topic[s]] for s in show_ids])
        affinity = affinity / affinity.sum()
        order = np.argsort(-affinity, kind="stable")

        n_hab = min(config.habitual_shows_per_user, len(show_ids))
        habitual = [show_ids[i] for i in order[:n_hab]]
        n_fam = min(config.familiar_shows_per_user, len(show_ids) - n_hab)
        familiar = [show_ids[i] for i in order[n_hab:n_hab + n_fam]]
        used = set(habitual) | set(familiar)

        used_times: set[int] = set()

        def emit(show: str, t: int, minutes: float, surface_probs: Sequence[float]) -> None:
            t = max(EPOCH_BASE, min(t, t_end))
            while t in used_times:
                t += 1
            used_times.add(t)
            eps = by_show[show]
            episode = eps[int(rng.integers(0, len(eps)))]
            events.append(
                InteractionEvent(
                    user_id=user.user_id,
                    episode_id=episode.episode_id,
                    timestamp=t,
                    listen_minutes=round(float(minutes), 3),
                    surface=str(rng.choice(list(SURFACES), p=list(surface_probs))),
                    exploration=bool(rng.random() < config.exploration_fraction),
                )
            )

        for show in habitual:
            t = EPOCH_BASE + int(rng.integers(0, 2 * 86400))
            while t < t_end:
                emit(show, t, rng.uniform(10.0, 40.0), (0.8, 0.1, 0.1))
                t += int(rng.integers(2 * 86400, 6 * 86400))

        for show in familiar:
            # short intro keeps any later 28-day window under the threshold
            intro_t = EPOCH_BASE + int(rng.integers(0, max(1, horizon // 3)))
            emit(show, intro_t, rng.uniform(2.0, 9.0), (0.5, 0.3, 0.2))
            return_t = t_end - int(rng.integers(0, max(1, horizon // 3)))
            emit(show, return_t, rng.uniform(1.0, 30.0), (0.6, 0.3, 0.1))

        candidates = [s for s in show_ids if s not in used]
        if candidates:
            weights = np.array([affinity[show_ids.index(s)] for s in candidates])
            weights = weights / weights.sum()
            n_unf = min(config.unfamiliar_streams_per_user, len(candidates))
            picks = rng.choice(len(candidates), size=n_unf, replace=False, p=weights)
            for p in picks:
                t = EPOCH_BASE + int(rng.integers(horizon // 4, horizon))
                emit(candidates[int(p)], t, rng.uniform(1.0, 30.0), (0.4, 0.2, 0.4))

    events.sort(key=lambda e: (e.user_id, e.timestamp, e.episode_id))
    return events


def embed_text(text_tokens: Sequence[int], d: int) -> np.ndarray:
    """Deterministic hash-based bag-of-tokens embedding, L2-normalized.

    Each token hashes to a coordinate, a sign, and a small weight
    perturbation; identical token lists map to identical vectors on any
    platform (hashlib, not the randomized builtin hash).
    """
    if len(text_tokens) == 0:
        raise ValueError("text_tokens must be non-empty")
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    v = np.zeros(d)
    for token in text_tokens:
        digest = hashlib.blake2b(str(int(token)).encode(), digest_size=12).digest()
        h = int.from_bytes(digest[:8], "little")
        idx = h % d
        sign = 1.0 if digest[8] & 1 else -1.0
        weight = 1.0 + int.from_bytes(digest[9:12], "little") / 2**24
        v[idx] += sign * weight
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("token list hashed to a zero vector")
    return v / norm


# ---------------------------------------------------------------------------
# artifact files


def write_catalog(path: str | Path, episodes: Iterable[Episode], d: int) -> None:
    rows = (
        {
            "episode_id": e.episode_id,
            "show_id": e.show_id,
            "text_tokens": list(e.text_tokens),
            "content_embedding": [float(x) for x in e.content_embedding],
            "popularity": e.popularity,
            "locale": e.locale,
            "playable": e.playable,
            "publish_time": e.publish_time,
        }
        for e in episodes
    )
    write_jsonl(path, CATALOG_FORMAT, {"d": d}, rows)


def read_catalog(path: str | Path) -> tuple[Episode, ...]:
    header, rows = read_jsonl(path, CATALOG_FORMAT)
    episodes = []
    for row in rows:
        episodes.append(
            Episode(
                episode_id=row["episode_id"],
                show_id=row["show_id"],
                text_tokens=tuple(row["text_tokens"]),
                content_embedding=np.array(row["content_embedding"], dtype=float),
                popularity=int(row["popularity"]),
                locale=row["locale"],
                playable=bool(row["playable"]),
                publish_time=int(row["publish_time"]),
            )
        )
    return tuple(episodes)


def write_profiles(path: str | Path, users: Iterable[UserProfile], d_u: int) -> None:
    rows = (
        {
            "user_id": u.user_id,
            "cf_embedding": [float(x) for x in u.cf_embedding],
            "locale": u.locale,
            "affinity_topics": list(u.affinity_topics),
        }
        for u in users
    )
    write_jsonl(path, PROFILES_FORMAT, {"d_u": d_u}, rows)


def read_profiles(path: str | Path) -> tuple[UserProfile, ...]:
    header, rows = read_jsonl(path, PROFILES_FORMAT)
    return tuple(
        UserProfile(
            user_id=row["user_id"],
            cf_embedding=np.array(row["cf_embedding"], dtype=float),
            locale=row["locale"],
            affinity_topics=tuple(row["affinity_topics"]),
        )
        for row in rows
    )


def write_events(path: str | Path, events: Iterable[InteractionEvent]) -> None:
    rows = (
        {
            "user_id": e.user_id,
            "episode_id": e.episode_id,
            "timestamp": e.timestamp,
            "listen_minutes": e.listen_minutes,
            "surface": e.surface,
            "exploration": e.exploration,
        }
        for e in events
    )
    write_jsonl(path, EVENTS_FORMAT, {}, rows)


def read_events(path: str | Path) -> list[InteractionEvent]:
    header, rows = read_jsonl(path, EVENTS_FORMAT)
    return [
        InteractionEvent(
            user_id=row["user_id"],
            episode_id=row["episode_id"],
            timestamp=int(row["timestamp"]),
            listen_minutes=float(row["listen_minutes"]),
            surface=row["surface"],
            exploration=bool(row["exploration"]),
        )
        for row in rows
    ]
