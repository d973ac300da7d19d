from __future__ import annotations

import dataclasses
import itertools

import numpy as np
import pytest

from sidgen.catalog import (
    EPOCH_BASE,
    SynthConfig,
    embed_text,
    generate_catalog,
    generate_events,
    read_catalog,
    read_events,
    read_profiles,
    write_catalog,
    write_events,
    write_profiles,
)
from sidgen.dataset import Familiarity, label


def small_config(**overrides):
    base = dict(n_shows=12, episodes_per_show=3, n_users=10, n_topics=4,
                d=12, d_u=6, horizon_days=56, seed=1)
    base.update(overrides)
    return SynthConfig(**base)


def test_catalog_determinism_byte_identical(tmp_path):
    config = small_config(seed=1)
    a = generate_catalog(config)
    b = generate_catalog(config)
    write_catalog(tmp_path / "a.jsonl", a.episodes, config.d)
    write_catalog(tmp_path / "b.jsonl", b.episodes, config.d)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    write_profiles(tmp_path / "pa.jsonl", a.users, config.d_u)
    write_profiles(tmp_path / "pb.jsonl", b.users, config.d_u)
    assert (tmp_path / "pa.jsonl").read_bytes() == (tmp_path / "pb.jsonl").read_bytes()


def test_zero_noise_episodes_share_embedding():
    catalog = generate_catalog(small_config(noise_scale=0.0, episodes_per_show=3))
    for episodes in catalog.episodes_by_show().values():
        for e in episodes[1:]:
            np.testing.assert_array_equal(e.content_embedding,
                                          episodes[0].content_embedding)


def test_intra_show_similarity_exceeds_inter_show():
    # oracle: both means computed directly over the generated catalog
    catalog = generate_catalog(SynthConfig(n_shows=50, episodes_per_show=10,
                                           n_topics=5, d=16, d_u=6, seed=3))
    intra, inter = [], []
    for a, b in itertools.combinations(catalog.episodes, 2):
        sim = float(np.dot(a.content_embedding, b.content_embedding))
        (intra if a.show_id == b.show_id else inter).append(sim)
    assert np.mean(intra) > np.mean(inter)


def test_embeddings_unit_norm():
    catalog = generate_catalog(small_config())
    norms = np.linalg.norm(catalog.embedding_matrix(), axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)


def test_episode_ids_unique_and_show_mapping_stable():
    catalog = generate_catalog(small_config())
    ids = [e.episode_id for e in catalog.episodes]
    assert len(ids) == len(set(ids))
    show_of = {}
    for e in catalog.episodes:
        assert show_of.setdefault(e.episode_id, e.show_id) == e.show_id


def test_popularity_heavy_tailed():
    catalog = generate_catalog(small_config(n_shows=30, episodes_per_show=10))
    pops = sorted((e.popularity for e in catalog.episodes), reverse=True)
    assert pops[0] > 10 * pops[len(pops) // 2]  # head dominates the median
    assert min(pops) >= 0


def test_events_deterministic():
    config = small_config(seed=5)
    catalog = generate_catalog(config)
    assert generate_events(catalog, config) == generate_events(catalog, config)


def test_events_resolve_and_nonnegative():
    config = small_config()
    catalog = generate_catalog(config)
    known = {e.episode_id for e in catalog.episodes}
    for event in generate_events(catalog, config):
        assert event.episode_id in known
        assert event.listen_minutes >= 0


def test_every_user_has_a_habitual_show():
    # scan the generated log with the segmentation oracle at the horizon end
    config = small_config(horizon_days=42)
    catalog = generate_catalog(config)
    events = generate_events(catalog, config)
    show_of = {e.episode_id: e.show_id for e in catalog.episodes}
    t_end = EPOCH_BASE + config.horizon_days * 86400
    by_user_show = {}
    for event in events:
        key = (event.user_id, show_of[event.episode_id])
        by_user_show.setdefault(key, []).append(event)
    habitual_users = {user for (user, _show), evs in by_user_show.items()
                      if label(evs, t_end) is Familiarity.HABITUAL}
    assert habitual_users == {u.user_id for u in catalog.users}


def test_all_three_segments_populated(world):
    # label every stream against its prior history; all segments must occur
    show_of = {e.episode_id: e.show_id for e in world.catalog.episodes}
    seen = set()
    prior: dict[tuple[str, str], list] = {}
    for event in sorted(world.events, key=lambda e: (e.user_id, e.timestamp)):
        key = (event.user_id, show_of[event.episode_id])
        history = prior.setdefault(key, [])
        seen.add(label(history, event.timestamp))
        history.append(event)
    assert seen == set(Familiarity)


def test_exploration_fraction_zero():
    config = small_config(exploration_fraction=0.0)
    catalog = generate_catalog(config)
    assert not any(e.exploration for e in generate_events(catalog, config))


def test_exploration_fraction_one():
    config = small_config(exploration_fraction=1.0)
    catalog = generate_catalog(config)
    assert all(e.exploration for e in generate_events(catalog, config))


@pytest.mark.parametrize("overrides", [
    dict(d=1), dict(n_shows=0), dict(n_users=0), dict(n_topics=0),
    dict(noise_scale=-0.1), dict(exploration_fraction=1.5),
])
def test_config_validation(overrides):
    with pytest.raises(ValueError):
        generate_catalog(small_config(**overrides))


class TestEmbedText:
    def test_deterministic(self):
        tokens = [3, 17, 99]
        np.testing.assert_array_equal(embed_text(tokens, 16), embed_text(tokens, 16))

    def test_unit_norm(self):
        assert np.linalg.norm(embed_text([1, 2, 3], 16)) == pytest.approx(1.0, abs=1e-6)

    def test_one_token_changes_vector(self):
        a = embed_text([1, 2, 3], 32)
        b = embed_text([1, 2, 4], 32)
        assert float(np.dot(a, b)) < 1.0 - 1e-9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            embed_text([], 16)


def test_file_round_trips(tmp_path, world):
    write_catalog(tmp_path / "c.jsonl", world.catalog.episodes, world.config.d)
    episodes = read_catalog(tmp_path / "c.jsonl")
    assert len(episodes) == len(world.catalog.episodes)
    for got, want in zip(episodes, world.catalog.episodes):
        np.testing.assert_array_equal(got.content_embedding, want.content_embedding)
        assert got.episode_id == want.episode_id
        assert got.popularity == want.popularity
        assert got.playable == want.playable

    write_profiles(tmp_path / "p.jsonl", world.catalog.users, world.config.d_u)
    profiles = read_profiles(tmp_path / "p.jsonl")
    for got, want in zip(profiles, world.catalog.users):
        np.testing.assert_array_equal(got.cf_embedding, want.cf_embedding)
        assert got.affinity_topics == want.affinity_topics

    write_events(tmp_path / "e.jsonl", world.events)
    assert read_events(tmp_path / "e.jsonl") == world.events
