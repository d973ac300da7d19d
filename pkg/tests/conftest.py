from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from sidgen.catalog import SynthConfig, generate_catalog, generate_events
from sidgen.dataset import DatasetConfig, TrainingExample, build_examples
from sidgen.quantizer import fit
from sidgen.sid_index import build_lookup


@pytest.fixture(scope="session")
def world():
    """Small deterministic world shared by unit tests: catalog, events,
    codebook (k=8, m=3), lookup, and training examples."""
    config = SynthConfig(
        n_shows=20, episodes_per_show=4, n_users=30, n_topics=5,
        d=16, d_u=8, horizon_days=56, seed=7,
    )
    catalog = generate_catalog(config)
    events = generate_events(catalog, config)
    embeddings = catalog.embedding_matrix()
    codebook = fit(embeddings, k=8, m=3, seed=1)
    lookup = build_lookup(catalog.episodes, codebook, built_at=1_000)
    examples = build_examples(events, catalog.users, lookup, catalog.episodes,
                              DatasetConfig())
    return SimpleNamespace(
        config=config, catalog=catalog, events=events, embeddings=embeddings,
        codebook=codebook, lookup=lookup, examples=examples,
    )


def finite_difference_errors(params, examples, step=1e-4, use_control=True):
    """Max relative deviation between analytic and central-difference gradients,
    per parameter block. The oracle re-evaluates the loss; it never touches
    the backprop path it checks."""
    from sidgen.model import batch_loss, loss_and_grad

    _, grads = loss_and_grad(params, examples, use_control)
    worst: dict[str, float] = {}
    for name, arr in params.arrays.items():
        flat = arr.ravel()
        analytic = grads[name].ravel()
        err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = batch_loss(params, examples, use_control)
            flat[i] = orig - step
            down = batch_loss(params, examples, use_control)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(numeric) + abs(analytic[i]), 1e-6)
            err = max(err, abs(numeric - analytic[i]) / denom)
        worst[name] = err
    return worst


def make_example(user_id="u0", history=(), target=(0, 0), target_episode="ep0",
                 control="unfamiliar", weight=1.0, d_user=4, locale="en",
                 topics=(0,), surface="home", timestamp=0, user_vector=None):
    """Hand-built TrainingExample for model and metric tests."""
    if user_vector is None:
        user_vector = np.zeros(d_user)
    return TrainingExample(
        user_id=user_id,
        history=tuple((tuple(sid), i) for i, sid in enumerate(history)),
        user_vector=np.asarray(user_vector, dtype=float),
        locale=locale,
        affinity_topics=tuple(topics),
        control=control,
        target_sid=tuple(target),
        target_episode_id=target_episode,
        sample_weight=weight,
        surface=surface,
        timestamp=timestamp,
    )
