"""Command-line entry points for the full pipeline.

synth -> build-sids -> rebuild-lookup -> build-dataset -> init-model ->
ground -> train -> eval -> serve, plus generate / recommend / reload-signal
for poking a checkpoint or a running service.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import urllib.request
from pathlib import Path

import numpy as np

from . import catalog as cat
from . import dataset as ds
from . import metrics as mt
from . import model as mdl
from . import quantizer as qt
from . import sid_index as si
from .decoder import DecodeConfig, SidTrie, beam_search, sample_decode
from .serve import RecommendService, ServicePaths, ServiceServer, load_state


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _synth_config(path: str | None) -> cat.SynthConfig:
    if path is None:
        return cat.SynthConfig()
    raw = _load_json(path)
    if "locales" in raw:
        raw["locales"] = tuple(raw["locales"])
    known = cat.SynthConfig.__dataclass_fields__
    unknown = set(raw) - set(known)
    if unknown:
        raise SystemExit(f"unknown synth config keys: {sorted(unknown)}")
    return cat.SynthConfig(**raw)


def cmd_synth(args: argparse.Namespace) -> None:
    config = _synth_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    catalog = cat.generate_catalog(config)
    events = cat.generate_events(catalog, config)
    cat.write_catalog(out / "catalog.jsonl", catalog.episodes, config.d)
    cat.write_profiles(out / "profiles.jsonl", catalog.users, config.d_u)
    cat.write_events(out / "events.jsonl", events)
    print(f"wrote {len(catalog.episodes)} episodes, {len(catalog.users)} profiles, "
          f"{len(events)} events to {out}")


def cmd_build_sids(args: argparse.Namespace) -> None:
    episodes = cat.read_catalog(args.catalog)
    x = np.stack([e.content_embedding for e in episodes])
    codebook = qt.fit(x, k=args.k, m=args.m, seed=args.seed, max_iters=args.max_iters)
    qt.write_codebook(args.out, codebook)
    inertia = ", ".join(f"{v:.5f}" for v in codebook.fit_metadata["inertia"])
    print(f"fit codebook k={args.k} m={args.m} on {len(episodes)} episodes "
          f"(inertia per level: {inertia})")


def cmd_rebuild_lookup(args: argparse.Namespace) -> None:
    episodes = cat.read_catalog(args.catalog)
    codebook = qt.read_codebook(args.codebook)
    lookup = si.build_lookup(episodes, codebook, built_at=args.built_at)
    si.write_lookup(args.out, lookup)
    report = si.collision_stats(lookup, episodes)
    print(f"lookup build {lookup.build_id}: {report.n_groups} groups, "
          f"{report.n_colliding_groups} colliding "
          f"(intra-group cosine: {report.intra_group_similarity})")


def cmd_build_dataset(args: argparse.Namespace) -> None:
    raw = _load_json(args.config) if args.config else {}
    eval_fraction = raw.pop("eval_fraction", 0.2)
    split_seed = raw.pop("split_seed", 0)
    config = ds.DatasetConfig(**raw)
    events = cat.read_events(args.events)
    profiles = cat.read_profiles(args.profiles)
    episodes = cat.read_catalog(args.catalog)
    lookup = si.read_lookup(args.lookup)
    examples = ds.build_examples(events, profiles, lookup, episodes, config)
    train, evals = ds.split(examples, eval_fraction, split_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds.write_examples(out / "train.jsonl", train)
    ds.write_examples(out / "eval.jsonl", evals)
    print(f"built {len(examples)} examples -> {len(train)} train / {len(evals)} eval")


def _scorer_config_from_artifacts(args: argparse.Namespace) -> mdl.ScorerConfig:
    episodes = cat.read_catalog(args.catalog)
    profiles = cat.read_profiles(args.profiles)
    codebook = qt.read_codebook(args.codebook)
    locales = tuple(sorted({e.locale for e in episodes}))
    n_topics = 1 + max((t for p in profiles for t in p.affinity_topics), default=-1)
    d_user = profiles[0].cf_embedding.shape[0] if profiles else args.d_user
    return mdl.ScorerConfig(
        k=codebook.k,
        m=codebook.m,
        d_model=args.d_model,
        d_user=d_user,
        hidden=args.hidden,
        locales=locales,
        n_topics=n_topics,
    )


def cmd_init_model(args: argparse.Namespace) -> None:
    config = _scorer_config_from_artifacts(args)
    params = mdl.ScorerParams.init(config, seed=args.seed)
    checkpoint_id = mdl.save_checkpoint(args.out, params, extra={"stage": "init"})
    print(f"initialized checkpoint {checkpoint_id} "
          f"(V={params.token_space.total} tokens, d_model={config.d_model})")


def cmd_ground(args: argparse.Namespace) -> None:
    params, _header = mdl.load_checkpoint(args.checkpoint)
    episodes = cat.read_catalog(args.catalog)
    codebook = qt.read_codebook(args.codebook)
    embed_steps = args.embed_steps if args.stage in ("all", "embeddings") else 0
    head_steps = args.head_steps if args.stage in ("all", "heads") else 0
    config = mdl.GroundConfig(
        embed_steps=embed_steps,
        head_steps=head_steps,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
    )
    grounded, log = mdl.ground(params, episodes, codebook, config)
    checkpoint_id = mdl.save_checkpoint(args.out, grounded, extra={"stage": f"ground:{args.stage}"})
    parts = []
    if log["embed_losses"]:
        parts.append(f"embed loss {log['embed_losses'][0]:.4f} -> {log['embed_losses'][-1]:.4f}")
    if log["head_losses"]:
        parts.append(f"head loss {log['head_losses'][0]:.4f} -> {log['head_losses'][-1]:.4f}")
    print(f"grounded checkpoint {checkpoint_id} ({'; '.join(parts)})")


def cmd_train(args: argparse.Namespace) -> None:
    params, _header = mdl.load_checkpoint(args.checkpoint)
    examples = ds.read_examples(args.examples)
    config = mdl.TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        use_control=not args.no_control,
    )
    trained, log = mdl.train(params, examples, config)
    checkpoint_id = mdl.save_checkpoint(args.out, trained, extra={"stage": "train"})
    if log:
        print(f"trained checkpoint {checkpoint_id} "
              f"(loss {log[0]['loss']:.4f} -> {log[-1]['loss']:.4f} over {len(log)} steps)")
    else:
        print(f"saved checkpoint {checkpoint_id} (0 steps)")


def _decode_config(args: argparse.Namespace, constrained: bool) -> DecodeConfig:
    return DecodeConfig(
        mode=args.mode,
        beam_width=args.beams,
        temperature=args.temperature,
        top_p=args.top_p,
        constrained=constrained,
        seed=args.seed,
        num_candidates=args.num_candidates,
    )


def cmd_generate(args: argparse.Namespace) -> None:
    params, _header = mdl.load_checkpoint(args.checkpoint)
    lookup = si.read_lookup(args.lookup)
    request = _load_json(args.history)
    if request.get("profile") is not None:
        raw = request["profile"]
        vector = np.array(raw["cf_embedding"], dtype=float)
        locale = raw.get("locale")
        topics = tuple(raw.get("affinity_topics", ()))
    elif args.profiles:
        profiles = {p.user_id: p for p in cat.read_profiles(args.profiles)}
        profile = profiles[request["user_id"]]
        vector, locale, topics = profile.cf_embedding, profile.locale, profile.affinity_topics
    else:
        raise SystemExit("history file needs an inline profile, or pass --profiles")
    history = tuple(sid for eid in request.get("history", ())
                    if (sid := lookup.sid_of.get(eid)) is not None)
    ctx = mdl.PromptContext(
        history=history,
        user_vector=vector,
        control=args.control,
        locale=request.get("locale", locale),
        topics=topics,
    )
    config = _decode_config(args, constrained=not args.unconstrained)
    trie = SidTrie.from_lookup(lookup)
    if config.mode == "beam":
        sids = beam_search(params, ctx, config, trie)
    else:
        sids = sample_decode(params, ctx, config, trie)
    exclude: set[str] = set()
    for sid, score in sids:
        episode_id = si.resolve(lookup, sid, None, exclude)
        if episode_id is None:
            continue
        exclude.add(episode_id)
        print(f"{episode_id}\t{score:.6f}")


def cmd_eval(args: argparse.Namespace) -> None:
    params, _header = mdl.load_checkpoint(args.checkpoint)
    lookup = si.read_lookup(args.lookup)
    examples = ds.read_examples(args.examples)
    config = _decode_config(args, constrained=not args.unconstrained)
    if args.sid_level:
        trie = SidTrie.from_lookup(lookup) if config.constrained else None
        candidates = mt.rank_sids(params, examples, config, trie)
    else:
        candidates = mt.rank_candidates(params, examples, lookup, config, args.k)
    report = mt.evaluate(candidates, examples, args.k, sid_level=args.sid_level,
                         metadata={"decode": json.dumps(config.metadata())})
    print(mt.format_report(report))
    if args.out:
        mt.write_report(args.out, report)


def cmd_serve(args: argparse.Namespace) -> None:
    paths = ServicePaths(
        checkpoint=args.checkpoint,
        lookup=args.lookup,
        codebook=args.codebook,
        catalog=args.catalog,
        profiles=args.profiles,
    )
    port = int(os.environ.get("SIDGEN_PORT", args.port))
    cache_ttl = float(os.environ.get("SIDGEN_CACHE_TTL", args.cache_ttl))
    state = load_state(paths, beam_width=args.beams)
    service = RecommendService(state, cache_ttl=cache_ttl)
    server = ServiceServer(service, host=args.host, port=port)
    print(f"serving on {args.host}:{server.port} "
          f"(checkpoint {state.checkpoint_id}, lookup {state.lookup.build_id})",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()


def _post_json(host: str, port: int, path: str, payload: dict) -> dict:
    body = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        f"http://{host}:{port}{path}", data=body,
        headers={"Content-Type": "application/json"}, method="POST")
    with urllib.request.urlopen(request, timeout=30) as response:
        return json.loads(response.read().decode("utf-8"))


def cmd_reload_signal(args: argparse.Namespace) -> None:
    payload = {
        key: getattr(args, key)
        for key in ("checkpoint", "lookup", "codebook", "catalog", "profiles")
        if getattr(args, key)
    }
    result = _post_json(args.host, args.port, "/v1/reload", payload)
    print(json.dumps(result))


def cmd_recommend(args: argparse.Namespace) -> None:
    payload = {
        "user_id": args.user,
        "history": args.history.split(",") if args.history else [],
        "control": args.control,
        "k": args.k,
    }
    if args.locale:
        payload["locale"] = args.locale
    if args.exclude:
        payload["exclude"] = args.exclude.split(",")
    result = _post_json(args.host, args.port, "/v1/recommend", payload)
    print(json.dumps(result))


def _add_decode_args(p: argparse.ArgumentParser, default_mode: str = "beam") -> None:
    p.add_argument("--mode", default=default_mode, choices=["beam", "greedy", "sample"])
    p.add_argument("--beams", type=int, default=30)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-p", dest="top_p", type=float, default=0.9)
    p.add_argument("--num-candidates", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unconstrained", action="store_true",
                   help="allow SIDs outside the lookup table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sidgen")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic catalog, profiles, and events")
    p.add_argument("--config", help="JSON file of SynthConfig overrides")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-sids", help="fit a residual K-Means codebook")
    p.add_argument("--catalog", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_sids)

    p = sub.add_parser("rebuild-lookup", help="encode the catalog into a lookup table")
    p.add_argument("--catalog", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--built-at", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rebuild_lookup)

    p = sub.add_parser("build-dataset", help="build weighted training examples")
    p.add_argument("--events", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--lookup", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--config", help="JSON DatasetConfig plus eval_fraction/split_seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("init-model", help="create a fresh random checkpoint")
    p.add_argument("--catalog", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--d-user", type=int, default=32)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_model)

    p = sub.add_parser("ground", help="two-stage semantic grounding of SID tokens")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--stage", default="all", choices=["all", "embeddings", "heads"])
    p.add_argument("--embed-steps", type=int, default=300)
    p.add_argument("--head-steps", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("train", help="instruction-tune a checkpoint on examples")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-control", action="store_true",
                   help="train single-task: zero the control slot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode candidates for one request file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lookup", required=True)
    p.add_argument("--history", required=True,
                   help="JSON file: {user_id|profile, history, locale?}")
    p.add_argument("--profiles", help="profiles file when the request names a user_id")
    p.add_argument("--control", default="unfamiliar", choices=list(si.CONTROLS))
    _add_decode_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="segment-sliced retrieval metrics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lookup", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--k", type=int, default=30)
    p.add_argument("--sid-level", action="store_true")
    p.add_argument("--out", help="write a key/value report file")
    _add_decode_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP recommendation service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lookup", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--beams", type=int, default=30)
    p.add_argument("--cache-ttl", type=float, default=0.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("reload-signal", help="ask a running service to swap artifacts")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    for key in ("checkpoint", "lookup", "codebook", "catalog", "profiles"):
        p.add_argument(f"--{key}")
    p.set_defaults(func=cmd_reload_signal)

    p = sub.add_parser("recommend", help="query a running service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--history", help="comma-separated episode ids")
    p.add_argument("--control", default="unfamiliar", choices=list(si.CONTROLS))
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--locale")
    p.add_argument("--exclude", help="comma-separated episode ids")
    p.set_defaults(func=cmd_recommend)

    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main(sys.argv[1:])
