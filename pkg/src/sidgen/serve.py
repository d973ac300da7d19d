"""Online recommendation service: assemble context, decode, resolve, cache.

All model and index state lives in one immutable ServiceState; a request
handler grabs the current state reference once, so in-flight requests finish
on the state they started with and a reload swaps the reference atomically
with no mixed old/new views. The optional response cache is keyed by a
canonical request hash with a TTL and is dropped on every reload.

Wire protocol: POST /v1/recommend and GET /healthz with UTF-8 JSON bodies,
plus POST /v1/reload as the rebuild-and-swap trigger.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

import numpy as np

from .artifacts import ArtifactError
from .catalog import Episode, UserProfile, read_catalog, read_profiles
from .decoder import DecodeConfig, SidTrie, beam_search
from .model import PromptContext, ScorerParams, load_checkpoint
from .quantizer import Codebook, read_codebook
from .sid_index import CONTROLS, LookupTable, read_lookup, resolve


@dataclass(frozen=True)
class ServicePaths:
    checkpoint: str
    lookup: str
    codebook: str
    catalog: str
    profiles: str


@dataclass(frozen=True)
class ServiceState:
    params: ScorerParams
    checkpoint_id: str
    lookup: LookupTable
    trie: SidTrie
    codebook: Codebook
    episodes: dict[str, Episode]
    profiles: dict[str, UserProfile]
    decode: DecodeConfig
    paths: ServicePaths
    loaded_at: float


def load_state(paths: ServicePaths, beam_width: int = 30) -> ServiceState:
    """Load and cross-validate all serving artifacts; raises ArtifactError on
    any format or layout mismatch, leaving the caller's state untouched."""
    params, header = load_checkpoint(paths.checkpoint)
    lookup = read_lookup(paths.lookup)
    codebook = read_codebook(paths.codebook)
    episodes = read_catalog(paths.catalog)
    profiles = read_profiles(paths.profiles)

    if (params.config.k, params.config.m) != (lookup.k, lookup.m):
        raise ArtifactError(
            f"checkpoint token space (k={params.config.k}, m={params.config.m}) "
            f"does not match lookup (k={lookup.k}, m={lookup.m})")
    if (codebook.k, codebook.m) != (lookup.k, lookup.m):
        raise ArtifactError(
            f"codebook (k={codebook.k}, m={codebook.m}) does not match lookup "
            f"(k={lookup.k}, m={lookup.m})")
    if episodes and episodes[0].content_embedding.shape[0] != codebook.d:
        raise ArtifactError("catalog embedding dimension does not match codebook")
    for profile in profiles[:1]:
        if profile.cf_embedding.shape[0] != params.config.d_user:
            raise ArtifactError("profile vector dimension does not match checkpoint")

    return ServiceState(
        params=params,
        checkpoint_id=header["checkpoint_id"],
        lookup=lookup,
        trie=SidTrie.from_lookup(lookup),
        codebook=codebook,
        episodes={e.episode_id: e for e in episodes},
        profiles={p.user_id: p for p in profiles},
        decode=DecodeConfig(mode="beam", beam_width=beam_width, constrained=True),
        paths=paths,
        loaded_at=time.time(),
    )


@dataclass(frozen=True)
class RecommendRequest:
    user_id: str | None = None
    profile: UserProfile | None = None
    history: tuple[str, ...] = ()
    control: str = "unfamiliar"
    k: int = 10
    locale: str | None = None
    exclude: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.control not in CONTROLS:
            raise ValueError(f"control must be one of {CONTROLS}, got {self.control!r}")

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "RecommendRequest":
        profile = None
        if payload.get("profile") is not None:
            raw = payload["profile"]
            profile = UserProfile(
                user_id=raw.get("user_id", ""),
                cf_embedding=np.array(raw["cf_embedding"], dtype=float),
                locale=raw.get("locale", ""),
                affinity_topics=tuple(raw.get("affinity_topics", ())),
            )
        return cls(
            user_id=payload.get("user_id"),
            profile=profile,
            history=tuple(payload.get("history", ())),
            control=payload.get("control", "unfamiliar"),
            k=int(payload.get("k", 10)),
            locale=payload.get("locale"),
            exclude=frozenset(payload.get("exclude", ())),
        )


@dataclass(frozen=True)
class RecommendResponse:
    results: tuple[tuple[str, float], ...]
    checkpoint_id: str
    lookup_build_id: str
    cache_hit: bool
    latency_ms: float

    def to_payload(self) -> dict[str, Any]:
        return {
            "results": [{"episode_id": eid, "score": score} for eid, score in self.results],
            "checkpoint_id": self.checkpoint_id,
            "lookup_build_id": self.lookup_build_id,
            "cache_hit": self.cache_hit,
            "latency_ms": self.latency_ms,
        }


class RecommendService:
    """Thread-safe facade over one atomically swappable ServiceState."""

    def __init__(self, state: ServiceState, cache_ttl: float = 0.0):
        self._state = state
        self._lock = threading.Lock()
        self._cache: dict[str, tuple[float, tuple[tuple[str, float], ...], str, str]] = {}
        self.cache_ttl = cache_ttl
        self._started = time.time()
        self._requests = 0
        self._errors = 0
        self._cache_hits = 0
        self._cache_misses = 0
        self._skipped_history = 0
        self._latencies: deque[float] = deque(maxlen=4096)

    @property
    def state(self) -> ServiceState:
        return self._state

    def recommend(self, request: RecommendRequest) -> RecommendResponse:
        start = time.perf_counter()
        state = self._state  # single read; the whole request uses this state
        with self._lock:
            self._requests += 1

        key = None
        if self.cache_ttl > 0:
            key = self._cache_key(request)
            with self._lock:
                entry = self._cache.get(key)
                if entry is not None and time.time() - entry[0] <= self.cache_ttl:
                    self._cache_hits += 1
                    latency = (time.perf_counter() - start) * 1000.0
                    self._latencies.append(latency)
                    return RecommendResponse(results=entry[1], checkpoint_id=entry[2],
                                             lookup_build_id=entry[3], cache_hit=True,
                                             latency_ms=latency)
                self._cache_misses += 1

        try:
            results = self._compute(state, request)
        except Exception:
            with self._lock:
                self._errors += 1
            raise

        if key is not None:
            with self._lock:
                self._cache[key] = (time.time(), results, state.checkpoint_id,
                                    state.lookup.build_id)
        latency = (time.perf_counter() - start) * 1000.0
        self._latencies.append(latency)
        return RecommendResponse(results=results, checkpoint_id=state.checkpoint_id,
                                 lookup_build_id=state.lookup.build_id, cache_hit=False,
                                 latency_ms=latency)

    def _compute(self, state: ServiceState,
                 request: RecommendRequest) -> tuple[tuple[str, float], ...]:
        profile = request.profile
        if profile is None and request.user_id is not None:
            profile = state.profiles.get(request.user_id)
        if profile is None:
            raise ValueError(f"unknown user {request.user_id!r} and no inline profile")

        history = []
        for episode_id in request.history:
            sid = state.lookup.sid_of.get(episode_id)
            if sid is None:
                with self._lock:
                    self._skipped_history += 1
                continue
            history.append(sid)

        locale = request.locale or profile.locale or None
        ctx = PromptContext(
            history=tuple(history),
            user_vector=profile.cf_embedding,
            control=request.control,
            locale=locale,
            topics=profile.affinity_topics,
        )
        candidates = beam_search(state.params, ctx, state.decode, state.trie)

        def eligible(episode_id: str) -> bool:
            episode = state.episodes.get(episode_id)
            if episode is None or not episode.playable:
                return False
            return locale is None or episode.locale == locale

        exclude = set(request.exclude)
        results: list[tuple[str, float]] = []
        for sid, score in candidates:
            episode_id = resolve(state.lookup, sid, eligible, exclude)
            if episode_id is None:
                continue
            results.append((episode_id, score))
            exclude.add(episode_id)
            if len(results) >= request.k:
                break
        return tuple(results)

    def _cache_key(self, request: RecommendRequest) -> str:
        profile_key = None
        if request.profile is not None:
            p = request.profile
            profile_key = [p.user_id, [float(v) for v in p.cf_embedding], p.locale,
                           list(p.affinity_topics)]
        return json.dumps(
            {
                "user_id": request.user_id,
                "profile": profile_key,
                "history": list(request.history),
                "control": request.control,
                "k": request.k,
                "locale": request.locale,
                "exclude": sorted(request.exclude),
            },
            sort_keys=True,
        )

    def reload(self, checkpoint: str | None = None, lookup: str | None = None,
               codebook: str | None = None, catalog: str | None = None,
               profiles: str | None = None) -> ServiceState:
        """Validate new artifacts, then swap the state reference and drop the
        cache. On validation failure the old state keeps serving."""
        old = self._state
        paths = replace(
            old.paths,
            checkpoint=checkpoint or old.paths.checkpoint,
            lookup=lookup or old.paths.lookup,
            codebook=codebook or old.paths.codebook,
            catalog=catalog or old.paths.catalog,
            profiles=profiles or old.paths.profiles,
        )
        new_state = load_state(paths, beam_width=old.decode.beam_width)
        with self._lock:
            self._state = new_state
            self._cache.clear()
        return new_state

    def healthz(self) -> dict[str, Any]:
        state = self._state
        latencies = sorted(self._latencies)
        with self._lock:
            cache_size = len(self._cache)
            stats = {
                "requests": self._requests,
                "errors": self._errors,
                "cache": {
                    "hits": self._cache_hits,
                    "misses": self._cache_misses,
                    "size": cache_size,
                    "ttl_s": self.cache_ttl,
                },
                "skipped_history": self._skipped_history,
            }
        return {
            "status": "ok",
            "checkpoint_id": state.checkpoint_id,
            "lookup_build_id": state.lookup.build_id,
            "loaded_at": state.loaded_at,
            "uptime_s": time.time() - self._started,
            "latency_ms": {
                "p50": _quantile(latencies, 0.50),
                "p99": _quantile(latencies, 0.99),
            },
            **stats,
        }


def _quantile(sorted_values: list[float], q: float) -> float | None:
    if not sorted_values:
        return None
    idx = max(0, min(len(sorted_values) - 1, int(np.ceil(q * len(sorted_values))) - 1))
    return sorted_values[idx]


# ---------------------------------------------------------------------------
# HTTP layer


def _make_handler(service: RecommendService) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt: str, *args: Any) -> None:  # keep tests quiet
            pass

        def _send(self, code: int, payload: dict[str, Any]) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_json(self) -> dict[str, Any]:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            return json.loads(raw.decode("utf-8"))

        def do_GET(self) -> None:
            if self.path == "/healthz":
                self._send(200, service.healthz())
            else:
                self._send(404, {"error": f"no route {self.path}"})

        def do_POST(self) -> None:
            try:
                payload = self._read_json()
            except (ValueError, UnicodeDecodeError) as exc:
                self._send(400, {"error": f"bad json: {exc}"})
                return
            if self.path == "/v1/recommend":
                try:
                    request = RecommendRequest.from_payload(payload)
                    response = service.recommend(request)
                except (ValueError, KeyError) as exc:
                    self._send(400, {"error": str(exc)})
                    return
                self._send(200, response.to_payload())
            elif self.path == "/v1/reload":
                try:
                    state = service.reload(
                        checkpoint=payload.get("checkpoint"),
                        lookup=payload.get("lookup"),
                        codebook=payload.get("codebook"),
                        catalog=payload.get("catalog"),
                        profiles=payload.get("profiles"),
                    )
                except (ArtifactError, OSError) as exc:
                    self._send(409, {"error": str(exc)})
                    return
                self._send(200, {
                    "status": "reloaded",
                    "checkpoint_id": state.checkpoint_id,
                    "lookup_build_id": state.lookup.build_id,
                })
            else:
                self._send(404, {"error": f"no route {self.path}"})

    return Handler


class ServiceServer:
    """Threaded HTTP server wrapper with explicit start/stop, for the CLI and
    for tests that need a real socket."""

    def __init__(self, service: RecommendService, host: str = "127.0.0.1", port: int = 0):
        self.service = service
        self._httpd = ThreadingHTTPServer((host, port), _make_handler(service))
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
