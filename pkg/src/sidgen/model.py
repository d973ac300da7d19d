"""Autoregressive scorer over SID tokens with hand-written backprop.

Because SIDs have fixed length M, the scorer factorizes p(c_1..c_M | context)
with one head per level instead of a general sequence decoder. The context
vector is an affine mix of four fixed-order blocks: the mean embedding of the
history SIDs, the projected user vector at its soft-prompt slot, the control
token embedding, and a metadata summary. Reserved tokens all sit on a
gradient path: BOS fills an empty history, the soft-prompt placeholder is
added to the projected user vector, and EOS terminates the metadata summary.

Shapes use d = d_model, h = hidden, K codes per level, V vocabulary size.
All math is float64 numpy; training is plain Adam over the parameter blocks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .catalog import Episode
from .dataset import TrainingExample
from .quantizer import Codebook, SemanticId, encode_many
from .sid_index import BOS_TOKEN, EOS_TOKEN, SOFT_PROMPT_TOKEN, TokenSpace

CHECKPOINT_FORMAT = "sidgen.checkpoint"


@dataclass(frozen=True)
class ScorerConfig:
    k: int
    m: int
    d_model: int = 64
    d_user: int = 32
    hidden: int = 64
    locales: tuple[str, ...] = ()
    n_topics: int = 0
    history_decay: float | None = None  # None = uniform mean pooling

    @property
    def n_metadata(self) -> int:
        return len(self.locales) + self.n_topics

    def token_space(self) -> TokenSpace:
        return TokenSpace(k=self.k, m=self.m, n_metadata=self.n_metadata)


@dataclass(frozen=True)
class PromptContext:
    """Everything the scorer conditions on; identical contexts give identical
    context vectors."""

    history: tuple[SemanticId, ...]  # most recent last
    user_vector: np.ndarray  # (d_user,)
    control: str | None  # None zeroes the control slot
    locale: str | None
    topics: tuple[int, ...]


class ScorerParams:
    """Parameter blocks keyed by name, in a fixed order for checkpoints,
    Adam state, and the finite-difference harness."""

    def __init__(self, config: ScorerConfig, arrays: dict[str, np.ndarray]):
        self.config = config
        self.token_space = config.token_space()
        expected = set(block_names(config))
        if set(arrays) != expected:
            missing = expected.symmetric_difference(arrays)
            raise ValueError(f"parameter blocks mismatch: {sorted(missing)}")
        self.arrays = arrays

    @classmethod
    def init(cls, config: ScorerConfig, seed: int) -> "ScorerParams":
        rng = np.random.default_rng(seed)
        space = config.token_space()
        d, h, du = config.d_model, config.hidden, config.d_user
        arrays: dict[str, np.ndarray] = {
            "emb": rng.normal(size=(space.total, d)) * 0.1,
            "proj_w1": rng.normal(size=(h, du)) / np.sqrt(du),
            "proj_b1": np.zeros(h),
            "proj_w2": rng.normal(size=(d, h)) / np.sqrt(h),
            "proj_b2": np.zeros(d),
            "mix_w": rng.normal(size=(d, 4 * d)) / np.sqrt(4 * d),
            "mix_b": np.zeros(d),
        }
        for i in range(config.m):
            fan_in = (1 + i) * d
            arrays[f"head{i}_w1"] = rng.normal(size=(h, fan_in)) / np.sqrt(fan_in)
            arrays[f"head{i}_b1"] = np.zeros(h)
            arrays[f"head{i}_w2"] = rng.normal(size=(config.k, h)) / np.sqrt(h)
            arrays[f"head{i}_b2"] = np.zeros(config.k)
        return cls(config, arrays)

    def copy(self) -> "ScorerParams":
        return ScorerParams(self.config, {k: v.copy() for k, v in self.arrays.items()})


def block_names(config: ScorerConfig) -> list[str]:
    names = ["emb", "proj_w1", "proj_b1", "proj_w2", "proj_b2", "mix_w", "mix_b"]
    for i in range(config.m):
        names += [f"head{i}_w1", f"head{i}_b1", f"head{i}_w2", f"head{i}_b2"]
    return names


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


# ---------------------------------------------------------------------------
# feature assembly


@dataclass
class _Features:
    hist_tokens: np.ndarray  # int (n,)
    hist_weights: np.ndarray  # float (n,), sums to 1
    meta_tokens: np.ndarray
    meta_weights: np.ndarray
    ctrl: int  # token id, or -1 when the control slot is zeroed
    v: np.ndarray  # (d_user,)


def _features(params: ScorerParams, ctx: PromptContext) -> _Features:
    cfg = params.config
    space = params.token_space
    if ctx.history:
        n_items = len(ctx.history)
        if cfg.history_decay is None:
            item_w = np.ones(n_items)
        else:
            ranks = np.arange(n_items - 1, -1, -1)  # most recent item has rank 0
            item_w = cfg.history_decay ** ranks
        item_w = item_w / item_w.sum()
        tokens = []
        weights = []
        for sid, w in zip(ctx.history, item_w):
            tokens.extend(space.sid_tokens(sid))
            weights.extend([w / cfg.m] * cfg.m)
        hist_tokens = np.array(tokens, dtype=np.int64)
        hist_weights = np.array(weights)
    else:
        hist_tokens = np.array([BOS_TOKEN], dtype=np.int64)
        hist_weights = np.array([1.0])

    meta = []
    if ctx.locale is not None and ctx.locale in cfg.locales:
        meta.append(space.metadata_token(cfg.locales.index(ctx.locale)))
    for t in ctx.topics:
        if 0 <= t < cfg.n_topics:
            meta.append(space.metadata_token(len(cfg.locales) + t))
    meta.append(EOS_TOKEN)
    meta_tokens = np.array(meta, dtype=np.int64)
    meta_weights = np.full(len(meta), 1.0 / len(meta))

    v = np.asarray(ctx.user_vector, dtype=np.float64)
    if v.shape != (cfg.d_user,):
        raise ValueError(f"user_vector has shape {v.shape}, expected ({cfg.d_user},)")
    ctrl = -1 if ctx.control is None else space.control_token(ctx.control)
    return _Features(hist_tokens, hist_weights, meta_tokens, meta_weights, ctrl, v)


# ---------------------------------------------------------------------------
# forward


@dataclass
class _ContextCache:
    feats: list[_Features]
    v_mat: np.ndarray  # (B, d_user)
    t1: np.ndarray  # (B, h)
    z: np.ndarray  # (B, 4d)
    ctx: np.ndarray  # (B, d)


def _forward_context(params: ScorerParams, feats: list[_Features]) -> _ContextCache:
    a = params.arrays
    d = params.config.d_model
    b = len(feats)
    emb = a["emb"]

    hist = np.empty((b, d))
    meta = np.empty((b, d))
    ctrl = np.zeros((b, d))
    for i, f in enumerate(feats):
        hist[i] = f.hist_weights @ emb[f.hist_tokens]
        meta[i] = f.meta_weights @ emb[f.meta_tokens]
        if f.ctrl >= 0:
            ctrl[i] = emb[f.ctrl]

    v_mat = np.stack([f.v for f in feats])
    t1 = np.tanh(v_mat @ a["proj_w1"].T + a["proj_b1"])
    soft = t1 @ a["proj_w2"].T + a["proj_b2"] + emb[SOFT_PROMPT_TOKEN]

    z = np.hstack([hist, soft, ctrl, meta])
    ctx = z @ a["mix_w"].T + a["mix_b"]
    return _ContextCache(feats=feats, v_mat=v_mat, t1=t1, z=z, ctx=ctx)


def _prefix_token_matrix(space: TokenSpace, prefixes: np.ndarray) -> np.ndarray:
    # prefixes: (B, i) codes -> token ids per level
    if prefixes.size == 0:
        return prefixes.astype(np.int64)
    levels = np.arange(1, prefixes.shape[1] + 1)
    if (prefixes < 0).any() or (prefixes >= space.k).any():
        raise ValueError("prefix code out of range")
    return space.sid_base + (levels - 1) * space.k + prefixes


def _level_forward(params: ScorerParams, ctx_mat: np.ndarray, prefix_tokens: np.ndarray,
                   level: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a = params.arrays
    d = params.config.d_model
    if prefix_tokens.shape[1] != level:
        raise ValueError("prefix length does not match level")
    if level:
        emb_blocks = params.arrays["emb"][prefix_tokens].reshape(ctx_mat.shape[0], level * d)
        u = np.hstack([ctx_mat, emb_blocks])
    else:
        u = ctx_mat
    h = np.tanh(u @ a[f"head{level}_w1"].T + a[f"head{level}_b1"])
    logits = h @ a[f"head{level}_w2"].T + a[f"head{level}_b2"]
    return u, h, logits


def context_vector(params: ScorerParams, ctx: PromptContext) -> np.ndarray:
    """Deterministic context vector for one prompt."""
    return _forward_context(params, [_features(params, ctx)]).ctx[0]


def prefix_logits(params: ScorerParams, ctx_vec: np.ndarray, prefixes: np.ndarray,
                  level: int) -> np.ndarray:
    """Level logits for a batch of prefixes sharing one context vector."""
    prefixes = np.asarray(prefixes, dtype=np.int64).reshape(len(prefixes), level)
    ctx_mat = np.broadcast_to(ctx_vec, (prefixes.shape[0], ctx_vec.shape[0]))
    tokens = _prefix_token_matrix(params.token_space, prefixes)
    _, _, logits = _level_forward(params, ctx_mat, tokens, level)
    return logits


def level_logits(params: ScorerParams, ctx: PromptContext,
                 prefix: Sequence[int]) -> np.ndarray:
    """K logits for the next code after ``prefix`` (teacher-forced or decoded)."""
    if len(prefix) >= params.config.m:
        raise ValueError(f"prefix of length {len(prefix)} leaves no level to score "
                         f"(m={params.config.m})")
    vec = context_vector(params, ctx)
    return prefix_logits(params, vec, np.array([prefix]), len(prefix))[0]


def context_from_example(ex: TrainingExample, use_control: bool = True) -> PromptContext:
    return PromptContext(
        history=tuple(sid for sid, _ in ex.history),
        user_vector=ex.user_vector,
        control=ex.control if use_control else None,
        locale=ex.locale,
        topics=ex.affinity_topics,
    )


# ---------------------------------------------------------------------------
# loss and gradient


def example_loss(params: ScorerParams, ex: TrainingExample,
                 use_control: bool = True) -> float:
    """sample_weight times the summed per-level cross-entropy, teacher-forced."""
    return float(_weighted_nll(params, [ex], use_control)[0])


def batch_loss(params: ScorerParams, examples: Sequence[TrainingExample],
               use_control: bool = True) -> float:
    """Mean weighted loss over the batch; what train() optimizes."""
    if not examples:
        raise ValueError("batch is empty")
    return float(_weighted_nll(params, examples, use_control).mean())


def _targets(params: ScorerParams, examples: Sequence[TrainingExample]) -> np.ndarray:
    k, m = params.config.k, params.config.m
    targets = np.empty((len(examples), m), dtype=np.int64)
    for i, ex in enumerate(examples):
        if len(ex.target_sid) != m:
            raise ValueError(f"target sid {ex.target_sid} has wrong length")
        targets[i] = ex.target_sid
    if (targets < 0).any() or (targets >= k).any():
        raise ValueError("target code out of range")
    return targets


def _weighted_nll(params: ScorerParams, examples: Sequence[TrainingExample],
                  use_control: bool) -> np.ndarray:
    feats = [_features(params, context_from_example(ex, use_control)) for ex in examples]
    targets = _targets(params, examples)
    weights = np.array([ex.sample_weight for ex in examples])
    cache = _forward_context(params, feats)
    space = params.token_space
    nll = np.zeros(len(examples))
    for level in range(params.config.m):
        tokens = _prefix_token_matrix(space, targets[:, :level])
        _, _, logits = _level_forward(params, cache.ctx, tokens, level)
        logp = log_softmax(logits)
        nll += -logp[np.arange(len(examples)), targets[:, level]]
    return weights * nll


def grad(params: ScorerParams, examples: Sequence[TrainingExample],
         use_control: bool = True) -> dict[str, np.ndarray]:
    """Analytic gradient of the mean weighted loss over the batch."""
    _, grads = loss_and_grad(params, examples, use_control)
    return grads


def loss_and_grad(params: ScorerParams, examples: Sequence[TrainingExample],
                  use_control: bool = True) -> tuple[float, dict[str, np.ndarray]]:
    if not examples:
        raise ValueError("batch is empty")
    a = params.arrays
    cfg = params.config
    d, b = cfg.d_model, len(examples)
    space = params.token_space

    feats = [_features(params, context_from_example(ex, use_control)) for ex in examples]
    targets = _targets(params, examples)
    coef = np.array([ex.sample_weight for ex in examples]) / b

    cache = _forward_context(params, feats)
    grads = {name: np.zeros_like(arr) for name, arr in a.items()}
    g_emb = grads["emb"]

    loss = 0.0
    d_ctx = np.zeros((b, d))
    for level in range(cfg.m):
        tokens = _prefix_token_matrix(space, targets[:, :level])
        u, h, logits = _level_forward(params, cache.ctx, tokens, level)
        logp = log_softmax(logits)
        rows = np.arange(b)
        loss += float((coef * -logp[rows, targets[:, level]]).sum())

        d_logits = np.exp(logp)
        d_logits[rows, targets[:, level]] -= 1.0
        d_logits *= coef[:, None]

        grads[f"head{level}_w2"] += d_logits.T @ h
        grads[f"head{level}_b2"] += d_logits.sum(axis=0)
        d_h = d_logits @ a[f"head{level}_w2"]
        d_pre = d_h * (1.0 - h * h)
        grads[f"head{level}_w1"] += d_pre.T @ u
        grads[f"head{level}_b1"] += d_pre.sum(axis=0)
        d_u = d_pre @ a[f"head{level}_w1"]
        d_ctx += d_u[:, :d]
        for p in range(level):
            np.add.at(g_emb, tokens[:, p], d_u[:, (1 + p) * d:(2 + p) * d])

    grads["mix_w"] += d_ctx.T @ cache.z
    grads["mix_b"] += d_ctx.sum(axis=0)
    d_z = d_ctx @ a["mix_w"]
    d_hist, d_soft, d_ctrl, d_meta = np.split(d_z, 4, axis=1)

    for i, f in enumerate(feats):
        np.add.at(g_emb, f.hist_tokens, f.hist_weights[:, None] * d_hist[i])
        np.add.at(g_emb, f.meta_tokens, f.meta_weights[:, None] * d_meta[i])
        if f.ctrl >= 0:
            g_emb[f.ctrl] += d_ctrl[i]

    g_emb[SOFT_PROMPT_TOKEN] += d_soft.sum(axis=0)
    grads["proj_w2"] += d_soft.T @ cache.t1
    grads["proj_b2"] += d_soft.sum(axis=0)
    d_t1 = d_soft @ a["proj_w2"]
    d_pre1 = d_t1 * (1.0 - cache.t1 * cache.t1)
    grads["proj_w1"] += d_pre1.T @ cache.v_mat
    grads["proj_b1"] += d_pre1.sum(axis=0)

    return loss, grads


# ---------------------------------------------------------------------------
# optimization


class _Adam:
    def __init__(self, shapes: dict[str, np.ndarray], lr: float, beta1: float,
                 beta2: float, eps: float):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in shapes.items()}
        self.v = {k: np.zeros_like(v) for k, v in shapes.items()}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             only: set[str] | None = None) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for name, g in grads.items():
            if only is not None and name not in only:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            arrays[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 300
    batch_size: int = 32
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    use_control: bool = True


def train(params: ScorerParams, examples: Sequence[TrainingExample],
          config: TrainConfig) -> tuple[ScorerParams, list[dict[str, Any]]]:
    """Adam over the mean weighted loss. Examples are canonically sorted
    before the seeded shuffle, so the visit order derives from the seed alone
    and the input ordering cannot change the result."""
    if not examples:
        raise ValueError("no training examples")
    if config.steps < 0:
        raise ValueError("steps must be >= 0")
    ordered = sorted(
        examples,
        key=lambda ex: (ex.user_id, ex.timestamp, ex.target_episode_id, ex.surface),
    )
    out = params.copy()
    opt = _Adam(out.arrays, config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)
    log: list[dict[str, Any]] = []

    step = 0
    while step < config.steps:
        order = rng.permutation(len(ordered))
        for start in range(0, len(order), config.batch_size):
            if step >= config.steps:
                break
            batch = [ordered[i] for i in order[start:start + config.batch_size]]
            loss, grads = loss_and_grad(out, batch, config.use_control)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss} at step {step} "
                    f"(lr={config.learning_rate}, batch_size={config.batch_size})"
                )
            opt.step(out.arrays, grads)
            log.append({"step": step, "loss": loss})
            step += 1
    return out, log


# ---------------------------------------------------------------------------
# grounding


@dataclass(frozen=True)
class GroundConfig:
    embed_steps: int = 300
    head_steps: int = 300
    batch_size: int = 64
    learning_rate: float = 1e-2
    seed: int = 0


def ground(params: ScorerParams, episodes: Sequence[Episode], codebook: Codebook,
           config: GroundConfig) -> tuple[ScorerParams, dict[str, Any]]:
    """Two-stage grounding of SID tokens against content embeddings.

    Stage (a) trains only the SID token embeddings (plus a throwaway linear
    probe) to regress the concatenated token embeddings back onto the content
    embedding. Stage (b) freezes embeddings and trains the level heads (plus
    a throwaway content-to-context map) to classify the codes from the
    content embedding, teacher-forced through the same head machinery the
    scorer uses. Both translation directions are exercised; the auxiliary
    maps are returned in the log, not kept in the params.
    """
    if config.embed_steps == 0 and config.head_steps == 0:
        raise ValueError("grounding needs steps in at least one sub-stage")
    if config.embed_steps < 0 or config.head_steps < 0:
        raise ValueError("stage steps must be >= 0")
    if not episodes:
        raise ValueError("no episodes to ground on")

    cfg = params.config
    x = np.stack([e.content_embedding for e in episodes]).astype(np.float64)
    if x.shape[1] != codebook.d:
        raise ValueError("episode embeddings do not match the codebook dimension")
    codes = encode_many(codebook, x)
    tokens = _prefix_token_matrix(params.token_space, codes[:, :cfg.m])

    out = params.copy()
    d, m = cfg.d_model, cfg.m
    n = x.shape[0]
    log: dict[str, Any] = {"embed_losses": [], "head_losses": []}

    # stage (a): SID embeddings only, content regression through a probe
    rng = np.random.default_rng([config.seed, 0])
    probe = {
        "w": rng.normal(size=(x.shape[1], m * d)) / np.sqrt(m * d),
        "b": np.zeros(x.shape[1]),
    }
    state = {"emb": out.arrays["emb"], "probe_w": probe["w"], "probe_b": probe["b"]}
    opt = _Adam(state, config.learning_rate, 0.9, 0.999, 1e-8)
    for _ in range(config.embed_steps):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        tk = tokens[idx]
        concat = state["emb"][tk].reshape(len(idx), m * d)
        pred = concat @ state["probe_w"].T + state["probe_b"]
        err = pred - x[idx]
        loss = float((err * err).sum(axis=1).mean())
        d_pred = 2.0 * err / len(idx)
        g = {
            "probe_w": d_pred.T @ concat,
            "probe_b": d_pred.sum(axis=0),
            "emb": np.zeros_like(state["emb"]),
        }
        d_concat = d_pred @ state["probe_w"]
        for p in range(m):
            np.add.at(g["emb"], tk[:, p], d_concat[:, p * d:(p + 1) * d])
        opt.step(state, g)
        log["embed_losses"].append(loss)

    # stage (b): heads only, code classification from a content-mapped context
    rng = np.random.default_rng([config.seed, 1])
    cmap_w = rng.normal(size=(d, x.shape[1])) / np.sqrt(x.shape[1])
    cmap_b = np.zeros(d)
    head_names = [name for name in out.arrays if name.startswith("head")]
    state_b: dict[str, np.ndarray] = {"cmap_w": cmap_w, "cmap_b": cmap_b}
    state_b.update({name: out.arrays[name] for name in head_names})
    opt_b = _Adam(state_b, config.learning_rate, 0.9, 0.999, 1e-8)
    for _ in range(config.head_steps):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        xb = x[idx]
        ctx = xb @ state_b["cmap_w"].T + state_b["cmap_b"]
        g = {name: np.zeros_like(arr) for name, arr in state_b.items()}
        d_ctx = np.zeros_like(ctx)
        loss = 0.0
        rows = np.arange(len(idx))
        for level in range(m):
            u, h, logits = _level_forward(out, ctx, tokens[idx][:, :level], level)
            logp = log_softmax(logits)
            loss += float(-logp[rows, codes[idx, level]].mean())
            d_logits = np.exp(logp)
            d_logits[rows, codes[idx, level]] -= 1.0
            d_logits /= len(idx)
            g[f"head{level}_w2"] += d_logits.T @ h
            g[f"head{level}_b2"] += d_logits.sum(axis=0)
            d_h = d_logits @ out.arrays[f"head{level}_w2"]
            d_pre = d_h * (1.0 - h * h)
            g[f"head{level}_w1"] += d_pre.T @ u
            g[f"head{level}_b1"] += d_pre.sum(axis=0)
            d_ctx += (d_pre @ out.arrays[f"head{level}_w1"])[:, :d]
        g["cmap_w"] += d_ctx.T @ xb
        g["cmap_b"] += d_ctx.sum(axis=0)
        opt_b.step(state_b, g)
        log["head_losses"].append(loss)

    log["probe"] = {k: v for k, v in state.items() if k.startswith("probe")}
    log["content_map"] = {"w": state_b["cmap_w"], "b": state_b["cmap_b"]}
    return out, log


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, params: ScorerParams,
                    extra: dict[str, Any] | None = None) -> str:
    """Versioned header plus parameter blocks in fixed order; round-trips
    bitwise. Returns the content-derived checkpoint id."""
    cfg = params.config
    digest = hashlib.blake2b(digest_size=8)
    for name in block_names(cfg):
        digest.update(name.encode())
        digest.update(params.arrays[name].tobytes())
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "k": cfg.k,
        "m": cfg.m,
        "d_model": cfg.d_model,
        "d_user": cfg.d_user,
        "hidden": cfg.hidden,
        "locales": list(cfg.locales),
        "n_topics": cfg.n_topics,
        "history_decay": cfg.history_decay,
        "token_space": cfg.token_space().layout(),
        "checkpoint_id": digest.hexdigest(),
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header)),
                 **{name: params.arrays[name] for name in block_names(cfg)})
    return header["checkpoint_id"]


def load_checkpoint(path: str | Path) -> tuple[ScorerParams, dict[str, Any]]:
    from .artifacts import ArtifactError

    with np.load(path, allow_pickle=False) as data:
        if "__header__" not in data:
            raise ArtifactError(f"{path}: missing checkpoint header")
        header = json.loads(str(data["__header__"]))
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != 1:
            raise ArtifactError(f"{path}: not a v1 {CHECKPOINT_FORMAT} file")
        config = ScorerConfig(
            k=header["k"],
            m=header["m"],
            d_model=header["d_model"],
            d_user=header["d_user"],
            hidden=header["hidden"],
            locales=tuple(header["locales"]),
            n_topics=header["n_topics"],
            history_decay=header["history_decay"],
        )
        arrays = {name: data[name].copy() for name in block_names(config)}
    return ScorerParams(config, arrays), header
