"""The forecasting network and its gradients.

Architecture, per window: each row of the phase-period matrix (one phase
token) is embedded by a shared linear map, tagged with a learnable
positional embedding, refined by one or more routing layers, and projected
to that phase's future periods by a shared linear predictor. A routing
layer runs two multi-head cross-attentions: a small set of learnable
router vectors first attends over the phase tokens (aggregation), then the
phase tokens attend over the contextualized routers (distribution). There
is no layer norm, feed-forward block, or dropout; an optional residual
connection around each layer's attention output is off by default.

forward/backward accept a single l_phase x p_in matrix or a batch with one
leading axis; the backward pass is hand-derived reverse mode and returns
gradients in a ModelParams of the same shapes.
"""

import copy
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, ShapeError
from .numerics import softmax_last_axis
from .validation import check_count

CHECKPOINT_MAGIC = b"PHFM1"

# Scale of the uniform init for positional embeddings and routers.
_EMBED_INIT_SCALE = 0.02


@dataclass(frozen=True)
class ModelConfig:
    """All architecture hyperparameters; p_in/p_out are always derived."""

    l_in: int
    l_out: int
    l_phase: int
    embed_dim: int = 8
    n_routers: int = 8
    n_layers: int = 1
    n_heads: int = 1
    residual: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("l_in", "l_out", "l_phase", "embed_dim", "n_routers",
                     "n_layers", "n_heads"):
            check_count(getattr(self, name), name)
        if self.embed_dim % self.n_heads:
            raise ContractError(
                f"embed_dim={self.embed_dim} not divisible by n_heads={self.n_heads}")
        if self.seed < 0:
            raise ContractError(f"seed must be non-negative, got {self.seed}")

    @property
    def p_in(self):
        return -(-self.l_in // self.l_phase)

    @property
    def p_out(self):
        return -(-self.l_out // self.l_phase)


@dataclass
class AttentionParams:
    """Projection weights and biases for one cross-attention block."""

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray


@dataclass
class LayerParams:
    agg: AttentionParams
    dist: AttentionParams


@dataclass
class ModelParams:
    """Every trainable tensor, in the canonical (de)serialization order."""

    embed_w: np.ndarray
    embed_b: np.ndarray
    pos_embed: np.ndarray
    routers: np.ndarray
    layers: list[LayerParams]
    pred_w: np.ndarray
    pred_b: np.ndarray

    def tensors(self):
        yield self.embed_w
        yield self.embed_b
        yield self.pos_embed
        yield self.routers
        for layer in self.layers:
            for attn in (layer.agg, layer.dist):
                yield attn.wq
                yield attn.bq
                yield attn.wk
                yield attn.bk
                yield attn.wv
                yield attn.bv
                yield attn.wo
                yield attn.bo
        yield self.pred_w
        yield self.pred_b

    def to_vector(self):
        return np.concatenate([t.ravel() for t in self.tensors()])

    @classmethod
    def from_vector(cls, config, vec):
        vec = np.asarray(vec, dtype=np.float64)
        shapes = [shape for _, shape in param_shapes(config)]
        total = sum(int(np.prod(s)) for s in shapes)
        if vec.size != total:
            raise ShapeError(f"vector of size {vec.size} != parameter count {total}")
        chunks = []
        pos = 0
        for shape in shapes:
            n = int(np.prod(shape))
            chunks.append(vec[pos:pos + n].reshape(shape).copy())
            pos += n
        it = iter(chunks)

        def attn():
            return AttentionParams(*(next(it) for _ in range(8)))

        embed_w, embed_b, pos_embed, routers = next(it), next(it), next(it), next(it)
        layers = [LayerParams(agg=attn(), dist=attn()) for _ in range(config.n_layers)]
        pred_w, pred_b = next(it), next(it)
        return cls(embed_w, embed_b, pos_embed, routers, layers, pred_w, pred_b)

    def copy(self):
        return copy.deepcopy(self)


def param_shapes(config):
    """Canonical ordered list of (name, shape) for every trainable tensor."""
    g, p_in, p_out = config.l_phase, config.p_in, config.p_out
    d, m = config.embed_dim, config.n_routers
    shapes = [
        ("embed_w", (p_in, d)),
        ("embed_b", (d,)),
        ("pos_embed", (g, d)),
        ("routers", (m, d)),
    ]
    for i in range(config.n_layers):
        for block in ("agg", "dist"):
            for proj in ("wq", "wk", "wv", "wo"):
                shapes.append((f"layers[{i}].{block}.{proj}", (d, d)))
                shapes.append((f"layers[{i}].{block}.b{proj[1]}", (d,)))
    shapes.append(("pred_w", (d, p_out)))
    shapes.append(("pred_b", (p_out,)))
    return shapes


def count_params(config):
    """Total trainable scalar count, in closed form from the shape table."""
    return sum(int(np.prod(shape)) for _, shape in param_shapes(config))


def init_params(config):
    """Deterministic init: uniform(-1/sqrt(fan_in)) weights, zero biases,
    uniform(+-0.02) positional embeddings and routers."""
    rng = np.random.default_rng(config.seed)
    g, p_in, p_out = config.l_phase, config.p_in, config.p_out
    d, m = config.embed_dim, config.n_routers

    def uniform(shape, scale):
        return rng.uniform(-scale, scale, size=shape)

    embed_w = uniform((p_in, d), 1.0 / math.sqrt(p_in))
    embed_b = np.zeros(d)
    pos_embed = uniform((g, d), _EMBED_INIT_SCALE)
    routers = uniform((m, d), _EMBED_INIT_SCALE)
    layers = []
    proj_scale = 1.0 / math.sqrt(d)
    for _ in range(config.n_layers):
        def attn():
            return AttentionParams(
                wq=uniform((d, d), proj_scale), bq=np.zeros(d),
                wk=uniform((d, d), proj_scale), bk=np.zeros(d),
                wv=uniform((d, d), proj_scale), bv=np.zeros(d),
                wo=uniform((d, d), proj_scale), bo=np.zeros(d),
            )

        layers.append(LayerParams(agg=attn(), dist=attn()))
    pred_w = uniform((d, p_out), proj_scale)
    pred_b = np.zeros(p_out)
    return ModelParams(embed_w, embed_b, pos_embed, routers, layers, pred_w, pred_b)


# ---------------------------------------------------------------------------
# FLOP accounting


class MacCounter:
    """Counts multiply-accumulate ops of matrix products while active."""

    _active: list = []

    def __init__(self):
        self.macs = 0

    def __enter__(self):
        MacCounter._active.append(self)
        return self

    def __exit__(self, *exc):
        MacCounter._active.remove(self)
        return False


def _mm(a, b):
    out = a @ b
    if MacCounter._active:
        macs = out.size * a.shape[-1]
        for counter in MacCounter._active:
            counter.macs += macs
    return out


def estimate_flops(config):
    """Analytic multiply-accumulate count of one forward pass per variable.

    Linear in both l_in and l_out once the routing-layer cost (which depends
    only on l_phase, n_routers, and embed_dim) is fixed.
    """
    g, p_in, p_out = config.l_phase, config.p_in, config.p_out
    d, m = config.embed_dim, config.n_routers
    embed = g * p_in * d
    # Per layer: q/k/v/out projections of both attentions, plus the two
    # score and two value contractions.
    per_layer = 4 * (g + m) * d * d + 4 * m * g * d
    predict = g * d * p_out
    return embed + config.n_layers * per_layer + predict


# ---------------------------------------------------------------------------
# Forward / backward


@dataclass
class AttentionCache:
    """Intermediates of one cross-attention call, kept for the backward pass."""

    q_in: np.ndarray
    kv_in: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray  # (..., n_heads, n_q, n_kv), rows on the simplex
    concat: np.ndarray


@dataclass
class LayerCache:
    tokens_in: np.ndarray
    agg: AttentionCache
    routers_ctx: np.ndarray
    dist: AttentionCache
    tokens_out: np.ndarray


@dataclass
class ForwardCache:
    inputs: np.ndarray
    embedded: np.ndarray
    tokens: np.ndarray
    layers: list[LayerCache] = field(default_factory=list)
    outputs: np.ndarray = None


def _head_slices(d, n_heads):
    dh = d // n_heads
    return [slice(h * dh, (h + 1) * dh) for h in range(n_heads)], dh


def _mha(q_in, kv_in, proj, n_heads):
    """Multi-head cross-attention; q_in may be unbatched while kv_in is batched."""
    q = _mm(q_in, proj.wq) + proj.bq
    k = _mm(kv_in, proj.wk) + proj.bk
    v = _mm(kv_in, proj.wv) + proj.bv
    slices, dh = _head_slices(q.shape[-1], n_heads)
    scale = 1.0 / math.sqrt(dh)
    head_outs = []
    head_weights = []
    for sl in slices:
        logits = _mm(q[..., sl], np.swapaxes(k[..., sl], -1, -2)) * scale
        w = softmax_last_axis(logits)
        head_weights.append(w)
        head_outs.append(_mm(w, v[..., sl]))
    concat = np.concatenate(head_outs, axis=-1)
    out = _mm(concat, proj.wo) + proj.bo
    weights = np.stack(head_weights, axis=-3)
    return out, AttentionCache(q_in, kv_in, q, k, v, weights, concat)


def mha(q_in, kv_in, proj, n_heads=1):
    """Cross-attention between a query matrix and a key/value matrix.

    Returns (out, weights) where weights has shape (n_heads, n_q, n_kv) and
    every row sums to one.
    """
    q_in = np.asarray(q_in, dtype=np.float64)
    kv_in = np.asarray(kv_in, dtype=np.float64)
    d = proj.wq.shape[0]
    if q_in.ndim != 2 or kv_in.ndim != 2:
        raise ShapeError("mha expects 2-D query and key/value inputs")
    if q_in.shape[1] != d or kv_in.shape[1] != d:
        raise ShapeError(
            f"mha inputs of width {q_in.shape[1]}/{kv_in.shape[1]} "
            f"do not match projection width {d}")
    if d % n_heads:
        raise ShapeError(f"width {d} not divisible by n_heads={n_heads}")
    out, cache = _mha(q_in, kv_in, proj, n_heads)
    return out, cache.weights


def forward(params, x_phase, config):
    """Run the network on one phase-period matrix or a batch of them.

    x_phase: (l_phase, p_in) or (batch, l_phase, p_in). Returns
    (outputs, cache) where outputs is (..., l_phase, p_out).
    """
    x_phase = np.asarray(x_phase, dtype=np.float64)
    if x_phase.ndim not in (2, 3):
        raise ShapeError(f"x_phase must be 2-D or 3-D, got ndim={x_phase.ndim}")
    if x_phase.shape[-2:] != (config.l_phase, config.p_in):
        raise ShapeError(
            f"x_phase shape {x_phase.shape[-2:]} != "
            f"({config.l_phase}, {config.p_in})")

    embedded = _mm(x_phase, params.embed_w) + params.embed_b
    tokens = embedded + params.pos_embed
    cache = ForwardCache(inputs=x_phase, embedded=embedded, tokens=tokens)
    current = tokens
    for layer in params.layers:
        routers_ctx, agg_cache = _mha(params.routers, current, layer.agg, config.n_heads)
        attn_out, dist_cache = _mha(current, routers_ctx, layer.dist, config.n_heads)
        tokens_out = current + attn_out if config.residual else attn_out
        cache.layers.append(LayerCache(current, agg_cache, routers_ctx,
                                       dist_cache, tokens_out))
        current = tokens_out
    outputs = _mm(current, params.pred_w) + params.pred_b
    cache.outputs = outputs
    return outputs, cache


def _sum_to(dx, target_ndim):
    """Collapse leading batch axes so dx matches an unbatched parameter."""
    while dx.ndim > target_ndim:
        dx = dx.sum(axis=0)
    return dx


def _reduce_all_but_last(arr):
    return arr.sum(axis=tuple(range(arr.ndim - 1)))


def _outer_grad(a, b):
    """Sum over rows (and batch) of a[..., i] b[..., j] -> matrix grad."""
    a2 = a.reshape(-1, a.shape[-1])
    b2 = b.reshape(-1, b.shape[-1])
    return a2.T @ b2


def _mha_backward(proj, cache, d_out, n_heads):
    """Gradients of one cross-attention; returns (d_q_in, d_kv_in, grads)."""
    d_concat = d_out @ proj.wo.T
    g_wo = _outer_grad(cache.concat, d_out)
    g_bo = _reduce_all_but_last(d_out)

    slices, dh = _head_slices(cache.q.shape[-1], n_heads)
    scale = 1.0 / math.sqrt(dh)
    dq = np.zeros_like(cache.q)
    dk = np.zeros_like(cache.k)
    dv = np.zeros_like(cache.v)
    for h, sl in enumerate(slices):
        w = cache.weights[..., h, :, :]
        ks = cache.k[..., sl]
        vs = cache.v[..., sl]
        d_head = d_concat[..., sl]
        d_w = d_head @ np.swapaxes(vs, -1, -2)
        dv[..., sl] = np.swapaxes(w, -1, -2) @ d_head
        d_logits = w * (d_w - (d_w * w).sum(axis=-1, keepdims=True))
        d_logits = d_logits * scale
        dq[..., sl] = _sum_to(d_logits @ ks, dq.ndim)
        dk[..., sl] = np.swapaxes(d_logits, -1, -2) @ cache.q[..., sl]

    g_wq = _outer_grad(cache.q_in, dq)
    g_bq = _reduce_all_but_last(dq)
    g_wk = _outer_grad(cache.kv_in, dk)
    g_bk = _reduce_all_but_last(dk)
    g_wv = _outer_grad(cache.kv_in, dv)
    g_bv = _reduce_all_but_last(dv)
    d_q_in = dq @ proj.wq.T
    d_kv_in = dk @ proj.wk.T + dv @ proj.wv.T
    grads = AttentionParams(g_wq, g_bq, g_wk, g_bk, g_wv, g_bv, g_wo, g_bo)
    return d_q_in, d_kv_in, grads


def backward(params, cache, d_outputs, config):
    """Exact reverse-mode gradients for every tensor in ModelParams.

    d_outputs is the gradient of a scalar loss with respect to the forward
    outputs (same shape). The returned ModelParams holds the gradients.
    """
    d_out = np.asarray(d_outputs, dtype=np.float64)
    if d_out.shape != cache.outputs.shape:
        raise ShapeError(
            f"d_outputs shape {d_out.shape} != outputs shape {cache.outputs.shape}")

    last_tokens = cache.layers[-1].tokens_out
    g_pred_w = _outer_grad(last_tokens, d_out)
    g_pred_b = _reduce_all_but_last(d_out)
    d_cur = d_out @ params.pred_w.T

    g_routers = np.zeros_like(params.routers)
    g_layers = [None] * config.n_layers
    for i in range(config.n_layers - 1, -1, -1):
        layer_cache = cache.layers[i]
        layer = params.layers[i]
        d_attn_out = d_cur
        d_qin_dist, d_routers_ctx, g_dist = _mha_backward(
            layer.dist, layer_cache.dist, d_attn_out, config.n_heads)
        d_qin_agg, d_kvin_agg, g_agg = _mha_backward(
            layer.agg, layer_cache.agg, d_routers_ctx, config.n_heads)
        g_routers += d_qin_agg
        d_cur = d_qin_dist + d_kvin_agg
        if config.residual:
            d_cur = d_cur + d_attn_out
        g_layers[i] = LayerParams(agg=g_agg, dist=g_dist)

    g_pos = _sum_to(d_cur, params.pos_embed.ndim)
    g_embed_w = _outer_grad(cache.inputs, d_cur)
    g_embed_b = _reduce_all_but_last(d_cur)
    return ModelParams(g_embed_w, g_embed_b, g_pos, g_routers, g_layers,
                       g_pred_w, g_pred_b)


# ---------------------------------------------------------------------------
# Checkpoint serialization

_HEADER_FIELDS = ("l_in", "l_out", "l_phase", "embed_dim", "n_routers",
                  "n_layers", "n_heads", "residual", "seed")
_HEADER_STRUCT = struct.Struct("<9q")


def save_checkpoint(path, config, params):
    """Write magic + config header (little-endian int64) + parameter vector."""
    values = [int(getattr(config, name)) for name in _HEADER_FIELDS]
    vec = params.to_vector()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(_HEADER_STRUCT.pack(*values))
        fh.write(vec.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint; returns (config, params)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a model checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    try:
        raw = _HEADER_STRUCT.unpack_from(blob, offset)
    except struct.error as exc:
        raise DataError(f"{path}: truncated checkpoint header") from exc
    fields = dict(zip(_HEADER_FIELDS, raw))
    fields["residual"] = bool(fields["residual"])
    config = ModelConfig(**fields)
    body = blob[offset + _HEADER_STRUCT.size:]
    vec = np.frombuffer(body, dtype="<f8")
    expected = count_params(config)
    if vec.size != expected:
        raise DataError(
            f"{path}: checkpoint holds {vec.size} scalars, config needs {expected}")
    return config, ModelParams.from_vector(config, vec.astype(np.float64))
