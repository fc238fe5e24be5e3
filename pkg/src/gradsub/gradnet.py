"""Dual-system toy model on top of :mod:`gradsub.autodiff`.

planner (token embedding + single-head self-attention blocks)
  -> grounding head (2-D point from the readout position)
  -> gradient decay node -> querying transformer (learned queries,
     cross-attention to the last k planner layers) -> action expert (H x 2 chunk)

Parameters are 2-D float64 tensors kept in a fixed canonical order, which is
also the checkpoint order.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .synthtasks import STREAM_INIT, Rng, TaskConfig

PROBE_PARAM = "final"  # alias resolved to the last planner block's q-projection


class UnknownParameter(KeyError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d: int = 32
    layers: int = 2
    q_count: int = 4
    k: int = 1
    horizon: int = 16
    vocab_size: int = TaskConfig().codec.vocab_size
    decay: float = 0.5
    heads: int = 1

    def __post_init__(self):
        for name in ("d", "layers", "q_count", "k", "horizon", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"model.{name} must be positive")
        if self.vocab_size < 2:
            raise ValueError("model.vocab_size must leave room for the prompt token")
        if self.heads != 1 or self.d % self.heads:
            raise ValueError("only a single attention head is supported")
        if not 1 <= self.k <= self.layers:
            raise ValueError(f"model.k must satisfy 1 <= k <= layers, got k={self.k}")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError(f"model.decay must lie in [0, 1], got {self.decay}")

    @property
    def hidden(self):
        return 4 * self.d

    @property
    def prompt_id(self):
        return self.vocab_size - 1

    @property
    def probe_param(self):
        return f"planner.{self.layers - 1}.wq"


def param_shapes(cfg):
    """Canonical ``(name, (rows, cols))`` list."""
    d, h = cfg.d, cfg.hidden
    shapes = [("embed", (cfg.vocab_size - 1, d)), ("prompt", (1, d))]
    for l in range(cfg.layers):
        p = f"planner.{l}."
        shapes += [(p + n, (d, d)) for n in ("wq", "wk", "wv", "wo")]
        shapes += [(p + "ff1", (d, h)), (p + "ff1_b", (1, h)), (p + "ff2", (h, d)), (p + "ff2_b", (1, d))]
    shapes += [("ground.w", (d, 2)), ("ground.b", (1, 2)), ("qt.queries", (cfg.q_count, d))]
    for j in range(cfg.k):
        shapes += [(f"qt.{j}.{n}", (d, d)) for n in ("wq", "wk", "wv", "wo")]
    flat = cfg.q_count * d
    shapes += [
        ("act.w1", (flat, h)),
        ("act.b1", (1, h)),
        ("act.w2", (h, 2 * cfg.horizon)),
        ("act.b2", (1, 2 * cfg.horizon)),
    ]
    return shapes


def is_bias(name):
    return name.endswith("_b") or name in ("ground.b", "act.b1", "act.b2")


def sinusoidal_positions(length, d):
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class ToyModel:
    """Parameter store plus the forward passes of the dual-system model."""

    def __init__(self, config, params):
        self.config = config
        self.params = {}
        for name, shape in param_shapes(config):
            if name not in params:
                raise UnknownParameter(f"missing parameter {name!r}")
            value = np.array(params[name], dtype=np.float64)
            if value.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {value.shape}")
            if not np.isfinite(value).all():
                raise ValueError(f"{name}: non-finite entries")
            self.params[name] = ad.Tensor(value, requires_grad=True)
        extra = set(params) - set(self.params)
        if extra:
            raise UnknownParameter(f"unexpected parameters {sorted(extra)}")

    @classmethod
    def initialize(cls, config, seed):
        """Projections and embeddings ~ U(-1/sqrt(d), 1/sqrt(d)); biases zero."""
        rng = Rng(seed, STREAM_INIT)
        bound = 1.0 / np.sqrt(config.d)
        params = {}
        for name, shape in param_shapes(config):
            if is_bias(name):
                params[name] = np.zeros(shape)
            else:
                params[name] = rng.uniform_array(shape, -bound, bound)
        return cls(config, params)

    @classmethod
    def zeros(cls, config):
        return cls(config, {n: np.zeros(s) for n, s in param_shapes(config)})

    # -- parameter access --------------------------------------------------

    def names(self):
        return list(self.params)

    def resolve(self, name):
        if name in (None, PROBE_PARAM):
            return self.config.probe_param
        if name not in self.params:
            raise UnknownParameter(f"unknown parameter {name!r}")
        return name

    def __getitem__(self, name):
        return self.params[self.resolve(name)]

    def state(self):
        """Copies of every parameter array, canonical order."""
        return {n: t.data.copy() for n, t in self.params.items()}

    def load_state(self, state):
        for n, t in self.params.items():
            t.data = np.array(state[n], dtype=np.float64)

    def copy(self):
        return ToyModel(self.config, self.state())

    def with_decay(self, decay):
        """A model sharing nothing with this one, with a different decay factor."""
        return ToyModel(replace(self.config, decay=decay), self.state())

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    # -- forward passes ----------------------------------------------------

    def embed(self, token_ids):
        ids = np.atleast_2d(np.asarray(token_ids, dtype=np.intp))
        if ids.size == 0 or ids.shape[1] < 1:
            raise ValueError("token sequence must be non-empty")
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ValueError(
                f"token id out of vocabulary [0, {self.config.vocab_size}): "
                f"min {ids.min()}, max {ids.max()}"
            )
        table = ad.concat([self.params["embed"], self.params["prompt"]], axis=0)
        x = ad.take_rows(table, ids)
        return ad.add(x, sinusoidal_positions(ids.shape[1], self.config.d))

    def planner_forward(self, token_ids):
        """Hidden states after every block: list of L tensors, each B x T x d."""
        x = self.embed(token_ids)
        scale = 1.0 / np.sqrt(self.config.d)
        states = []
        for l in range(self.config.layers):
            p = f"planner.{l}."
            w = lambda n: self.params[p + n]  # noqa: E731
            att = attention(x, x, w("wq"), w("wk"), w("wv"), scale)
            x = ad.add(x, ad.matmul(att, w("wo")))
            ff = ad.gelu(ad.add(ad.matmul(x, w("ff1")), w("ff1_b")))
            x = ad.add(x, ad.add(ad.matmul(ff, w("ff2")), w("ff2_b")))
            states.append(x)
        return states

    def grounding_forward(self, states):
        """(B, 2) point read off the last position of the final hidden state."""
        last = ad.select(states[-1], (slice(None), -1))
        return ad.add(ad.matmul(last, self.params["ground.w"]), self.params["ground.b"])

    def decayed(self, states):
        """Planner states as seen by the querying transformer (one decay node each)."""
        return [ad.grad_scale(s, self.config.decay) for s in states]

    def querying_transformer_forward(self, states):
        """Learned queries cross-attend the last k planner layers; B x q_count x d.

        No residual: layer j's output is the attention read-out of planner
        layer L-k+j projected by its output matrix, and becomes the next
        layer's queries.
        """
        cfg = self.config
        if cfg.k > len(states):
            raise ValueError(f"k={cfg.k} exceeds the {len(states)} planner layers")
        scale = 1.0 / np.sqrt(cfg.d)
        x = self.params["qt.queries"]
        for j in range(cfg.k):
            src = states[len(states) - cfg.k + j]
            p = f"qt.{j}."
            w = lambda n: self.params[p + n]  # noqa: E731
            x = ad.matmul(attention(x, src, w("wq"), w("wk"), w("wv"), scale), w("wo"))
        return x

    def action_forward(self, query_out):
        """B x H x 2 action chunk from the querying-transformer output."""
        cfg = self.config
        data = query_out.data if isinstance(query_out, ad.Tensor) else np.asarray(query_out)
        if data.shape[-2:] != (cfg.q_count, cfg.d):
            raise ValueError(f"expected (..., {cfg.q_count}, {cfg.d}) queries, got {data.shape}")
        flat = ad.reshape(query_out, (-1, cfg.q_count * cfg.d))
        h = ad.gelu(ad.add(ad.matmul(flat, self.params["act.w1"]), self.params["act.b1"]))
        out = ad.add(ad.matmul(h, self.params["act.w2"]), self.params["act.b2"])
        return ad.reshape(out, (-1, cfg.horizon, 2))

    def predict_action(self, token_ids):
        states = self.planner_forward(token_ids)
        return self.action_forward(self.querying_transformer_forward(self.decayed(states)))

    # -- objectives --------------------------------------------------------

    def grounding_loss(self, batch):
        pred = self.grounding_forward(self.planner_forward(batch.token_ids))
        return ad.mse(pred, batch.grounding_target)

    def action_loss(self, batch):
        return ad.mse(self.predict_action(batch.token_ids), batch.action_target)

    def loss(self, objective, batch):
        if objective in ("grounding", "spat"):
            return self.grounding_loss(batch)
        if objective in ("action", "act"):
            return self.action_loss(batch)
        raise ValueError(f"unknown objective {objective!r}")


def attention(x, src, wq, wk, wv, scale):
    """Single-head attention of ``x`` over ``src``; no masking."""
    q = ad.matmul(x, wq)
    k = ad.matmul(src, wk)
    v = ad.matmul(src, wv)
    weights = ad.softmax(ad.mul(ad.matmul(q, ad.transpose(k)), scale), axis=-1)
    return ad.matmul(weights, v)


def attention_maps(model, token_ids):
    """Every attention weight matrix of a forward pass, planner blocks first."""
    cfg = model.config
    scale = 1.0 / np.sqrt(cfg.d)
    states = [s.data for s in model.planner_forward(token_ids)]
    inputs = [model.embed(token_ids).data] + states[:-1]
    maps = []
    for l, x in enumerate(inputs):
        w = lambda n: model.params[f"planner.{l}.{n}"].data  # noqa: E731
        maps.append(_softmax(x @ w("wq") @ np.swapaxes(x @ w("wk"), -1, -2) * scale))
    q = model.params["qt.queries"].data
    for j in range(cfg.k):
        src = states[len(states) - cfg.k + j]
        w = lambda n: model.params[f"qt.{j}.{n}"].data  # noqa: E731
        a = _softmax(q @ w("wq") @ np.swapaxes(src @ w("wk"), -1, -2) * scale)
        maps.append(a)
        q = a @ (src @ w("wv")) @ w("wo")
    return maps


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# -- module-level operations -------------------------------------------------


def planner_forward(model, token_ids):
    return model.planner_forward(token_ids)


def grounding_forward(model, states):
    return model.grounding_forward(states)


def grad_scale_forward(x, lam):
    return ad.grad_scale(x, lam)


def querying_transformer_forward(model, states):
    return model.querying_transformer_forward(states)


def action_forward(model, query_out):
    return model.action_forward(query_out)


backward = ad.backward


def gradient_of(model, param_id, batch, objective):
    """Full-batch mean gradient of ``objective`` w.r.t. one parameter matrix.

    Parameter values are untouched and all gradient buffers are cleared
    before returning.
    """
    name = model.resolve(param_id)
    if batch is None or len(batch) == 0:
        raise ValueError("empty batch")
    saved = {n: t.grad for n, t in model.params.items()}
    model.zero_grad()
    try:
        ad.backward(model.loss(objective, batch))
        g = model.params[name].grad
        out = np.zeros(model.params[name].shape) if g is None else g.copy()
    finally:
        for n, t in model.params.items():
            t.grad = saved[n]
    return out
