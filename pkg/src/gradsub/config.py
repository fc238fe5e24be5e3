"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored;
nested settings use dotted keys (``model.d``, ``strategy.use_prompt``).
Unknown keys and unparsable values are errors that name the key.
:func:`canonical_lines` renders the fully resolved configuration (defaults
included), which is what gets echoed and embedded in checkpoints.
"""

import re
from dataclasses import replace

from .cotrainer import OptimConfig, ProbeConfig, StrategyConfig, TrainConfig, strategy_named
from .gradnet import ModelConfig
from .synthtasks import SceneConfig, TaskConfig


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_ratio(text):
    """``"a:b"`` -> (a, b) with both weights positive."""
    parts = text.strip().split(":")
    if len(parts) != 2:
        raise ValueError(f"expected a ratio 'a:b', got {text!r}")
    a, b = (float(p) for p in parts)
    if not (a > 0 and b > 0):
        raise ValueError(f"ratio weights must be positive, got {text!r}")
    return (a, b)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ":".join(_fmt(float(v)) for v in value)
    return str(value)


# key -> (parser, getter) ; getter reads the value back from a TrainConfig
_KEYS = {
    "seed": (int, lambda c: c.master_seed),
    "probe_seed": (int, lambda c: c.probe_seed),
    "total_steps": (int, lambda c: c.total_steps),
    "probe_every": (int, lambda c: c.probe_every),
    "batch_action": (int, lambda c: c.batch_action),
    "batch_grounding": (int, lambda c: c.batch_grounding),
    "pretrain_steps": (int, lambda c: c.pretrain_steps),
    "pretrain_batch": (int, lambda c: c.pretrain_batch),
    "final_window": (int, lambda c: c.final_window),
    "optim.lr": (float, lambda c: c.optim.lr),
    "optim.beta1": (float, lambda c: c.optim.beta1),
    "optim.beta2": (float, lambda c: c.optim.beta2),
    "optim.eps": (float, lambda c: c.optim.eps),
    "model.d": (int, lambda c: c.model.d),
    "model.layers": (int, lambda c: c.model.layers),
    "model.q_count": (int, lambda c: c.model.q_count),
    "model.k": (int, lambda c: c.model.k),
    "model.horizon": (int, lambda c: c.model.horizon),
    "task.num_objects": (int, lambda c: c.task.scene.num_objects),
    "task.num_classes": (int, lambda c: c.task.scene.num_classes),
    "task.min_dist": (float, lambda c: c.task.scene.min_dist),
    "task.bins": (int, lambda c: c.task.bins),
    "probe.param": (str, lambda c: c.probe.param),
    "probe.rank_tol": (float, lambda c: c.probe.rank_tol),
    "probe.center": (_bool, lambda c: c.probe.center),
    "strategy.name": (str, lambda c: c.strategy.name),
    "strategy.use_prompt": (_bool, lambda c: c.strategy.use_prompt),
    "strategy.cotrain": (_bool, lambda c: c.strategy.cotrain),
    "strategy.loss_ratio": (parse_ratio, lambda c: c.strategy.loss_ratio),
    "strategy.decay": (float, lambda c: c.strategy.decay),
}

KNOWN_KEYS = tuple(sorted(_KEYS))


def parse_pairs(text):
    """Raw ``{key: value-string}``, with line-numbered errors."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key)
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key)
        pairs[key] = value
    return pairs


def from_pairs(pairs):
    """Build a validated :class:`TrainConfig` from raw string pairs."""
    values = {}
    for key, text in pairs.items():
        parser = _KEYS.get(key)
        if parser is None:
            raise ConfigError(f"unknown key {key!r}", key)
        try:
            values[key] = parser[0](text)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", key) from None

    def get(key, default):
        return values.get(key, default)

    d = TrainConfig()
    try:
        scene = SceneConfig(
            num_objects=get("task.num_objects", d.task.scene.num_objects),
            num_classes=get("task.num_classes", d.task.scene.num_classes),
            min_dist=get("task.min_dist", d.task.scene.min_dist),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "task") from None
    horizon = get("model.horizon", d.model.horizon)
    task = TaskConfig(scene=scene, bins=get("task.bins", d.task.bins), horizon=horizon)
    if task.bins < 1:
        raise ConfigError("task.bins must be positive", "task.bins")
    try:
        strategy = _strategy(values, d.strategy)
    except ValueError as exc:
        raise ConfigError(str(exc), getattr(exc, "key", "strategy")) from None
    sections = {
        "model": lambda: ModelConfig(
            d=get("model.d", d.model.d),
            layers=get("model.layers", d.model.layers),
            q_count=get("model.q_count", d.model.q_count),
            k=get("model.k", d.model.k),
            horizon=horizon,
            vocab_size=task.codec.vocab_size,
            decay=strategy.decay,
        ),
        "optim": lambda: OptimConfig(
            lr=get("optim.lr", d.optim.lr),
            beta1=get("optim.beta1", d.optim.beta1),
            beta2=get("optim.beta2", d.optim.beta2),
            eps=get("optim.eps", d.optim.eps),
        ),
    }
    built = {}
    for name, make in sections.items():
        try:
            built[name] = make()
        except ValueError as exc:
            raise ConfigError(str(exc), name) from None
    rank_tol = get("probe.rank_tol", d.probe.rank_tol)
    if not 0.0 < rank_tol < 1.0:
        raise ConfigError("probe.rank_tol must lie in (0, 1)", "probe.rank_tol")
    probe = ProbeConfig(get("probe.param", d.probe.param), rank_tol, get("probe.center", d.probe.center))
    try:
        return TrainConfig(
            master_seed=get("seed", d.master_seed),
            probe_seed=get("probe_seed", d.probe_seed),
            total_steps=get("total_steps", d.total_steps),
            probe_every=get("probe_every", d.probe_every),
            batch_action=get("batch_action", d.batch_action),
            batch_grounding=get("batch_grounding", d.batch_grounding),
            pretrain_steps=get("pretrain_steps", d.pretrain_steps),
            pretrain_batch=get("pretrain_batch", d.pretrain_batch),
            final_window=get("final_window", d.final_window),
            optim=built["optim"],
            model=built["model"],
            task=task,
            probe=probe,
            strategy=strategy,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), _guess_key(str(exc), values)) from None


def _guess_key(message, given):
    """The key a validation message is about: whole-word match, keys the user set first."""
    hits = [k for k in KNOWN_KEYS if re.search(rf"\b{re.escape(k.split('.')[-1])}\b", message)]
    hits.sort(key=lambda k: (k not in given, -len(k)))
    return hits[0] if hits else None


def _strategy(values, default):
    name = values.get("strategy.name", default.name)
    changes = {}
    for key, attr in (
        ("strategy.use_prompt", "use_prompt"),
        ("strategy.cotrain", "cotrain"),
        ("strategy.loss_ratio", "loss_ratio"),
        ("strategy.decay", "decay"),
    ):
        if key in values:
            changes[attr] = values[key]
    if name.lower() == "custom":
        return StrategyConfig("custom", **{"use_prompt": False, "cotrain": False, **changes})
    preset = strategy_named(name)
    for attr in ("use_prompt", "cotrain"):
        if attr in changes and changes[attr] != getattr(preset, attr):
            err = ValueError(
                f"strategy.{attr}={_fmt(changes[attr])} contradicts strategy.name={preset.name}"
                " (use strategy.name = custom for other combinations)"
            )
            err.key = f"strategy.{attr}"
            raise err
    return replace(preset, **changes)


def parse_config(text):
    return from_pairs(parse_pairs(text))


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def canonical_lines(config):
    """Sorted ``key = value`` lines for every known key."""
    return [f"{key} = {_fmt(_KEYS[key][1](config))}" for key in KNOWN_KEYS]


def canonical_text(config):
    return "\n".join(canonical_lines(config)) + "\n"


def from_lines(lines):
    """Inverse of :func:`canonical_lines` (used when loading checkpoints)."""
    return parse_config("\n".join(lines))
