"""Training strategies, the probing schedule, and multi-run studies.

Three strategies share one Stage-1 (grounding-only) checkpoint per seed:

* ``Vanilla``: action data only, no prompt token.
* ``Cotrain``: action data plus grounding batches, no prompt token.
* ``SpatiallyGuided``: co-training with the prompt token on action inputs.

Every ``probe_every`` steps, before the update, the gradients of both
objectives on the fixed probe sets w.r.t. the probe parameter are compared
with :func:`gradsub.subspace.pss_trace`.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from . import synthtasks
from .gradnet import ModelConfig, ToyModel, gradient_of
from .matcore import EmptySubspaceError, RankTolerance
from .subspace import pss_trace
from .synthtasks import TaskConfig


class DivergenceError(ArithmeticError):
    """A training loss became NaN or infinite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("optim.lr must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"optim.{name} must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("optim.eps must be positive")


@dataclass(frozen=True)
class StrategyConfig:
    name: str = "SpatiallyGuided"
    use_prompt: bool = True
    cotrain: bool = True
    loss_ratio: tuple = (1.0, 10.0)  # (grounding weight, action weight)
    decay: float = 0.5

    def __post_init__(self):
        g, a = self.loss_ratio
        if not (g > 0 and a > 0 and math.isfinite(g) and math.isfinite(a)):
            raise ValueError(f"loss weights must be positive, got {self.loss_ratio}")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError(f"decay must lie in [0, 1], got {self.decay}")

    @property
    def grounding_weight(self):
        """Grounding weight after normalizing the action weight to 1."""
        g, a = self.loss_ratio
        return g / a

    @property
    def is_vanilla(self):
        return not self.cotrain and not self.use_prompt


VANILLA = StrategyConfig("Vanilla", use_prompt=False, cotrain=False)
COTRAIN = StrategyConfig("Cotrain", use_prompt=False, cotrain=True)
SPATIALLY_GUIDED = StrategyConfig("SpatiallyGuided", use_prompt=True, cotrain=True)
STRATEGIES = (VANILLA, COTRAIN, SPATIALLY_GUIDED)


def strategy_named(name, **changes):
    for s in STRATEGIES:
        if s.name.lower() == str(name).lower():
            return replace(s, **changes)
    raise ValueError(f"unknown strategy {name!r}; expected one of {[s.name for s in STRATEGIES]}")


@dataclass(frozen=True)
class ProbeConfig:
    # Probe gradients are numerically full rank (tail near 1e-7 of the top
    # singular value), so the library's 1e-10 cutoff would make every probe
    # span R^d and every PSS exactly 1. Directions under 1% of the leading
    # one are treated as noise instead.
    param: str = "final"
    rank_tol: float = 1e-2
    center: bool = False


@dataclass(frozen=True)
class TrainConfig:
    master_seed: int = 1
    probe_seed: int = 7919
    total_steps: int = 3000
    probe_every: int = 100
    batch_action: int = 16
    batch_grounding: int = 4
    pretrain_steps: int = 2000
    pretrain_batch: int = 16
    final_window: int = 5
    optim: OptimConfig = OptimConfig()
    model: ModelConfig = ModelConfig()
    task: TaskConfig = TaskConfig()
    probe: ProbeConfig = ProbeConfig()
    strategy: StrategyConfig = SPATIALLY_GUIDED

    def __post_init__(self):
        for name in ("probe_every", "batch_action", "batch_grounding", "final_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.pretrain_batch < 2:
            raise ValueError("pretrain_batch must be at least 2 (half with the prompt, half without)")
        for name in ("total_steps", "pretrain_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.total_steps % self.probe_every:
            raise ValueError(
                f"probe_every ({self.probe_every}) must divide total_steps ({self.total_steps})"
            )
        if self.model.vocab_size != self.task.codec.vocab_size:
            raise ValueError(
                f"model.vocab_size {self.model.vocab_size} != codec vocabulary {self.task.codec.vocab_size}"
            )
        if self.model.horizon != self.task.horizon:
            raise ValueError("model.horizon must equal task.horizon")

    @property
    def tol(self):
        return RankTolerance(self.probe.rank_tol)


# -- optimizer ---------------------------------------------------------------


class Adam:
    """Adaptive moments with bias correction; no weight decay.

    Parameters without a gradient in a step are skipped entirely (their
    moments do not decay), so frozen parts stay bit-identical.
    """

    def __init__(self, config=OptimConfig()):
        self.config = config
        self.m = {}
        self.v = {}
        self.t = {}

    def step(self, params):
        c = self.config
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            t = self.t.get(name, 0) + 1
            m = self.m.get(name)
            v = self.v.get(name)
            m = (1 - c.beta1) * g if m is None else c.beta1 * m + (1 - c.beta1) * g
            v = (1 - c.beta2) * g * g if v is None else c.beta2 * v + (1 - c.beta2) * g * g
            self.m[name], self.v[name], self.t[name] = m, v, t
            m_hat = m / (1 - c.beta1**t)
            v_hat = v / (1 - c.beta2**t)
            p.data = p.data - c.lr * m_hat / (np.sqrt(v_hat) + c.eps)

    def snapshot(self):
        return (
            {k: v.copy() for k, v in self.m.items()},
            {k: v.copy() for k, v in self.v.items()},
            dict(self.t),
        )


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class PssSample:
    step: int
    pss: float
    rank_spat: int
    rank_act: int
    principal_cosines: tuple
    grounding_mse: float
    action_mse: float
    flag: str = ""  # non-empty when the probe was degenerate

    @property
    def ok(self):
        return not self.flag


@dataclass
class RunReport:
    strategy: StrategyConfig
    seed: int
    config: TrainConfig
    samples: list = field(default_factory=list)
    losses: list = field(default_factory=list)  # (total, action, grounding) per step
    final_state: dict = None
    init_state: dict = None

    def series(self, attr):
        return np.array([getattr(s, attr) for s in self.samples], dtype=float)

    def final_window_pss(self):
        tail = [s.pss for s in self.samples[-self.config.final_window :] if s.ok]
        return float(np.mean(tail)) if tail else float("nan")

    def mean_pss(self):
        vals = [s.pss for s in self.samples if s.ok]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def first(self):
        return self.samples[0]

    @property
    def last(self):
        return self.samples[-1]


# -- steps -------------------------------------------------------------------


def _check_finite(value, step, what):
    if not math.isfinite(value):
        raise DivergenceError(f"{what} loss is {value} at step {step}", step)


def pretrain_grounding(config, seed=None, losses=None):
    """Stage 1: grounding-only training of planner, embeddings and grounding head.

    Each step uses ``pretrain_batch`` scenes, half encoded with the prompt
    token and half without, so the prompt embedding learns something. With
    ``pretrain_steps == 0`` the freshly initialized model is returned.
    """
    seed = config.master_seed if seed is None else seed
    model = ToyModel.initialize(config.model, seed)
    if config.pretrain_steps == 0:
        return model
    opt = Adam(config.optim)
    rng = synthtasks.stream(seed, synthtasks.STREAM_PRETRAIN)
    half = config.pretrain_batch // 2
    for step in range(config.pretrain_steps):
        with_p, _, rng = synthtasks.draw_batch(rng, half, True, config.task)
        without, _, rng = synthtasks.draw_batch(rng, config.pretrain_batch - half, False, config.task)
        loss = ad.mul(ad.add(model.grounding_loss(with_p), model.grounding_loss(without)), 0.5)
        _check_finite(float(loss.data), step, "grounding pretraining")
        if losses is not None:
            losses.append(float(loss.data))
        model.zero_grad()
        ad.backward(loss)
        opt.step(model.params)
    model.zero_grad()
    return model


def eval_mse(model, probes):
    """(grounding MSE, action MSE) of ``model`` on the probe sets."""
    g = model.grounding_loss(probes.grounding)
    a = model.action_loss(probes.action)
    return float(g.data), float(a.data)


def probe_gradients(model, probes, param_id="final", center=False):
    g_spat = gradient_of(model, param_id, probes.grounding, "grounding")
    g_act = gradient_of(model, param_id, probes.action, "action")
    if center:
        g_spat = g_spat - g_spat.mean(axis=0)
        g_act = g_act - g_act.mean(axis=0)
    return g_spat, g_act


def probe_pss(model, probes, param_id="final", decay_for_probe=None, tol=None, center=False, step=0):
    """One probe measurement on frozen parameters.

    ``decay_for_probe`` overrides the model's decay for this measurement only.
    Raises :class:`EmptySubspaceError` if either gradient has rank zero.
    """
    if decay_for_probe is not None:
        model = model.with_decay(decay_for_probe)
    g_spat, g_act = probe_gradients(model, probes, param_id, center)
    result = pss_trace(g_spat, g_act, tol)
    g_mse, a_mse = eval_mse(model, probes)
    return PssSample(step, result.value, result.rank_a, result.rank_b, result.principal_cosines, g_mse, a_mse)


def _flagged(model, probes, step, exc):
    g_mse, a_mse = eval_mse(model, probes)
    return PssSample(step, float("nan"), 0, 0, (), g_mse, a_mse, flag=f"rank-zero: {exc}")


def train(strategy, config, init):
    """Stage 2 from ``init`` (left untouched); returns the :class:`RunReport`."""
    seed = config.master_seed
    model = ToyModel(replace(init.config, decay=strategy.decay), init.state())
    report = RunReport(strategy, seed, config, init_state=init.state())
    opt = Adam(config.optim)
    task = config.task
    probes = synthtasks.probe_batches(config.probe_seed, strategy.use_prompt, task)
    rng_a = synthtasks.stream(seed, synthtasks.STREAM_TRAIN_ACTION)
    rng_g = synthtasks.stream(seed, synthtasks.STREAM_TRAIN_GROUNDING)
    w_g = strategy.grounding_weight
    for step in range(config.total_steps + 1):
        if step % config.probe_every == 0:
            try:
                sample = probe_pss(model, probes, config.probe.param, tol=config.tol, center=config.probe.center, step=step)
            except EmptySubspaceError as exc:
                sample = _flagged(model, probes, step, exc)
            report.samples.append(sample)
        if step == config.total_steps:
            break
        batch, _, rng_a = synthtasks.draw_batch(rng_a, config.batch_action, strategy.use_prompt, task)
        l_act = model.action_loss(batch)
        loss = l_act
        l_spat = None
        if strategy.cotrain:
            gb, _, rng_g = synthtasks.draw_batch(rng_g, config.batch_grounding, False, task)
            l_spat = model.grounding_loss(gb)
            loss = ad.add(l_act, ad.mul(l_spat, w_g))
        total = float(loss.data)
        _check_finite(total, step, strategy.name)
        report.losses.append((total, float(l_act.data), float(l_spat.data) if l_spat is not None else float("nan")))
        model.zero_grad()
        ad.backward(loss)
        opt.step(model.params)
    model.zero_grad()
    report.final_state = model.state()
    return report


# -- studies -----------------------------------------------------------------


def _threads():
    try:
        return max(1, int(os.environ.get("GRADSUB_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))  # results come back in job order


def _seed_runs(job):
    config, strategies = job
    init = pretrain_grounding(config)
    return [train(s, config, init) for s in strategies]


class StrategySummary(NamedTuple):
    strategy: str
    seeds: int
    pss_final_mean: float
    pss_final_std: float
    pss_time_mean: float
    grounding_mse_mean: float
    grounding_mse_std: float
    action_mse_mean: float
    action_mse_std: float


class StudyReport(NamedTuple):
    summaries: list  # one StrategySummary per strategy, fixed order
    runs: dict  # (strategy name, seed) -> RunReport
    seeds: tuple


def _mean_std(values):
    a = np.array(values, dtype=float)
    return float(np.mean(a)), float(np.std(a))


def summarize(runs, strategies, seeds):
    rows = []
    for s in strategies:
        reps = [runs[(s.name, seed)] for seed in seeds]
        pf = _mean_std([r.final_window_pss() for r in reps])
        gm = _mean_std([r.last.grounding_mse for r in reps])
        am = _mean_std([r.last.action_mse for r in reps])
        pt = float(np.mean([r.mean_pss() for r in reps]))
        rows.append(StrategySummary(s.name, len(reps), pf[0], pf[1], pt, gm[0], gm[1], am[0], am[1]))
    return rows


def run_strategy_study(seeds, config=TrainConfig(), strategies=STRATEGIES, workers=None):
    """Every strategy for every seed, each seed from its own shared Stage-1 model.

    Runs for different seeds may execute in separate processes
    (``GRADSUB_THREADS``); results are merged in seed order, so output does
    not depend on the worker count.
    """
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    jobs = [(replace(config, master_seed=s), tuple(strategies)) for s in seeds]
    results = _map(_seed_runs, jobs, workers or _threads())
    runs = {}
    for seed, reps in zip(seeds, results):
        for r in reps:
            runs[(r.strategy.name, seed)] = r
    return StudyReport(summarize(runs, strategies, seeds), runs, seeds)


class SweepRow(NamedTuple):
    ratio: tuple
    seed: int
    grounding_mse: float
    action_mse: float
    final_pss: float


def format_ratio(ratio):
    return ":".join(f"{x:g}" for x in ratio)


def _sweep_seed(job):
    config, ratios, base = job
    init = pretrain_grounding(config)
    rows = []
    for ratio in ratios:
        rep = train(replace(base, loss_ratio=tuple(ratio)), config, init)
        rows.append(SweepRow(tuple(ratio), config.master_seed, rep.last.grounding_mse, rep.last.action_mse, rep.final_window_pss()))
    return rows


def run_ratio_sweep(ratios, config=TrainConfig(), seeds=None, strategy=SPATIALLY_GUIDED, workers=None):
    """One run of ``strategy`` per (grounding, action) ratio per seed.

    Rows are ordered by seed, then by ratio as given.
    """
    ratios = [tuple(float(x) for x in r) for r in ratios]
    if not ratios:
        raise ValueError("need at least one ratio")
    for r in ratios:
        replace(strategy, loss_ratio=r)  # validates
    seeds = (config.master_seed,) if seeds is None else tuple(int(s) for s in seeds)
    jobs = [(replace(config, master_seed=s), ratios, strategy) for s in seeds]
    results = _map(_sweep_seed, jobs, workers or _threads())
    return [row for rows in results for row in rows]
