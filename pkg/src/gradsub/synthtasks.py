"""Seeded toy scenes and their grounding / action encodings.

A scene holds K objects of distinct classes on the unit square. The
instruction names one class; the grounding target is that object's position
and the action target is a constant-velocity chunk of H steps from the
gripper origin to it. Every random draw comes from a pinned xoshiro256**
generator so that data (and therefore reports) are reproducible bit for bit.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_MASK = (1 << 64) - 1

#: stream constants mixed into the master seed to derive independent generators
STREAM_TRAIN_ACTION = 0xA5A5_0001
STREAM_TRAIN_GROUNDING = 0xA5A5_0002
STREAM_PRETRAIN = 0xA5A5_0003
STREAM_PROBE = 0xA5A5_0004
STREAM_INIT = 0xA5A5_0005

ORIGIN = (0.5, 0.0)
PROBE_BATCH = 64


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


class Rng:
    """xoshiro256** seeded through splitmix64.

    Instances are mutable; functions in this module that take a generator
    work on a copy and hand back the advanced state, so callers holding the
    original see no change.
    """

    __slots__ = ("s",)

    def __init__(self, seed=0, stream=0):
        x = (int(seed) ^ ((int(stream) * 0xD1B54A32D192ED03) & _MASK)) & _MASK
        s = []
        for _ in range(4):
            x, z = _splitmix64(x)
            s.append(z)
        self.s = s

    def copy(self):
        other = Rng.__new__(Rng)
        other.s = list(self.s)
        return other

    def state(self):
        return tuple(self.s)

    def __eq__(self, other):
        return isinstance(other, Rng) and self.s == other.s

    def next_u64(self):
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def random(self):
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low, high):
        return low + (high - low) * self.random()

    def below(self, n):
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform_array(self, shape, low, high):
        n = int(np.prod(shape))
        return np.array([self.uniform(low, high) for _ in range(n)]).reshape(shape)


def stream(seed, constant):
    """Generator for one named data stream of a master seed."""
    return Rng(seed, constant)


# -- scenes ------------------------------------------------------------------


class PlacementError(RuntimeError):
    """Objects could not be placed at the required spacing."""


@dataclass(frozen=True)
class SceneConfig:
    num_objects: int = 5
    num_classes: int = 8
    min_dist: float = 0.05
    max_attempts: int = 1000

    def __post_init__(self):
        if not 1 <= self.num_objects <= self.num_classes:
            raise ValueError("need 1 <= num_objects <= num_classes")
        if self.min_dist < 0:
            raise ValueError("min_dist must be non-negative")


@dataclass(frozen=True)
class Scene:
    positions: tuple  # K (x, y) pairs
    classes: tuple  # K distinct class ids
    target_index: int
    origin: tuple = ORIGIN

    @property
    def target(self):
        return self.positions[self.target_index]

    @property
    def target_class(self):
        return self.classes[self.target_index]


def gen_scene(rng, config=SceneConfig()):
    """Draw one scene. Returns ``(scene, advanced_rng)``; ``rng`` itself is untouched."""
    rng = rng.copy()
    k = config.num_objects
    # partial Fisher-Yates for K distinct classes
    pool = list(range(config.num_classes))
    for i in range(k):
        j = i + rng.below(config.num_classes - i)
        pool[i], pool[j] = pool[j], pool[i]
    classes = tuple(pool[:k])
    positions = []
    min_sq = config.min_dist**2
    attempts = 0
    while len(positions) < k:
        if attempts >= config.max_attempts:
            raise PlacementError(
                f"placed {len(positions)} of {k} objects in {attempts} attempts"
            )
        attempts += 1
        p = (rng.random(), rng.random())
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= min_sq for q in positions):
            positions.append(p)
    target = rng.below(k)
    return Scene(tuple(positions), classes, target), rng


# -- token codec ---------------------------------------------------------------


@dataclass(frozen=True)
class TokenCodec:
    """Vocabulary layout: x bins, y bins, classes, instructions, readout, prompt.

    The prompt token is always the last id.
    """

    bins: int = 16
    num_classes: int = 8

    @property
    def x_base(self):
        return 0

    @property
    def y_base(self):
        return self.bins

    @property
    def class_base(self):
        return 2 * self.bins

    @property
    def instruction_base(self):
        return 2 * self.bins + self.num_classes

    @property
    def readout(self):
        return 2 * self.bins + 2 * self.num_classes

    @property
    def prompt(self):
        return self.readout + 1

    @property
    def vocab_size(self):
        return self.prompt + 1

    def bin_index(self, coord):
        return min(int(np.floor(coord * self.bins)), self.bins - 1)

    def bin_center(self, index):
        return (index + 0.5) / self.bins

    def encode_position(self, p):
        return (self.x_base + self.bin_index(p[0]), self.y_base + self.bin_index(p[1]))

    def decode_position(self, tokens):
        tx, ty = tokens
        return (self.bin_center(tx - self.x_base), self.bin_center(ty - self.y_base))


class EncodedExample(NamedTuple):
    token_ids: tuple
    grounding_target: tuple
    action_target: np.ndarray  # H x 2


def action_chunk(scene, horizon):
    """Constant-velocity chunk from the origin to the target, ``horizon`` rows."""
    tx, ty = scene.target
    ox, oy = scene.origin
    row = ((tx - ox) / horizon, (ty - oy) / horizon)
    return np.tile(np.array(row), (horizon, 1))


def encode(scene, with_prompt, codec=TokenCodec(), horizon=16):
    """Tokens: per object (x bin, y bin, class), instruction, [prompt], readout."""
    ids = []
    for p, c in zip(scene.positions, scene.classes):
        ids.extend(codec.encode_position(p))
        ids.append(codec.class_base + c)
    ids.append(codec.instruction_base + scene.target_class)
    if with_prompt:
        ids.append(codec.prompt)
    ids.append(codec.readout)
    return EncodedExample(tuple(ids), tuple(scene.target), action_chunk(scene, horizon))


class Batch(NamedTuple):
    """Stacked examples of equal length."""

    token_ids: np.ndarray  # B x T int
    grounding_target: np.ndarray  # B x 2
    action_target: np.ndarray  # B x H x 2

    def __len__(self):
        return self.token_ids.shape[0]

    def row(self, i):
        return Batch(self.token_ids[i : i + 1], self.grounding_target[i : i + 1], self.action_target[i : i + 1])


def stack(examples):
    if not examples:
        raise ValueError("empty batch")
    return Batch(
        np.array([e.token_ids for e in examples], dtype=np.intp),
        np.array([e.grounding_target for e in examples], dtype=np.float64),
        np.array([e.action_target for e in examples], dtype=np.float64),
    )


@dataclass(frozen=True)
class TaskConfig:
    scene: SceneConfig = SceneConfig()
    bins: int = 16
    horizon: int = 16

    @property
    def codec(self):
        return TokenCodec(self.bins, self.scene.num_classes)


def draw_batch(rng, size, with_prompt, task=TaskConfig()):
    """``size`` fresh scenes encoded alike. Returns ``(batch, scenes, advanced_rng)``."""
    scenes = []
    for _ in range(size):
        scene, rng = gen_scene(rng, task.scene)
        scenes.append(scene)
    examples = [encode(s, with_prompt, task.codec, task.horizon) for s in scenes]
    return stack(examples), scenes, rng


class ProbeBatches(NamedTuple):
    grounding: Batch
    action: Batch
    scenes_grounding: tuple
    scenes_action: tuple


def probe_batches(probe_seed, action_with_prompt=False, task=TaskConfig(), size=PROBE_BATCH):
    """The fixed grounding and action probe sets (64 each) of ``probe_seed``.

    Grounding examples never carry the prompt; the action set follows
    ``action_with_prompt``. Scenes depend only on ``probe_seed``, so the two
    encodings of the action set share scenes.
    """
    rng = stream(probe_seed, STREAM_PROBE)
    g, sg, rng = draw_batch(rng, size, False, task)
    a, sa, _ = draw_batch(rng, size, action_with_prompt, task)
    return ProbeBatches(g, a, tuple(sg), tuple(sa))
