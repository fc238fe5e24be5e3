import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradsub import synthtasks
from gradsub.synthtasks import (
    ORIGIN,
    PlacementError,
    Rng,
    Scene,
    SceneConfig,
    TaskConfig,
    TokenCodec,
    action_chunk,
    draw_batch,
    encode,
    gen_scene,
    probe_batches,
)


# -- generator -----------------------------------------------------------------


def test_xoshiro_reference_stream():
    # xoshiro256** with state (1, 2, 3, 4): published first outputs
    r = Rng.__new__(Rng)
    r.s = [1, 2, 3, 4]
    assert [r.next_u64() for _ in range(3)] == [11520, 0, 1509978240]


def test_splitmix_seeding_reference():
    # splitmix64 from state 0 yields this well-known first word
    assert synthtasks._splitmix64(0)[1] == 0xE220A8397B1DCDAF


def test_rng_copy_is_independent():
    a = Rng(5)
    b = a.copy()
    assert a.next_u64() == b.next_u64()
    a.next_u64()
    assert a != b


def test_streams_differ():
    a = synthtasks.stream(1, synthtasks.STREAM_TRAIN_ACTION).next_u64()
    b = synthtasks.stream(1, synthtasks.STREAM_PROBE).next_u64()
    assert a != b


@given(st.integers(1, 10**6), st.integers(0, 2**63))
@settings(max_examples=50, deadline=None)
def test_below_in_range(n, seed):
    r = Rng(seed)
    assert all(0 <= r.below(n) < n for _ in range(5))


def test_random_in_unit_interval():
    r = Rng(3)
    xs = [r.random() for _ in range(2000)]
    assert min(xs) >= 0.0 and max(xs) < 1.0
    assert abs(np.mean(xs) - 0.5) < 0.03


# -- scenes --------------------------------------------------------------------


def test_gen_scene_deterministic_and_pure():
    rng = Rng(42)
    before = rng.state()
    s1, r1 = gen_scene(rng)
    s2, r2 = gen_scene(rng)
    assert s1 == s2 and r1 == r2
    assert rng.state() == before
    assert r1 != rng


def test_single_object_targets_itself():
    rng = Rng(0)
    for _ in range(50):
        scene, rng = gen_scene(rng, SceneConfig(num_objects=1))
        assert scene.target_index == 0


def test_scene_invariants_over_many_scenes():
    cfg = SceneConfig()
    rng = Rng(7)
    worst = np.inf
    for _ in range(10_000):
        scene, rng = gen_scene(rng, cfg)
        p = np.array(scene.positions)
        assert len(set(scene.classes)) == cfg.num_objects
        assert all(0 <= c < cfg.num_classes for c in scene.classes)
        assert ((p >= 0) & (p < 1)).all()
        diff = p[:, None, :] - p[None, :, :]
        dist = np.sqrt((diff**2).sum(-1)) + np.eye(len(p)) * 10
        worst = min(worst, dist.min())
    assert worst >= cfg.min_dist


def test_target_class_uniformity():
    rng = Rng(11)
    counts = np.zeros(8)
    n = 100_000
    for _ in range(n):
        scene, rng = gen_scene(rng)
        counts[scene.target_class] += 1
    assert np.abs(counts / n - 1 / 8).max() < 0.02


def test_placement_failure():
    cfg = SceneConfig(num_objects=3, min_dist=2.0, max_attempts=50)
    with pytest.raises(PlacementError):
        gen_scene(Rng(0), cfg)


@pytest.mark.parametrize("kw", [dict(num_objects=0), dict(num_objects=9, num_classes=8), dict(min_dist=-1)])
def test_bad_scene_config(kw):
    with pytest.raises(ValueError):
        SceneConfig(**kw)


# -- codec and encoding --------------------------------------------------------


def test_vocabulary_disjoint_and_dense():
    c = TokenCodec()
    ids = (
        [c.x_base + i for i in range(c.bins)]
        + [c.y_base + i for i in range(c.bins)]
        + [c.class_base + i for i in range(c.num_classes)]
        + [c.instruction_base + i for i in range(c.num_classes)]
        + [c.readout, c.prompt]
    )
    assert sorted(ids) == list(range(c.vocab_size))
    assert c.prompt == c.vocab_size - 1


@given(st.integers(0, 15), st.integers(0, 15))
def test_bin_index_round_trip(i, j):
    c = TokenCodec()
    centre = (c.bin_center(i), c.bin_center(j))
    assert c.encode_position(centre) == (c.x_base + i, c.y_base + j)


def test_quantization_edges():
    c = TokenCodec(bins=16)
    assert c.encode_position((0.999, 0.0)) == (15, 16 + 0)
    assert c.bin_index(1.0) == 15


def _scene(target=(0.25, 0.75)):
    return Scene(positions=((0.1, 0.2), target, (0.9, 0.9)), classes=(3, 5, 0), target_index=1)


def test_encode_layout():
    c = TokenCodec()
    plain = encode(_scene(), False, c)
    prompted = encode(_scene(), True, c)
    assert len(prompted.token_ids) == len(plain.token_ids) + 1
    assert plain.token_ids[-1] == c.readout and prompted.token_ids[-1] == c.readout
    assert prompted.token_ids[-2] == c.prompt
    assert plain.token_ids[-2] == c.instruction_base + 5 == prompted.token_ids[-3]
    assert plain.token_ids[:-2] == prompted.token_ids[:-3]
    assert plain.token_ids[2] == c.class_base + 3


def test_action_target_definition():
    h = 16
    ex = encode(_scene((0.25, 0.75)), False, TokenCodec(), h)
    expected = ((0.25 - 0.5) / h, (0.75 - 0.0) / h)
    assert ex.action_target.shape == (h, 2)
    assert np.all(ex.action_target == np.array(expected))
    assert ex.grounding_target == (0.25, 0.75)


@given(st.integers(0, 2**32), st.booleans())
@settings(max_examples=40, deadline=None)
def test_encoding_round_trip_and_consistency(seed, with_prompt):
    task = TaskConfig()
    scene, _ = gen_scene(Rng(seed), task.scene)
    ex = encode(scene, with_prompt, task.codec, task.horizon)
    c = task.codec
    for k, p in enumerate(scene.positions):
        decoded = c.decode_position(ex.token_ids[3 * k : 3 * k + 2])
        assert abs(decoded[0] - p[0]) <= 1 / c.bins and abs(decoded[1] - p[1]) <= 1 / c.bins
    recovered = np.array(ORIGIN) + ex.action_target.sum(axis=0)
    np.testing.assert_allclose(recovered, ex.grounding_target, atol=1e-14)
    assert np.all(ex.action_target == action_chunk(scene, task.horizon)[0])


# -- batches -------------------------------------------------------------------


def test_draw_batch_shapes_and_purity():
    rng = Rng(1)
    before = rng.state()
    batch, scenes, after = draw_batch(rng, 6, True)
    assert rng.state() == before and after != rng
    assert batch.token_ids.shape == (6, 5 * 3 + 3)
    assert batch.grounding_target.shape == (6, 2)
    assert batch.action_target.shape == (6, 16, 2)
    assert len(batch) == 6 and len(scenes) == 6
    assert len(batch.row(2)) == 1


def test_stack_empty():
    with pytest.raises(ValueError):
        synthtasks.stack([])


def test_probe_batches_fixed_size_and_deterministic():
    a = probe_batches(7919)
    b = probe_batches(7919)
    assert len(a.grounding) == 64 and len(a.action) == 64
    for x, y in zip(a[:2], b[:2]):
        for u, v in zip(x, y):
            assert np.array_equal(u, v)


def test_probe_grounding_never_prompted():
    c = TaskConfig().codec
    p = probe_batches(5, action_with_prompt=True)
    assert not (p.grounding.token_ids == c.prompt).any()
    assert (p.action.token_ids[:, -2] == c.prompt).all()


def test_probe_action_scenes_independent_of_prompt_flag():
    a = probe_batches(5, action_with_prompt=True)
    b = probe_batches(5, action_with_prompt=False)
    assert a.scenes_action == b.scenes_action
    assert np.array_equal(a.action.action_target, b.action.action_target)


def test_probe_and_training_streams_disjoint():
    seed = 7919
    probes = probe_batches(seed)
    probe_scenes = set(probes.scenes_grounding) | set(probes.scenes_action)
    for const in (synthtasks.STREAM_TRAIN_ACTION, synthtasks.STREAM_TRAIN_GROUNDING, synthtasks.STREAM_PRETRAIN):
        _, scenes, _ = draw_batch(synthtasks.stream(seed, const), 64, False)
        assert probe_scenes.isdisjoint(scenes)
