import numpy as np
import pytest

from follow_object import harness, imaginer as im, trainer
from follow_object.baselines import train_baseline
from follow_object.curriculum import CurriculumState
from follow_object.ddpg import AgentConfig
from follow_object.world import ManipulationEnv, get_world

from oracles import straight_line_corpus

TINY = trainer.TrainConfig(epochs=2, episodes_per_epoch=4, updates_per_epoch=20, cycles_per_epoch=2,
                           eval_rollouts=4)
AC = AgentConfig(hidden=(16, 16), batch_size=32)


@pytest.fixture(scope="module")
def model():
    data = straight_line_corpus(40, 50, np.random.default_rng(0), lo=(0.1, 0.1, 0.025), hi=(0.9, 0.9, 0.025))
    return im.train_imaginer(im.build_training_set(data), hidden=(16,), epochs=5, seed=0)


def test_train_config_validation():
    with pytest.raises(ValueError, match="multiple"):
        trainer.TrainConfig(episodes_per_epoch=10, cycles_per_epoch=3)
    with pytest.raises(ValueError):
        trainer.TrainConfig(cycles_per_epoch=0)


def test_streams_are_independent_and_seeded():
    a, b = trainer.seed_streams(5), trainer.seed_streams(5)
    assert set(a) == set(trainer.STREAMS)
    draws = {k: a[k].integers(0, 2 ** 62) for k in a}
    assert draws == {k: b[k].integers(0, 2 ** 62) for k in b}
    assert len(set(draws.values())) == len(draws)


def _trace(hist):
    return [(h.success_rate, h.critic_loss, h.actor_loss, h.eval_success) for h in hist]


def test_training_is_deterministic():
    env = ManipulationEnv(get_world("PnP-Simple-v1"))
    a1, h1 = trainer.train(env, AC, TINY, 11)
    a2, h2 = trainer.train(env, AC, TINY, 11)
    assert _trace(h1) == _trace(h2)
    assert a1.critic.flat().tobytes() == a2.critic.flat().tobytes()
    _, h3 = trainer.train(env, AC, TINY, 12)
    assert _trace(h1) != _trace(h3)


def test_fo_with_p_one_reduces_to_her(model):
    w = get_world("Push-Simple")
    a_her, h_her = train_baseline("her", w, AC, TINY, seed=4)
    a_fo, h_fo = harness.train_fo(w, model, AC, TINY, seed=4, curriculum=CurriculumState(w.horizon, p=1.0))
    assert _trace(h_her) == _trace(h_fo)
    assert a_her.actor.flat().tobytes() == a_fo.actor.flat().tobytes()
    assert all(h.imagined_fraction == 0.0 for h in h_fo)


def test_fo_mixes_imagined_goals(model):
    w = get_world("Push-Simple")
    tc = trainer.TrainConfig(epochs=1, episodes_per_epoch=40, updates_per_epoch=10, cycles_per_epoch=2,
                             eval_rollouts=2)
    _, hist = harness.train_fo(w, model, AC, tc, seed=0)
    assert 0.5 < hist[0].imagined_fraction < 1.0
    assert hist[0].k_max >= 2


def test_curriculum_needs_imaginer():
    env = ManipulationEnv(get_world("Push-Simple"))
    with pytest.raises(ValueError, match="imaginer"):
        trainer.train(env, AC, TINY, 0, curriculum=CurriculumState(50))


def test_evaluation_uses_every_env_and_reports_first():
    w = get_world("PnP-Simple-v1")
    env = ManipulationEnv(w)
    other = ManipulationEnv(get_world("PnP-Simple-v2"))
    seen = []
    _, hist = trainer.train(env, AC, TINY, 0, eval_envs={"a": env, "b": other},
                            on_epoch=lambda s, a: seen.append(s.epoch))
    assert seen == [0, 1]
    assert set(hist[0].eval_success) == {"a", "b"}
    assert hist[0].success_rate == hist[0].eval_success["a"]
    assert all(0.0 <= v <= 1.0 for h in hist for v in h.eval_success.values())
