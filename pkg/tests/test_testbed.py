import itertools

import pytest

from rldx.events import (
    EpisodeEnd,
    ModelUpdate,
    QTargetBatch,
    RunStart,
    TargetSync,
    serialize_event,
    validate_stream,
)
from rldx.testbed import (
    EnvState,
    FAULTS,
    GridWorld,
    TinyMlp,
    env_step,
    expected_diagnoses,
    run_training,
    validate_faults,
)

import numpy as np


# -- environment -------------------------------------------------------------


def test_step_toward_goal_pays_out():
    env = GridWorld()
    state = EnvState((6, 7), 10)
    nxt, reward, done = env_step(env, state, 3)  # move right onto (7, 7)
    assert nxt.cell == (7, 7)
    assert reward == 1.0
    assert done


def test_step_into_wall_stays_put():
    env = GridWorld()
    nxt, reward, done = env_step(env, EnvState((0, 0), 0), 2)  # left at the wall
    assert nxt.cell == (0, 0)
    assert reward == -0.01
    assert not done


def test_step_cap_terminates():
    env = GridWorld()
    nxt, reward, done = env_step(env, EnvState((3, 3), 99), 0)
    assert done
    assert nxt.steps == 100


def test_invalid_action_rejected():
    with pytest.raises(ValueError):
        env_step(GridWorld(), EnvState((0, 0), 0), 4)


def test_observation_normalized():
    env = GridWorld()
    assert env.observe((0, 0)) == (0.0, 0.0)
    assert env.observe((7, 7)) == (1.0, 1.0)


def test_tiny_mlp_parameter_budget():
    mlp = TinyMlp(np.random.default_rng(0))
    assert mlp.param_count < 2500


def test_tiny_mlp_forward_deterministic():
    mlp = TinyMlp(np.random.default_rng(0))
    x = np.array([[0.5, 0.5]])
    assert np.array_equal(mlp.forward(x), mlp.forward(x))


# -- trace generation --------------------------------------------------------


def test_unknown_fault_rejected():
    with pytest.raises(ValueError) as err:
        validate_faults(["F99"])
    assert "F1" in str(err.value)


def test_expected_diagnoses_mapping():
    assert expected_diagnoses(["F7"]) == {"QTR.d1"}
    assert expected_diagnoses([]) == frozenset()
    assert expected_diagnoses(["F1", "F5"]) == {"NN.W3", "EXP.d2"}
    for fault in FAULTS:
        assert expected_diagnoses([fault])


def test_trace_is_reproducible_byte_for_byte():
    a = "".join(serialize_event(e) for e in run_training(("F2",), seed=9, episodes=20))
    b = "".join(serialize_event(e) for e in run_training(("F2",), seed=9, episodes=20))
    assert a == b


@pytest.mark.parametrize("faults", [(), ("F4",), ("F7", "F9")])
def test_generated_traces_validate_clean(faults):
    events = list(run_training(faults, seed=1, episodes=20))
    assert validate_stream(events) == []


def test_f4_target_digests_never_change():
    events = list(run_training(("F4",), seed=0, episodes=40))
    assert not any(isinstance(e, TargetSync) for e in events)
    digests = [
        tuple(t.digest for t in e.target_params)
        for e in events
        if isinstance(e, ModelUpdate)
    ]
    assert len(set(digests)) == 1
    mains = [
        tuple(t.digest for t in e.main_params)
        for e in events
        if isinstance(e, ModelUpdate)
    ]
    assert len(set(mains)) > 1


def test_f7_targets_disagree_with_declared_discount():
    events = list(run_training(("F7",), seed=0, episodes=30))
    meta = next(e.meta for e in events if isinstance(e, RunStart))
    assert meta.discount == 0.99
    worst = 0.0
    for e in events:
        if isinstance(e, QTargetBatch):
            for (r, done, mq), pred in zip(e.transitions, e.predicted_targets):
                ref = r + meta.discount * mq * (0.0 if done else 1.0)
                worst = max(worst, abs(ref - pred))
    assert worst > 1e-5


def test_clean_targets_match_declared_discount():
    events = list(run_training((), seed=0, episodes=20))
    meta = next(e.meta for e in events if isinstance(e, RunStart))
    for e in events:
        if isinstance(e, QTargetBatch):
            for (r, done, mq), pred in zip(e.transitions, e.predicted_targets):
                ref = r + meta.discount * mq * (0.0 if done else 1.0)
                assert ref == pred


def test_sync_events_align_with_period():
    events = list(run_training((), seed=0, episodes=40))
    meta = next(e.meta for e in events if isinstance(e, RunStart))
    syncs = [e.update_idx for e in events if isinstance(e, TargetSync)]
    assert syncs
    assert all(u % meta.target_sync_period == 0 for u in syncs)


def test_clean_run_learns(clean_runs):
    learned = sum(1 for _, late_mean in clean_runs.values() if late_mean > 0.5)
    assert learned >= 4
