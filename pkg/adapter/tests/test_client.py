import math

import numpy as np
import pytest

from rldx_client import ClientError, DebuggerClient


def make_client(tmp_path, **kw):
    args = dict(
        run_id="t1",
        total_episodes=20,
        max_steps_per_episode=10,
        max_reward=1.0,
        discount=0.99,
        action_space_size=2,
        target_sync_period=5,
        probe_episodes=0,
    )
    args.update(kw)
    return DebuggerClient(str(tmp_path / "trace.jsonl"), **args)


def read_lines(tmp_path):
    return (tmp_path / "trace.jsonl").read_text().splitlines()


def test_three_step_episode_writes_five_records(tmp_path):
    client = make_client(tmp_path)
    client.on_episode_start(0)
    for _ in range(3):
        client.on_step([0.1], 0, -0.01, False, [0.5, 0.5], [0.5, 0.5])
    client.on_episode_end(-0.03, 3)
    client.close()
    lines = read_lines(tmp_path)
    # RunStart + (start, 3 steps, end) + RunEnd
    assert len(lines) == 7
    assert '"type":"EpisodeStart"' in lines[1]
    assert '"type":"EpisodeEnd"' in lines[5]


def test_call_after_close_raises(tmp_path):
    client = make_client(tmp_path)
    client.close()
    with pytest.raises(ClientError):
        client.on_episode_start(0)


def test_probs_are_normalized_with_note(tmp_path, caplog):
    client = make_client(tmp_path)
    client.on_episode_start(0)
    with caplog.at_level("INFO", logger="rldx_client"):
        client.on_step([0.0], 0, 0.0, False, [0.49, 0.49], [0.49, 0.49])
    assert any("normalized" in r.message for r in caplog.records)
    client.on_episode_end(0.0, 1)
    client.close()
    import json

    step = json.loads(read_lines(tmp_path)[2])
    assert sum(step["action_probs_main"]) == pytest.approx(1.0, abs=1e-9)


def test_qtargets_length_mismatch_raises(tmp_path):
    client = make_client(tmp_path)
    with pytest.raises(ClientError):
        client.log_qtargets([(1.0, False, 2.0)], [1.0, 2.0])


def test_mc_samples_need_two_passes(tmp_path):
    client = make_client(tmp_path)
    with pytest.raises(ClientError):
        client.log_mc_samples(np.zeros((1, 2, 2)))


def test_mismatched_layer_names_raise(tmp_path):
    client = make_client(tmp_path)
    with pytest.raises(ClientError):
        client.on_model_update(
            0.5,
            {"a.weight": [1.0]},
            {"b.weight": [1.0]},
            {"a.weight": [0.1]},
            [[0.5, 0.5]],
        )


def test_exploration_and_sync_records(tmp_path):
    client = make_client(tmp_path)
    client.set_exploration(0.37)
    client.on_target_sync()
    client.close()
    lines = read_lines(tmp_path)
    assert '"value":0.37' in lines[1]
    assert '"type":"TargetSync"' in lines[2]


def test_drop_oldest_policy_drops(tmp_path):
    client = make_client(tmp_path, buffer_size=2, drop_policy="drop-oldest")
    client.on_episode_start(0)
    for _ in range(5):
        client.on_step([0.0], 0, 0.0, False, [0.5, 0.5], [0.5, 0.5])
    client.on_episode_end(0.0, 5)
    client.close()
    # RunStart and several early records were dropped to cap the buffer
    lines = read_lines(tmp_path)
    assert len(lines) == 2


def test_nan_reward_crosses_as_sentinel(tmp_path):
    client = make_client(tmp_path)
    client.on_episode_start(0)
    client.on_step([0.0], 0, math.nan, False, [0.5, 0.5], [0.5, 0.5])
    client.on_episode_end(0.0, 1)
    client.close()
    assert '"reward":"NaN"' in read_lines(tmp_path)[2]


def test_close_with_open_episode_raises(tmp_path):
    client = make_client(tmp_path)
    client.on_episode_start(0)
    with pytest.raises(ClientError):
        client.close()
