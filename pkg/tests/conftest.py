import statistics

import pytest

from rldx.engine import Session
from rldx.events import EpisodeEnd, RunStart, serialize_event
from rldx.testbed import run_training

CLEAN_SEEDS = (0, 1, 2, 3, 4)
CLEAN_EPISODES = 300


@pytest.fixture(scope="session")
def clean_runs():
    """Default-budget clean runs for every seed: (report, late_mean)."""
    out = {}
    for seed in CLEAN_SEEDS:
        session = Session()
        meta = None
        returns = []
        for event in run_training((), seed=seed, episodes=CLEAN_EPISODES):
            if isinstance(event, RunStart):
                meta = event.meta
            elif isinstance(event, EpisodeEnd):
                returns.append((event.ep, event.total_reward))
            session.ingest(event)
        report = session.finalize()
        late_start = meta.total_episodes - session.layout.late_count
        late = [r for ep, r in returns if ep >= late_start]
        out[seed] = (report, statistics.mean(late))
    return out


@pytest.fixture(scope="session")
def f4_trace_file(tmp_path_factory):
    """A short recorded trace with the never-synced-target fault."""
    path = tmp_path_factory.mktemp("traces") / "f4.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for event in run_training(("F4",), seed=0, episodes=60):
            fh.write(serialize_event(event))
    return path
