"""Observer-style instrumentation client for DRL training loops.

A :class:`DebuggerClient` is constructed with the run's metadata and a sink
path (file or pipe) and then called from the training loop in execution
order; each callback appends the corresponding wire record.  Records are
buffered in memory and flushed in order; ``close()`` emits RunEnd and
flushes everything.

Typical wiring::

    client = DebuggerClient("run.jsonl", run_id="exp-1", total_episodes=200,
                            max_steps_per_episode=100, max_reward=1.0,
                            discount=0.99, action_space_size=4,
                            target_sync_period=50, probe_episodes=10)
    client.on_episode_start(0, probe=True)
    client.on_step(state, action, reward, done, probs, probs)
    ...
    client.close()
"""

from __future__ import annotations

import logging
import math
from collections import deque
from typing import Iterable, Sequence

import numpy as np

from rldx_client.summary import summarize
from rldx_client.wire import encode_record

log = logging.getLogger("rldx_client")

PROB_SUM_TOL = 1e-6


class ClientError(RuntimeError):
    """The client was called out of contract (closed sink, bad shapes)."""


def _as_real_vector(values, what: str) -> list[float]:
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError) as e:
        raise ClientError(f"{what} must be a vector of reals: {e}") from e


class DebuggerClient:
    """Streams trace events from a training loop to a file or pipe."""

    def __init__(
        self,
        sink: str,
        *,
        run_id: str,
        total_episodes: int,
        max_steps_per_episode: int,
        max_reward: float,
        discount: float,
        action_space_size: int,
        target_sync_period: int,
        probe_episodes: int = 0,
        buffer_size: int = 1000,
        drop_policy: str = "block",
    ):
        if drop_policy not in ("block", "drop-oldest"):
            raise ClientError("drop_policy must be 'block' or 'drop-oldest'")
        if buffer_size < 1:
            raise ClientError("buffer_size must be positive")
        self._fh = open(sink, "w", encoding="utf-8")
        self._buffer: deque[str] = deque()
        self._buffer_size = buffer_size
        self._drop_policy = drop_policy
        self._dropped = 0
        self._closed = False
        self._run_id = run_id
        self._episode_open = False
        self._ep = -1
        self._t = 0
        self._global_step = 0
        self._update_idx = 0
        self._append(
            "RunStart",
            {
                "run_id": run_id,
                "total_episodes": int(total_episodes),
                "max_steps_per_episode": int(max_steps_per_episode),
                "max_reward": float(max_reward),
                "discount": float(discount),
                "action_space_size": int(action_space_size),
                "target_sync_period": int(target_sync_period),
                "probe_episodes": int(probe_episodes),
            },
        )

    # -- plumbing -----------------------------------------------------------

    def _append(self, tag: str, payload: dict) -> None:
        if self._closed:
            raise ClientError("client is closed")
        record = encode_record(tag, payload)
        if len(self._buffer) >= self._buffer_size:
            if self._drop_policy == "block":
                self.flush()
            else:
                self._buffer.popleft()
                self._dropped += 1
        self._buffer.append(record)

    def flush(self) -> None:
        while self._buffer:
            self._fh.write(self._buffer.popleft())
        self._fh.flush()

    def close(self) -> None:
        if self._closed:
            return
        if self._episode_open:
            raise ClientError("close() called with an episode still open")
        self._append("RunEnd", {"run_id": self._run_id})
        self.flush()
        self._fh.close()
        self._closed = True
        if self._dropped:
            log.warning(
                "dropped %d records under drop-oldest policy; the trace will "
                "not satisfy the stream ordering contract", self._dropped,
            )

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        return False

    def _clean_probs(self, probs, what: str) -> list[float]:
        vec = _as_real_vector(probs, what)
        if len(vec) < 2:
            raise ClientError(f"{what} must have at least 2 entries")
        total = sum(vec)
        if math.isfinite(total) and total > 0 and abs(total - 1.0) > PROB_SUM_TOL:
            log.info("%s summed to %.6g; normalized before logging", what, total)
            vec = [p / total for p in vec]
        return vec

    # -- episode callbacks ----------------------------------------------------

    def on_episode_start(self, ep: int, probe: bool = False) -> None:
        if self._episode_open:
            raise ClientError(f"episode {self._ep} is still open")
        if ep <= self._ep:
            raise ClientError(f"episode index {ep} not after {self._ep}")
        self._ep = ep
        self._t = 0
        self._episode_open = True
        self._append("EpisodeStart", {"ep": int(ep), "probe": bool(probe)})

    def on_step(self, state, action, reward, done, probs_main, probs_used) -> None:
        if not self._episode_open:
            raise ClientError("on_step outside an open episode")
        self._append(
            "Step",
            {
                "ep": self._ep,
                "t": self._t,
                "state": _as_real_vector(state, "state"),
                "action": int(action),
                "reward": float(reward),
                "done": bool(done),
                "action_probs_main": self._clean_probs(probs_main, "action_probs_main"),
                "action_probs_used": self._clean_probs(probs_used, "action_probs_used"),
            },
        )
        self._t += 1
        self._global_step += 1

    def on_episode_end(self, total_reward: float, steps: int) -> None:
        if not self._episode_open:
            raise ClientError("on_episode_end without an open episode")
        self._episode_open = False
        self._append(
            "EpisodeEnd",
            {"ep": self._ep, "total_reward": float(total_reward), "steps": int(steps)},
        )

    # -- model callbacks -------------------------------------------------------

    @staticmethod
    def _named(params, what: str) -> list[tuple[str, object]]:
        items = list(params.items()) if isinstance(params, dict) else list(params)
        if not all(isinstance(name, str) for name, _ in items):
            raise ClientError(f"{what} must map names to arrays")
        return items

    def on_model_update(
        self,
        loss,
        named_params_main,
        named_params_target,
        named_grads,
        probe_outputs,
        named_activations=(),
    ) -> None:
        main = self._named(named_params_main, "named_params_main")
        target = self._named(named_params_target, "named_params_target")
        if [n for n, _ in main] != [n for n, _ in target]:
            raise ClientError("main and target parameter names do not align")
        grads = self._named(named_grads, "named_grads")
        acts = self._named(named_activations, "named_activations")
        outputs = [self._clean_probs(row, "probe_outputs row") for row in probe_outputs]
        self._update_idx += 1
        self._append(
            "ModelUpdate",
            {
                "update_idx": self._update_idx,
                "loss": float(loss),
                "main_params": [summarize(n, a) for n, a in main],
                "target_params": [summarize(n, a) for n, a in target],
                "grad_norms": [
                    [n, float(np.sqrt(np.square(np.asarray(g, dtype=np.float64)).sum()))]
                    for n, g in grads
                ],
                "activations": [summarize(n, a) for n, a in acts],
                "probe_outputs": outputs,
            },
        )

    def set_exploration(self, value: float) -> None:
        self._append(
            "ExplorationValue", {"global_step": self._global_step, "value": float(value)}
        )

    def on_target_sync(self) -> None:
        self._append("TargetSync", {"update_idx": self._update_idx})

    def log_mc_samples(self, samples) -> None:
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim != 3:
            raise ClientError("MC samples must be an S x B x K tensor")
        if arr.shape[0] < 2:
            raise ClientError("MC sampling needs at least 2 stochastic passes")
        self._append(
            "McDropoutSamples",
            {
                "update_idx": self._update_idx,
                "samples": [[list(map(float, row)) for row in s] for s in arr],
            },
        )

    def log_qtargets(self, transitions: Iterable[Sequence], predicted: Iterable[float]) -> None:
        trs = [(float(r), bool(d), float(q)) for r, d, q in transitions]
        preds = [float(p) for p in predicted]
        if len(trs) != len(preds):
            raise ClientError("transitions and predicted targets must align")
        self._append(
            "QTargetBatch",
            {
                "update_idx": self._update_idx,
                "transitions": [[r, d, q] for r, d, q in trs],
                "predicted_targets": preds,
            },
        )
