"""Session orchestrator: buffers trace events, schedules checks, reports.

A :class:`Session` consumes one run's event stream in order.  Episode-scoped
checks run at every ``period_episodes`` completed episodes, update-scoped
checks at every ``period_updates`` model updates, and a final sweep runs at
RunEnd (or explicit :meth:`Session.finalize`).  Diagnoses are deduplicated
per (diagnostic id, stage) when ``fire_once`` is set; info-severity results
are reported separately as notes so a clean run's ``diagnoses`` list stays
empty.

Scheduling notes:
  - early-window rules (RWD.d1, ACN.d1/d2) evaluate only once the early
    window is completely covered, late rules stream as late data accumulates
  - insufficient-data notes (the ``*.d0`` ids) are emitted by the final
    sweep only, so a report never claims missing data that arrived later
  - with every family disabled and no custom checks registered, ingest
    reduces to ordering validation (the benchmark control mode)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from rldx.catalog import FAMILIES, family_of, is_catalog_id, load_catalog, make_diagnosis
from rldx.events import (
    Diagnosis,
    EpisodeEnd,
    EpisodeStart,
    ExplorationValue,
    McDropoutSamples,
    ModelUpdate,
    OrderingError,
    QTargetBatch,
    RunEnd,
    RunMeta,
    RunStart,
    Scope,
    Stage,
    StageLayout,
    Step,
    TargetSync,
    TraceEvent,
    dumps_canonical,
)
from rldx.nn_checks import ActWatch, GradWatch, LossWatch, NnThresholds, ParamWatch
from rldx.rl_checks import (
    AgentAggregates,
    AgentSnapshot,
    EpisodeData,
    RlThresholds,
    check_actions,
    check_actions_source,
    check_environment,
    check_exploration,
    check_qtargets,
    check_reward,
    check_states,
    check_steps,
    reward_window,
)
from rldx.stats import Series, mc_dropout_dispersion, normalized_entropy, windowed_std


class RegistrationError(ValueError):
    """A custom check id is duplicated or collides with the catalog."""


def _step_entropy(vec) -> float | None:
    """Per-step normalized entropy; None for malformed vectors (the
    validator's business, not the engine's).  Mirrors
    :func:`rldx.stats.normalized_entropy` on a hot path without numpy
    dispatch overhead."""
    k = len(vec)
    if k < 2:
        return None
    total = 0.0
    acc = 0.0
    for p in vec:
        if p < 0.0 or p != p:
            return None
        total += p
        if p > 0.0:
            acc -= p * math.log(p)
    if abs(total - 1.0) > 1e-6:
        return None
    return min(max(acc / math.log(k), 0.0), 1.0)


_BUILTIN_FAMILY_IDS = frozenset(load_catalog())

# Stage-windowed rules dedup under their evidence stage no matter which
# trigger evaluated them; whole-run rules dedup once per run.  Custom checks
# dedup per the trigger's stage (the spec'd "at most once per stage").
_STAGE_AFFINITY: dict[str, object] = {
    "RWD.d1": Stage.EARLY,
    "ACN.d1": Stage.EARLY,
    "ACN.d2": Stage.EARLY,
    "STP.d1": Stage.LATE,
    "STT.d2": Stage.LATE,
    "STT.d3": Stage.LATE,
    "RWD.d2": Stage.LATE,
    "RWD.d3": Stage.LATE,
    "ACN.d3": Stage.LATE,
    "ACN.d7": Stage.LATE,
}
_STAGE_AFFINITY.update(
    (i, "run") for i in _BUILTIN_FAMILY_IDS if i not in _STAGE_AFFINITY
)


@dataclass(frozen=True)
class CheckConfig:
    """Which diagnostics run, how often, and with which thresholds."""

    enabled: dict[str, bool] = field(default_factory=lambda: {f: True for f in FAMILIES})
    period_episodes: int = 5
    period_updates: int = 10
    early_fraction: float = 0.2
    late_fraction: float = 0.2
    rl: RlThresholds = field(default_factory=RlThresholds)
    nn: NnThresholds = field(default_factory=NnThresholds)
    fire_once: bool = True

    def __post_init__(self):
        if self.period_episodes < 1 or self.period_updates < 1:
            raise ValueError("check periods must be >= 1")
        if self.early_fraction <= 0 or self.late_fraction <= 0:
            raise ValueError("stage fractions must be positive")
        if self.early_fraction + self.late_fraction > 1.0:
            raise ValueError("early_fraction + late_fraction must not exceed 1")
        unknown = set(self.enabled) - set(FAMILIES)
        if unknown:
            raise ValueError(f"unknown diagnostic families: {sorted(unknown)}")
        merged = {f: True for f in FAMILIES}
        merged.update(self.enabled)
        object.__setattr__(self, "enabled", merged)

    @classmethod
    def from_dict(cls, data: dict) -> "CheckConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "rl" in kwargs:
                kwargs["rl"] = RlThresholds(**kwargs["rl"])
            if "nn" in kwargs:
                kwargs["nn"] = NnThresholds(**kwargs["nn"])
            return cls(**kwargs)
        except TypeError as e:
            raise ValueError(f"bad configuration: {e}") from e

    @classmethod
    def from_file(cls, path: str | Path) -> "CheckConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("configuration file must hold a JSON object")
        return cls.from_dict(data)


class _Column:
    """Append-only (index, value) pairs backed by growing numpy buffers."""

    __slots__ = ("_idx", "_val", "n")

    def __init__(self):
        self._idx = np.empty(64, dtype=np.int64)
        self._val = np.empty(64, dtype=np.float64)
        self.n = 0

    def append(self, index: int, value: float) -> None:
        if self.n == self._idx.size:
            self._idx = np.concatenate([self._idx, np.empty_like(self._idx)])
            self._val = np.concatenate([self._val, np.empty_like(self._val)])
        self._idx[self.n] = index
        self._val[self.n] = value
        self.n += 1

    def series(self) -> Series | None:
        if self.n == 0:
            return None
        # appenders guarantee strictly increasing indices
        return Series._trusted(self._idx[: self.n], self._val[: self.n])

    def last_value(self) -> float | None:
        return float(self._val[self.n - 1]) if self.n else None


class SeriesStore:
    """Indexed scalar series plus bounded step/episode retention."""

    def __init__(self):
        self.returns = _Column()
        self.lengths = _Column()
        self.entropy = _Column()
        self.ef = _Column()
        self.loss = _Column()
        self.kl = _Column()
        self.eu = _Column()
        self.probe_steps: list[Step] = []
        self.probe_returns: list[float] = []
        self.episodes: list[EpisodeData] = []  # ring over training episodes
        self.steps: list[Step] = []  # ring over recent episodes' steps
        self.agent = AgentAggregates()
        self.syncs: set[int] = set()
        self.param_watch = ParamWatch()
        self.grad_watch = GradWatch()
        self.act_watch = ActWatch()
        self.loss_watch = LossWatch()
        self.qtarget_buffer: list[QTargetBatch] = []

    def returns_series(self) -> Series | None:
        return self.returns.series()

    def entropy_series(self) -> Series | None:
        return self.entropy.series()

    def ef_series(self) -> Series | None:
        return self.ef.series()

    def loss_series(self) -> Series | None:
        return self.loss.series()

    def kl_series(self) -> Series | None:
        return self.kl.series()

    def eu_series(self) -> Series | None:
        return self.eu.series()

    def reward_std_series(self, meta: RunMeta) -> Series | None:
        """Sliding reward std over normalized training returns."""
        returns = self.returns.series()
        w = reward_window(meta)
        if returns is None or len(returns) < w:
            return None
        denom = abs(meta.max_reward) if meta.max_reward != 0 else 1.0
        std = windowed_std(returns.values / denom, w)
        return Series(returns.index[std.index], std.values)


@dataclass(frozen=True)
class CustomCheck:
    """Registration handle for a user-supplied diagnosis rule."""

    check_id: str
    stages: frozenset[Stage]
    trigger: str  # "episode" | "update"
    rule: Callable[[SeriesStore, RunMeta], list[Diagnosis]]


@dataclass(frozen=True)
class Report:
    run_id: str
    meta: RunMeta
    diagnoses: tuple[Diagnosis, ...]
    notes: tuple[Diagnosis, ...]
    monitor_series: dict[str, list[tuple[int, float]]]
    summary: dict

    def to_json(self) -> str:
        def diag_payload(d: Diagnosis) -> dict:
            return {
                "diagnostic_id": d.diagnostic_id,
                "severity": d.severity,
                "scope": {"kind": d.scope.kind, "start": d.scope.start, "end": d.scope.end},
                "observed": float(d.observed),
                "threshold": float(d.threshold),
                "message": d.message,
                "recommendations": list(d.recommendations),
            }

        m = self.meta
        payload = {
            "run_id": self.run_id,
            "meta": {
                "run_id": m.run_id,
                "total_episodes": m.total_episodes,
                "max_steps_per_episode": m.max_steps_per_episode,
                "max_reward": float(m.max_reward),
                "discount": float(m.discount),
                "action_space_size": m.action_space_size,
                "target_sync_period": m.target_sync_period,
                "probe_episodes": m.probe_episodes,
            },
            "diagnoses": [diag_payload(d) for d in self.diagnoses],
            "notes": [diag_payload(d) for d in self.notes],
            "monitor_series": {
                name: [[int(i), float(v)] for i, v in series]
                for name, series in self.monitor_series.items()
            },
            "summary": self.summary,
        }
        return dumps_canonical(payload) + "\n"


class Session:
    """Single-owner diagnosis session over one run's event stream."""

    def __init__(self, config: CheckConfig | None = None):
        self.config = config or CheckConfig()
        self.meta: RunMeta | None = None
        self.layout: StageLayout | None = None
        self.store = SeriesStore()
        self.fired: set[tuple[str, Stage]] = set()
        self.diagnoses: list[Diagnosis] = []
        self.notes: list[Diagnosis] = []
        self.custom: dict[str, CustomCheck] = {}
        self.checks_executed = 0
        self.triggers_fired = 0
        self.ended = False
        self._swept = False
        self._report: Report | None = None
        self._open_ep: int | None = None
        self._open_probe = False
        self._last_ep = -1
        self._last_t = -1
        self._last_model_update = 0
        self._last_update_any = 0
        self._last_ef_step = -1
        self._completed = 0
        self._updates_seen = 0
        self._probe_complete = False
        self._cur_states: list[tuple[float, ...]] = []
        self._cur_actions: list[int] = []
        self._cur_steps: list[Step] = []
        self._cur_entropy_sum = 0.0
        self._cur_entropy_n = 0
        self._env_checked = False
        self._worst_obs: tuple[float, float, int] | None = None  # (offense, value, ep)
        self._idle_cache: bool | None = None

    # -- registry ----------------------------------------------------------

    def register_custom_check(
        self,
        check_id: str,
        rule: Callable[[SeriesStore, RunMeta], list[Diagnosis]],
        stages: Iterable[Stage] | None = None,
        trigger: str = "episode",
    ) -> CustomCheck:
        if not check_id:
            raise RegistrationError("check id must be non-empty")
        if is_catalog_id(check_id):
            raise RegistrationError(f"{check_id!r} collides with the built-in catalog")
        if check_id in self.custom:
            raise RegistrationError(f"{check_id!r} is already registered")
        if trigger not in ("episode", "update"):
            raise RegistrationError("trigger must be 'episode' or 'update'")
        handle = CustomCheck(
            check_id=check_id,
            stages=frozenset(stages) if stages is not None else frozenset(Stage),
            trigger=trigger,
            rule=rule,
        )
        self.custom[check_id] = handle
        self._idle_cache = None
        return handle

    # -- ingest ------------------------------------------------------------

    @property
    def _idle(self) -> bool:
        if self._idle_cache is None:
            self._idle_cache = not any(self.config.enabled.values()) and not self.custom
        return self._idle_cache

    def stage_of(self, ep: int) -> Stage:
        if self.layout is None:
            raise OrderingError("no RunStart ingested yet")
        return self.layout.stage_of(ep)

    def _current_stage(self) -> Stage:
        if self._last_ep < 0:
            return Stage.PROBE if (self.meta and self.meta.probe_episodes) else Stage.EARLY
        return self.stage_of(self._last_ep)

    def ingest(self, event: TraceEvent) -> list[Diagnosis]:
        """Feed one event; returns the diagnoses it newly fired."""
        if self.ended:
            raise OrderingError(f"{type(event).__name__} after RunEnd")
        if self.meta is None:
            if not isinstance(event, RunStart):
                raise OrderingError(f"{type(event).__name__} before RunStart")
            self.meta = event.meta
            self.layout = StageLayout.from_meta(
                event.meta, self.config.early_fraction, self.config.late_fraction
            )
            self._probe_complete = event.meta.probe_episodes == 0
            return []
        if isinstance(event, RunStart):
            raise OrderingError("duplicate RunStart")

        handler = self._HANDLERS[type(event)]
        return handler(self, event)

    def _on_episode_start(self, ev: EpisodeStart) -> list[Diagnosis]:
        if self._open_ep is not None:
            raise OrderingError(f"EpisodeStart {ev.ep} while episode {self._open_ep} is open")
        if ev.ep <= self._last_ep:
            raise OrderingError(f"episode {ev.ep} not after episode {self._last_ep}")
        if ev.ep >= self.meta.total_episodes:
            raise OrderingError(f"episode {ev.ep} outside planned {self.meta.total_episodes}")
        if ev.probe and self._probe_complete and self._last_ep >= 0:
            raise OrderingError(f"probe episode {ev.ep} after training episodes began")
        self._open_ep = ev.ep
        self._open_probe = ev.probe
        self._last_ep = ev.ep
        self._last_t = -1
        if not ev.probe:
            self._probe_complete = True
        self._cur_states = []
        self._cur_actions = []
        self._cur_steps = []
        self._cur_entropy_sum = 0.0
        self._cur_entropy_n = 0
        return []

    def _on_step(self, ev: Step) -> list[Diagnosis]:
        if self._open_ep is None or ev.ep != self._open_ep:
            raise OrderingError(f"Step for episode {ev.ep} outside the open episode")
        if ev.t <= self._last_t:
            raise OrderingError(f"step index {ev.t} not after {self._last_t}")
        self._last_t = ev.t
        if self._idle:
            return []
        if self._open_probe:
            self.store.probe_steps.append(ev)
            return []
        self._cur_states.append(ev.state)
        self._cur_actions.append(ev.action)
        self._cur_steps.append(ev)
        lo, hi = self.config.rl.obs_low, self.config.rl.obs_high
        for x in ev.state:
            if x > hi or x < lo:
                if math.isfinite(x):
                    off = x - hi if x > hi else lo - x
                    if self._worst_obs is None or off > self._worst_obs[0]:
                        self._worst_obs = (off, x, ev.ep)
        h = _step_entropy(ev.action_probs_used)
        if h is not None:
            self._cur_entropy_sum += h
            self._cur_entropy_n += 1
        return []

    def _on_episode_end(self, ev: EpisodeEnd) -> list[Diagnosis]:
        if self._open_ep is None or ev.ep != self._open_ep:
            raise OrderingError(f"EpisodeEnd for episode {ev.ep} which is not open")
        self._open_ep = None
        self._completed += 1
        if self._idle:
            return []
        st = self.store
        if self._open_probe:
            st.probe_returns.append(ev.total_reward)
        else:
            st.returns.append(ev.ep, ev.total_reward)
            st.lengths.append(ev.ep, ev.steps)
            if self._cur_entropy_n:
                st.entropy.append(ev.ep, self._cur_entropy_sum / self._cur_entropy_n)
            st.episodes.append(
                EpisodeData(
                    ep=ev.ep,
                    probe=False,
                    states=tuple(self._cur_states),
                    actions=tuple(self._cur_actions),
                    total_reward=ev.total_reward,
                )
            )
            st.steps.extend(self._cur_steps)
            self._prune_rings()
        if self._completed % self.config.period_episodes == 0:
            return self._episode_trigger(self.stage_of(ev.ep))
        return []

    _D3_WINDOW_EPISODES = 10  # action-source evidence window

    def _prune_rings(self) -> None:
        keep = 2 * max(self.layout.early_count, self.layout.late_count)
        if len(self.store.episodes) > keep:
            self.store.episodes = self.store.episodes[-keep:]
        floor_ep = self._last_ep - self._D3_WINDOW_EPISODES
        if self.store.steps and self.store.steps[0].ep < floor_ep:
            self.store.steps = [s for s in self.store.steps if s.ep >= floor_ep]

    def _on_exploration(self, ev: ExplorationValue) -> list[Diagnosis]:
        if ev.global_step <= self._last_ef_step:
            raise OrderingError(
                f"exploration step {ev.global_step} not after {self._last_ef_step}"
            )
        self._last_ef_step = ev.global_step
        if not self._idle:
            self.store.ef.append(ev.global_step, ev.value)
        return []

    def _on_model_update(self, ev: ModelUpdate) -> list[Diagnosis]:
        if ev.update_idx <= self._last_model_update:
            raise OrderingError(
                f"update {ev.update_idx} not after {self._last_model_update}"
            )
        self._last_model_update = ev.update_idx
        self._last_update_any = max(self._last_update_any, ev.update_idx)
        self._updates_seen += 1
        if self._idle:
            return []
        st = self.store
        st.loss.append(ev.update_idx, ev.loss)
        outputs = np.asarray(ev.probe_outputs) if ev.probe_outputs else None
        snap = AgentSnapshot(
            update_idx=ev.update_idx,
            main_digests=tuple(t.digest for t in ev.main_params),
            target_digests=tuple(t.digest for t in ev.target_params),
            probe_outputs=outputs,
        )
        st.agent.observe(snap, self.meta, st.syncs)
        if st.agent.last_pair_kl is not None:
            st.kl.append(ev.update_idx, st.agent.last_pair_kl)
        if self.config.enabled.get("NN", True):
            st.param_watch.observe(ev, self.config.nn)
            st.grad_watch.observe(ev, self.config.nn)
            st.act_watch.observe(ev, self.config.nn)
            st.loss_watch.observe(ev.update_idx, ev.loss, self.config.nn)
        if ev.update_idx % self.config.period_updates == 0:
            return self._update_trigger()
        return []

    def _on_target_sync(self, ev: TargetSync) -> list[Diagnosis]:
        if ev.update_idx < self._last_update_any:
            raise OrderingError(
                f"sync at update {ev.update_idx} before {self._last_update_any}"
            )
        self._last_update_any = ev.update_idx
        if not self._idle:
            self.store.syncs.add(ev.update_idx)
        return []

    def _on_mc_samples(self, ev: McDropoutSamples) -> list[Diagnosis]:
        if ev.update_idx < self._last_update_any:
            raise OrderingError(
                f"MC samples at update {ev.update_idx} before {self._last_update_any}"
            )
        self._last_update_any = ev.update_idx
        if not self._idle:
            self.store.eu.append(ev.update_idx, mc_dropout_dispersion(ev.samples))
        return []

    def _on_qtargets(self, ev: QTargetBatch) -> list[Diagnosis]:
        if ev.update_idx < self._last_update_any:
            raise OrderingError(
                f"q-target batch at update {ev.update_idx} before {self._last_update_any}"
            )
        self._last_update_any = ev.update_idx
        if not self._idle and self.config.enabled.get("QTR", True):
            # periodic sampling: the latest batch per trigger is checked
            self.store.qtarget_buffer = [ev]
        return []

    def _on_run_end(self, ev: RunEnd) -> list[Diagnosis]:
        if self._open_ep is not None:
            raise OrderingError(f"RunEnd while episode {self._open_ep} is open")
        self.ended = True
        return self._final_sweep()

    _HANDLERS = {
        EpisodeStart: _on_episode_start,
        Step: _on_step,
        EpisodeEnd: _on_episode_end,
        ExplorationValue: _on_exploration,
        ModelUpdate: _on_model_update,
        TargetSync: _on_target_sync,
        McDropoutSamples: _on_mc_samples,
        QTargetBatch: _on_qtargets,
        RunEnd: _on_run_end,
    }

    # -- scheduling --------------------------------------------------------

    def _admit(self, results: Iterable[Diagnosis], stage: Stage, final: bool) -> list[Diagnosis]:
        newly: list[Diagnosis] = []
        for diag in results:
            if diag.diagnostic_id.endswith(".d0") and not final:
                continue
            if not self.config.enabled.get(family_of(diag.diagnostic_id), True) and (
                diag.diagnostic_id in _BUILTIN_FAMILY_IDS
            ):
                continue
            key = (diag.diagnostic_id, _STAGE_AFFINITY.get(diag.diagnostic_id, stage))
            if self.config.fire_once and key in self.fired:
                continue
            self.fired.add(key)
            (self.notes if diag.severity == "info" else self.diagnoses).append(diag)
            newly.append(diag)
        return newly

    def _episode_trigger(self, stage: Stage, final: bool = False) -> list[Diagnosis]:
        self.triggers_fired += 1
        cfg, st, meta, th = self.config, self.store, self.meta, self.config.rl
        results: list[Diagnosis] = []

        def run(fn, *args, **kwargs):
            self.checks_executed += 1
            results.extend(fn(*args, **kwargs))

        if cfg.enabled["ENV"] and not self._env_checked and (self._probe_complete or final):
            if st.probe_steps or st.probe_returns or final:
                self._env_checked = True  # probe data is complete and immutable
                run(check_environment, st.probe_steps, st.probe_returns, meta, th)
        if cfg.enabled["STT"]:
            if self._worst_obs is not None:
                self.checks_executed += 1
                off, value, ep = self._worst_obs
                results.append(
                    make_diagnosis(
                        "STT.d1", Scope("episode", ep, ep), value, th.obs_high,
                        low=th.obs_low, high=th.obs_high,
                    )
                )
            if stage is Stage.LATE:
                run(check_states, st.episodes, stage, self.layout, meta, th)
        if cfg.enabled["STP"] and stage is Stage.LATE:
            lengths = st.lengths.series()
            returns = st.returns.series()
            if lengths is not None:
                late_n = lengths.window(self.layout.late_range.start, self.layout.late_range.stop)
                late_r = returns.window(self.layout.late_range.start, self.layout.late_range.stop)
                if late_n is not None:
                    run(
                        check_steps,
                        [int(v) for v in late_n.values],
                        list(late_r.values),
                        stage,
                        meta,
                        th,
                    )
        if cfg.enabled["EXP"]:
            ef = st.ef_series()
            if ef is not None and len(ef) >= 3 or final:
                run(check_exploration, ef, th)
        if cfg.enabled["RWD"]:
            run(check_reward, st.returns_series(), self.layout, meta, th)
        if cfg.enabled["ACN"]:
            entropy = st.entropy_series()
            if entropy is not None or final:
                run(
                    check_actions, entropy, st.episodes, st.eu_series(),
                    stage, self.layout, meta, th,
                )
        if cfg.enabled["AGT"] and st.steps:
            run(check_actions_source, st.steps, th)
        for check in self.custom.values():
            if check.trigger == "episode" and stage in check.stages:
                self.checks_executed += 1
                results.extend(check.rule(st, meta))
        return self._admit(results, stage, final)

    def _update_trigger(self, final: bool = False) -> list[Diagnosis]:
        self.triggers_fired += 1
        cfg, st, meta = self.config, self.store, self.meta
        stage = self._current_stage()
        results: list[Diagnosis] = []
        if cfg.enabled["AGT"]:
            self.checks_executed += 1
            results.extend(st.agent.diagnoses(meta, cfg.rl))
        if cfg.enabled["QTR"]:
            for batch in st.qtarget_buffer:
                self.checks_executed += 1
                results.extend(check_qtargets(batch, meta))
        st.qtarget_buffer.clear()
        if cfg.enabled["NN"]:
            self.checks_executed += 4
            for watch in (st.param_watch, st.grad_watch, st.act_watch, st.loss_watch):
                results.extend(watch.fired)
                watch.fired = []
        for check in self.custom.values():
            if check.trigger == "update" and stage in check.stages:
                self.checks_executed += 1
                results.extend(check.rule(st, meta))
        return self._admit(results, stage, final)

    def _final_sweep(self) -> list[Diagnosis]:
        if self._swept:
            return []
        self._swept = True
        if self._idle:
            return []
        stage = self._current_stage()
        newly = self._episode_trigger(stage, final=True)
        newly += self._update_trigger(final=True)
        return newly

    # -- reporting ---------------------------------------------------------

    def finalize(self) -> Report:
        """Full report; runs the final sweep if RunEnd never arrived."""
        if self._report is not None:
            return self._report
        if self.meta is None:
            raise OrderingError("cannot finalize before RunStart")
        self._final_sweep()
        st = self.store
        _pairs = lambda s: [] if s is None else [(int(i), float(v)) for i, v in zip(s.index, s.values)]
        monitor = {
            "eu": _pairs(st.eu_series()),
            "reward_std": _pairs(st.reward_std_series(self.meta)),
            "kl": _pairs(st.kl_series()),
        }
        summary = {
            "episodes_seen": self._completed,
            "updates_seen": self._updates_seen,
            "checks_executed": self.checks_executed,
            "triggers_fired": self.triggers_fired,
            "diagnoses": len(self.diagnoses),
            "notes": len(self.notes),
            "complete": self.ended,
        }
        self._report = Report(
            run_id=self.meta.run_id,
            meta=self.meta,
            diagnoses=tuple(self.diagnoses),
            notes=tuple(self.notes),
            monitor_series=monitor,
            summary=summary,
        )
        return self._report


def run_session(
    events: Iterable[TraceEvent],
    config: CheckConfig | None = None,
    on_fire: Callable[[Diagnosis], None] | None = None,
) -> Report:
    """Drive a Session over an event iterable and return its report."""
    session = Session(config)
    for event in events:
        for diag in session.ingest(event):
            if on_fire is not None:
                on_fire(diag)
    return session.finalize()
