"""RL-specific diagnostics over buffered trace data.

Every check is a pure function from immutable inputs plus thresholds to a
(possibly empty) list of Diagnosis records.  Threshold conventions are
one-sided and exact; each catalog entry documents on which side of the
threshold its diagnostic fires.

Agent checks are built around :class:`AgentAggregates`, an O(1)-per-update
accumulator, so the engine can observe a stream incrementally while
``check_agent`` remains the reference implementation over an explicit
snapshot sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from rldx.catalog import make_diagnosis
from rldx.events import Diagnosis, QTargetBatch, RunMeta, Scope, Stage, StageLayout, Step
from rldx.stats import (
    Series,
    kl_divergence,
    linear_fit,
    max_abs_second_derivative,
    strictly_monotone_decreasing,
    windowed_std,
)


@dataclass(frozen=True)
class RlThresholds:
    """Tunable detection thresholds; defaults follow the documented rules."""

    kl_max: float = 0.1
    obs_low: float = -10.0
    obs_high: float = 10.0
    reward_abs_max: float = 10.0
    easy_env_fraction: float = 0.5
    low_reward_fraction: float = 0.1
    stagnation_rmse: float = 0.1
    slope_fluctuation: float = 0.25
    entropy_rise_slope: float = 0.1
    entropy_stagnation: float = 1e-3
    curvature_max: float = 0.22
    repeat_run_length: int = 10
    eu_std_max: float = 0.5
    # None means main/target parameter equality is judged by exact digests.
    param_equal_tol: float | None = None

    def __post_init__(self):
        if self.obs_low >= self.obs_high:
            raise ValueError("obs_low must be below obs_high")
        for name in (
            "kl_max",
            "reward_abs_max",
            "easy_env_fraction",
            "low_reward_fraction",
            "stagnation_rmse",
            "slope_fluctuation",
            "entropy_rise_slope",
            "entropy_stagnation",
            "curvature_max",
            "repeat_run_length",
            "eu_std_max",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class AgentSnapshot:
    """Per-update digest view of the main/target models plus probe outputs.

    ``probe_outputs`` is any B x K matrix-like (nested tuples or an ndarray).
    """

    update_idx: int
    main_digests: tuple[int, ...]
    target_digests: tuple[int, ...]
    probe_outputs: object | None = None

    def __post_init__(self):
        if len(self.main_digests) != len(self.target_digests):
            raise ValueError("main and target digest lists must have equal layer structure")


@dataclass(frozen=True)
class EpisodeData:
    """Recent-episode view used by the state/action repetition checks."""

    ep: int
    probe: bool
    states: tuple[tuple[float, ...], ...]
    actions: tuple[int, ...]
    total_reward: float


# Evidence thresholds for the action-source check (AGT.d3/d5).
ACTION_SOURCE_DIST_TOL = 1e-6
ACTION_SOURCE_DEV_FRACTION = 0.95
ACTION_SOURCE_MIN_PAIRS = 5
ACTION_SOURCE_PAIR_GAP = 10
# A frozen source's outputs for a repeated state may still drift slightly
# when the logged distribution mixes in a decaying exploration term.
ACTION_SOURCE_FROZEN_TOL = 1e-3

# AGT.d2 quorum parameters.
SHARED_MODEL_QUORUM = 0.9
SHARED_MODEL_MIN_UPDATES = 10

# The repetition checks target plateau symptoms (an agent stuck at low
# reward), so they are gated on overall window health: a converged policy
# legitimately repeats its optimal trajectory.
REPETITION_HEALTH_FRACTION = 0.5


def mean_row_kl(prev_rows, cur_rows) -> float:
    """Mean KL(prev_row || cur_row) over a probe batch.

    Rows are renormalized (a no-op for well-formed rows) so float dust in a
    producer's softmax cannot poison the comparison; disjoint support yields
    ``inf``, the maximal violation.  Plain loops beat numpy dispatch at
    typical probe-batch sizes, and this runs once per model update.
    """
    p = np.asarray(prev_rows, dtype=np.float64)
    q = np.asarray(cur_rows, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2 or p.shape[0] == 0:
        raise ValueError("probe output matrices must share a non-empty B x K shape")
    p = p / p.sum(axis=1, keepdims=True)
    q = q / q.sum(axis=1, keepdims=True)
    support = p > 0.0
    np.copyto(q, 1.0, where=~support)
    if np.any(q == 0.0):
        return math.inf
    np.copyto(p, 1.0, where=~support)  # log(1) contributes nothing
    total = float((p * (np.log(p) - np.log(q))).sum())
    return max(total / p.shape[0], 0.0)


@dataclass
class AgentAggregates:
    """Streaming accumulator behind the agent checks (AGT.d1/d2/d4)."""

    n_snapshots: int = 0
    first_update: int = 0
    last_update: int = 0
    n_nonsync: int = 0
    n_nonsync_equal: int = 0
    sync_violations: list[int] = field(default_factory=list)
    n_sync_points: int = 0
    target_changed: bool = False
    main_changed: bool = False
    max_pair_kl: float = -math.inf
    max_pair: tuple[int, int] | None = None
    last_pair_kl: float | None = None
    _prev: AgentSnapshot | None = None
    _prev_norm: object | None = None  # cached (p, log p) of the previous outputs
    _prev_logs: object | None = None

    def _normalized_outputs(self, outputs):
        """Normalized probabilities and their logs, or None when a row holds
        zeros (the exact mean_row_kl path handles those)."""
        arr = np.asarray(outputs, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0 or arr.min() <= 0.0:
            return None
        p = arr / arr.sum(axis=1, keepdims=True)
        return p, np.log(p)

    def observe(self, snap: AgentSnapshot, meta: RunMeta, syncs: Iterable[int] = ()) -> None:
        if self.n_snapshots == 0:
            self.first_update = snap.update_idx
        self.n_snapshots += 1
        self.last_update = snap.update_idx
        self.last_pair_kl = None

        equal = snap.main_digests == snap.target_digests
        at_sync = (
            snap.update_idx > 0 and snap.update_idx % meta.target_sync_period == 0
        ) or snap.update_idx in syncs
        if at_sync:
            self.n_sync_points += 1
            if not equal:
                self.sync_violations.append(snap.update_idx)
        else:
            self.n_nonsync += 1
            if equal:
                self.n_nonsync_equal += 1

        prev = self._prev
        cur_norm = (
            self._normalized_outputs(snap.probe_outputs)
            if snap.probe_outputs is not None
            else None
        )
        if prev is not None:
            if prev.target_digests != snap.target_digests:
                self.target_changed = True
            if prev.main_digests != snap.main_digests:
                self.main_changed = True
            if prev.probe_outputs is not None and snap.probe_outputs is not None:
                if self._prev_norm is not None and cur_norm is not None:
                    p, logp = self._prev_norm, self._prev_logs
                    q, logq = cur_norm
                    kl = max(float((p * (logp - logq)).sum()) / p.shape[0], 0.0)
                else:
                    kl = mean_row_kl(prev.probe_outputs, snap.probe_outputs)
                self.last_pair_kl = kl
                if kl > self.max_pair_kl:
                    self.max_pair_kl = kl
                    self.max_pair = (prev.update_idx, snap.update_idx)
        self._prev = snap
        if cur_norm is not None:
            self._prev_norm, self._prev_logs = cur_norm
        else:
            self._prev_norm = self._prev_logs = None

    def diagnoses(self, meta: RunMeta, th: RlThresholds) -> list[Diagnosis]:
        out: list[Diagnosis] = []
        if self.n_snapshots == 0:
            out.append(
                make_diagnosis(
                    "AGT.d0", Scope("run", 0, 0), 0.0, 0.0,
                    detail=" No ModelUpdate events were seen.",
                )
            )
            return out
        scope = Scope("update", self.first_update, self.last_update)
        if self.sync_violations:
            out.append(
                make_diagnosis(
                    "AGT.d1",
                    Scope("update", self.sync_violations[0], self.sync_violations[-1]),
                    float(len(self.sync_violations)),
                    0.0,
                    detail=f" First violating sync point: update {self.sync_violations[0]}.",
                )
            )
        shared = (
            self.n_nonsync >= SHARED_MODEL_MIN_UPDATES
            and self.n_nonsync_equal / self.n_nonsync >= SHARED_MODEL_QUORUM
        )
        frozen = (
            not self.target_changed
            and self.main_changed
            and self.last_update - self.first_update >= 2 * meta.target_sync_period
        )
        if shared or frozen:
            frac = self.n_nonsync_equal / self.n_nonsync if self.n_nonsync else 0.0
            detail = (
                " The target parameters never changed while the main model kept learning."
                if frozen and not shared
                else ""
            )
            out.append(
                make_diagnosis("AGT.d2", scope, frac, SHARED_MODEL_QUORUM, detail=detail)
            )
        if self.max_pair is not None and self.max_pair_kl >= th.kl_max:
            out.append(
                make_diagnosis(
                    "AGT.d4",
                    Scope("update", self.max_pair[0], self.max_pair[1]),
                    self.max_pair_kl,
                    th.kl_max,
                )
            )
        return out


def check_agent(
    snapshots: Sequence[AgentSnapshot],
    syncs: Iterable[int],
    meta: RunMeta,
    th: RlThresholds,
) -> list[Diagnosis]:
    """AGT.d1 (missed sync), AGT.d2 (shared/frozen target), AGT.d4 (KL drift)."""
    syncs = frozenset(syncs)
    agg = AgentAggregates()
    for snap in snapshots:
        agg.observe(snap, meta, syncs)
    return agg.diagnoses(meta, th)


def _linf(a: Sequence[float], b: Sequence[float]) -> float:
    return max(abs(x - y) for x, y in zip(a, b)) if a and b else math.inf


def check_actions_source(steps: Sequence[Step], th: RlThresholds) -> list[Diagnosis]:
    """AGT.d3: the logged action distributions come from the wrong model.

    The trace never carries per-state target-model outputs, so positive
    evidence for "used the target model" is inferred from its frozen-between-
    syncs signature: repeated occurrences of a bit-identical state within one
    episode whose used-probs are bit-identical while the main-model probs
    moved.  Deviation without that signature is reported as an info note
    (AGT.d5, unidentified source).
    """
    carrying = [s for s in steps if s.action_probs_main and s.action_probs_used]
    if not carrying:
        return []
    dists = [_linf(s.action_probs_main, s.action_probs_used) for s in carrying]
    deviating = [d > ACTION_SOURCE_DIST_TOL for d in dists]
    frac_dev = sum(deviating) / len(deviating)
    if frac_dev < ACTION_SOURCE_DEV_FRACTION:
        return []

    last_seen: dict[tuple[int, tuple[float, ...]], Step] = {}
    pairs = 0
    frozen_pairs = 0
    for s in carrying:
        key = (s.ep, s.state)
        prev = last_seen.get(key)
        if prev is not None and s.t - prev.t <= ACTION_SOURCE_PAIR_GAP:
            if _linf(prev.action_probs_main, s.action_probs_main) > ACTION_SOURCE_FROZEN_TOL:
                pairs += 1
                if _linf(prev.action_probs_used, s.action_probs_used) <= ACTION_SOURCE_FROZEN_TOL:
                    frozen_pairs += 1
        last_seen[key] = s

    scope = Scope("episode", carrying[0].ep, carrying[-1].ep)
    if pairs >= ACTION_SOURCE_MIN_PAIRS and frozen_pairs / pairs >= 0.5:
        return [
            make_diagnosis(
                "AGT.d3", scope, frac_dev, ACTION_SOURCE_DEV_FRACTION,
                detail=f" {frozen_pairs}/{pairs} repeated-state probes behave like a frozen model.",
            )
        ]
    return [make_diagnosis("AGT.d5", scope, frac_dev, ACTION_SOURCE_DEV_FRACTION)]


def check_environment(
    probe_steps: Sequence[Step],
    probe_returns: Sequence[float],
    meta: RunMeta,
    th: RlThresholds,
) -> list[Diagnosis]:
    """ENV.d1 (non-finite), ENV.d2 (reward scale), ENV.d3 (too easy)."""
    if not probe_steps and not probe_returns:
        return [
            make_diagnosis(
                "ENV.d0", Scope("run", 0, 0), 0.0, 0.0,
                detail=" Configure probe episodes to vet the environment.",
            )
        ]
    out: list[Diagnosis] = []
    eps = [s.ep for s in probe_steps]
    scope = Scope("episode", min(eps), max(eps)) if eps else Scope("episode", 0, 0)

    n_bad = 0
    worst_abs = 0.0
    for s in probe_steps:
        if not math.isfinite(s.reward) or any(not math.isfinite(x) for x in s.state):
            n_bad += 1
        elif abs(s.reward) > worst_abs:
            worst_abs = abs(s.reward)
    if n_bad:
        out.append(make_diagnosis("ENV.d1", scope, float(n_bad), 0.0))
    if worst_abs > th.reward_abs_max:
        out.append(make_diagnosis("ENV.d2", scope, worst_abs, th.reward_abs_max))
    if probe_returns:
        frac = sum(1 for r in probe_returns if r >= meta.max_reward) / len(probe_returns)
        if frac > th.easy_env_fraction:
            out.append(make_diagnosis("ENV.d3", scope, frac, th.easy_env_fraction))
    return out


def longest_periodic_stretch(seq: Sequence) -> int:
    """Length of the longest contiguous stretch that repeats a sub-sequence.

    A stretch of length m + p counts when ``seq[i] == seq[i - p]`` holds over
    m consecutive positions with m >= p (at least one full extra cycle).
    """
    n = len(seq)
    best = 0
    for p in range(1, n // 2 + 1):
        run = 0
        for i in range(p, n):
            if seq[i] == seq[i - p]:
                run += 1
                if run >= p and run + p > best:
                    best = run + p
            else:
                run = 0
    return best


def longest_common_prefix(a: Sequence, b: Sequence) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def _low_return(ep: EpisodeData, meta: RunMeta, th: RlThresholds) -> bool:
    # Repetition alone is healthy for a converged deterministic policy; only
    # repetition stuck at low reward is the plateau symptom worth flagging.
    return ep.total_reward < th.low_reward_fraction * meta.max_reward


def _window_unhealthy(episodes: Sequence[EpisodeData], meta: RunMeta) -> bool:
    training = [ep.total_reward for ep in episodes if not ep.probe]
    if not training:
        return False
    denom = abs(meta.max_reward) if meta.max_reward != 0 else 1.0
    return float(np.mean(training)) / denom < REPETITION_HEALTH_FRACTION


def check_states(
    episodes: Sequence[EpisodeData],
    stage: Stage,
    layout: StageLayout,
    meta: RunMeta,
    th: RlThresholds,
) -> list[Diagnosis]:
    """STT.d1 (range, any stage), STT.d2/d3 (repetition, late stage)."""
    out: list[Diagnosis] = []
    worst = None
    for ep in episodes:
        for state in ep.states:
            for x in state:
                if math.isfinite(x) and not th.obs_low <= x <= th.obs_high:
                    off = max(x - th.obs_high, th.obs_low - x)
                    if worst is None or off > worst[0]:
                        worst = (off, x, ep.ep)
    if worst is not None:
        out.append(
            make_diagnosis(
                "STT.d1",
                Scope("episode", worst[2], worst[2]),
                worst[1],
                th.obs_high,
                low=th.obs_low,
                high=th.obs_high,
            )
        )
    if stage is not Stage.LATE:
        return out
    late = [ep for ep in episodes if not ep.probe and ep.ep in layout.late_range]
    if not _window_unhealthy(late, meta):
        return out

    for ep in late:
        if not _low_return(ep, meta, th):
            continue
        stretch = longest_periodic_stretch(ep.states)
        if stretch > th.repeat_run_length:
            out.append(
                make_diagnosis(
                    "STT.d2", Scope("episode", ep.ep, ep.ep),
                    float(stretch), float(th.repeat_run_length),
                )
            )
            break
    for prev, cur in zip(late, late[1:]):
        if cur.ep != prev.ep + 1:
            continue
        if not (_low_return(prev, meta, th) and _low_return(cur, meta, th)):
            continue
        prefix = longest_common_prefix(prev.states, cur.states)
        if prefix > th.repeat_run_length:
            out.append(
                make_diagnosis(
                    "STT.d3", Scope("episode", prev.ep, cur.ep),
                    float(prefix), float(th.repeat_run_length),
                )
            )
            break
    return out


def check_steps(
    episode_lengths: Sequence[int],
    episode_returns: Sequence[float],
    stage: Stage,
    meta: RunMeta,
    th: RlThresholds,
) -> list[Diagnosis]:
    """STP.d1: late episodes truncated at the step cap while reward stays low."""
    if stage is not Stage.LATE or not episode_lengths:
        return []
    if len(episode_lengths) != len(episode_returns):
        raise ValueError("episode_lengths and episode_returns must align")
    frac_cap = sum(1 for n in episode_lengths if n == meta.max_steps_per_episode) / len(
        episode_lengths
    )
    low = th.low_reward_fraction * meta.max_reward
    if frac_cap >= 0.8 and float(np.mean(episode_returns)) < low:
        return [make_diagnosis("STP.d1", Scope("episode", 0, 0), frac_cap, low)]
    return []


def check_exploration(ef: Series | None, th: RlThresholds) -> list[Diagnosis]:
    """EXP.d1 (not strictly decaying), EXP.d2 (curvature too high)."""
    if ef is None or len(ef) < 3:
        return [
            make_diagnosis(
                "EXP.d0", Scope("run", 0, 0), float(0 if ef is None else len(ef)), 3.0
            )
        ]
    out: list[Diagnosis] = []
    scope = Scope("update", int(ef.index[0]), int(ef.index[-1]))
    if not strictly_monotone_decreasing(ef, tol=1e-9):
        out.append(make_diagnosis("EXP.d1", scope, linear_fit(ef).slope, 0.0))
    curvature = max_abs_second_derivative(ef, normalize=True)
    if curvature > th.curvature_max:
        out.append(make_diagnosis("EXP.d2", scope, curvature, th.curvature_max))
    return out


def reward_window(meta: RunMeta) -> int:
    return max(5, math.ceil(0.05 * meta.total_episodes))


def _norm_denominator(meta: RunMeta) -> float:
    return abs(meta.max_reward) if meta.max_reward != 0 else 1.0


def _full_window(series: Series | None, rng: range) -> Series | None:
    """The sub-series covering ``rng`` completely, else None."""
    if series is None or len(rng) == 0:
        return None
    sub = series.window(rng.start, rng.stop)
    if sub is None or len(sub) != len(rng):
        return None
    return sub


def check_reward(
    episode_returns: Series | None,
    layout: StageLayout,
    meta: RunMeta,
    th: RlThresholds,
) -> list[Diagnosis]:
    """RWD.d1 (early stagnation), RWD.d2 (late fluctuation), RWD.d3 (trapped low).

    Returns are normalized by the environment's max reward; the early rule
    only evaluates once the early window is completely covered, the late
    rules stream over whatever late-stage data exists.
    """
    out: list[Diagnosis] = []
    w = reward_window(meta)
    denom = _norm_denominator(meta)

    early = _full_window(episode_returns, layout.early_range)
    if early is not None:
        if len(early) < w + 1:
            out.append(
                make_diagnosis(
                    "RWD.d0",
                    Scope("episode", layout.early_range.start, layout.early_range.stop - 1),
                    float(len(early)), float(w + 1),
                    detail=f" Early stage holds {len(early)} episodes, window needs {w + 1}.",
                )
            )
        else:
            rstd = windowed_std(early.values / denom, w)
            fit = linear_fit(rstd)
            if fit.rmse_residual < th.stagnation_rmse and float(rstd.values.mean()) < 0.05:
                out.append(
                    make_diagnosis(
                        "RWD.d1",
                        Scope("episode", int(early.index[0]), int(early.index[-1])),
                        fit.rmse_residual, th.stagnation_rmse,
                    )
                )

    late = (
        episode_returns.window(layout.late_range.start, layout.late_range.stop)
        if episode_returns is not None and len(layout.late_range)
        else None
    )
    if late is not None and len(late) >= w + 1:
        scope = Scope("episode", int(late.index[0]), int(late.index[-1]))
        norm_vals = late.values / denom
        rstd = windowed_std(norm_vals, w)
        fit = linear_fit(rstd)
        if abs(fit.slope) > th.slope_fluctuation:
            out.append(make_diagnosis("RWD.d2", scope, abs(fit.slope), th.slope_fluctuation))
        ret_fit = linear_fit(Series(late.index, norm_vals))
        mean_ret = float(norm_vals.mean())
        if mean_ret < th.low_reward_fraction and abs(ret_fit.slope) < 1e-3:
            out.append(make_diagnosis("RWD.d3", scope, mean_ret, th.low_reward_fraction))
    return out


def check_actions(
    entropy: Series | None,
    episodes: Sequence[EpisodeData],
    eu: Series | None,
    stage: Stage,
    layout: StageLayout,
    meta: RunMeta,
    th: RlThresholds,
) -> list[Diagnosis]:
    """ACN.d1-d7: entropy trends, action repetition, epistemic uncertainty.

    Entropy is already unit-scaled (normalized entropy), so the late-stage
    curvature rule (d3) uses the raw stencil rather than min-max rescaling,
    which would amplify noise on a flat series.
    """
    out: list[Diagnosis] = []
    if entropy is None:
        out.append(make_diagnosis("ACN.d0", Scope("run", 0, 0), 0.0, 0.0))
    else:
        early = _full_window(entropy, layout.early_range)
        if early is not None and len(early) >= 2:
            fit = linear_fit(early)
            scope = Scope("episode", int(early.index[0]), int(early.index[-1]))
            if fit.slope > th.entropy_rise_slope:
                out.append(make_diagnosis("ACN.d1", scope, fit.slope, th.entropy_rise_slope))
            if abs(fit.slope) < th.entropy_stagnation and fit.rmse_residual < th.stagnation_rmse:
                out.append(
                    make_diagnosis("ACN.d2", scope, abs(fit.slope), th.entropy_stagnation)
                )

        late = entropy.window(layout.late_range.start, layout.late_range.stop)
        if late is not None and len(late) >= 3:
            curvature = max_abs_second_derivative(late, normalize=False)
            if curvature > th.curvature_max:
                out.append(
                    make_diagnosis(
                        "ACN.d3",
                        Scope("episode", int(late.index[0]), int(late.index[-1])),
                        curvature, th.curvature_max,
                    )
                )

        if len(entropy) >= 2:
            fit = linear_fit(entropy)
            if fit.rmse_residual > th.stagnation_rmse:
                out.append(
                    make_diagnosis(
                        "ACN.d4",
                        Scope("episode", int(entropy.index[0]), int(entropy.index[-1])),
                        fit.rmse_residual, th.stagnation_rmse,
                    )
                )

    late_eps = [ep for ep in episodes if not ep.probe and ep.ep in layout.late_range]
    if stage is Stage.LATE and _window_unhealthy(late_eps, meta):
        for ep in late_eps:
            if not _low_return(ep, meta, th):
                continue
            run = _longest_action_run(ep.actions)
            if run > th.repeat_run_length:
                out.append(
                    make_diagnosis(
                        "ACN.d5", Scope("episode", ep.ep, ep.ep),
                        float(run), float(th.repeat_run_length),
                    )
                )
                break
        for prev, cur in zip(late_eps, late_eps[1:]):
            if cur.ep != prev.ep + 1:
                continue
            if not (_low_return(prev, meta, th) and _low_return(cur, meta, th)):
                continue
            prefix = longest_common_prefix(prev.actions, cur.actions)
            if prefix > th.repeat_run_length:
                out.append(
                    make_diagnosis(
                        "ACN.d6", Scope("episode", prev.ep, cur.ep),
                        float(prefix), float(th.repeat_run_length),
                    )
                )
                break

    if stage is Stage.LATE and eu is not None and len(eu) > 0:
        latest = float(eu.values[-1])
        if latest > th.eu_std_max:
            out.append(
                make_diagnosis(
                    "ACN.d7", Scope("update", int(eu.index[-1]), int(eu.index[-1])),
                    latest, th.eu_std_max,
                )
            )
    return out


def _longest_action_run(actions: Sequence[int]) -> int:
    best = run = 0
    prev = None
    for a in actions:
        run = run + 1 if a == prev else 1
        prev = a
        best = max(best, run)
    return best


def q_target_reference(
    reward: float, done: bool, max_next_q: float, discount: float
) -> float:
    """One-step bootstrapped target: reward + discount * max_next_q * (1 - done)."""
    return reward + discount * max_next_q * (0.0 if done else 1.0)


def check_qtargets(
    batch: QTargetBatch, meta: RunMeta, tol: float = 1e-5
) -> list[Diagnosis]:
    """QTR.d1: user-provided q-targets deviate from the bootstrap reference."""
    if len(batch.transitions) != len(batch.predicted_targets):
        raise ValueError("transitions and predicted_targets must have equal length")
    tr = np.asarray(
        [(r, 0.0 if d else 1.0, q) for r, d, q in batch.transitions], dtype=np.float64
    )
    refs = tr[:, 0] + meta.discount * tr[:, 2] * tr[:, 1]
    devs = np.abs(refs - np.asarray(batch.predicted_targets, dtype=np.float64))
    worst = float(np.nan_to_num(devs, nan=math.inf).max())
    if worst > tol:
        return [
            make_diagnosis(
                "QTR.d1",
                Scope("update", batch.update_idx, batch.update_idx),
                worst, tol,
            )
        ]
    return []
