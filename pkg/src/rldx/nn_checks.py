"""Adapted DNN training checks over TensorStats streams.

These rules never touch raw parameter values: every decision is made from
the summary statistics and content digests carried by ModelUpdate events.
Tensor roles are read from names: ``*.weight`` / ``*.bias`` for parameters,
and activation tensors whose name contains ``relu`` (rectifier family) or
``tanh`` / ``sigmoid`` (bounded family, bound 1.0).

Like the agent checks, each rule has a streaming accumulator (``*Watch``)
so the engine pays O(1) per update; the ``check_*`` functions feed a whole
update sequence through the same accumulator and are the unit-test surface.
The update sequence is expected to start at the run's first update, which is
where the initialization rules (NN.W3, NN.B1) are evaluated.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from rldx.catalog import make_diagnosis
from rldx.events import Diagnosis, ModelUpdate, Scope, TensorStats
from rldx.stats import Series


@dataclass(frozen=True)
class NnThresholds:
    weight_norm_max: float = 1e3
    dead_fraction: float = 0.5  # reserved knob; no default rule consumes it
    frozen_updates: int = 5
    grad_norm_min: float = 1e-8
    grad_norm_max: float = 1e3
    activation_saturation_fraction: float = 0.95
    loss_window: int = 20
    loss_rise_factor: float = 2.0

    def __post_init__(self):
        for name in (
            "weight_norm_max",
            "dead_fraction",
            "frozen_updates",
            "grad_norm_min",
            "grad_norm_max",
            "activation_saturation_fraction",
            "loss_window",
            "loss_rise_factor",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


from functools import lru_cache


@lru_cache(maxsize=1024)
def _role(name: str) -> str:
    lowered = name.lower()
    if "weight" in lowered:
        return "weight"
    if "bias" in lowered:
        return "bias"
    if "relu" in lowered:
        return "relu"
    if "tanh" in lowered or "sigmoid" in lowered:
        return "bounded"
    return "other"


def _is_weight(ts: TensorStats) -> bool:
    return _role(ts.name) == "weight"


def _is_bias(ts: TensorStats) -> bool:
    return _role(ts.name) == "bias"


@dataclass
class ParamWatch:
    """NN.W1 explosion, NN.W2 frozen layer, NN.W3/B1 initialization."""

    first_seen: bool = False
    fired: list[Diagnosis] = field(default_factory=list)
    _fired_ids: set[str] = field(default_factory=set)
    _prev_digest: dict[str, int] = field(default_factory=dict)
    _prev_loss: float | None = None
    _streak: dict[str, int] = field(default_factory=dict)

    def observe(self, update: ModelUpdate, th: NnThresholds) -> None:
        scope = Scope("update", update.update_idx, update.update_idx)
        if not self.first_seen:
            self.first_seen = True
            for ts in update.main_params:
                if _is_weight(ts) and ts.std == 0.0 and "NN.W3" not in self._fired_ids:
                    self._fire("NN.W3", scope, 0.0, 0.0, detail=ts.name)
                if _is_bias(ts) and (abs(ts.mean) >= 1.0 or ts.std >= 1.0):
                    if "NN.B1" not in self._fired_ids:
                        self._fire(
                            "NN.B1", scope, max(abs(ts.mean), ts.std), 1.0, detail=ts.name
                        )
        prev_digest = self._prev_digest
        streak = self._streak
        loss_moved = self._prev_loss is not None and update.loss != self._prev_loss
        for ts in update.main_params:
            if _role(ts.name) != "weight":
                continue
            name = ts.name
            if (ts.frac_nonfinite > 0 or ts.l2_norm > th.weight_norm_max) and (
                "NN.W1" not in self._fired_ids
            ):
                self._fire("NN.W1", scope, ts.l2_norm, th.weight_norm_max, detail=name)
            prev = prev_digest.get(name)
            if prev is not None:
                if ts.digest == prev and loss_moved:
                    run = streak.get(name, 0) + 1
                    streak[name] = run
                    if run >= th.frozen_updates - 1 and "NN.W2" not in self._fired_ids:
                        self._fire(
                            "NN.W2",
                            Scope("update", update.update_idx - run, update.update_idx),
                            float(run + 1), float(th.frozen_updates), detail=name,
                        )
                else:
                    streak[name] = 0
            prev_digest[name] = ts.digest
        self._prev_loss = update.loss

    def _fire(self, diag_id, scope, observed, threshold, detail="") -> None:
        self._fired_ids.add(diag_id)
        self.fired.append(make_diagnosis(diag_id, scope, observed, threshold, detail=detail))


@dataclass
class GradWatch:
    """NN.G1 vanishing, NN.G2 exploding/non-finite gradients."""

    fired: list[Diagnosis] = field(default_factory=list)
    _fired_ids: set[str] = field(default_factory=set)
    _low_streak: int = 0

    def observe(self, update: ModelUpdate, th: NnThresholds) -> None:
        if not update.grad_norms:
            return
        scope = Scope("update", update.update_idx, update.update_idx)
        sq = 0.0
        for name, v in update.grad_norms:
            if math.isfinite(v):
                if v > th.grad_norm_max and "NN.G2" not in self._fired_ids:
                    self._fired_ids.add("NN.G2")
                    self.fired.append(
                        make_diagnosis("NN.G2", scope, v, th.grad_norm_max, detail=name)
                    )
                sq += v * v
            elif "NN.G2" not in self._fired_ids:
                self._fired_ids.add("NN.G2")
                self.fired.append(
                    make_diagnosis("NN.G2", scope, v, th.grad_norm_max, detail=name)
                )
        total = math.sqrt(sq)
        if total < th.grad_norm_min:
            self._low_streak += 1
        else:
            self._low_streak = 0
        if self._low_streak >= th.frozen_updates and "NN.G1" not in self._fired_ids:
            self._fired_ids.add("NN.G1")
            self.fired.append(
                make_diagnosis(
                    "NN.G1",
                    Scope("update", update.update_idx - self._low_streak + 1, update.update_idx),
                    float(self._low_streak), th.grad_norm_min,
                )
            )




@dataclass
class ActWatch:
    """NN.A1 dying rectifier units, NN.A2 saturated bounded activations."""

    fired: list[Diagnosis] = field(default_factory=list)
    _fired_ids: set[str] = field(default_factory=set)
    _zero_streak: dict[str, int] = field(default_factory=dict)

    def observe(self, update: ModelUpdate, th: NnThresholds) -> None:
        scope = Scope("update", update.update_idx, update.update_idx)
        for ts in update.activations:
            role = _role(ts.name)
            if role == "relu":
                if ts.frac_zero > th.activation_saturation_fraction:
                    self._zero_streak[ts.name] = self._zero_streak.get(ts.name, 0) + 1
                else:
                    self._zero_streak[ts.name] = 0
                if (
                    self._zero_streak[ts.name] >= th.frozen_updates
                    and "NN.A1" not in self._fired_ids
                ):
                    self._fired_ids.add("NN.A1")
                    self.fired.append(
                        make_diagnosis(
                            "NN.A1", scope, ts.frac_zero,
                            th.activation_saturation_fraction, detail=ts.name,
                        )
                    )
            elif role == "bounded":
                bound = 1.0
                if abs(ts.mean) >= 0.98 * bound and ts.std < 1e-3 and (
                    "NN.A2" not in self._fired_ids
                ):
                    self._fired_ids.add("NN.A2")
                    self.fired.append(
                        make_diagnosis("NN.A2", scope, ts.mean, bound, detail=ts.name)
                    )


def check_parameters(updates: Sequence[ModelUpdate], th: NnThresholds) -> list[Diagnosis]:
    watch = ParamWatch()
    for u in updates:
        watch.observe(u, th)
    return watch.fired


def check_gradients(updates: Sequence[ModelUpdate], th: NnThresholds) -> list[Diagnosis]:
    watch = GradWatch()
    for u in updates:
        watch.observe(u, th)
    return watch.fired


def check_activations(updates: Sequence[ModelUpdate], th: NnThresholds) -> list[Diagnosis]:
    watch = ActWatch()
    for u in updates:
        watch.observe(u, th)
    return watch.fired


@dataclass
class LossWatch:
    """NN.L1 non-finite, NN.L2 sustained rise (info), NN.L3 bit-constant.

    Streaming form of :func:`check_loss`: O(1) state per update, so the
    engine can evaluate the loss rules at every trigger without rescanning
    the whole series.
    """

    fired: list[Diagnosis] = field(default_factory=list)
    _fired_ids: set[str] = field(default_factory=set)
    _first_idx: int | None = None
    _head: list[float] = field(default_factory=list)
    _tail: "deque[float] | None" = None
    _n_finite: int = 0
    _prev: float | None = None
    _run: int = 0

    def observe(self, update_idx: int, loss: float, th: NnThresholds) -> None:
        if self._tail is None:
            self._tail = deque(maxlen=th.loss_window)
        if self._first_idx is None:
            self._first_idx = update_idx
        w = th.loss_window
        if not math.isfinite(loss):
            if "NN.L1" not in self._fired_ids:
                self._fired_ids.add("NN.L1")
                self.fired.append(
                    make_diagnosis(
                        "NN.L1", Scope("update", update_idx, update_idx),
                        float(update_idx), 0.0,
                    )
                )
        else:
            self._n_finite += 1
            if len(self._head) < w:
                self._head.append(loss)
            self._tail.append(loss)
            if self._n_finite >= 2 * w and "NN.L2" not in self._fired_ids:
                first = sum(self._head) / w
                latest = sum(self._tail) / w
                if first > 0 and latest > th.loss_rise_factor * first:
                    self._fired_ids.add("NN.L2")
                    self.fired.append(
                        make_diagnosis(
                            "NN.L2",
                            Scope("update", self._first_idx, update_idx),
                            latest / first, th.loss_rise_factor,
                        )
                    )
        self._run = self._run + 1 if (self._prev is not None and loss == self._prev) else 1
        self._prev = loss
        if self._run >= w and "NN.L3" not in self._fired_ids:
            self._fired_ids.add("NN.L3")
            self.fired.append(
                make_diagnosis(
                    "NN.L3",
                    Scope("update", update_idx - w + 1, update_idx),
                    float(w), float(w),
                )
            )


def check_loss(loss: Series | None, th: NnThresholds) -> list[Diagnosis]:
    """NN.L1 non-finite, NN.L2 sustained rise (info), NN.L3 bit-constant."""
    if loss is None or len(loss) == 0:
        return []
    watch = LossWatch()
    for idx, value in zip(loss.index, loss.values):
        watch.observe(int(idx), float(value), th)
    return watch.fired
