"""Trace event vocabulary and the newline-delimited wire format.

Producers (the built-in testbed, external instrumentation clients) and the
diagnosis engine exchange training traces exclusively through this module:
frozen dataclasses for the in-memory form, ``serialize_event`` /
``parse_event`` for the wire form, and ``validate_stream`` for structural
checks over a whole run.

Wire contract (also printed by the ``rldx schema`` subcommand):
  - one UTF-8 JSON object per line: ``{"v": 1, "type": "<Tag>", ...payload}``
  - reals are serialized with 17 significant digits so decoding and
    re-encoding is byte-identical
  - non-finite reals cross the boundary as the strings "NaN", "Inf", "-Inf"
    (bare JSON NaN/Infinity tokens are rejected)
  - field names match the dataclass fields below exactly
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence, Union

import numpy as np

WIRE_VERSION = 1


class TraceError(Exception):
    """Base class for trace decoding/validation failures."""


class ParseError(TraceError):
    """A record is structurally malformed; ``field`` names the offender."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field_name = field_name


class UnsupportedEventError(TraceError):
    """The record carries an unknown event tag."""


class VersionError(TraceError):
    """The record declares a wire version this reader does not speak."""


class OrderingError(TraceError):
    """An event arrived out of stream order."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunMeta:
    """Run-level constants that parameterize every diagnostic."""

    run_id: str
    total_episodes: int
    max_steps_per_episode: int
    max_reward: float
    discount: float
    action_space_size: int
    target_sync_period: int
    probe_episodes: int = 0

    def __post_init__(self):
        if self.total_episodes < 5:
            raise ValueError("total_episodes must be >= 5 (staging needs non-empty 20% windows)")
        if self.max_steps_per_episode < 1:
            raise ValueError("max_steps_per_episode must be positive")
        if not math.isfinite(self.max_reward):
            raise ValueError("max_reward must be finite")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if self.action_space_size < 2:
            raise ValueError("action_space_size must be >= 2")
        if self.target_sync_period < 1:
            raise ValueError("target_sync_period must be positive")
        if not 0 <= self.probe_episodes < self.total_episodes:
            raise ValueError("probe_episodes must lie in [0, total_episodes)")


@dataclass(frozen=True)
class TensorStats:
    """Summary statistics plus a content digest standing in for raw values.

    Statistics are computed over the finite entries; ``frac_nonfinite``
    accounts for the rest.  Equal digests are treated as identical tensors.
    """

    name: str
    mean: float
    std: float
    min: float
    max: float
    l2_norm: float
    frac_zero: float
    frac_nonfinite: float
    digest: int

    def __post_init__(self):
        if not 0 <= self.digest < 1 << 64:
            raise ValueError("digest must be an unsigned 64-bit integer")


def tensor_digest(values) -> int:
    """64-bit content checksum of an array's raw float64 bytes (C order)."""
    data = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    return int.from_bytes(hashlib.blake2b(data.tobytes(), digest_size=8).digest(), "big")


def tensor_stats(name: str, values) -> TensorStats:
    """Summarize an array into a TensorStats record.

    A constant tensor reports std exactly 0.0 (detected via min == max), so
    constant-initialization checks are not at the mercy of float dust.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    n = arr.size
    if n == 0:
        raise ValueError("cannot summarize an empty tensor")
    digest = tensor_digest(arr)
    frac_zero = float(np.count_nonzero(arr == 0.0) / n)
    total = float(arr.sum())
    if math.isfinite(total):  # fast path: no non-finite entries possible
        lo = float(arr.min())
        hi = float(arr.max())
        mean = total / n
        if lo == hi:
            std = 0.0
        else:
            d = arr - mean
            std = math.sqrt(float(d @ d) / n)
        l2 = math.sqrt(float(arr @ arr))
        frac_bad = 0.0
    else:
        finite = arr[np.isfinite(arr)]
        frac_bad = (n - finite.size) / n
        if finite.size:
            lo = float(finite.min())
            hi = float(finite.max())
            mean = float(finite.mean())
            std = 0.0 if lo == hi else float(finite.std())
            l2 = float(np.sqrt(finite @ finite))
        else:
            mean = std = lo = hi = l2 = math.nan
    return TensorStats(
        name=name,
        mean=mean,
        std=std,
        min=lo,
        max=hi,
        l2_norm=l2,
        frac_zero=frac_zero,
        frac_nonfinite=float(frac_bad),
        digest=digest,
    )


def _tup(seq) -> tuple:
    return tuple(seq) if not isinstance(seq, tuple) else seq


@dataclass(frozen=True)
class RunStart:
    meta: RunMeta


@dataclass(frozen=True)
class EpisodeStart:
    ep: int
    probe: bool = False


@dataclass(frozen=True)
class Step:
    ep: int
    t: int
    state: tuple[float, ...]
    action: int
    reward: float
    done: bool
    action_probs_main: tuple[float, ...]
    action_probs_used: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "state", _tup(self.state))
        object.__setattr__(self, "action_probs_main", _tup(self.action_probs_main))
        object.__setattr__(self, "action_probs_used", _tup(self.action_probs_used))


@dataclass(frozen=True)
class EpisodeEnd:
    ep: int
    total_reward: float
    steps: int


@dataclass(frozen=True)
class ExplorationValue:
    global_step: int
    value: float


@dataclass(frozen=True)
class ModelUpdate:
    update_idx: int
    loss: float
    main_params: tuple[TensorStats, ...]
    target_params: tuple[TensorStats, ...]
    grad_norms: tuple[tuple[str, float], ...]
    activations: tuple[TensorStats, ...]
    probe_outputs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "main_params", _tup(self.main_params))
        object.__setattr__(self, "target_params", _tup(self.target_params))
        object.__setattr__(self, "grad_norms", tuple((n, v) for n, v in self.grad_norms))
        object.__setattr__(self, "activations", _tup(self.activations))
        object.__setattr__(self, "probe_outputs", tuple(_tup(row) for row in self.probe_outputs))


@dataclass(frozen=True)
class TargetSync:
    update_idx: int


@dataclass(frozen=True)
class McDropoutSamples:
    update_idx: int
    samples: tuple[tuple[tuple[float, ...], ...], ...]  # S x B x K

    def __post_init__(self):
        object.__setattr__(
            self, "samples", tuple(tuple(_tup(row) for row in s) for s in self.samples)
        )


@dataclass(frozen=True)
class QTargetBatch:
    update_idx: int
    transitions: tuple[tuple[float, bool, float], ...]  # (reward, done, max_next_q)
    predicted_targets: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "transitions", tuple((r, bool(d), q) for r, d, q in self.transitions)
        )
        object.__setattr__(self, "predicted_targets", _tup(self.predicted_targets))
        if len(self.transitions) != len(self.predicted_targets):
            raise ValueError("transitions and predicted_targets must have equal length")


@dataclass(frozen=True)
class RunEnd:
    run_id: str


TraceEvent = Union[
    RunStart,
    EpisodeStart,
    Step,
    EpisodeEnd,
    ExplorationValue,
    ModelUpdate,
    TargetSync,
    McDropoutSamples,
    QTargetBatch,
    RunEnd,
]


# ---------------------------------------------------------------------------
# staging
# ---------------------------------------------------------------------------


class Stage(str, enum.Enum):
    PROBE = "probe"
    EARLY = "early"
    MID = "mid"
    LATE = "late"


@dataclass(frozen=True)
class StageLayout:
    """Episode-index boundaries of the Probe/Early/Mid/Late partition.

    Early covers the first ``early_count`` non-probe episodes, Late the last
    ``late_count`` episodes of the run.  Probe takes precedence on overlap,
    then Early.
    """

    total_episodes: int
    probe_episodes: int
    early_count: int
    late_count: int

    @classmethod
    def from_meta(cls, meta: RunMeta, early_fraction: float = 0.2, late_fraction: float = 0.2) -> "StageLayout":
        return cls(
            total_episodes=meta.total_episodes,
            probe_episodes=meta.probe_episodes,
            early_count=math.ceil(early_fraction * meta.total_episodes),
            late_count=math.ceil(late_fraction * meta.total_episodes),
        )

    def stage_of(self, ep: int) -> Stage:
        if not 0 <= ep < self.total_episodes:
            raise ValueError(f"episode index {ep} outside [0, {self.total_episodes})")
        if ep < self.probe_episodes:
            return Stage.PROBE
        if ep < self.probe_episodes + self.early_count:
            return Stage.EARLY
        if ep >= self.total_episodes - self.late_count:
            return Stage.LATE
        return Stage.MID

    @property
    def early_range(self) -> range:
        start = self.probe_episodes
        return range(start, min(start + self.early_count, self.total_episodes))

    @property
    def late_range(self) -> range:
        return range(self.total_episodes - self.late_count, self.total_episodes)


# ---------------------------------------------------------------------------
# diagnosis record
# ---------------------------------------------------------------------------

SEVERITIES = ("info", "warning", "critical")


@dataclass(frozen=True)
class Scope:
    """Where a diagnosis applies: an episode range, update range, or the run."""

    kind: str  # "episode" | "update" | "run"
    start: int
    end: int

    def __post_init__(self):
        if self.kind not in ("episode", "update", "run"):
            raise ValueError(f"unknown scope kind {self.kind!r}")


@dataclass(frozen=True)
class Diagnosis:
    diagnostic_id: str
    severity: str
    scope: Scope
    observed: float
    threshold: float
    message: str
    recommendations: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.diagnostic_id:
            raise ValueError("diagnostic_id must be non-empty")
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity must be one of {SEVERITIES}")
        if not self.message:
            raise ValueError("message must be non-empty")
        object.__setattr__(self, "recommendations", _tup(self.recommendations))


# ---------------------------------------------------------------------------
# canonical JSON emitter (fixed key order, 17 significant digits)
# ---------------------------------------------------------------------------


def format_real(x: float) -> str:
    """Render a real for the wire: 17 significant digits, sentinel strings
    for non-finite values, and always float-typed JSON (never a bare int)."""
    x = float(x)
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Inf"' if x > 0 else '"-Inf"'
    s = format(x, ".17g")
    if not any(c in s for c in ".eE"):
        s += ".0"
    return s


def dumps_canonical(obj) -> str:
    """Serialize a JSON-able structure with the wire conventions.

    Dict key order is preserved as given (callers construct in canonical
    order), floats go through :func:`format_real`, ints and bools are plain.
    """
    parts: list[str] = []
    _emit(obj, parts)
    return "".join(parts)


def _emit(obj, parts: list[str]) -> None:
    if isinstance(obj, dict):
        parts.append("{")
        first = True
        for k, v in obj.items():
            if not first:
                parts.append(",")
            first = False
            parts.append(json.dumps(k))
            parts.append(":")
            _emit(v, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, v in enumerate(obj):
            if i:
                parts.append(",")
            _emit(v, parts)
        parts.append("]")
    elif isinstance(obj, bool):
        parts.append("true" if obj else "false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        parts.append(format_real(obj))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    elif obj is None:
        parts.append("null")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _stats_payload(ts: TensorStats) -> dict:
    return {
        "name": ts.name,
        "mean": float(ts.mean),
        "std": float(ts.std),
        "min": float(ts.min),
        "max": float(ts.max),
        "l2_norm": float(ts.l2_norm),
        "frac_zero": float(ts.frac_zero),
        "frac_nonfinite": float(ts.frac_nonfinite),
        "digest": ts.digest,
    }


def _vec(xs) -> list[float]:
    return [float(x) for x in xs]


def _event_payload(event: TraceEvent) -> tuple[str, dict]:
    if isinstance(event, RunStart):
        m = event.meta
        return "RunStart", {
            "run_id": m.run_id,
            "total_episodes": m.total_episodes,
            "max_steps_per_episode": m.max_steps_per_episode,
            "max_reward": float(m.max_reward),
            "discount": float(m.discount),
            "action_space_size": m.action_space_size,
            "target_sync_period": m.target_sync_period,
            "probe_episodes": m.probe_episodes,
        }
    if isinstance(event, EpisodeStart):
        return "EpisodeStart", {"ep": event.ep, "probe": event.probe}
    if isinstance(event, Step):
        return "Step", {
            "ep": event.ep,
            "t": event.t,
            "state": _vec(event.state),
            "action": event.action,
            "reward": float(event.reward),
            "done": event.done,
            "action_probs_main": _vec(event.action_probs_main),
            "action_probs_used": _vec(event.action_probs_used),
        }
    if isinstance(event, EpisodeEnd):
        return "EpisodeEnd", {
            "ep": event.ep,
            "total_reward": float(event.total_reward),
            "steps": event.steps,
        }
    if isinstance(event, ExplorationValue):
        return "ExplorationValue", {"global_step": event.global_step, "value": float(event.value)}
    if isinstance(event, ModelUpdate):
        return "ModelUpdate", {
            "update_idx": event.update_idx,
            "loss": float(event.loss),
            "main_params": [_stats_payload(t) for t in event.main_params],
            "target_params": [_stats_payload(t) for t in event.target_params],
            "grad_norms": [[n, float(v)] for n, v in event.grad_norms],
            "activations": [_stats_payload(t) for t in event.activations],
            "probe_outputs": [_vec(row) for row in event.probe_outputs],
        }
    if isinstance(event, TargetSync):
        return "TargetSync", {"update_idx": event.update_idx}
    if isinstance(event, McDropoutSamples):
        return "McDropoutSamples", {
            "update_idx": event.update_idx,
            "samples": [[_vec(row) for row in s] for s in event.samples],
        }
    if isinstance(event, QTargetBatch):
        return "QTargetBatch", {
            "update_idx": event.update_idx,
            "transitions": [[float(r), d, float(q)] for r, d, q in event.transitions],
            "predicted_targets": _vec(event.predicted_targets),
        }
    if isinstance(event, RunEnd):
        return "RunEnd", {"run_id": event.run_id}
    raise TypeError(f"not a trace event: {type(event).__name__}")


def serialize_event(event: TraceEvent) -> str:
    """Encode one event as a newline-terminated wire record."""
    tag, payload = _event_payload(event)
    record = {"v": WIRE_VERSION, "type": tag}
    record.update(payload)
    return dumps_canonical(record) + "\n"


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_SENTINELS = {"NaN": math.nan, "Inf": math.inf, "-Inf": -math.inf}


def _reject_bare_nonfinite(token: str):
    raise ParseError(f"bare non-finite token {token!r}; use sentinel strings")


class _Reader:
    """Field-by-field decoder with strict key accounting."""

    def __init__(self, payload: dict, tag: str):
        self.payload = payload
        self.tag = tag
        self.seen: set[str] = set()

    def _get(self, name):
        if name not in self.payload:
            raise ParseError(f"{self.tag}: missing field {name!r}", name)
        self.seen.add(name)
        return self.payload[name]

    def real(self, name) -> float:
        return self._coerce_real(self._get(name), name)

    def _coerce_real(self, raw, name) -> float:
        if isinstance(raw, str):
            if raw in _SENTINELS:
                return _SENTINELS[raw]
            raise ParseError(f"{self.tag}: field {name!r} has non-numeric value {raw!r}", name)
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ParseError(f"{self.tag}: field {name!r} is not a real", name)
        return float(raw)

    def integer(self, name, minimum=0) -> int:
        raw = self._get(name)
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ParseError(f"{self.tag}: field {name!r} is not an integer", name)
        if raw < minimum:
            raise ParseError(f"{self.tag}: field {name!r} must be >= {minimum}", name)
        return raw

    def boolean(self, name) -> bool:
        raw = self._get(name)
        if not isinstance(raw, bool):
            raise ParseError(f"{self.tag}: field {name!r} is not a boolean", name)
        return raw

    def string(self, name) -> str:
        raw = self._get(name)
        if not isinstance(raw, str):
            raise ParseError(f"{self.tag}: field {name!r} is not a string", name)
        return raw

    def vector(self, name) -> tuple[float, ...]:
        raw = self._get(name)
        if not isinstance(raw, list):
            raise ParseError(f"{self.tag}: field {name!r} is not an array", name)
        return tuple(self._coerce_real(x, name) for x in raw)

    def matrix(self, name) -> tuple[tuple[float, ...], ...]:
        raw = self._get(name)
        if not isinstance(raw, list) or not all(isinstance(r, list) for r in raw):
            raise ParseError(f"{self.tag}: field {name!r} is not a matrix", name)
        return tuple(tuple(self._coerce_real(x, name) for x in row) for row in raw)

    def tensor3(self, name):
        raw = self._get(name)
        if not isinstance(raw, list):
            raise ParseError(f"{self.tag}: field {name!r} is not a tensor", name)
        out = []
        for s in raw:
            if not isinstance(s, list) or not all(isinstance(r, list) for r in s):
                raise ParseError(f"{self.tag}: field {name!r} is not an SxBxK tensor", name)
            out.append(tuple(tuple(self._coerce_real(x, name) for x in row) for row in s))
        return tuple(out)

    def stats_list(self, name) -> tuple[TensorStats, ...]:
        raw = self._get(name)
        if not isinstance(raw, list):
            raise ParseError(f"{self.tag}: field {name!r} is not an array", name)
        out = []
        for item in raw:
            if not isinstance(item, dict):
                raise ParseError(f"{self.tag}: field {name!r} holds a non-object entry", name)
            sub = _Reader(item, f"{self.tag}.{name}")
            try:
                ts = TensorStats(
                    name=sub.string("name"),
                    mean=sub.real("mean"),
                    std=sub.real("std"),
                    min=sub.real("min"),
                    max=sub.real("max"),
                    l2_norm=sub.real("l2_norm"),
                    frac_zero=sub.real("frac_zero"),
                    frac_nonfinite=sub.real("frac_nonfinite"),
                    digest=sub.integer("digest"),
                )
            except ValueError as e:
                raise ParseError(f"{self.tag}: bad tensor stats in {name!r}: {e}", name)
            sub.finish(item)
            out.append(ts)
        return tuple(out)

    def pairs(self, name) -> tuple[tuple[str, float], ...]:
        raw = self._get(name)
        if not isinstance(raw, list):
            raise ParseError(f"{self.tag}: field {name!r} is not an array", name)
        out = []
        for item in raw:
            if not isinstance(item, list) or len(item) != 2 or not isinstance(item[0], str):
                raise ParseError(f"{self.tag}: field {name!r} holds a malformed pair", name)
            out.append((item[0], self._coerce_real(item[1], name)))
        return tuple(out)

    def transitions(self, name) -> tuple[tuple[float, bool, float], ...]:
        raw = self._get(name)
        if not isinstance(raw, list):
            raise ParseError(f"{self.tag}: field {name!r} is not an array", name)
        out = []
        for item in raw:
            if not isinstance(item, list) or len(item) != 3 or not isinstance(item[1], bool):
                raise ParseError(f"{self.tag}: field {name!r} holds a malformed transition", name)
            out.append((self._coerce_real(item[0], name), item[1], self._coerce_real(item[2], name)))
        return tuple(out)

    def finish(self, payload=None):
        payload = self.payload if payload is None else payload
        extra = set(payload) - self.seen - {"v", "type"}
        if extra:
            name = sorted(extra)[0]
            raise ParseError(f"{self.tag}: unexpected field {name!r}", name)


def parse_event(line: str) -> TraceEvent:
    """Decode one wire record into a trace event."""
    try:
        record = json.loads(line, parse_constant=_reject_bare_nonfinite)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON record: {e}") from e
    if not isinstance(record, dict):
        raise ParseError("record is not an object")
    if "v" not in record:
        raise ParseError("missing field 'v'", "v")
    if record["v"] != WIRE_VERSION:
        raise VersionError(f"unsupported wire version {record['v']!r} (expected {WIRE_VERSION})")
    tag = record.get("type")
    if tag is None:
        raise ParseError("missing field 'type'", "type")
    decoder = _DECODERS.get(tag)
    if decoder is None:
        raise UnsupportedEventError(f"unknown event tag {tag!r}")
    r = _Reader(record, str(tag))
    event = decoder(r)
    r.finish()
    return event


def _decode_run_start(r: _Reader) -> RunStart:
    try:
        meta = RunMeta(
            run_id=r.string("run_id"),
            total_episodes=r.integer("total_episodes", 1),
            max_steps_per_episode=r.integer("max_steps_per_episode", 1),
            max_reward=r.real("max_reward"),
            discount=r.real("discount"),
            action_space_size=r.integer("action_space_size", 1),
            target_sync_period=r.integer("target_sync_period", 1),
            probe_episodes=r.integer("probe_episodes"),
        )
    except ValueError as e:
        raise ParseError(f"RunStart: {e}")
    return RunStart(meta)


_DECODERS = {
    "RunStart": _decode_run_start,
    "EpisodeStart": lambda r: EpisodeStart(ep=r.integer("ep"), probe=r.boolean("probe")),
    "Step": lambda r: Step(
        ep=r.integer("ep"),
        t=r.integer("t"),
        state=r.vector("state"),
        action=r.integer("action"),
        reward=r.real("reward"),
        done=r.boolean("done"),
        action_probs_main=r.vector("action_probs_main"),
        action_probs_used=r.vector("action_probs_used"),
    ),
    "EpisodeEnd": lambda r: EpisodeEnd(
        ep=r.integer("ep"), total_reward=r.real("total_reward"), steps=r.integer("steps")
    ),
    "ExplorationValue": lambda r: ExplorationValue(
        global_step=r.integer("global_step"), value=r.real("value")
    ),
    "ModelUpdate": lambda r: ModelUpdate(
        update_idx=r.integer("update_idx"),
        loss=r.real("loss"),
        main_params=r.stats_list("main_params"),
        target_params=r.stats_list("target_params"),
        grad_norms=r.pairs("grad_norms"),
        activations=r.stats_list("activations"),
        probe_outputs=r.matrix("probe_outputs"),
    ),
    "TargetSync": lambda r: TargetSync(update_idx=r.integer("update_idx")),
    "McDropoutSamples": lambda r: McDropoutSamples(
        update_idx=r.integer("update_idx"), samples=r.tensor3("samples")
    ),
    "QTargetBatch": lambda r: QTargetBatch(
        update_idx=r.integer("update_idx"),
        transitions=r.transitions("transitions"),
        predicted_targets=r.vector("predicted_targets"),
    ),
    "RunEnd": lambda r: RunEnd(run_id=r.string("run_id")),
}


# ---------------------------------------------------------------------------
# stream validation
# ---------------------------------------------------------------------------

PROB_SUM_TOL = 1e-6


def _prob_violation(vec: Sequence[float], where: str) -> str | None:
    if any(not math.isfinite(p) for p in vec):
        return None  # non-finite vectors are the business of ENV/NN checks
    s = sum(vec)
    if abs(s - 1.0) > PROB_SUM_TOL:
        return f"{where}: probability vector sums to {s!r}, not 1 +/- {PROB_SUM_TOL}"
    return None


def validate_stream(events: Iterable[TraceEvent]) -> list[str]:
    """Check a run's structural invariants; returns violations, raises nothing.

    An empty list means the stream starts with RunStart, RunEnd (if present)
    is last, episode/update ordering holds, probe episodes precede training
    episodes, and every finite probability vector is a unit simplex.
    """
    violations: list[str] = []
    meta: RunMeta | None = None
    ended = False
    open_ep: int | None = None
    last_ep = -1
    last_t = -1
    last_update = 0
    probe_done = False

    for i, ev in enumerate(events):
        where = f"event {i} ({type(ev).__name__})"
        if ended:
            violations.append(f"{where}: appears after RunEnd")
            continue
        if meta is None:
            if isinstance(ev, RunStart):
                meta = ev.meta
            else:
                violations.append(f"{where}: stream must begin with RunStart")
            continue
        if isinstance(ev, RunStart):
            violations.append(f"{where}: duplicate RunStart")
        elif isinstance(ev, EpisodeStart):
            if open_ep is not None:
                violations.append(f"{where}: episode {open_ep} still open")
            if ev.ep <= last_ep:
                violations.append(f"{where}: episode index {ev.ep} not after {last_ep}")
            if ev.ep >= meta.total_episodes:
                violations.append(
                    f"{where}: episode index {ev.ep} outside [0, {meta.total_episodes})"
                )
            if ev.probe and probe_done:
                violations.append(f"{where}: probe episode {ev.ep} after training episodes began")
            if not ev.probe:
                probe_done = True
            open_ep = ev.ep
            last_ep = max(last_ep, ev.ep)
            last_t = -1
        elif isinstance(ev, Step):
            if open_ep is None or ev.ep != open_ep:
                violations.append(f"{where}: step for episode {ev.ep} outside an open episode")
            elif ev.t <= last_t:
                violations.append(f"{where}: step index {ev.t} not after {last_t}")
            else:
                last_t = ev.t
            if ev.action >= meta.action_space_size:
                violations.append(f"{where}: action {ev.action} outside the action space")
            for label, vec in (
                ("action_probs_main", ev.action_probs_main),
                ("action_probs_used", ev.action_probs_used),
            ):
                bad = _prob_violation(vec, f"{where}.{label}")
                if bad:
                    violations.append(bad)
        elif isinstance(ev, EpisodeEnd):
            if open_ep is None or ev.ep != open_ep:
                violations.append(f"{where}: close of episode {ev.ep} which is not open")
            open_ep = None
        elif isinstance(ev, (ModelUpdate, TargetSync, McDropoutSamples, QTargetBatch)):
            if ev.update_idx < last_update:
                violations.append(
                    f"{where}: update index {ev.update_idx} before {last_update}"
                )
            last_update = max(last_update, ev.update_idx)
            if isinstance(ev, ModelUpdate):
                for row_i, row in enumerate(ev.probe_outputs):
                    bad = _prob_violation(row, f"{where}.probe_outputs[{row_i}]")
                    if bad:
                        violations.append(bad)
        elif isinstance(ev, ExplorationValue):
            pass
        elif isinstance(ev, RunEnd):
            if open_ep is not None:
                violations.append(f"{where}: episode {open_ep} still open at RunEnd")
            ended = True
        else:  # pragma: no cover - union is closed
            violations.append(f"{where}: unknown event type")
    if meta is None:
        violations.append("stream is empty (no RunStart)")
    return violations


SCHEMA_TEXT = """\
rldx trace wire format, version 1
=================================

One UTF-8 JSON object per line, newline-terminated:

    {"v": 1, "type": "<Tag>", ...payload}

Reals are serialized with 17 significant digits and always carry a decimal
point or exponent.  Non-finite reals are encoded as the JSON strings "NaN",
"Inf" and "-Inf"; bare NaN/Infinity tokens are rejected.  Decoding then
re-encoding a record is byte-identical up to key ordering.

Event payloads (field names are exact):

  RunStart          run_id, total_episodes, max_steps_per_episode, max_reward,
                    discount, action_space_size, target_sync_period,
                    probe_episodes
  EpisodeStart      ep, probe
  Step              ep, t, state[], action, reward, done,
                    action_probs_main[], action_probs_used[]
  EpisodeEnd        ep, total_reward, steps
  ExplorationValue  global_step, value
  ModelUpdate       update_idx, loss, main_params[], target_params[],
                    grad_norms[[name, norm]], activations[],
                    probe_outputs[[...]]   (B x K action probabilities)
  TargetSync        update_idx
  McDropoutSamples  update_idx, samples[[[...]]]   (S x B x K raw outputs)
  QTargetBatch      update_idx, transitions[[reward, done, max_next_q]],
                    predicted_targets[]
  RunEnd            run_id

Tensor statistics object (main_params/target_params/activations entries):

  name, mean, std, min, max, l2_norm, frac_zero, frac_nonfinite, digest

``digest`` is an unsigned 64-bit content checksum: blake2b (8-byte digest) of
the tensor's float64 little-endian bytes in C order, read back big-endian.
Statistics cover the finite entries; frac_nonfinite accounts for the rest.

Stream ordering contract (checked by ``validate_stream``):
  - the first record is RunStart; RunEnd, when present, is last
  - episode indices increase strictly; step indices increase within episodes
  - probe episodes precede all training episodes
  - update-scoped records carry non-decreasing update_idx
  - finite probability vectors sum to 1 +/- 1e-6
"""
