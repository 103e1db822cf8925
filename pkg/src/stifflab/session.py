"""Experiment orchestration with an append-only, replayable event log.

A session runs one adaptive staircase per exploration velocity, in an order
shuffled from the seed.  Every trial presents a reference and a comparison
spring in random order, simulates one out-and-back exploration per interval
(repeating rejected explorations without advancing the staircase), asks the
observer for a Same/Different response, and feeds correctness into the
staircase.  Every state change is an event; the full result is recomputable
from the log alone, including manual response amendments.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .observer import Response, observer_from_config
from .plant import (
    DeviceConfig,
    LimbConfig,
    SpringParam,
    TrajectoryPlan,
    achieved_velocity_ok,
    simulate_exploration,
)
from .staircase import (
    StaircaseConfig,
    ThresholdEstimate,
    new_staircase,
    record_response,
    threshold_estimate,
)

TRAINING_DURATION_S = 120.0
BREAK_DURATION_S = 300.0
RESPONSE_DURATION_S = 1.0


class ConfigError(ValueError):
    pass


class RepeatLimitError(RuntimeError):
    """An interval kept failing the velocity check past the repeat cap."""


class CorruptLogError(ValueError):
    def __init__(self, message: str, seq: int | None = None):
        super().__init__(message if seq is None else f"seq {seq}: {message}")
        self.seq = seq


@dataclass(frozen=True)
class VelocityCondition:
    bpm: float
    deg_s: float


@dataclass(frozen=True)
class SessionConfig:
    seed: int
    reference_stiffness: float
    staircase: StaircaseConfig
    velocities: tuple[VelocityCondition, ...]
    trajectory_amplitude: float
    led_window: float
    limb: LimbConfig
    device: DeviceConfig
    observer: dict
    velocity_tolerance: float = 5.0
    catch_trial_rate: float = 0.0
    plant_mode: str = "full"  # "full" simulates the plant, "ideal" skips it
    repeat_cap: int = 5

    def __post_init__(self):
        if not self.velocities:
            raise ConfigError("velocities must be nonempty")
        if not 0.0 <= self.catch_trial_rate < 1.0:
            raise ConfigError("catch_trial_rate must be in [0, 1)")
        if self.plant_mode not in ("full", "ideal"):
            raise ConfigError(f"unknown plant_mode: {self.plant_mode!r}")
        if self.repeat_cap < 1:
            raise ConfigError("repeat_cap must be at least 1")


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    t_wall: float  # simulated session clock, seconds
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind,
                "t_wall": self.t_wall, "payload": self.payload}


@dataclass(frozen=True)
class RunResult:
    velocity: float
    threshold: ThresholdEstimate
    trial_count: int
    reversal_levels: tuple[float, ...]
    proportion_correct_tail: float | None  # None when no trials followed reversal 2


@dataclass(frozen=True)
class SessionResult:
    runs: tuple[RunResult, ...]
    velocity_order: tuple[float, ...]
    log_digest: str


@dataclass(frozen=True)
class SessionRun:
    """Result of an executed session plus its serialized event log."""

    result: SessionResult
    log_text: str


_TOP_KEYS = {
    "seed", "reference_stiffness", "staircase", "velocities", "trajectory",
    "limb", "device", "observer", "velocity_tolerance", "catch_trial_rate",
    "plant_mode", "repeat_cap",
}
_STAIRCASE_KEYS = {
    "initial_level", "up_step", "down_up_ratio", "down_rule",
    "reversal_limit", "reversals_averaged", "level_floor", "level_cap",
}
_TRAJECTORY_KEYS = {"amplitude", "led_window"}
_LIMB_KEYS = {"inertia", "damping", "tracking_stiffness_gain",
              "tracking_damping_gain", "motor_noise_std", "muscle_torque_max"}
_DEVICE_KEYS = {"encoder_counts_per_rev", "torque_limit", "control_rate"}
_VELOCITY_KEYS = {"bpm", "deg_s"}


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key in {where}: {unknown[0]!r}")


def config_from_dict(raw: dict) -> SessionConfig:
    """Parse and validate a session config document; unknown keys rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")
    try:
        seed = int(raw["seed"])
        reference = float(raw["reference_stiffness"])
        velocities_raw = raw["velocities"]
        observer = dict(raw["observer"])
    except KeyError as exc:
        raise ConfigError(f"missing required key: {exc.args[0]!r}") from None

    stair_raw = dict(raw.get("staircase", {}))
    _reject_unknown(stair_raw, _STAIRCASE_KEYS, "staircase")
    up_step = float(stair_raw.get("up_step", 0.1 * reference))
    ratio = float(stair_raw.get("down_up_ratio", 0.7393))
    traj_raw = dict(raw.get("trajectory", {}))
    _reject_unknown(traj_raw, _TRAJECTORY_KEYS, "trajectory")
    amplitude = float(traj_raw.get("amplitude", 90.0))
    led_window = float(traj_raw.get("led_window", 2.5))
    device_raw = dict(raw.get("device", {}))
    _reject_unknown(device_raw, _DEVICE_KEYS, "device")
    device = DeviceConfig(**device_raw)
    limb_raw = dict(raw.get("limb", {}))
    _reject_unknown(limb_raw, _LIMB_KEYS, "limb")
    limb = LimbConfig(**limb_raw)

    staircase = StaircaseConfig(
        reference_stiffness=reference,
        initial_level=float(stair_raw.get("initial_level", reference)),
        up_step=up_step,
        down_up_ratio=ratio,
        down_rule=int(stair_raw.get("down_rule", 3)),
        reversal_limit=int(stair_raw.get("reversal_limit", 10)),
        reversals_averaged=int(stair_raw.get("reversals_averaged", 8)),
        level_floor=float(stair_raw.get("level_floor", ratio * up_step)),
        level_cap=float(stair_raw.get(
            "level_cap", device.torque_limit / amplitude - reference)),
    )

    velocities = []
    for entry in velocities_raw:
        entry = dict(entry)
        _reject_unknown(entry, _VELOCITY_KEYS, "velocities")
        bpm = float(entry["bpm"])
        deg_s = float(entry.get("deg_s", amplitude * bpm / 60.0))
        velocities.append(VelocityCondition(bpm=bpm, deg_s=deg_s))

    observer_from_config(observer)  # validate now, construct again at run time
    return SessionConfig(
        seed=seed,
        reference_stiffness=reference,
        staircase=staircase,
        velocities=tuple(velocities),
        trajectory_amplitude=amplitude,
        led_window=led_window,
        limb=limb,
        device=device,
        observer=observer,
        velocity_tolerance=float(raw.get("velocity_tolerance", 5.0)),
        catch_trial_rate=float(raw.get("catch_trial_rate", 0.0)),
        plant_mode=str(raw.get("plant_mode", "full")),
        repeat_cap=int(raw.get("repeat_cap", 5)),
    )


def config_to_dict(config: SessionConfig) -> dict:
    stair = asdict(config.staircase)
    stair.pop("reference_stiffness")
    return {
        "seed": config.seed,
        "reference_stiffness": config.reference_stiffness,
        "staircase": stair,
        "velocities": [asdict(v) for v in config.velocities],
        "trajectory": {"amplitude": config.trajectory_amplitude,
                       "led_window": config.led_window},
        "limb": asdict(config.limb),
        "device": asdict(config.device),
        "observer": config.observer,
        "velocity_tolerance": config.velocity_tolerance,
        "catch_trial_rate": config.catch_trial_rate,
        "plant_mode": config.plant_mode,
        "repeat_cap": config.repeat_cap,
    }


def default_config_dict(seed: int = 0, plant_mode: str = "full") -> dict:
    """Config document for the standard two-velocity protocol."""
    return {
        "seed": seed,
        "reference_stiffness": 1.11,
        "velocities": [{"bpm": 45, "deg_s": 67.5}, {"bpm": 75, "deg_s": 112.5}],
        "observer": {
            "family": "weibull",
            "alpha": 1.3,
            "beta": 3.0,
            "gamma": 0.05,
            "lapse": 0.02,
            "velocity_scaling": {"67.5": 1.0, "112.5": 0.847},
        },
        "plant_mode": plant_mode,
    }


class _Recorder:
    """Monotone event sink with a simulated wall clock."""

    def __init__(self):
        self.events: list[Event] = []
        self.clock = 0.0

    def emit(self, kind: str, payload: dict) -> Event:
        event = Event(seq=len(self.events), kind=kind,
                      t_wall=self.clock, payload=payload)
        self.events.append(event)
        return event


def _run_intervals(
    springs: tuple[float, float],
    config: SessionConfig,
    condition: VelocityCondition,
    rec: _Recorder,
    rng: np.random.Generator,
    trial_index: int,
) -> list[str]:
    """Simulate both intervals, repeating rejected explorations.

    Returns the accepted recordings' digests.  The staircase is untouched by
    rejections; only the faulty interval is repeated.
    """
    plan = TrajectoryPlan(
        amplitude=config.trajectory_amplitude,
        beat_duration=60.0 / condition.bpm,
        sample_rate=config.device.control_rate,
        led_window=config.led_window,
    )
    exploration_time = 2.0 * plan.beat_duration
    digests = []
    for interval, k in enumerate(springs):
        if config.plant_mode == "ideal":
            rec.clock += exploration_time
            digests.append("ideal")
            continue
        for attempt in range(1, config.repeat_cap + 1):
            recording = simulate_exploration(
                SpringParam(k=k), plan, config.limb, config.device, rng)
            rec.clock += exploration_time
            if achieved_velocity_ok(recording, plan, config.velocity_tolerance):
                digests.append(recording.digest())
                break
            rec.emit("ExplorationRejected", {
                "trial": trial_index,
                "interval": interval,
                "attempt": attempt,
                "achieved_mean_velocity": float(recording.achieved_mean_velocity),
                "led_events": len(recording.led_events),
            })
        else:
            raise RepeatLimitError(
                f"interval {interval} of trial {trial_index} failed the "
                f"velocity check {config.repeat_cap} times"
            )
    return digests


def _run_staircase_run(
    config: SessionConfig,
    condition: VelocityCondition,
    rec: _Recorder,
    rng: np.random.Generator,
) -> RunResult:
    observer = observer_from_config(config.observer)
    stair = config.staircase
    rec.emit("RunStarted", {
        "velocity_deg_s": condition.deg_s,
        "bpm": condition.bpm,
        "staircase": asdict(stair),
    })
    state = new_staircase(stair)
    tail_correct = 0
    tail_total = 0
    staircase_trials = 0

    while not state.terminated:
        is_catch = config.catch_trial_rate > 0 and rng.random() < config.catch_trial_rate
        k_ref = config.reference_stiffness
        k_comp = k_ref if is_catch else k_ref + state.level
        reference_first = rng.random() < 0.5
        springs = (k_ref, k_comp) if reference_first else (k_comp, k_ref)
        rec.emit("Presented", {
            "trial": state.trial_index,
            "level": state.level,
            "catch": is_catch,
            "reference_first": reference_first,
            "k_first": springs[0],
            "k_second": springs[1],
        })
        digests = _run_intervals(springs, config, condition, rec, rng,
                                 state.trial_index)
        response = observer.respond(springs[0], springs[1], condition.deg_s, rng)
        correct = (response is Response.SAME) if is_catch \
            else (response is Response.DIFFERENT)
        rec.clock += RESPONSE_DURATION_S
        rec.emit("Responded", {
            "trial": state.trial_index,
            "catch": is_catch,
            "response": response.value,
            "correct": correct,
            "recording_digests": digests,
        })
        if is_catch:
            continue  # catch trials never drive the staircase

        staircase_trials += 1
        if len(state.reversals) >= 2:
            tail_total += 1
            tail_correct += int(correct)
        before = state
        state = record_response(state, correct, stair)
        if state.level != before.level or state.last_move_direction != before.last_move_direction:
            rec.emit("StaircaseMoved", {
                "trial": before.trial_index,
                "direction": state.last_move_direction.value,
                "level_before": before.level,
                "level_after": state.level,
            })
        if len(state.reversals) > len(before.reversals):
            reversal = state.reversals[-1]
            rec.emit("Reversal", {
                "trial": reversal.trial_index,
                "index": len(state.reversals),
                "level": reversal.level_at_reversal,
                "new_direction": reversal.new_direction.value,
            })

    estimate = threshold_estimate(state, stair)
    levels = tuple(r.level_at_reversal for r in state.reversals)
    tail = tail_correct / tail_total if tail_total else None
    rec.emit("RunTerminated", {
        "velocity_deg_s": condition.deg_s,
        "trials": staircase_trials,
        "reversal_levels": list(levels),
        "threshold_absolute": estimate.absolute,
        "threshold_pct": estimate.percent_of_reference,
        "proportion_correct_tail": tail,
    })
    return RunResult(
        velocity=condition.deg_s,
        threshold=estimate,
        trial_count=staircase_trials,
        reversal_levels=levels,
        proportion_correct_tail=tail,
    )


def run_session(config: SessionConfig) -> SessionRun:
    """Execute the full protocol and return results plus the event log."""
    rng = np.random.default_rng(config.seed)
    rec = _Recorder()
    rec.emit("SessionStarted", {"config": config_to_dict(config)})
    order = [int(i) for i in rng.permutation(len(config.velocities))]
    runs = []
    for position, index in enumerate(order):
        condition = config.velocities[index]
        rec.emit("Metadata", {"note": "training", "duration_s": TRAINING_DURATION_S})
        rec.clock += TRAINING_DURATION_S
        runs.append(_run_staircase_run(config, condition, rec, rng))
        if position < len(order) - 1:
            rec.emit("Metadata", {"note": "break", "duration_s": BREAK_DURATION_S})
            rec.clock += BREAK_DURATION_S
    velocity_order = tuple(config.velocities[i].deg_s for i in order)
    rec.emit("SessionEnded", {
        "velocity_order": list(velocity_order),
        "runs": [{
            "velocity_deg_s": r.velocity,
            "threshold_pct": r.threshold.percent_of_reference,
            "threshold_absolute": r.threshold.absolute,
            "trials": r.trial_count,
            "reversals": len(r.reversal_levels),
            "proportion_correct_tail": r.proportion_correct_tail,
        } for r in runs],
    })
    log_text = serialize_log(rec.events)
    result = SessionResult(
        runs=tuple(runs),
        velocity_order=velocity_order,
        log_digest=_digest(log_text),
    )
    return SessionRun(result=result, log_text=log_text)


def serialize_log(events: list[Event]) -> str:
    lines = [json.dumps(e.to_dict(), sort_keys=True)
             for e in events]
    return "\n".join(lines) + "\n"


def parse_log(text: str) -> list[Event]:
    events = []
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        events.append(Event(seq=d["seq"], kind=d["kind"],
                            t_wall=d["t_wall"], payload=d["payload"]))
    return events


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def append_amendment(log_text: str, target_seq: int, payload_update: dict) -> str:
    """Append an Amendment event overriding fields of a prior event's payload.

    Nothing is deleted; replay resolves the amendment.  Mirrors the manual
    override an experimenter applies when a wrong button was hit.
    """
    events = parse_log(log_text)
    if not 0 <= target_seq < len(events):
        raise CorruptLogError("amendment targets a nonexistent event", target_seq)
    amendment = Event(
        seq=len(events),
        kind="Amendment",
        t_wall=events[-1].t_wall,
        payload={"target_seq": target_seq, "update": dict(payload_update)},
    )
    return log_text + json.dumps(amendment.to_dict(), sort_keys=True) + "\n"


def replay(log_text: str) -> SessionResult:
    """Recompute the session result from the event log alone.

    Every staircase transition and threshold is rederived from Responded
    events (after amendment resolution).  For unamended logs the result must
    match the recorded summary; a mismatch or malformed sequence raises
    CorruptLogError with the offending sequence number.
    """
    events = parse_log(log_text)
    if not events:
        raise CorruptLogError("empty log")
    for i, event in enumerate(events):
        if event.seq != i:
            raise CorruptLogError("sequence gap", event.seq)

    amended = False
    payloads = {e.seq: dict(e.payload) for e in events}
    for event in events:
        if event.kind == "Amendment":
            amended = True
            target = event.payload.get("target_seq")
            if target not in payloads:
                raise CorruptLogError("amendment targets missing event", event.seq)
            payloads[target].update(event.payload["update"])

    if events[0].kind != "SessionStarted":
        raise CorruptLogError("log does not start with SessionStarted", 0)
    if not any(e.kind == "SessionEnded" for e in events):
        raise CorruptLogError("missing SessionEnded terminator",
                              events[-1].seq)

    runs: list[RunResult] = []
    velocity_order: list[float] = []
    state = None
    stair = None
    velocity = None
    tail_correct = tail_total = staircase_trials = 0

    for event in events:
        payload = payloads[event.seq]
        if event.kind == "RunStarted":
            stair = StaircaseConfig(**payload["staircase"])
            state = new_staircase(stair)
            velocity = payload["velocity_deg_s"]
            velocity_order.append(velocity)
            tail_correct = tail_total = staircase_trials = 0
        elif event.kind == "Responded":
            if state is None or state.terminated:
                raise CorruptLogError("response outside an active run", event.seq)
            if payload["catch"]:
                continue
            staircase_trials += 1
            if len(state.reversals) >= 2:
                tail_total += 1
                tail_correct += int(payload["correct"])
            state = record_response(state, payload["correct"], stair)
        elif event.kind == "RunTerminated":
            if state is None or not state.terminated:
                raise CorruptLogError("run terminated before the staircase did",
                                      event.seq)
            estimate = threshold_estimate(state, stair)
            levels = tuple(r.level_at_reversal for r in state.reversals)
            tail = tail_correct / tail_total if tail_total else None
            runs.append(RunResult(
                velocity=velocity,
                threshold=estimate,
                trial_count=staircase_trials,
                reversal_levels=levels,
                proportion_correct_tail=tail,
            ))
            if not amended and abs(estimate.percent_of_reference
                                   - payload["threshold_pct"]) > 0:
                raise CorruptLogError("recomputed threshold disagrees with log",
                                      event.seq)
            state = None

    return SessionResult(
        runs=tuple(runs),
        velocity_order=tuple(velocity_order),
        log_digest=_digest(log_text),
    )


def sdt_rates(log_text: str) -> tuple[float, float]:
    """(hit rate, false-alarm rate) over the log's standard and catch trials.

    Hits are Different responses to genuinely different pairs; false alarms
    are Different responses on catch (identical) pairs.
    """
    hits = signal_trials = false_alarms = catch_trials = 0
    for event in parse_log(log_text):
        if event.kind != "Responded":
            continue
        different = event.payload["response"] == "different"
        if event.payload["catch"]:
            catch_trials += 1
            false_alarms += int(different)
        else:
            signal_trials += 1
            hits += int(different)
    hit_rate = hits / signal_trials if signal_trials else float("nan")
    fa_rate = false_alarms / catch_trials if catch_trials else float("nan")
    return hit_rate, fa_rate


def summary_rows(session_id: str, config: SessionConfig,
                 result: SessionResult) -> list[dict]:
    return [{
        "session_id": session_id,
        "seed": config.seed,
        "velocity_deg_s": run.velocity,
        "threshold_pct": run.threshold.percent_of_reference,
        "trials": run.trial_count,
        "reversals": len(run.reversal_levels),
        "prop_correct_tail": "" if run.proportion_correct_tail is None
            else run.proportion_correct_tail,
    } for run in result.runs]


SUMMARY_COLUMNS = ["session_id", "seed", "velocity_deg_s", "threshold_pct",
                   "trials", "reversals", "prop_correct_tail"]
