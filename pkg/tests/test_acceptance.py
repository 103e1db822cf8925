"""End-to-end acceptance suite.

Each test exercises one release criterion at its pinned tolerance and prints
a PASS/FAIL line (visible under pytest -s or in captured output on failure).
"""

import time

import numpy as np

from stifflab import emg
from stifflab.observer import (
    BernoulliObserver,
    WeibullObserver,
    alpha_for_target,
    d_prime,
    inverse_normal_cdf,
    normal_cdf,
)
from stifflab.plant import (
    DeviceConfig,
    LimbConfig,
    SpringParam,
    plan_for_bpm,
    simulate_exploration,
    spring_torque,
)
from stifflab.session import config_from_dict, default_config_dict, replay, run_session
from stifflab.staircase import (
    StaircaseConfig,
    convergence_target,
    default_config,
    new_staircase,
    record_response,
    threshold_estimate,
)

REF = 1.11
TARGET_P = 0.8315


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def _run_staircase(observer_p, cfg, rng):
    state = new_staircase(cfg)
    tail_correct = tail_total = 0
    while not state.terminated:
        correct = rng.random() < observer_p(state.level)
        if len(state.reversals) >= 2:
            tail_total += 1
            tail_correct += int(correct)
        state = record_response(state, correct, cfg)
    return state, tail_correct, tail_total


def test_criterion_1_convergence_target():
    start = time.monotonic()
    rng = np.random.default_rng(101)

    # Bernoulli responder at the fixed target rate: zero drift per trial
    wide = StaircaseConfig(
        reference_stiffness=REF, initial_level=REF, up_step=0.1 * REF,
        down_up_ratio=0.7393, down_rule=3, reversal_limit=10**9,
        reversals_averaged=1, level_floor=1e-9, level_cap=1e9,
    )
    responder = BernoulliObserver(p_different=TARGET_P)
    state = new_staircase(wide)
    n_trials = 100_000
    draws = rng.random(n_trials)
    for draw in draws:
        state = record_response(state, bool(draw < TARGET_P), wide)
    drift = (state.level - wide.initial_level) / n_trials / wide.up_step

    # Weibull observer: tail proportion correct converges to the target
    cfg = default_config(REF)
    observer = WeibullObserver(alpha=alpha_for_target(REF, TARGET_P, beta=3.0),
                               beta=3.0)
    tail_correct = tail_total = 0
    for _ in range(1000):
        _, tc, tt = _run_staircase(
            lambda level: observer.p_different(level, 67.5), cfg, rng)
        tail_correct += tc
        tail_total += tt
    tail = tail_correct / tail_total
    elapsed = time.monotonic() - start

    ok = abs(drift) <= 0.02 and abs(tail - TARGET_P) <= 0.02 and elapsed <= 10.0
    report("criterion 1 (convergence target)", ok,
           f"drift {drift:+.5f} up-steps/trial (|.| <= 0.02), "
           f"tail proportion {tail:.4f} (0.8315 +/- 0.02), "
           f"runtime {elapsed:.1f}s (<= 10s)")


def test_criterion_2_threshold_recovery():
    # observer's 83.15% point placed at delta-k = 100% of reference
    cfg = default_config(REF)
    observer = WeibullObserver(alpha=alpha_for_target(REF, TARGET_P, beta=3.0),
                               beta=3.0)
    rng = np.random.default_rng(202)
    thresholds = []
    for _ in range(1000):
        state, _, _ = _run_staircase(
            lambda level: observer.p_different(level, 67.5), cfg, rng)
        thresholds.append(
            threshold_estimate(state, cfg).percent_of_reference)
    mean = float(np.mean(thresholds))
    sem = float(np.std(thresholds, ddof=1) / np.sqrt(len(thresholds)))
    ok = abs(mean - 100.0) <= 8.0
    report("criterion 2 (threshold recovery)", ok,
           f"mean recovered threshold {mean:.2f}% of reference "
           f"(SE {sem:.2f}%), target 100% +/- 8%")


def test_criterion_3_velocity_effect():
    slow_point, fast_point = 1.0526 * REF, 0.8918 * REF
    alpha = alpha_for_target(slow_point, TARGET_P, beta=5.0)
    raw = default_config_dict(plant_mode="ideal")
    raw["observer"] = {
        "family": "weibull", "alpha": alpha, "beta": 5.0,
        "gamma": 0.05, "lapse": 0.02,
        "velocity_scaling": {"67.5": 1.0, "112.5": fast_point / slow_point},
    }
    wins = 0
    sessions = 500
    for seed in range(sessions):
        raw["seed"] = seed
        result = run_session(config_from_dict(raw)).result
        by_velocity = {r.velocity: r.threshold.percent_of_reference
                       for r in result.runs}
        wins += by_velocity[112.5] < by_velocity[67.5]
    ok = wins >= 0.95 * sessions
    report("criterion 3 (velocity effect)", ok,
           f"fast threshold below slow in {wins}/{sessions} paired sessions "
           f"(need >= {int(0.95 * sessions)})")


def test_criterion_4_staircase_arithmetic():
    target = convergence_target(3, 0.7393)
    # frozen 30-digit evaluation of (1/(1+0.7393))^(1/3)
    exact = 0.831524725745046590039163773492
    down_step = default_config(REF).down_step
    ok = (abs(target - exact) <= 1e-12
          and abs(target - TARGET_P) <= 5e-5
          and abs(down_step - 0.0820623) <= 1e-7)
    report("criterion 4 (staircase arithmetic)", ok,
           f"target {target:.6f} (closed form {exact:.6f}, protocol 0.8315 "
           f"+/- 5e-5), down-step {down_step:.7f} (0.0820623 +/- 1e-7)")


def test_criterion_5_filter_response():
    fs = 2000.0
    spec = emg.design_butterworth_lowpass(5.5, fs)
    at = lambda f: 20 * np.log10(abs(emg.frequency_response(spec, np.array([f]))[0]))
    dc = abs(emg.frequency_response(spec, np.array([0.0]))[0])
    continuous_60 = -10.0 * np.log10(1.0 + 10.0**6)
    poles = [p for p in emg.section_poles(spec) if p != 0]
    ok = (abs(at(5.5) + 3.01) <= 0.05
          and abs(dc - 1.0) <= 1e-6
          and abs(at(55.0) - continuous_60) <= 3.0
          and all(abs(p) < 1.0 for p in poles))
    report("criterion 5 (filter response)", ok,
           f"{at(5.5):.4f} dB at 5.5 Hz (-3.01 +/- 0.05), DC gain {dc:.8f}, "
           f"{at(55.0):.2f} dB at 55 Hz (within 3 dB of {continuous_60:.2f}), "
           f"max |pole| {max(abs(p) for p in poles):.6f}")


def test_criterion_6_trajectory_analytics():
    slow, fast = plan_for_bpm(45.0), plan_for_bpm(75.0)
    checks = [
        (slow.beat_duration, 60.0 / 45.0),
        (slow.mean_speed, 67.5),
        (fast.beat_duration, 0.8),
        (fast.mean_speed, 112.5),
        # peak of the minimum-jerk speed profile at midstroke
        (30 * 0.5**2 - 60 * 0.5**3 + 30 * 0.5**4, 1.875),
    ]
    worst = max(abs(a - b) for a, b in checks)
    ok = worst <= 1e-9
    report("criterion 6 (trajectory analytics)", ok,
           f"45 bpm -> {slow.beat_duration:.5f}s / {slow.mean_speed} deg/s, "
           f"75 bpm -> {fast.beat_duration}s / {fast.mean_speed} deg/s, "
           f"peak = 1.875x mean; max error {worst:.2e} (<= 1e-9)")


def test_criterion_7_rendering():
    device = DeviceConfig()
    magnitude = abs(spring_torque(SpringParam(k=REF), 90.0, device))
    rec = simulate_exploration(SpringParam(k=REF), plan_for_bpm(45.0),
                               LimbConfig(), device,
                               np.random.default_rng(7))
    expected = np.clip(-REF * rec.quantized_angle,
                       -device.torque_limit, device.torque_limit)
    exact = np.array_equal(rec.commanded_torque, expected)
    ok = abs(magnitude - 99.9) <= 1e-9 and exact
    report("criterion 7 (spring rendering)", ok,
           f"|torque| at 90 deg = {magnitude} mNm (99.9 +/- 1e-9), "
           f"per-sample torque == -k x quantized angle exactly: {exact}")


def test_criterion_8_sensitivity_index():
    dp = d_prime(0.84134, 0.5)
    ps = np.concatenate([np.geomspace(1e-6, 0.5, 300),
                         1.0 - np.geomspace(1e-6, 0.5, 300)])
    worst = max(abs(normal_cdf(inverse_normal_cdf(p)) - p) for p in ps)
    ok = abs(dp - 1.0) <= 1e-3 and worst < 1e-9
    report("criterion 8 (d-prime)", ok,
           f"d'(0.84134, 0.5) = {dp:.5f} (1.000 +/- 1e-3), "
           f"max quantile round-trip error {worst:.2e} (< 1e-9)")


def _fuzzed_config(rng):
    families = [
        {"family": "weibull", "alpha": float(rng.uniform(0.5, 2.0)),
         "beta": float(rng.uniform(1.5, 5.0)), "gamma": 0.05, "lapse": 0.02},
        {"family": "sdt", "sigma": float(rng.uniform(0.1, 1.0)),
         "criterion": float(rng.uniform(0.05, 0.8))},
        {"family": "bernoulli", "p_different": float(rng.uniform(0.3, 0.9))},
    ]
    reversal_limit = int(rng.integers(4, 11))
    raw = default_config_dict(seed=int(rng.integers(0, 2**32)),
                              plant_mode="ideal")
    raw["observer"] = families[int(rng.integers(0, len(families)))]
    raw["catch_trial_rate"] = float(rng.uniform(0.0, 0.3))
    raw["staircase"] = {
        "down_rule": int(rng.integers(1, 4)),
        "down_up_ratio": float(rng.uniform(0.3, 1.0)),
        "reversal_limit": reversal_limit,
        "reversals_averaged": int(rng.integers(2, reversal_limit + 1)),
    }
    if rng.random() < 0.5:
        raw["velocities"] = [{"bpm": 45, "deg_s": 67.5}]
    return raw


def test_criterion_9_replay_closure_and_determinism():
    rng = np.random.default_rng(909)
    closures = reruns = 0
    n_fuzz = 100
    for i in range(n_fuzz):
        raw = _fuzzed_config(rng)
        run = run_session(config_from_dict(raw))
        closures += replay(run.log_text) == run.result
        if i < 10:
            reruns += run_session(config_from_dict(raw)).log_text == run.log_text
    ok = closures == n_fuzz and reruns == 10
    report("criterion 9 (replay closure & determinism)", ok,
           f"{closures}/{n_fuzz} fuzzed sessions replay identically, "
           f"{reruns}/10 re-executions byte-identical")


def test_criterion_10_envelope_fidelity():
    fs = 2000.0
    n = int(10 * fs)
    t = np.arange(n) / fs
    activation = 0.5 + 0.4 * np.sin(2 * np.pi * 0.5 * t)
    signal = emg.synthesize_emg(activation, fs, dc_offset=0.2,
                                rng=np.random.default_rng(1010))
    spec = emg.design_butterworth_lowpass(5.5, fs)
    envelope = emg.linear_envelope(signal, spec)
    r = float(np.corrcoef(envelope.samples, activation)[0, 1])
    ok = r >= 0.9
    report("criterion 10 (envelope fidelity)", ok,
           f"envelope-activation correlation {r:.4f} over 10 s (>= 0.9)")
