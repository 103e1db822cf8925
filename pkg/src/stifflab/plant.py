"""Simulated 1-DoF rotary device and forearm.

Minimum-jerk metronome-paced pronation strokes, second-order limb dynamics,
virtual-spring torque rendered from the quantized encoder angle with
saturation, LED target-window events, and achieved-velocity checks.

Angles are in degrees, stiffness in mNm/deg, torques in mNm at the module
boundary; the integrator works in SI internally.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

_DEG = math.pi / 180.0  # rad per degree
_MNM = 1e-3             # Nm per mNm


class UnstableIntegrationError(RuntimeError):
    """Angle exceeded 10x amplitude; tracking gains are likely bad."""


@dataclass(frozen=True)
class DeviceConfig:
    encoder_counts_per_rev: int = 4096  # 1024 lines x 4 quadrature
    torque_limit: float = 300.0         # mNm
    control_rate: float = 1000.0        # Hz

    def __post_init__(self):
        if self.encoder_counts_per_rev < 4:
            raise ValueError("encoder_counts_per_rev must be at least 4")
        if self.torque_limit <= 0 or self.control_rate <= 0:
            raise ValueError("torque_limit and control_rate must be positive")


@dataclass(frozen=True)
class SpringParam:
    k: float  # mNm/deg

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("stiffness must be nonnegative")


@dataclass(frozen=True)
class TrajectoryPlan:
    amplitude: float       # deg, normal position to pronation target
    beat_duration: float   # s per stroke (60 / metronome bpm)
    sample_rate: float     # Hz
    led_window: float = 2.5  # deg

    def __post_init__(self):
        if self.amplitude <= 0 or self.beat_duration <= 0 or self.led_window <= 0:
            raise ValueError("amplitude, beat_duration and led_window must be positive")

    @property
    def mean_speed(self) -> float:
        return self.amplitude / self.beat_duration


def plan_for_bpm(bpm: float, amplitude: float = 90.0,
                 sample_rate: float = 1000.0, led_window: float = 2.5) -> TrajectoryPlan:
    return TrajectoryPlan(amplitude=amplitude, beat_duration=60.0 / bpm,
                          sample_rate=sample_rate, led_window=led_window)


@dataclass(frozen=True)
class LimbConfig:
    inertia: float = 0.004              # kg m^2
    damping: float = 0.01               # Nm s/rad
    tracking_stiffness_gain: float = 5.0   # Nm/rad
    tracking_damping_gain: float = 0.05    # Nm s/rad
    motor_noise_std: float = 0.0        # Nm
    muscle_torque_max: float = 500.0    # mNm, activation normalizer

    def __post_init__(self):
        if self.inertia <= 0:
            raise ValueError("inertia must be positive")
        if min(self.damping, self.tracking_stiffness_gain,
               self.tracking_damping_gain, self.motor_noise_std) < 0:
            raise ValueError("damping, gains and noise must be nonnegative")
        if self.muscle_torque_max <= 0:
            raise ValueError("muscle_torque_max must be positive")


@dataclass(frozen=True)
class ReferenceTrajectory:
    time: np.ndarray      # s
    angle: np.ndarray     # deg
    velocity: np.ndarray  # deg/s
    acceleration: np.ndarray  # deg/s^2


def min_jerk_trajectory(plan: TrajectoryPlan) -> ReferenceTrajectory:
    """Out-and-back minimum-jerk stroke pair.

    Out stroke: theta(t) = A (10 s^3 - 15 s^4 + 6 s^5), s = t/T; the return
    stroke is the mirror image.  Endpoint velocity and acceleration vanish;
    mean speed per stroke is A/T and peak speed 1.875 A/T.
    """
    big_t = plan.beat_duration
    amp = plan.amplitude
    n = int(round(2.0 * big_t * plan.sample_rate)) + 1
    t = np.arange(n) / plan.sample_rate
    s = np.where(t <= big_t, t, t - big_t) / big_t
    s = np.clip(s, 0.0, 1.0)
    pos = amp * (10 * s**3 - 15 * s**4 + 6 * s**5)
    vel = amp / big_t * (30 * s**2 - 60 * s**3 + 30 * s**4)
    acc = amp / big_t**2 * (60 * s - 180 * s**2 + 120 * s**3)
    out = t <= big_t
    angle = np.where(out, pos, amp - pos)
    velocity = np.where(out, vel, -vel)
    acceleration = np.where(out, acc, -acc)
    return ReferenceTrajectory(time=t, angle=angle, velocity=velocity,
                               acceleration=acceleration)


def spring_torque(spring: SpringParam, angle: float, device: DeviceConfig) -> float:
    """Restoring torque -k * angle, saturated at the device limit."""
    tau = -spring.k * angle
    return min(max(tau, -device.torque_limit), device.torque_limit)


def quantize_angle(angle: float, device: DeviceConfig) -> float:
    resolution = 360.0 / device.encoder_counts_per_rev
    return math.floor(angle / resolution) * resolution


@dataclass(frozen=True)
class TrialRecording:
    time: np.ndarray
    angle: np.ndarray
    quantized_angle: np.ndarray
    commanded_torque: np.ndarray   # mNm, device spring rendering
    muscle_torque: np.ndarray      # mNm
    activation: np.ndarray         # [0, 1]
    led_events: tuple[float, ...]  # s, at most one per stroke
    achieved_mean_velocity: float  # deg/s

    def digest(self) -> str:
        h = hashlib.sha256()
        for series in (self.time, self.angle, self.quantized_angle,
                       self.commanded_torque, self.muscle_torque, self.activation):
            h.update(np.ascontiguousarray(series, dtype=np.float64).tobytes())
        h.update(np.asarray(self.led_events, dtype=np.float64).tobytes())
        h.update(np.float64(self.achieved_mean_velocity).tobytes())
        return h.hexdigest()

    def to_csv(self, path) -> None:
        data = np.column_stack([self.time, self.angle, self.quantized_angle,
                                self.commanded_torque, self.muscle_torque,
                                self.activation])
        np.savetxt(
            path, data, delimiter=",", comments="",
            header="time,angle,quantized_angle,commanded_torque,muscle_torque,activation",
        )


def simulate_exploration(
    spring: SpringParam,
    plan: TrajectoryPlan,
    limb: LimbConfig,
    device: DeviceConfig,
    rng: np.random.Generator,
) -> TrialRecording:
    """Simulate one out-and-back exploration of a virtual spring.

    Limb dynamics: inertia * accel = muscle - damping * vel + device torque,
    where the device renders the spring at the quantized angle.  Muscle
    torque is inverse-dynamics feedforward along the reference trajectory
    plus PD tracking feedback plus white noise, zero-order-held over each
    control period; the state is advanced with fixed-step RK4.
    """
    ref = min_jerk_trajectory(plan)
    n = len(ref.time)
    dt = 1.0 / plan.sample_rate
    inertia, damping = limb.inertia, limb.damping
    kp, kd = limb.tracking_stiffness_gain, limb.tracking_damping_gain
    k_si = spring.k * _MNM / _DEG  # Nm/rad

    # feedforward: inverse dynamics of the reference against the nominal spring
    tau_ff = (inertia * ref.acceleration * _DEG
              + damping * ref.velocity * _DEG
              + k_si * ref.angle * _DEG)  # Nm
    noise = (rng.normal(0.0, limb.motor_noise_std, size=n)
             if limb.motor_noise_std > 0 else np.zeros(n))

    theta = 0.0  # deg
    omega = 0.0  # deg/s
    angle = np.empty(n)
    q_angle = np.empty(n)
    tau_dev = np.empty(n)   # mNm
    tau_mus = np.empty(n)   # mNm
    led: list[float] = []
    big_t = plan.beat_duration
    stroke_seen = [False, False]
    path_length = 0.0
    limit = 10.0 * plan.amplitude

    for i in range(n):
        theta_q = quantize_angle(theta, device)
        t_dev = spring_torque(spring, theta_q, device)  # mNm
        t_mus = (tau_ff[i]
                 + kp * (ref.angle[i] - theta) * _DEG
                 + kd * (ref.velocity[i] - omega) * _DEG
                 + noise[i])  # Nm

        angle[i] = theta
        q_angle[i] = theta_q
        tau_dev[i] = t_dev
        tau_mus[i] = t_mus / _MNM

        stroke = 0 if ref.time[i] <= big_t else 1
        target = plan.amplitude if stroke == 0 else 0.0
        if not stroke_seen[stroke] and abs(theta - target) < plan.led_window:
            stroke_seen[stroke] = True
            led.append(float(ref.time[i]))

        if abs(theta) > limit:
            raise UnstableIntegrationError(
                f"angle {theta:.1f} deg exceeds 10x amplitude at t={ref.time[i]:.3f}s"
            )
        if i == n - 1:
            break

        # constant inputs over the step (zero-order hold)
        tau_const = t_mus + t_dev * _MNM  # Nm

        def deriv(th, om):
            return om, (tau_const - damping * om * _DEG) / inertia / _DEG

        d1t, d1o = deriv(theta, omega)
        d2t, d2o = deriv(theta + 0.5 * dt * d1t, omega + 0.5 * dt * d1o)
        d3t, d3o = deriv(theta + 0.5 * dt * d2t, omega + 0.5 * dt * d2o)
        d4t, d4o = deriv(theta + dt * d3t, omega + dt * d3o)
        new_theta = theta + dt / 6.0 * (d1t + 2 * d2t + 2 * d3t + d4t)
        omega = omega + dt / 6.0 * (d1o + 2 * d2o + 2 * d3o + d4o)
        path_length += abs(new_theta - theta)
        theta = new_theta

    activation = np.clip(np.abs(tau_mus) / limb.muscle_torque_max, 0.0, 1.0)
    duration = ref.time[-1]
    return TrialRecording(
        time=ref.time,
        angle=angle,
        quantized_angle=q_angle,
        commanded_torque=tau_dev,
        muscle_torque=tau_mus,
        activation=activation,
        led_events=tuple(led),
        achieved_mean_velocity=path_length / duration,
    )


def achieved_velocity_ok(
    rec: TrialRecording, plan: TrajectoryPlan, tolerance: float
) -> bool:
    """Accept the exploration iff mean speed is on target and the LED fired
    on both strokes."""
    if len(rec.led_events) < 2:
        return False
    return abs(rec.achieved_mean_velocity - plan.mean_speed) <= tolerance
