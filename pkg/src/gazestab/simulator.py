"""Closed-loop simulation: plant, synthetic gyro, synthetic optical flow.

The plant integrates the 9 head DoF with explicit Euler at a fixed tick.
Disturbance channels (scripted joints and the prismatic base stage) follow
their script exactly; stabilizer channels track their setpoints through a
first-order velocity lag (tau = 0 gives the ideal plant).  Joint limits are
enforced in mechanical joint space -- the eye coupling means a pan limit
constrains version +- vergence/2 -- by clamping position and zeroing the
violating velocity (a warning, not an error).

The gyro is synthesized from the IMU link's relative rotation between two
states (rotation log-map over one tick, mapped to the world frame), so it
faithfully measures disturbance *plus* the stabilizer's own neck motion; the
control loop subtracts the latter (efference copy from executed velocities)
before the lever-arm reconstruction.

The stabilization metric projects a static random point cloud through the
left pinhole camera at consecutive states and averages the pixel
displacement over points that stay inside the image interior (a fixed
border is excluded) and in front of the camera in both frames.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .chain import Pose, as_joint_array
from .errors import (
    InsufficientCoverage,
    InvalidComparison,
    InvalidInput,
    SimulationDiverged,
    SingularConfiguration,
)
from .models import BASE_CHANNELS, HeadModel
from .stabilizer import (
    ImuSample,
    StabilizerCommand,
    StabilizerConfig,
    Twist,
    compensate,
    estimate_ifb,
    estimate_kff,
)
from .stereo import camera_frames, collapse_head_q, expand_head_q, fixation_full_jacobian, fixation_point

DEFAULT_DT = 0.01
DEFAULT_GYRO_SIGMA = 0.005  # rad/s, per axis


# ------------------------------------------------------------------- plant


@dataclass(frozen=True)
class PlantParams:
    """First-order velocity-tracking constants (seconds); 0 = ideal plant."""

    tau_neck: float = 0.08
    tau_eye: float = 0.02

    def __post_init__(self):
        for name in ("tau_neck", "tau_eye"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise InvalidInput(f"PlantParams.{name} must be finite and >= 0")


@dataclass(frozen=True)
class PlantState:
    """Snapshot at time t: DoF positions, velocities executed over the last
    tick, and the accumulated base-stage translation."""

    t: float
    q: np.ndarray  # (9,)
    qdot: np.ndarray  # (9,)
    base_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "q", as_joint_array(self.q, 9, name="q"))
        object.__setattr__(self, "qdot", as_joint_array(self.qdot, 9, name="qdot"))
        b = np.asarray(self.base_offset, dtype=float)
        if b.shape != (3,) or not np.all(np.isfinite(b)):
            raise InvalidInput("base_offset must be a finite 3-vector")
        object.__setattr__(self, "base_offset", b)


def shifted_model(model: HeadModel, base_offset) -> HeadModel:
    """The head model with its chain base translated by a world offset."""
    base = model.chain.base_pose
    return model.with_base(Pose(base.rot, base.pos + np.asarray(base_offset, dtype=float)))


def _tracking_gain(dt: float, tau: float) -> float:
    # Explicit-Euler lag gain, clamped so tau <= dt degenerates to snapping.
    if tau <= 0.0:
        return 1.0
    return min(dt / tau, 1.0)


def step(
    model: HeadModel,
    state: PlantState,
    disturbance_qdot,
    command: StabilizerCommand | None,
    dt: float,
    params: PlantParams = PlantParams(),
    *,
    active=None,
    base_vel=None,
) -> PlantState:
    """Advance one tick.

    disturbance_qdot gives script rates per DoF; `active` marks which DoF the
    script owns this tick (those follow it exactly).  All other torso DoF
    rest; neck/eye DoF track the command setpoints through the lag.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise InvalidInput("dt must be positive and finite")
    dist = as_joint_array(disturbance_qdot, 9, name="disturbance_qdot")
    act = np.zeros(9, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    if act.shape != (9,):
        raise InvalidInput("active mask must have 9 entries")

    setpoint = np.zeros(9)
    if command is not None:
        setpoint[3:6] = command.qdot_neck
        setpoint[6:9] = command.qdot_eye

    qdot = np.where(act, dist, 0.0)
    gain = np.concatenate(
        [
            np.zeros(3),
            np.full(3, _tracking_gain(dt, params.tau_neck)),
            np.full(3, _tracking_gain(dt, params.tau_eye)),
        ]
    )
    tracked = state.qdot + gain * (setpoint - state.qdot)
    qdot = np.where(act, qdot, np.where(np.arange(9) >= 3, tracked, 0.0))

    # Velocity and position limits live on the mechanical joints (the eye
    # coupling is linear, so velocities expand the same way positions do).
    qdot_mech = expand_head_q(qdot)
    v_max = np.array([l.v_max for l in model.chain.links])
    qdot_mech = np.clip(qdot_mech, -v_max, v_max)

    q_mech = expand_head_q(state.q) + dt * qdot_mech
    lo = np.array([l.q_min for l in model.chain.links])
    hi = np.array([l.q_max for l in model.chain.links])
    clamped = (q_mech < lo) | (q_mech > hi)
    if np.any(clamped):
        warnings.warn(
            f"joint position limit reached at t={state.t + dt:.3f}s "
            f"(mechanical joints {np.nonzero(clamped)[0].tolist()}); clamping",
            RuntimeWarning,
            stacklevel=2,
        )
        q_mech = np.clip(q_mech, lo, hi)
        qdot_mech = np.where(clamped, 0.0, qdot_mech)

    q_new = collapse_head_q(q_mech, tilt_tol=1e-9)
    qdot_new = collapse_head_q(qdot_mech, tilt_tol=1e-9)
    vel = np.zeros(3) if base_vel is None else np.asarray(base_vel, dtype=float)
    new = PlantState(
        t=state.t + dt,
        q=q_new,
        qdot=qdot_new,
        base_offset=state.base_offset + dt * vel,
    )
    if not (np.all(np.isfinite(new.q)) and np.all(np.isfinite(new.qdot))):
        raise SimulationDiverged("plant state became non-finite", t=new.t)
    return new


# ------------------------------------------------------------ synthetic gyro


def synth_gyro(
    model: HeadModel,
    state_prev: PlantState,
    state_next: PlantState,
    dt: float,
    *,
    sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ImuSample:
    """Gyro sample for the motion between two states.

    omega is the rotation log-map of R_prev^T R_next divided by dt, mapped to
    the world frame; position is the IMU's world position at state_next.
    Optional zero-mean Gaussian noise with std sigma per axis.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise InvalidInput("dt must be positive and finite")
    pose_prev = shifted_model(model, state_prev.base_offset).imu_pose(expand_head_q(state_prev.q))
    pose_next = shifted_model(model, state_next.base_offset).imu_pose(expand_head_q(state_next.q))
    rel = pose_prev.rot.T @ pose_next.rot
    omega_body = Rotation.from_matrix(rel).as_rotvec() / dt
    omega = pose_prev.rot @ omega_body
    if sigma > 0.0:
        if rng is None:
            raise InvalidInput("gyro noise requires an rng")
        omega = omega + rng.normal(0.0, sigma, 3)
    return ImuSample(omega=omega, position=pose_next.pos)


# ------------------------------------------------------------- flow metric


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics; border pixels are excluded from the flow average."""

    f: float = 240.0
    width: int = 320
    height: int = 240
    border: int = 20

    def __post_init__(self):
        if not (self.f > 0 and math.isfinite(self.f)):
            raise InvalidInput("focal length must be positive")
        if self.width <= 2 * self.border or self.height <= 2 * self.border:
            raise InvalidInput("image must be wider than twice the border")


def _project(cam: CameraModel, rot, origin, cloud):
    """Pixel coordinates and interior-validity mask for a point cloud."""
    local = (cloud - origin) @ rot  # = rot.T applied to rows
    z = local[:, 2]
    in_front = z > 1e-9
    zs = np.where(in_front, z, 1.0)
    u = cam.width / 2.0 + cam.f * local[:, 0] / zs
    v = cam.height / 2.0 + cam.f * local[:, 1] / zs
    interior = (
        in_front
        & (u >= cam.border)
        & (u <= cam.width - cam.border)
        & (v >= cam.border)
        & (v <= cam.height - cam.border)
    )
    return np.column_stack([u, v]), interior


def flow_metric(cam: CameraModel, frames_prev, frames_next, cloud) -> float:
    """Mean pixel displacement of the static cloud seen by the left camera.

    Points must project to the image interior and lie in front of the camera
    in *both* frames to count; fewer than 10 survivors raises
    InsufficientCoverage.
    """
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise InvalidInput("cloud must be an (n, 3) array")
    uv_a, ok_a = _project(cam, frames_prev.rot_left, frames_prev.o_left, cloud)
    uv_b, ok_b = _project(cam, frames_next.rot_left, frames_next.o_left, cloud)
    ok = ok_a & ok_b
    n = int(np.count_nonzero(ok))
    if n < 10:
        raise InsufficientCoverage(f"only {n} cloud points remained valid (need >= 10)")
    return float(np.mean(np.linalg.norm(uv_b[ok] - uv_a[ok], axis=1)))


@dataclass(frozen=True)
class CloudSpec:
    """Seeded shell of static world points in front of the initial gaze."""

    n: int = 900
    r_min: float = 5.7
    r_max: float = 6.3
    azimuth: float = math.radians(80.0)
    elevation: float = math.radians(55.0)
    seed: int = 2024

    def __post_init__(self):
        if self.n < 500:
            raise InvalidInput("cloud must contain at least 500 points")
        if not (0.0 < self.r_min <= self.r_max):
            raise InvalidInput("cloud radii must satisfy 0 < r_min <= r_max")


def make_cloud(spec: CloudSpec, center) -> np.ndarray:
    """Sample the shell around `center`, forward (+x) biased, deterministic."""
    rng = np.random.default_rng(spec.seed)
    az = rng.uniform(-spec.azimuth, spec.azimuth, spec.n)
    el = rng.uniform(-spec.elevation, spec.elevation, spec.n)
    r = rng.uniform(spec.r_min, spec.r_max, spec.n)
    dirs = np.column_stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return np.asarray(center, dtype=float) + r[:, None] * dirs


# -------------------------------------------------------- disturbance script


@dataclass(frozen=True)
class ScriptSegment:
    """Constant-rate drive of one channel over [t_start, t_end).

    external=True marks motion the robot did not command (no feedforward
    signal); the default is self-generated motion the kFF estimator may use.
    """

    t_start: float
    t_end: float
    channel: str
    rate: float
    external: bool = False

    def __post_init__(self):
        if not (0.0 <= self.t_start < self.t_end and math.isfinite(self.t_end)):
            raise InvalidInput(f"bad segment times [{self.t_start}, {self.t_end})")
        if not math.isfinite(self.rate):
            raise InvalidInput("segment rate must be finite")


@dataclass(frozen=True)
class NoiseSegment:
    """Band-limited (first-order low-passed) Gaussian rate noise.

    amplitude is the stationary std in rad/s, bandwidth the low-pass corner
    in Hz.  Seeded locally so every run of every mode sees the identical
    disturbance realization.  Noise models unmeasured hand-shaking, hence
    external=True by default.
    """

    t_start: float
    t_end: float
    channels: tuple[str, ...]
    amplitude: float
    bandwidth: float
    seed: int
    external: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not (0.0 <= self.t_start < self.t_end):
            raise InvalidInput("bad noise segment times")
        if not (self.amplitude >= 0.0 and self.bandwidth > 0.0):
            raise InvalidInput("noise amplitude must be >= 0 and bandwidth > 0")


@dataclass(frozen=True)
class DisturbanceTrack:
    """Script realized on a tick grid (one row per tick)."""

    qdot: np.ndarray  # (n, 9) all disturbance rates
    base_vel: np.ndarray  # (n, 3)
    active: np.ndarray  # (n, 9) bool: script owns this DoF this tick
    commanded_qdot: np.ndarray  # (n, 9) the non-external part
    commanded_base: np.ndarray  # (n, 3)


@dataclass(frozen=True)
class DisturbanceScript:
    """Ordered constant-rate segments plus optional noise bands."""

    name: str
    segments: tuple[ScriptSegment, ...] = ()
    noise: tuple[NoiseSegment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "noise", tuple(self.noise))

    def duration(self) -> float:
        ends = [s.t_end for s in self.segments] + [s.t_end for s in self.noise]
        return max(ends) if ends else 0.0

    def span_list(self):
        """(label, t_start, t_end) rows for reporting, script order."""
        rows = [(s.channel, s.t_start, s.t_end) for s in self.segments]
        rows += [("noise:" + "+".join(s.channels), s.t_start, s.t_end) for s in self.noise]
        return rows

    def _channel_index(self, model: HeadModel, channel: str):
        if channel in model.dof_names:
            return ("dof", model.dof_names.index(channel))
        if channel in BASE_CHANNELS:
            return ("base", BASE_CHANNELS.index(channel))
        raise InvalidInput(
            f"unknown script channel {channel!r}; expected one of "
            f"{model.dof_names + BASE_CHANNELS}"
        )

    def validate(self, model: HeadModel) -> None:
        """Resolve channels and reject overlapping claims on one channel."""
        spans: dict[str, list[tuple[float, float]]] = {}
        for seg in self.segments:
            self._channel_index(model, seg.channel)
            spans.setdefault(seg.channel, []).append((seg.t_start, seg.t_end))
        for seg in self.noise:
            for ch in seg.channels:
                self._channel_index(model, ch)
                spans.setdefault(ch, []).append((seg.t_start, seg.t_end))
        for ch, times in spans.items():
            times.sort()
            for (a0, a1), (b0, b1) in zip(times, times[1:]):
                if b0 < a1:
                    raise InvalidInput(
                        f"channel {ch!r} has overlapping segments "
                        f"[{a0}, {a1}) and [{b0}, {b1})"
                    )

    def realize(self, model: HeadModel, dt: float, n_ticks: int) -> DisturbanceTrack:
        """Evaluate every channel on the tick grid.  Deterministic."""
        self.validate(model)
        qdot = np.zeros((n_ticks, 9))
        base = np.zeros((n_ticks, 3))
        active = np.zeros((n_ticks, 9), dtype=bool)
        cmd_q = np.zeros((n_ticks, 9))
        cmd_b = np.zeros((n_ticks, 3))
        t = np.arange(n_ticks) * dt

        for seg in self.segments:
            rows = (t >= seg.t_start - 1e-12) & (t < seg.t_end - 1e-12)
            kind, idx = self._channel_index(model, seg.channel)
            if kind == "dof":
                qdot[rows, idx] += seg.rate
                active[rows, idx] = True
                if not seg.external:
                    cmd_q[rows, idx] += seg.rate
            else:
                base[rows, idx] += seg.rate
                if not seg.external:
                    cmd_b[rows, idx] += seg.rate

        for seg in self.noise:
            rows = np.nonzero((t >= seg.t_start - 1e-12) & (t < seg.t_end - 1e-12))[0]
            if rows.size == 0:
                continue
            rng = np.random.default_rng(seg.seed)
            a = math.exp(-2.0 * math.pi * seg.bandwidth * dt)
            drive = seg.amplitude * math.sqrt(max(1.0 - a * a, 0.0))
            for ch in seg.channels:
                kind, idx = self._channel_index(model, ch)
                x = 0.0
                series = np.empty(rows.size)
                for k, eta in enumerate(rng.normal(size=rows.size)):
                    x = a * x + drive * eta
                    series[k] = x
                if kind == "dof":
                    qdot[rows, idx] += series
                    active[rows, idx] = True
                    if not seg.external:
                        cmd_q[rows, idx] += series
                else:
                    base[rows, idx] += series
                    if not seg.external:
                        cmd_b[rows, idx] += series

        return DisturbanceTrack(qdot, base, active, cmd_q, cmd_b)


# ------------------------------------------------------------ run settings


@dataclass(frozen=True)
class SimSettings:
    """Everything one closed-loop run needs besides model and script."""

    control: StabilizerConfig = field(default_factory=StabilizerConfig)
    plant: PlantParams = field(default_factory=PlantParams)
    cam: CameraModel = field(default_factory=CameraModel)
    cloud: CloudSpec = field(default_factory=CloudSpec)
    dt: float = DEFAULT_DT
    duration: float | None = None  # None: script duration + 0.5 s settle
    fixation_distance: float = 6.0
    seed: int = 0
    gyro_sigma: float = DEFAULT_GYRO_SIGMA
    gyro_delay_ticks: int = 0

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise InvalidInput("dt must be positive")
        if self.duration is not None and self.duration <= 0.0:
            raise InvalidInput("duration must be positive")
        if self.fixation_distance <= 0.0:
            raise InvalidInput("fixation_distance must be positive")
        if self.gyro_sigma < 0.0 or self.gyro_delay_ticks < 0:
            raise InvalidInput("gyro noise/delay must be non-negative")


@dataclass(frozen=True)
class FlowSample:
    """Per-tick metric record: flow plus the true residual twist norms."""

    t: float
    optfl: float
    residual_speed: float
    residual_omega: float


@dataclass
class TrajectoryLog:
    """Dense per-tick record of one run (row 0 = initial state)."""

    meta: dict
    t: np.ndarray  # (n+1,)
    q: np.ndarray  # (n+1, 9)
    qdot: np.ndarray  # (n+1, 9)
    base_offset: np.ndarray  # (n+1, 3)
    cmd: np.ndarray  # (n+1, 6) neck+eye setpoints issued for the tick ending here
    est_twist: np.ndarray  # (n+1, 6)
    true_twist: np.ndarray  # (n+1, 6)
    fp: np.ndarray  # (n+1, 3)
    optfl: np.ndarray  # (n+1,)
    n_valid: np.ndarray  # (n+1,)
    saturated: np.ndarray  # (n+1,) bool
    singular: np.ndarray  # (n+1,) bool
    segments: tuple  # (label, t_start, t_end) rows

    def n_rows(self) -> int:
        return self.t.size


def initial_state(model: HeadModel, fixation_distance: float) -> PlantState:
    """Neutral posture verged onto a target at the given forward distance."""
    fr = camera_frames(model.chain, np.zeros(9))
    baseline = float(np.linalg.norm(fr.o_left - fr.o_right))
    q0 = np.zeros(9)
    q0[8] = 2.0 * math.atan2(baseline / 2.0, fixation_distance)
    return PlantState(t=0.0, q=q0, qdot=np.zeros(9))


def run_experiment(model: HeadModel, script: DisturbanceScript, settings: SimSettings) -> TrajectoryLog:
    """Simulate the full closed loop and log every tick.

    Estimator choice follows settings.control.mode: "kff" pushes the
    commanded (non-external) disturbance rates through the fixation Jacobian
    and adds the commanded base velocity; "ifb" reconstructs the twist from
    the synthetic gyro after subtracting the neck's own contribution; "off"
    leaves the head passive.
    """
    duration = settings.duration if settings.duration is not None else script.duration() + 0.5
    n_ticks = int(round(duration / settings.dt))
    if n_ticks < 1:
        raise InvalidInput("duration shorter than one tick")
    track = script.realize(model, settings.dt, n_ticks)
    cfg = settings.control
    rng_gyro = np.random.default_rng(np.random.SeedSequence((settings.seed, 71)))

    state = initial_state(model, settings.fixation_distance)
    cloud_center = 0.5 * (
        camera_frames(model.chain, state.q).o_left + camera_frames(model.chain, state.q).o_right
    )
    cloud = make_cloud(settings.cloud, cloud_center)

    n_rows = n_ticks + 1
    log = TrajectoryLog(
        meta={
            "script": script.name,
            "mode": cfg.mode,
            "dof_set": cfg.dof_set,
            "model": model.name,
            "dt": settings.dt,
            "duration": n_ticks * settings.dt,
            "seed": settings.seed,
            "gyro_sigma": settings.gyro_sigma,
            "fixation_distance": settings.fixation_distance,
        },
        t=np.zeros(n_rows),
        q=np.zeros((n_rows, 9)),
        qdot=np.zeros((n_rows, 9)),
        base_offset=np.zeros((n_rows, 3)),
        cmd=np.zeros((n_rows, 6)),
        est_twist=np.zeros((n_rows, 6)),
        true_twist=np.zeros((n_rows, 6)),
        fp=np.zeros((n_rows, 3)),
        optfl=np.zeros(n_rows),
        n_valid=np.zeros(n_rows, dtype=int),
        saturated=np.zeros(n_rows, dtype=bool),
        singular=np.zeros(n_rows, dtype=bool),
        segments=tuple(script.span_list()),
    )
    log.q[0] = state.q

    cur_model = shifted_model(model, state.base_offset)
    frames = camera_frames(cur_model.chain, state.q)
    try:
        log.fp[0] = fixation_point(frames).point
    except SingularConfiguration:
        log.singular[0] = True

    prev_state = state
    prev_cmd = StabilizerCommand.hold()
    gyro_buffer: list[ImuSample] = []

    try:
        _run_loop(
            model, settings, cfg, track, n_ticks, log, state, prev_state, prev_cmd,
            gyro_buffer, rng_gyro, frames, cloud,
        )
    except SimulationDiverged as err:
        rows = int(np.count_nonzero(log.t > 0.0)) + 1  # completed rows
        err.partial_log = _truncate_log(log, rows)
        raise
    return log


def _truncate_log(log: TrajectoryLog, rows: int) -> TrajectoryLog:
    return TrajectoryLog(
        meta=dict(log.meta),
        t=log.t[:rows].copy(),
        q=log.q[:rows].copy(),
        qdot=log.qdot[:rows].copy(),
        base_offset=log.base_offset[:rows].copy(),
        cmd=log.cmd[:rows].copy(),
        est_twist=log.est_twist[:rows].copy(),
        true_twist=log.true_twist[:rows].copy(),
        fp=log.fp[:rows].copy(),
        optfl=log.optfl[:rows].copy(),
        n_valid=log.n_valid[:rows].copy(),
        saturated=log.saturated[:rows].copy(),
        singular=log.singular[:rows].copy(),
        segments=log.segments,
    )


def _run_loop(model, settings, cfg, track, n_ticks, log, state, prev_state, prev_cmd, gyro_buffer, rng_gyro, frames, cloud):
    for k in range(n_ticks):
        chain_now = shifted_model(model, state.base_offset).chain
        singular_now = False
        try:
            J = fixation_full_jacobian(chain_now, state.q)
            x_fp = fixation_point(frames).point
        except SingularConfiguration:
            J = None
            x_fp = None
            singular_now = True

        # --- estimate ------------------------------------------------
        est = Twist.zero()
        if cfg.mode == "kff" and not singular_now:
            est = estimate_kff(
                chain_now,
                state.q,
                track.commanded_qdot[k, :3],
                track.commanded_qdot[k, 3:6],
                track.commanded_qdot[k, 6:9],
            )
            est = Twist(est.v + track.commanded_base[k], est.omega)
        elif cfg.mode == "ifb" and not singular_now:
            if k == 0:
                sample = ImuSample(np.zeros(3), shifted_model(model, state.base_offset).imu_pose(expand_head_q(state.q)).pos)
            else:
                sample = synth_gyro(
                    model,
                    prev_state,
                    state,
                    settings.dt,
                    sigma=settings.gyro_sigma,
                    rng=rng_gyro,
                )
                # efference copy: remove the neck's own rotation (executed
                # velocities over the same window the gyro integrated);
                # script-owned neck channels are disturbance, not self-motion
                self_qdot = np.where(track.active[k - 1][3:6], 0.0, state.qdot[3:6])
                self_omega = J[3:6, 3:6] @ self_qdot
                sample = ImuSample(sample.omega - self_omega, sample.position)
            gyro_buffer.append(sample)
            use = (
                gyro_buffer[-1 - settings.gyro_delay_ticks]
                if len(gyro_buffer) > settings.gyro_delay_ticks
                else ImuSample(np.zeros(3), gyro_buffer[0].position)
            )
            est = estimate_ifb(use, x_fp)

        # --- compensate ------------------------------------------------
        if cfg.mode == "off":
            cmd = StabilizerCommand.hold()
        elif singular_now:
            cmd = replace(prev_cmd, singular=True)  # hold last command
        else:
            cmd = compensate(est, chain_now, state.q, cfg)
            if cmd.singular:
                cmd = replace(prev_cmd, singular=True)

        # --- step ------------------------------------------------------
        new_state = step(
            model,
            state,
            track.qdot[k],
            cmd,
            settings.dt,
            settings.plant,
            active=track.active[k],
            base_vel=track.base_vel[k],
        )

        # --- log row k+1 ------------------------------------------------
        row = k + 1
        if J is not None:
            tw = J @ new_state.qdot
            tw[:3] += track.base_vel[k]
            log.true_twist[row] = tw
        new_model = shifted_model(model, new_state.base_offset)
        new_frames = camera_frames(new_model.chain, new_state.q)
        log.t[row] = new_state.t
        log.q[row] = new_state.q
        log.qdot[row] = new_state.qdot
        log.base_offset[row] = new_state.base_offset
        log.cmd[row] = np.concatenate([cmd.qdot_neck, cmd.qdot_eye])
        log.est_twist[row] = est.as_array()
        try:
            log.fp[row] = fixation_point(new_frames).point
        except SingularConfiguration:
            log.singular[row] = True
        uv_a, ok_a = _project(settings.cam, frames.rot_left, frames.o_left, cloud)
        uv_b, ok_b = _project(settings.cam, new_frames.rot_left, new_frames.o_left, cloud)
        ok = ok_a & ok_b
        n_ok = int(np.count_nonzero(ok))
        if n_ok < 10:
            raise InsufficientCoverage(
                f"only {n_ok} cloud points remained valid at t={new_state.t:.3f}s (need >= 10)"
            )
        uv_flow = float(np.mean(np.linalg.norm(uv_b[ok] - uv_a[ok], axis=1)))
        log.optfl[row] = uv_flow
        log.n_valid[row] = n_ok
        log.saturated[row] = cmd.saturated
        log.singular[row] |= singular_now
        if not math.isfinite(uv_flow):
            raise SimulationDiverged("flow metric became non-finite", t=new_state.t)

        prev_state = state
        prev_cmd = cmd
        state = new_state
        frames = new_frames

    return log


# ---------------------------------------------------------------- summaries


@dataclass(frozen=True)
class SegmentSummary:
    label: str
    t_start: float
    t_end: float
    mean_optfl: float
    reduction_pct: float | None = None


@dataclass(frozen=True)
class RunSummary:
    mode: str
    dof_set: str
    mean_optfl: float
    mean_residual_speed: float
    mean_residual_omega: float
    reduction_pct: float | None
    segments: tuple[SegmentSummary, ...]


def _window_mean(log: TrajectoryLog, t0: float, t1: float) -> float:
    rows = (log.t > t0 + 1e-12) & (log.t <= t1 + 1e-12)
    if not np.any(rows):
        return math.nan
    return float(np.mean(log.optfl[rows]))


def summarize(log: TrajectoryLog, baseline: TrajectoryLog | None = None) -> RunSummary:
    """Aggregate a run; percent reductions are against the baseline run.

    The baseline must be the same script on the same tick grid, otherwise
    the comparison is meaningless and InvalidComparison is raised.
    """
    if baseline is not None:
        same = (
            baseline.meta.get("script") == log.meta.get("script")
            and baseline.meta.get("dt") == log.meta.get("dt")
            and baseline.n_rows() == log.n_rows()
        )
        if not same:
            raise InvalidComparison(
                "baseline and run differ in script/dt/length: "
                f"{baseline.meta.get('script')}@{baseline.meta.get('dt')}x{baseline.n_rows()} vs "
                f"{log.meta.get('script')}@{log.meta.get('dt')}x{log.n_rows()}"
            )

    mean_optfl = float(np.mean(log.optfl[1:]))
    reduction = None
    if baseline is not None:
        base_mean = float(np.mean(baseline.optfl[1:]))
        reduction = 100.0 * (1.0 - mean_optfl / base_mean) if base_mean > 0 else 0.0

    seg_rows = []
    for label, t0, t1 in log.segments:
        m = _window_mean(log, t0, t1)
        r = None
        if baseline is not None:
            bm = _window_mean(baseline, t0, t1)
            r = 100.0 * (1.0 - m / bm) if bm and bm > 0 and math.isfinite(bm) else None
        seg_rows.append(SegmentSummary(label, t0, t1, m, r))

    speeds = np.linalg.norm(log.true_twist[1:, :3], axis=1)
    omegas = np.linalg.norm(log.true_twist[1:, 3:], axis=1)
    return RunSummary(
        mode=str(log.meta.get("mode")),
        dof_set=str(log.meta.get("dof_set")),
        mean_optfl=mean_optfl,
        mean_residual_speed=float(np.mean(speeds)),
        mean_residual_omega=float(np.mean(omegas)),
        reduction_pct=reduction,
        segments=tuple(seg_rows),
    )
