"""Disturbance estimation and the decoupled neck/eye compensation law.

Two interchangeable disturbance estimators produce a fixation-point twist:

* feedforward (kFF): push commanded joint rates through the full fixation
  Jacobian.  By design the estimate is built from the *commanded disturbance*
  rates only (stabilizer outputs excluded), so the loop never chases its own
  compensation.
* inertial feedback (iFB): reconstruct the twist from a head-mounted gyro by
  the lever-arm rule v = omega x (x_fp - x_imu), omega unchanged.  A pure
  head translation is invisible to this path on purpose.

Compensation is decoupled: the neck's three joints cancel the rotational
component through a damped pseudo-inverse of the neck rotation block, the
eyes cancel the translational component through the eye Jacobian.  With
"sequential" coupling (default) the eye command also mops up the translation
the fresh neck command is about to inject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import KinematicChain, as_joint_array
from .errors import InvalidInput, SingularConfiguration, SingularMatrix
from .stereo import HEAD_DOF, fixation_full_jacobian

DEFAULT_DAMPING = 1e-3
DEFAULT_NECK_RATE_LIMIT = math.radians(40.0)
DEFAULT_EYE_RATE_LIMIT = math.radians(180.0)


@dataclass(frozen=True)
class Twist:
    """Fixation-point velocity: translational v (m/s) and angular omega (rad/s)."""

    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        for name in ("v", "omega"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (3,) or not np.all(np.isfinite(a)):
                raise InvalidInput(f"Twist.{name} must be a finite 3-vector")
            object.__setattr__(self, name, a)

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_array(cls, arr) -> "Twist":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (6,):
            raise InvalidInput("twist array must have 6 entries (v, omega)")
        return cls(arr[:3], arr[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.omega])


@dataclass(frozen=True)
class ImuSample:
    """World-frame angular velocity (rad/s) and sensor position (m)."""

    omega: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        for name in ("omega", "position"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (3,) or not np.all(np.isfinite(a)):
                raise InvalidInput(f"ImuSample.{name} must be a finite 3-vector")
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class StabilizerCommand:
    """Joint-rate setpoints (rad/s) plus saturation/singularity bookkeeping."""

    qdot_neck: np.ndarray  # (3,)
    qdot_eye: np.ndarray  # (3,) in (tilt, version, vergence)
    saturated: bool = False
    singular: bool = False

    def __post_init__(self):
        for name in ("qdot_neck", "qdot_eye"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (3,) or not np.all(np.isfinite(a)):
                raise InvalidInput(f"StabilizerCommand.{name} must be a finite 3-vector")
            object.__setattr__(self, name, a)

    @classmethod
    def hold(cls, *, singular: bool = False) -> "StabilizerCommand":
        return cls(np.zeros(3), np.zeros(3), singular=singular)


@dataclass(frozen=True)
class StabilizerConfig:
    """Control-law knobs.

    mode       -- "kff", "ifb" or "off" (used by the simulation loop to pick
                  the estimator; the compensation law itself is mode-blind)
    dof_set    -- "eyes" or "neck-eyes"
    damping    -- pseudo-inverse damping factor (0 = exact inverse)
    sequential -- eye command also cancels the fresh neck command's
                  translational side effect (decoupling order neck -> eyes)
    """

    mode: str = "kff"
    dof_set: str = "neck-eyes"
    damping: float = DEFAULT_DAMPING
    sequential: bool = True
    neck_rate_limit: float = DEFAULT_NECK_RATE_LIMIT
    eye_rate_limit: float = DEFAULT_EYE_RATE_LIMIT

    def __post_init__(self):
        if self.mode not in ("kff", "ifb", "off"):
            raise InvalidInput(f"unknown mode {self.mode!r}")
        if self.dof_set not in ("eyes", "neck-eyes"):
            raise InvalidInput(f"unknown dof_set {self.dof_set!r}")
        if not (self.damping >= 0.0 and math.isfinite(self.damping)):
            raise InvalidInput("damping must be finite and >= 0")
        if not (self.neck_rate_limit > 0.0 and self.eye_rate_limit > 0.0):
            raise InvalidInput("rate limits must be positive")


# ------------------------------------------------------------ linear algebra


def pinv_damped(J, damping: float) -> np.ndarray:
    """Damped pseudo-inverse J^T (J J^T + damping^2 I)^-1, via SVD.

    For damping = 0 this is the exact (pseudo-)inverse and a rank-deficient J
    raises SingularMatrix instead of amplifying noise to infinity.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or not np.all(np.isfinite(J)):
        raise InvalidInput("pinv_damped wants a finite 2-D matrix")
    if not (damping >= 0.0 and math.isfinite(damping)):
        raise InvalidInput("damping must be finite and >= 0")
    u, s, vt = np.linalg.svd(J, full_matrices=False)
    if damping == 0.0:
        if s.size == 0 or s[0] == 0.0 or s[-1] / s[0] < 1e-12:
            raise SingularMatrix("undamped pseudo-inverse of a singular matrix")
        gains = 1.0 / s
    else:
        gains = s / (s * s + damping * damping)
    return (vt.T * gains) @ u.T


# ------------------------------------------------------------- estimators


def estimate_kff(chain: KinematicChain, q, qdot_torso, qdot_neck=None, qdot_eye=None) -> Twist:
    """Fixation twist predicted from commanded joint rates (feedforward).

    The disturbance estimate of the control loop passes the commanded torso
    rates with neck/eye rates zero (their defaults): the stabilizer's own
    outputs must not re-enter its input.
    """
    qt = as_joint_array(qdot_torso, 3, name="qdot_torso")
    qn = np.zeros(3) if qdot_neck is None else as_joint_array(qdot_neck, 3, name="qdot_neck")
    qe = np.zeros(3) if qdot_eye is None else as_joint_array(qdot_eye, 3, name="qdot_eye")
    J = fixation_full_jacobian(chain, q)
    xi = J @ np.concatenate([qt, qn, qe])
    return Twist(xi[:3], xi[3:])


def estimate_ifb(imu: ImuSample, x_fp) -> Twist:
    """Fixation twist reconstructed from a gyro by the lever-arm rule.

    v = omega x (x_fp - x_imu); omega passes through.  Head translation is
    invisible here -- that blindness is the central limitation of the
    inertial route and is preserved deliberately.
    """
    x_fp = np.asarray(x_fp, dtype=float)
    if x_fp.shape != (3,) or not np.all(np.isfinite(x_fp)):
        raise InvalidInput("x_fp must be a finite 3-vector")
    lever = x_fp - imu.position
    return Twist(np.cross(imu.omega, lever), imu.omega)


# ------------------------------------------------------------- compensation


def compensate(twist: Twist, chain: KinematicChain, q, config: StabilizerConfig) -> StabilizerCommand:
    """Neck/eye joint rates that cancel the estimated fixation twist.

    Neck joints null the rotational component, eyes null the translational
    one; with config.sequential the eye target also includes the translation
    the new neck command itself induces at the fixation point.  Outputs are
    saturated componentwise.  A singular (parallel-gaze) configuration yields
    the hold-safe zero command with the singular flag set.
    """
    q = as_joint_array(q, HEAD_DOF)
    try:
        J = fixation_full_jacobian(chain, q)
    except SingularConfiguration:
        return StabilizerCommand.hold(singular=True)

    neck_trans = J[0:3, 3:6]
    neck_rot = J[3:6, 3:6]
    eye_trans = J[0:3, 6:9]

    if config.dof_set == "neck-eyes":
        qdot_neck = -pinv_damped(neck_rot, config.damping) @ twist.omega
    else:
        qdot_neck = np.zeros(3)

    v_target = twist.v.copy()
    if config.sequential:
        v_target += neck_trans @ qdot_neck
    qdot_eye = -pinv_damped(eye_trans, config.damping) @ v_target

    neck_clip = np.clip(qdot_neck, -config.neck_rate_limit, config.neck_rate_limit)
    eye_clip = np.clip(qdot_eye, -config.eye_rate_limit, config.eye_rate_limit)
    saturated = bool(
        np.any(neck_clip != qdot_neck) or np.any(eye_clip != qdot_eye)
    )
    return StabilizerCommand(neck_clip, eye_clip, saturated=saturated)
