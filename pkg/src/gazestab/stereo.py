"""Stereo fixation geometry for a coupled two-camera head.

The two optical axes are treated as rays; the fixation point is the midpoint
of the closest-approach segment between them (exact intersection when the
gap is zero).  With unit directions z_l, z_r, origins o_l, o_r and

    cos_axes = z_l . z_r
    num_left  = z_l - cos_axes * z_r          (left closed-form numerator)
    num_right = cos_axes * z_l - z_r          (right closed-form numerator)
    offset    = o_l - o_r
    denom     = cos_axes**2 - 1               (<= 0; 0 iff rays parallel)

the ray parameters of the closest points are

    s_left  = (num_left  . offset) / denom
    s_right = (num_right . offset) / denom

Eye degrees of freedom are mechanically coupled: a common tilt t for both
eyes, plus version/vergence (v, g) mapping to the pan angles as
p_left = v + g/2, p_right = v - g/2.  Differentiation for the analytic
fixation Jacobian is done with respect to the *mechanical* variables
(t, p_left, p_right) -- the common tilt moves both camera chains, and each
pan reaches the other camera's ray parameter through the shared terms above
-- then folded onto (tilt, version, vergence) by the chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import (
    KinematicChain,
    analytic_axis_jacobian,
    as_joint_array,
    forward_kinematics,
    geometric_jacobian,
)
from .errors import InvalidInput, SingularConfiguration

# Rays whose |denom| falls below this are reported as singular.
SINGULAR_DENOM_TOL = 1e-9

HEAD_DOF = 9  # torso 3 + neck 3 + (tilt, version, vergence)
HEAD_MECH = 10  # torso 3 + neck 3 + (tilt, pan) per eye


# ---------------------------------------------------------------- eye coupling


@dataclass(frozen=True)
class EyeDoF:
    """Coupled eye coordinates: common tilt, version, vergence (radians)."""

    tilt: float
    version: float
    vergence: float


@dataclass(frozen=True)
class EyeJointAngles:
    """Mechanical eye joint values (radians); tilts are physically shared."""

    tilt_left: float
    pan_left: float
    tilt_right: float
    pan_right: float


def eye_dof_to_joints(dof: EyeDoF) -> EyeJointAngles:
    """Expand (tilt, version, vergence) to the four mechanical joints."""
    return EyeJointAngles(
        tilt_left=dof.tilt,
        pan_left=dof.version + 0.5 * dof.vergence,
        tilt_right=dof.tilt,
        pan_right=dof.version - 0.5 * dof.vergence,
    )


def eye_joints_to_dof(joints: EyeJointAngles, *, tilt_tol: float = 1e-9) -> EyeDoF:
    """Collapse mechanical joints back to coupled coordinates.

    The tilt motors are one physical axis; a mismatch larger than tilt_tol
    means the caller broke the coupling invariant.
    """
    if abs(joints.tilt_left - joints.tilt_right) > tilt_tol:
        raise InvalidInput(
            f"tilt coupling violated: left {joints.tilt_left} vs right {joints.tilt_right}"
        )
    return EyeDoF(
        tilt=joints.tilt_left,
        version=0.5 * (joints.pan_left + joints.pan_right),
        vergence=joints.pan_left - joints.pan_right,
    )


@dataclass(frozen=True)
class HeadLayout:
    """Mechanical indices of the head's joints inside its chain."""

    trunk: tuple[int, ...]  # torso then neck, 6 indices
    tilt_left: int
    pan_left: int
    tilt_right: int
    pan_right: int

    @property
    def cam_left(self) -> int:
        return self.pan_left  # camera frame = last left-eye link

    @property
    def cam_right(self) -> int:
        return self.pan_right


def head_layout(chain: KinematicChain) -> HeadLayout:
    """Validate torso:3 + neck:3 + 2+2 eye topology and locate the joints."""
    torso = chain.segment_indices("torso")
    neck = chain.segment_indices("neck")
    left = chain.segment_indices("left-eye")
    right = chain.segment_indices("right-eye")
    if (len(torso), len(neck), len(left), len(right)) != (3, 3, 2, 2):
        raise InvalidInput(
            "camera/fixation operations need a torso:3 neck:3 eyes:2+2 chain, got "
            f"torso:{len(torso)} neck:{len(neck)} left:{len(left)} right:{len(right)}"
        )
    return HeadLayout(
        trunk=tuple(torso + neck),
        tilt_left=left[0],
        pan_left=left[1],
        tilt_right=right[0],
        pan_right=right[1],
    )


def expand_head_q(q) -> np.ndarray:
    """9 control DoF -> 10 mechanical joint values (chain order)."""
    arr = as_joint_array(q, HEAD_DOF, name="q (head-dof)")
    tilt, version, vergence = arr[6], arr[7], arr[8]
    return np.concatenate(
        [arr[:6], [tilt, version + 0.5 * vergence, tilt, version - 0.5 * vergence]]
    )


def collapse_head_q(q_mech, *, tilt_tol: float = 1e-9) -> np.ndarray:
    """10 mechanical joint values -> 9 control DoF (tilt coupling checked)."""
    arr = as_joint_array(q_mech, HEAD_MECH, name="q (head-mech)")
    dof = eye_joints_to_dof(
        EyeJointAngles(arr[6], arr[7], arr[8], arr[9]), tilt_tol=tilt_tol
    )
    return np.concatenate([arr[:6], [dof.tilt, dof.version, dof.vergence]])


# ---------------------------------------------------------------- camera rays


def _complete_rotation(z: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal completion with the given z column."""
    ref = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


@dataclass(frozen=True)
class CameraFrames:
    """World-frame stereo rig state: optical centers, axes, orientations.

    z_* must be unit vectors and equal the third column of rot_*.  The full
    orientations are carried alongside the axis directions because the
    image-plane roll matters to the flow metric.
    """

    o_left: np.ndarray
    o_right: np.ndarray
    z_left: np.ndarray
    z_right: np.ndarray
    rot_left: np.ndarray
    rot_right: np.ndarray

    def __post_init__(self):
        for name in ("o_left", "o_right", "z_left", "z_right"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise InvalidInput(f"CameraFrames.{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)
        for name in ("z_left", "z_right"):
            n = np.linalg.norm(getattr(self, name))
            if abs(n - 1.0) > 1e-9:
                raise InvalidInput(f"CameraFrames.{name} must be unit length (|z|={n})")
        for rname, zname in (("rot_left", "z_left"), ("rot_right", "z_right")):
            R = np.asarray(getattr(self, rname), dtype=float)
            if R.shape != (3, 3):
                raise InvalidInput(f"CameraFrames.{rname} must be 3x3")
            if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
                raise InvalidInput(f"CameraFrames.{rname} must be orthonormal")
            if np.max(np.abs(R[:, 2] - getattr(self, zname))) > 1e-9:
                raise InvalidInput(f"CameraFrames.{rname} third column must equal {zname}")
            object.__setattr__(self, rname, R)

    @classmethod
    def from_rays(cls, o_left, o_right, z_left, z_right) -> "CameraFrames":
        """Build frames from bare rays, normalizing directions."""
        zl = np.asarray(z_left, dtype=float)
        zr = np.asarray(z_right, dtype=float)
        zl = zl / np.linalg.norm(zl)
        zr = zr / np.linalg.norm(zr)
        return cls(
            o_left=np.asarray(o_left, dtype=float),
            o_right=np.asarray(o_right, dtype=float),
            z_left=zl,
            z_right=zr,
            rot_left=_complete_rotation(zl),
            rot_right=_complete_rotation(zr),
        )


def camera_frames(chain: KinematicChain, q) -> CameraFrames:
    """Both camera frames at the given 9-DoF head configuration."""
    lay = head_layout(chain)
    qm = expand_head_q(q)
    pose_l = forward_kinematics(chain, qm, lay.cam_left)
    pose_r = forward_kinematics(chain, qm, lay.cam_right)
    return CameraFrames(
        o_left=pose_l.pos,
        o_right=pose_r.pos,
        z_left=pose_l.rot[:, 2],
        z_right=pose_r.rot[:, 2],
        rot_left=pose_l.rot,
        rot_right=pose_r.rot,
    )


# ------------------------------------------------------------- fixation point


@dataclass(frozen=True)
class FixationResult:
    """Closest-approach solution for the two optical rays."""

    point: np.ndarray  # midpoint of the closest-approach segment
    p_left: np.ndarray  # closest point on the left ray
    p_right: np.ndarray
    s_left: float  # signed ray parameters (meters along each axis)
    s_right: float
    gap: float  # ||p_left - p_right||


def fixation_point(frames: CameraFrames, *, denom_tol: float = SINGULAR_DENOM_TOL) -> FixationResult:
    """Fixation point from the closed-form closest-approach solution.

    Raises SingularConfiguration when the rays are numerically parallel
    (|cos_axes^2 - 1| < denom_tol): there is no unique closest pair.
    """
    zl, zr = frames.z_left, frames.z_right
    ol, orr = frames.o_left, frames.o_right
    cos_axes = float(zl @ zr)
    denom = cos_axes * cos_axes - 1.0
    if abs(denom) < denom_tol:
        raise SingularConfiguration(
            f"optical axes are parallel to within tolerance (denom={denom:.3e})",
            denom=denom,
        )
    offset = ol - orr
    s_left = float((zl - cos_axes * zr) @ offset) / denom
    s_right = float((cos_axes * zl - zr) @ offset) / denom
    p_left = ol + s_left * zl
    p_right = orr + s_right * zr
    return FixationResult(
        point=0.5 * (p_left + p_right),
        p_left=p_left,
        p_right=p_right,
        s_left=s_left,
        s_right=s_right,
        gap=float(np.linalg.norm(p_left - p_right)),
    )


# --------------------------------------------------------- analytic Jacobian


@dataclass(frozen=True)
class FixationDerivTerms:
    """Shared intermediates of the fixation derivative, with their partials.

    Partial arrays have one column per mechanical eye variable, in the order
    (common tilt, left pan, right pan).  Invariant: denom = cos_axes**2 - 1
    and -1 <= denom <= 0.
    """

    cos_axes: float
    num_left: np.ndarray  # (3,)
    num_right: np.ndarray  # (3,)
    offset: np.ndarray  # (3,)
    denom: float
    s_left: float
    s_right: float
    d_cos_axes: np.ndarray  # (3,)
    d_num_left: np.ndarray  # (3, 3)
    d_num_right: np.ndarray  # (3, 3)
    d_offset: np.ndarray  # (3, 3)
    d_denom: np.ndarray  # (3,)
    d_s_left: np.ndarray  # (3,)
    d_s_right: np.ndarray  # (3,)
    d_p_left: np.ndarray  # (3, 3)
    d_p_right: np.ndarray  # (3, 3)


def fixation_deriv_terms(chain: KinematicChain, q) -> FixationDerivTerms:
    """Evaluate the closed-form fixation derivative w.r.t. the eye mechanics.

    Every ray quantity is differentiated against all three mechanical eye
    variables: the tilt column sums both camera chains' contributions, and
    the cross partials (left point vs right pan and vice versa) are kept --
    they enter through the shared cos/offset terms.
    """
    lay = head_layout(chain)
    qm = expand_head_q(q)
    pose_l = forward_kinematics(chain, qm, lay.cam_left)
    pose_r = forward_kinematics(chain, qm, lay.cam_right)
    ol, zl = pose_l.pos, pose_l.rot[:, 2]
    orr, zr = pose_r.pos, pose_r.rot[:, 2]

    Jg_l = geometric_jacobian(chain, qm, ol, lay.cam_left)[:3]
    Jg_r = geometric_jacobian(chain, qm, orr, lay.cam_right)[:3]
    Ja_l = analytic_axis_jacobian(chain, qm, lay.cam_left)
    Ja_r = analytic_axis_jacobian(chain, qm, lay.cam_right)

    # Column groups for the mechanical variables (tilt drives both chains).
    var_cols = (
        (lay.tilt_left, lay.tilt_right),
        (lay.pan_left,),
        (lay.pan_right,),
    )
    d_ol = np.column_stack([sum(Jg_l[:, j] for j in cols) for cols in var_cols])
    d_or = np.column_stack([sum(Jg_r[:, j] for j in cols) for cols in var_cols])
    d_zl = np.column_stack([sum(Ja_l[:, j] for j in cols) for cols in var_cols])
    d_zr = np.column_stack([sum(Ja_r[:, j] for j in cols) for cols in var_cols])

    cos_axes = float(zl @ zr)
    denom = cos_axes * cos_axes - 1.0
    if abs(denom) < SINGULAR_DENOM_TOL:
        raise SingularConfiguration(
            f"fixation Jacobian undefined for parallel axes (denom={denom:.3e})",
            denom=denom,
        )
    num_left = zl - cos_axes * zr
    num_right = cos_axes * zl - zr
    offset = ol - orr
    s_left = float(num_left @ offset) / denom
    s_right = float(num_right @ offset) / denom

    d_cos = d_zl.T @ zr + d_zr.T @ zl  # (3,)
    d_num_left = d_zl - np.outer(zr, d_cos) - cos_axes * d_zr
    d_num_right = np.outer(zl, d_cos) + cos_axes * d_zl - d_zr
    d_offset = d_ol - d_or
    d_denom = 2.0 * cos_axes * d_cos

    def quotient(num, d_num, s):
        # d[(num.offset)/denom] by the quotient rule
        d_dot = d_num.T @ offset + d_offset.T @ num
        return (d_dot * denom - float(num @ offset) * d_denom) / (denom * denom)

    d_s_left = quotient(num_left, d_num_left, s_left)
    d_s_right = quotient(num_right, d_num_right, s_right)

    d_p_left = d_ol + np.outer(zl, d_s_left) + s_left * d_zl
    d_p_right = d_or + np.outer(zr, d_s_right) + s_right * d_zr

    return FixationDerivTerms(
        cos_axes=cos_axes,
        num_left=num_left,
        num_right=num_right,
        offset=offset,
        denom=denom,
        s_left=s_left,
        s_right=s_right,
        d_cos_axes=d_cos,
        d_num_left=d_num_left,
        d_num_right=d_num_right,
        d_offset=d_offset,
        d_denom=d_denom,
        d_s_left=d_s_left,
        d_s_right=d_s_right,
        d_p_left=d_p_left,
        d_p_right=d_p_right,
    )


def eye_jacobian(chain: KinematicChain, q) -> np.ndarray:
    """3x3 fixation-point Jacobian w.r.t. (tilt, version, vergence).

    Columns fold the mechanical partials by the chain rule for the midpoint
    x = (p_left + p_right)/2 with p_left/p_right depending on both pans:

        d x/d tilt     = (dPl_t + dPr_t) / 2
        d x/d version  = (dPl_l + dPl_r + dPr_l + dPr_r) / 2
        d x/d vergence = (dPl_l - dPl_r + dPr_l - dPr_r) / 4
    """
    t = fixation_deriv_terms(chain, q)
    dPl, dPr = t.d_p_left, t.d_p_right
    col_tilt = 0.5 * (dPl[:, 0] + dPr[:, 0])
    col_version = 0.5 * (dPl[:, 1] + dPl[:, 2] + dPr[:, 1] + dPr[:, 2])
    col_vergence = 0.25 * (dPl[:, 1] - dPl[:, 2] + dPr[:, 1] - dPr[:, 2])
    return np.column_stack([col_tilt, col_version, col_vergence])


def fixation_full_jacobian(chain: KinematicChain, q) -> np.ndarray:
    """6x9 fixation twist Jacobian over (torso, neck, eye DoF).

    Rows 0..2 map joint rates to fixation-point translation; rows 3..5 to the
    head's angular velocity.  Trunk columns use the rigid-point rule (the
    whole stereo construction rides rigidly on the head), eye columns use the
    analytic eye Jacobian and contribute no rotation.
    """
    lay = head_layout(chain)
    qm = expand_head_q(q)
    fr = camera_frames(chain, q)
    point = fixation_point(fr).point
    Jg = geometric_jacobian(chain, qm, point, lay.cam_left)
    J = np.zeros((6, HEAD_DOF))
    J[:, :6] = Jg[:, list(lay.trunk)]
    J[:3, 6:9] = eye_jacobian(chain, q)
    return J
