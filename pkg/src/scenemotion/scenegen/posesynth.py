"""Kinematic walking poses along a torso track.

A 21-joint skeleton is posed procedurally: the torso joint follows the
track exactly, the body faces along the horizontal velocity, legs and arms
swing as phase-offset sinusoids of the gait phase, and a seated blend bends
the legs onto a seat. Deliberately simple; the aim is plausible,
scene-consistent kinematics with bounded inter-frame displacement, not
captured motion.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..geometry import PoseSequence3D, Skeleton

JOINT_NAMES = (
    "head_top", "head", "neck", "spine_upper", "torso", "spine_lower",
    "pelvis", "l_hip", "l_knee", "l_ankle", "l_foot", "r_hip", "r_knee",
    "r_ankle", "r_foot", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
    "r_elbow", "r_wrist",
)
JOINT_PARENTS = (1, 2, 3, 4, -1, 4, 5, 6, 7, 8, 9, 6, 11, 12, 13, 3, 15, 16,
                 3, 18, 19)
TORSO_INDEX = 4


def default_skeleton() -> Skeleton:
    return Skeleton(joint_count=len(JOINT_NAMES), root_index=TORSO_INDEX,
                    joint_names=JOINT_NAMES, parent_indices=JOINT_PARENTS)


# body-frame offsets from the torso joint, meters: (forward, lateral, up)
_STATIC = {
    "head_top": (0.0, 0.0, 0.58), "head": (0.0, 0.0, 0.45),
    "neck": (0.0, 0.0, 0.32), "spine_upper": (0.0, 0.0, 0.16),
    "torso": (0.0, 0.0, 0.0), "spine_lower": (0.0, 0.0, -0.14),
    "pelvis": (0.0, 0.0, -0.26),
    "l_hip": (0.0, 0.10, -0.28), "r_hip": (0.0, -0.10, -0.28),
    "l_knee": (0.0, 0.11, -0.66), "r_knee": (0.0, -0.11, -0.66),
    "l_ankle": (0.0, 0.12, -1.02), "r_ankle": (0.0, -0.12, -1.02),
    "l_foot": (0.10, 0.12, -1.04), "r_foot": (0.10, -0.12, -1.04),
    "l_shoulder": (0.0, 0.19, 0.24), "r_shoulder": (0.0, -0.19, 0.24),
    "l_elbow": (0.02, 0.23, -0.04), "r_elbow": (0.02, -0.23, -0.04),
    "l_wrist": (0.05, 0.24, -0.30), "r_wrist": (0.05, -0.24, -0.30),
}

# sinusoidal forward swing amplitude, meters; legs counter to arms
_SWING = {
    "l_knee": 0.06, "r_knee": 0.06,
    "l_ankle": 0.12, "r_ankle": 0.12, "l_foot": 0.12, "r_foot": 0.12,
    "l_elbow": 0.03, "r_elbow": 0.03, "l_wrist": 0.06, "r_wrist": 0.06,
}
# phase offset: left leg at phi, right leg at phi + pi; arms counter-swing
_PHASE = {
    "l_knee": 0.0, "l_ankle": 0.0, "l_foot": 0.0,
    "r_knee": np.pi, "r_ankle": np.pi, "r_foot": np.pi,
    "l_elbow": np.pi, "l_wrist": np.pi,
    "r_elbow": 0.0, "r_wrist": 0.0,
}
# ankles lift slightly during their swing half-cycle
_LIFT = {"l_ankle": 0.04, "r_ankle": 0.04, "l_foot": 0.04, "r_foot": 0.04}

# seated adjustments: thighs go horizontal, shins vertical
_SEAT_FORWARD = {
    "l_knee": 0.34, "r_knee": 0.34,
    "l_ankle": 0.36, "r_ankle": 0.36, "l_foot": 0.44, "r_foot": 0.44,
}
_SEAT_RAISE = {
    "l_knee": 0.30, "r_knee": 0.30,
    "l_ankle": 0.42, "r_ankle": 0.42, "l_foot": 0.42, "r_foot": 0.42,
}


# keeps extremity sweep well under the 0.3 m/frame displacement budget
MAX_TURN_RAD = 0.30


def _rotate_toward(current: np.ndarray, target: np.ndarray,
                   max_angle: float) -> np.ndarray:
    angle = np.arctan2(current[0] * target[1] - current[1] * target[0],
                       current @ target)
    angle = np.clip(angle, -max_angle, max_angle)
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * current[0] - s * current[1],
                     s * current[0] + c * current[1]])


def _headings(torso: np.ndarray) -> np.ndarray:
    """Unit forward vectors [F, 2] from the horizontal velocity; a static
    person keeps the last moving heading (or +x if never moving). The
    heading turns at most MAX_TURN_RAD per frame so that offset joints
    never sweep through large arcs between frames."""
    if torso.shape[0] == 1:
        return np.array([[1.0, 0.0]])
    vel = np.diff(torso[:, :2], axis=0)
    vel = np.concatenate([vel, vel[-1:]], axis=0)
    # window-average so single-frame jitter cannot flip the target
    smooth = vel.copy()
    smooth[1:-1] = (vel[:-2] + vel[1:-1] + vel[2:]) / 3.0
    norms = np.linalg.norm(smooth, axis=1)
    first = next((i for i, n in enumerate(norms) if n > 1e-8), None)
    current = np.array([1.0, 0.0]) if first is None \
        else smooth[first] / norms[first]
    out = np.empty_like(vel)
    for i in range(len(smooth)):
        if norms[i] > 1e-8:
            current = _rotate_toward(current, smooth[i] / norms[i],
                                     MAX_TURN_RAD)
        out[i] = current
    return out


def synthesize_pose(torso_track: np.ndarray, gait_phase: np.ndarray,
                    skeleton: Skeleton, seated: Optional[np.ndarray] = None,
                    frame_rate: float = 10.0) -> PoseSequence3D:
    """World-frame pose sequence [F, J, 3] for a torso track [F, 3]."""
    torso = np.asarray(torso_track, dtype=np.float64)
    phase = np.asarray(gait_phase, dtype=np.float64)
    if torso.ndim != 2 or torso.shape[1] != 3:
        raise ValueError("torso_track must be [F, 3]")
    if phase.shape != (torso.shape[0],):
        raise ValueError("gait_phase must be [F]")
    if seated is None:
        seated = np.zeros(len(torso))
    seated = np.asarray(seated, dtype=np.float64)

    f = torso.shape[0]
    j = skeleton.joint_count
    forward = _headings(torso)
    lateral = np.stack([-forward[:, 1], forward[:, 0]], axis=1)

    poses = np.empty((f, j, 3))
    for idx, name in enumerate(skeleton.joint_names):
        fwd0, lat0, up0 = _STATIC[name]
        amp = _SWING.get(name, 0.0)
        walk_gate = 1.0 - seated
        fwd = fwd0 + walk_gate * amp * np.sin(phase + _PHASE.get(name, 0.0))
        up = up0 + walk_gate * _LIFT.get(name, 0.0) * np.maximum(
            0.0, np.sin(phase + _PHASE.get(name, 0.0)))
        fwd = fwd + seated * _SEAT_FORWARD.get(name, 0.0)
        up = up + seated * _SEAT_RAISE.get(name, 0.0)
        poses[:, idx, 0] = torso[:, 0] + fwd * forward[:, 0] + lat0 * lateral[:, 0]
        poses[:, idx, 1] = torso[:, 1] + fwd * forward[:, 1] + lat0 * lateral[:, 1]
        poses[:, idx, 2] = torso[:, 2] + up
    return PoseSequence3D(values=poses, frame_rate=frame_rate)
