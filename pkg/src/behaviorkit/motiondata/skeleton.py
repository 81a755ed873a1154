"""17-joint skeleton: topology, segment lengths, forward kinematics.

Coordinates: x lateral (subject's right is +x), y forward, z up.  The root
(pelvis) carries the subject's position in the room; the generator places
each sequence somewhere and lets it drift slowly.  Poses are produced from
joint angles by exact rotations, so bone lengths are constant across frames
to machine precision (translation cannot stretch a bone).
"""

from dataclasses import dataclass, replace, fields

import numpy as np

JOINT_NAMES = [
    "pelvis", "spine", "thorax", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
]

N_JOINTS = len(JOINT_NAMES)
POSE_DIM = N_JOINTS * 3

# (parent, child) pairs; 16 bones spanning the 17 joints
BONES = [
    (0, 1), (1, 2), (2, 3), (3, 4),
    (2, 5), (5, 6), (6, 7),
    (2, 8), (8, 9), (9, 10),
    (0, 11), (11, 12), (12, 13),
    (0, 14), (14, 15), (15, 16),
]

# segment lengths in meters
LOWER_SPINE = 0.22
UPPER_SPINE = 0.23
NECK = 0.11
HEAD = 0.14
SHOULDER_OFFSET = 0.19
UPPER_ARM = 0.28
FOREARM = 0.26
HIP_OFFSET = 0.11
THIGH = 0.42
SHANK = 0.43

ARM_REACH = UPPER_ARM + FOREARM
LEG_LENGTH = THIGH + SHANK

BONE_LENGTHS = {
    (0, 1): LOWER_SPINE, (1, 2): UPPER_SPINE, (2, 3): NECK, (3, 4): HEAD,
    (2, 5): SHOULDER_OFFSET, (5, 6): UPPER_ARM, (6, 7): FOREARM,
    (2, 8): SHOULDER_OFFSET, (8, 9): UPPER_ARM, (9, 10): FOREARM,
    (0, 11): HIP_OFFSET, (11, 12): THIGH, (12, 13): SHANK,
    (0, 14): HIP_OFFSET, (14, 15): THIGH, (15, 16): SHANK,
}


@dataclass
class AngleFrame:
    """Joint angles (radians) and root position (meters) for one pose.

    Sagittal angles rotate about the x axis: positive swings limbs forward.
    Elevation 0 hangs an arm straight down; hip 0 hangs a leg straight down;
    knee bend folds the shank backward relative to the thigh.
    """

    root_x: float = 0.0
    root_y: float = 0.0
    root_z: float = LEG_LENGTH
    torso_pitch: float = 0.0
    torso_roll: float = 0.0
    l_arm_elev: float = 0.0
    r_arm_elev: float = 0.0
    l_elbow: float = 0.0
    r_elbow: float = 0.0
    l_hip: float = 0.0
    r_hip: float = 0.0
    l_knee: float = 0.0
    r_knee: float = 0.0

    def copy(self):
        return replace(self)


ANGLE_FIELDS = [f.name for f in fields(AngleFrame)]


def base_angles(posture):
    """Rest pose for a named initial posture ("standing" or "sitting")."""
    if posture == "standing":
        return AngleFrame(
            root_z=LEG_LENGTH, l_arm_elev=0.12, r_arm_elev=0.12,
            l_elbow=0.10, r_elbow=0.10)
    if posture == "sitting":
        return AngleFrame(
            root_z=SHANK, torso_pitch=0.06,
            l_arm_elev=0.18, r_arm_elev=0.18, l_elbow=0.25, r_elbow=0.25,
            l_hip=np.pi / 2, r_hip=np.pi / 2, l_knee=np.pi / 2, r_knee=np.pi / 2)
    raise ValueError(f"unknown posture '{posture}'")


def _rot_x(a):
    ca, sa = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])


def _rot_y(a):
    ca, sa = np.cos(a), np.sin(a)
    return np.array([[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]])


_DOWN = np.array([0.0, 0.0, -1.0])
_UP = np.array([0.0, 0.0, 1.0])


def forward_kinematics(a):
    """Joint positions (17, 3) for one AngleFrame."""
    pose = np.zeros((N_JOINTS, 3))
    pelvis = np.array([a.root_x, a.root_y, a.root_z])
    pose[0] = pelvis

    torso = _rot_y(a.torso_roll) @ _rot_x(a.torso_pitch)
    spine = pelvis + LOWER_SPINE * (torso @ _UP)
    thorax = spine + UPPER_SPINE * (torso @ _UP)
    neck = thorax + NECK * (torso @ _UP)
    head = neck + HEAD * (torso @ _UP)
    pose[1], pose[2], pose[3], pose[4] = spine, thorax, neck, head

    for sign, sh_i, el_i, wr_i, elev, bend in (
            (-1.0, 5, 6, 7, a.l_arm_elev, a.l_elbow),
            (+1.0, 8, 9, 10, a.r_arm_elev, a.r_elbow)):
        shoulder = thorax + SHOULDER_OFFSET * (torso @ np.array([sign, 0.0, 0.0]))
        upper_dir = torso @ (_rot_x(elev) @ _DOWN)
        elbow = shoulder + UPPER_ARM * upper_dir
        fore_dir = torso @ (_rot_x(elev + bend) @ _DOWN)
        wrist = elbow + FOREARM * fore_dir
        pose[sh_i], pose[el_i], pose[wr_i] = shoulder, elbow, wrist

    for sign, hip_i, kn_i, an_i, hip, knee in (
            (-1.0, 11, 12, 13, a.l_hip, a.l_knee),
            (+1.0, 14, 15, 16, a.r_hip, a.r_knee)):
        hip_j = pelvis + np.array([sign * HIP_OFFSET, 0.0, 0.0])
        thigh_dir = _rot_x(hip) @ _DOWN
        knee_j = hip_j + THIGH * thigh_dir
        shank_dir = _rot_x(hip - knee) @ _DOWN
        ankle_j = knee_j + SHANK * shank_dir
        pose[hip_i], pose[kn_i], pose[an_i] = hip_j, knee_j, ankle_j

    return pose


def bone_length_errors(frames):
    """Max |actual - nominal| bone length over all frames of (n, 17, 3)."""
    frames = np.asarray(frames)
    worst = 0.0
    for (p, c) in BONES:
        lengths = np.linalg.norm(frames[:, c] - frames[:, p], axis=-1)
        worst = max(worst, float(np.abs(lengths - BONE_LENGTHS[(p, c)]).max()))
    return worst
