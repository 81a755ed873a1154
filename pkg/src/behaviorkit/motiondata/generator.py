"""Procedural motion families.

Six families share one parameterization (amplitude, frequency, phase,
initial-posture-id) plus a seed for per-sequence context -- placement in
the room, small style offsets, a slow postural random walk -- and per-frame
angle jitter.  All motion is produced in angle space and pushed through
exact forward kinematics, so bone lengths never drift.

The arm-raise family is built to a measurable promise: over its ramp window
the right wrist rises monotonically and the total rise equals the amplitude
parameter exactly (the elevation endpoint is solved in closed form from the
actual starting angles, and the DOFs that enter that computation are kept
free of jitter).
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .skeleton import (
    AngleFrame,
    ARM_REACH,
    LEG_LENGTH,
    SHANK,
    THIGH,
    base_angles,
    forward_kinematics,
)

FAMILIES = ["arm-raise", "wave", "squat", "walk-in-place", "sit-to-stand", "idle-sway"]

# amplitude units: meters of wrist rise for arm-raise, radians of joint sweep
# for the oscillatory families, fraction of full rise for sit-to-stand
PARAM_RANGES = {
    "arm-raise":     {"amplitude": (0.30, 0.80), "frequency": (0.8, 1.2),
                      "postures": ("standing", "sitting")},
    "wave":          {"amplitude": (0.50, 1.10), "frequency": (1.5, 3.5),
                      "postures": ("standing", "sitting")},
    "squat":         {"amplitude": (0.45, 0.95), "frequency": (0.8, 1.8),
                      "postures": ("standing",)},
    "walk-in-place": {"amplitude": (0.30, 0.70), "frequency": (1.5, 3.0),
                      "postures": ("standing",)},
    "sit-to-stand":  {"amplitude": (0.70, 1.00), "frequency": (0.8, 1.2),
                      "postures": ("sitting",)},
    "idle-sway":     {"amplitude": (0.06, 0.20), "frequency": (1.0, 2.5),
                      "postures": ("standing", "sitting")},
}

RAMP_START = 0.10   # ramp window of the arm-raise / sit-to-stand families,
RAMP_END = 0.90     # as fractions of the sequence

INTRO_FRAC = 0.10   # every family eases in from its base posture over this
                    # fraction, so the first frame never betrays which motion
                    # will follow

JITTER_SIGMA = 0.0025  # radians, per frame

# per-sequence postural context, drawn once per sequence: where the subject
# stands in the room (root_*, meters) and small style offsets on the joint
# angles (radians).  The same sigmas also scale the slow within-sequence
# drift, so a sequence's late posture is never fully determined by its
# first frame.
_OFFSET_SIGMA = {
    "root_x": 0.50, "root_y": 0.50,
    "l_arm_elev": 0.10, "r_arm_elev": 0.10,
    "l_elbow": 0.12, "r_elbow": 0.12,
    "torso_pitch": 0.04, "torso_roll": 0.03,
    "l_hip": 0.03, "r_hip": 0.03,
    "l_knee": 0.025, "r_knee": 0.025,
}

_JITTER_FIELDS = [
    "torso_pitch", "torso_roll",
    "l_arm_elev", "r_arm_elev", "l_elbow", "r_elbow",
    "l_hip", "r_hip", "l_knee", "r_knee",
]

# DOFs that must stay clean for a family's geometric promise to hold exactly
_CLEAN = {
    "arm-raise": {"torso_pitch", "torso_roll", "r_arm_elev", "r_elbow"},
}


@dataclass
class FamilyParams:
    amplitude: float
    frequency: float
    phase: float
    posture_id: int = 0


def sample_family_params(family, rng):
    """Draw params uniformly from the family's documented ranges."""
    r = PARAM_RANGES[family]
    return FamilyParams(
        amplitude=float(rng.uniform(*r["amplitude"])),
        frequency=float(rng.uniform(*r["frequency"])),
        phase=float(rng.uniform(0.0, 2.0 * np.pi)),
        posture_id=int(rng.integers(0, len(r["postures"]))),
    )


def _ramp(t, smooth=False):
    s = np.clip((t - RAMP_START) / (RAMP_END - RAMP_START), 0.0, 1.0)
    if smooth:
        s = s * s * (3.0 - 2.0 * s)
    return s


def _intro(t):
    s = np.clip(t / INTRO_FRAC, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _arm_raise(base, p, t):
    # endpoint solved so the wrist rise over the ramp equals the amplitude
    e0 = base.r_arm_elev
    pitch = base.torso_pitch
    target = np.cos(pitch + e0) - p.amplitude / ARM_REACH
    if target < -1.0:
        raise ContractError(
            f"arm-raise amplitude {p.amplitude} exceeds reachable rise")
    e1 = float(np.arccos(target)) - pitch
    s = _ramp(t)
    return {"r_arm_elev": e0 + (e1 - e0) * s, "r_elbow": np.zeros_like(t),
            "torso_roll": np.zeros_like(t)}


def _wave(base, p, t):
    w = 2.0 * np.pi * p.frequency * t + p.phase
    return {
        "r_arm_elev": np.full_like(t, 1.35 + (base.r_arm_elev - 0.12)),
        "r_elbow": 0.25 + 0.5 * p.amplitude * (1.0 + np.sin(w)),
        "torso_roll": 0.04 * np.sin(w),
    }


def _squat(base, p, t):
    w = 2.0 * np.pi * p.frequency * t + p.phase
    theta = 0.5 * p.amplitude * (1.0 - np.cos(w))
    return {
        "l_hip": theta, "r_hip": theta,
        "l_knee": 2.0 * theta, "r_knee": 2.0 * theta,
        # keeps the ankles on the ground plane
        "root_z": LEG_LENGTH * np.cos(theta),
        "l_arm_elev": base.l_arm_elev + 0.7 * theta,
        "r_arm_elev": base.r_arm_elev + 0.7 * theta,
    }


def _walk(base, p, t):
    w = 2.0 * np.pi * p.frequency * t + p.phase
    a = p.amplitude
    return {
        "l_hip": a * np.sin(w),
        "r_hip": a * np.sin(w + np.pi),
        "l_knee": 0.55 * a * (1.0 + np.sin(w - 0.6)),
        "r_knee": 0.55 * a * (1.0 + np.sin(w + np.pi - 0.6)),
        "l_arm_elev": base.l_arm_elev + 0.45 * a * np.sin(w + np.pi),
        "r_arm_elev": base.r_arm_elev + 0.45 * a * np.sin(w),
        "root_z": LEG_LENGTH - 0.01 * (1.0 - np.cos(2.0 * w)),
    }


def _sit_to_stand(base, p, t):
    s = _ramp(t, smooth=True)
    hip = (np.pi / 2.0) * (1.0 - p.amplitude * s)
    return {
        "l_hip": hip, "r_hip": hip,
        "l_knee": hip, "r_knee": hip,          # shank stays vertical
        "root_z": THIGH * np.cos(hip) + SHANK,  # ankles on the ground plane
        "torso_pitch": base.torso_pitch + 0.38 * np.sin(np.pi * s),
        "l_arm_elev": base.l_arm_elev + 0.5 * np.sin(np.pi * s),
        "r_arm_elev": base.r_arm_elev + 0.5 * np.sin(np.pi * s),
    }


def _idle_sway(base, p, t):
    w = 2.0 * np.pi * p.frequency * t + p.phase
    a = p.amplitude
    out = {
        "torso_roll": a * np.sin(w),
        "torso_pitch": base.torso_pitch + 0.5 * a * np.sin(0.71 * w + 1.3),
        "l_arm_elev": base.l_arm_elev + 0.25 * a * np.sin(w + 0.7),
        "r_arm_elev": base.r_arm_elev + 0.25 * a * np.sin(w + 0.7 + np.pi),
        "l_elbow": base.l_elbow + 0.1 * a * (1.0 + np.sin(0.83 * w + 2.1)),
        "r_elbow": base.r_elbow + 0.1 * a * (1.0 + np.sin(0.83 * w + 2.6)),
    }
    if base.l_hip < 1.0:  # standing variant sways through the hips a little
        out["l_hip"] = base.l_hip + 0.15 * a * np.sin(0.5 * w)
        out["r_hip"] = base.r_hip + 0.15 * a * np.sin(0.5 * w)
    return out


_FAMILY_FUNCS = {
    "arm-raise": _arm_raise,
    "wave": _wave,
    "squat": _squat,
    "walk-in-place": _walk,
    "sit-to-stand": _sit_to_stand,
    "idle-sway": _idle_sway,
}


def _validate(family, params, frames):
    if family not in PARAM_RANGES:
        raise ContractError(f"unknown family '{family}' (choose from {FAMILIES})")
    if not params.amplitude >= 0:
        raise ContractError(f"amplitude must be non-negative, got {params.amplitude}")
    if not params.frequency > 0:
        raise ContractError(f"frequency must be positive, got {params.frequency}")
    if not np.isfinite(params.phase):
        raise ContractError(f"phase must be finite, got {params.phase}")
    if frames < 2:
        raise ContractError(f"need at least 2 frames, got {frames}")


def synth_generate(family, params, seed, frames=50):
    """Generate one motion sequence as a (frames, 17, 3) array.

    The posture id selects among the family's allowed starting postures
    (wrapping if out of range).  The same (family, params, seed, frames)
    always returns the identical array.
    """
    _validate(family, params, frames)
    rng = np.random.default_rng(seed)
    postures = PARAM_RANGES[family]["postures"]
    posture = postures[int(params.posture_id) % len(postures)]
    base = base_angles(posture)

    clean = _CLEAN.get(family, set())
    for field in sorted(_OFFSET_SIGMA):
        delta = rng.normal(0.0, _OFFSET_SIGMA[field])
        if field not in clean:
            setattr(base, field, getattr(base, field) + delta)

    t = np.arange(frames) / frames
    series = {f: np.full(frames, getattr(base, f)) for f in AngleFrame.__dataclass_fields__}
    if params.amplitude > 0:
        # blend every channel in from the base posture over the intro window:
        # frame 0 is a clean base posture for all families alike
        e = _intro(t)
        for field, values in _FAMILY_FUNCS[family](base, params, t).items():
            target = np.broadcast_to(values, (frames,)).astype(float)
            rest = getattr(base, field)
            series[field] = rest + e * (target - rest)
        # slow postural drift over the sequence (zero at the first frame, so
        # the start stays a clean base posture)
        width = min(7, frames)   # mode="same" needs kernel <= signal
        kernel = np.full(width, 1.0 / width)
        for field in sorted(_OFFSET_SIGMA):
            walk = np.convolve(np.cumsum(rng.normal(0.0, 1.0, frames)),
                               kernel, mode="same") / np.sqrt(frames)
            if field not in clean:
                series[field] += _OFFSET_SIGMA[field] * (walk - walk[0])
        for field in _JITTER_FIELDS:
            noise = rng.normal(0.0, JITTER_SIGMA, frames)
            if field not in clean:
                series[field] += noise
    # else: zero amplitude degenerates to the starting posture held for
    # every frame -- no oscillation and no jitter.

    out = np.zeros((frames, 17, 3))
    for k in range(frames):
        out[k] = forward_kinematics(AngleFrame(**{f: series[f][k] for f in series}))
    return out
