"""Kinematics of rotating and accelerating reference frames.

A frame trajectory is the pair (R_t, zeta_t): a rotation in SO(3) obtained as
the time-ordered exponential of ``Omega(t) n(t) . J`` and a translation
zeta_t with its first two derivatives.  Both start at the identity
(R_0 = I, zeta_0 = 0).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad

__all__ = [
    "RotationSpec",
    "TranslationSpec",
    "FrameTrajectory",
    "so3_generators",
    "skew",
    "rodrigues",
    "axis_angle",
    "rotation_at",
    "translation_state_at",
]

UNIT_TOL = 1e-12
ROTATION_MODES = ("constant_axis", "piecewise", "callback")
TRANSLATION_MODES = ("none", "boost", "constant_accel", "callback")

Vector = Tuple[float, float, float]
ScalarFn = Callable[[float], float]


def so3_generators():
    """Return the SO(3) generators ``(J_x, J_y, J_z)`` with (J_i)_jk = -eps_ijk."""
    gens = np.zeros((3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                gens[i, j, k] = -_levi_civita(i, j, k)
    return gens[0], gens[1], gens[2]


def _levi_civita(i, j, k):
    return (i - j) * (j - k) * (k - i) / 2


def skew(w):
    """Cross-product matrix of ``w``; equal to ``w . J``."""
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def rodrigues(w):
    """Closed form of ``exp(skew(w))``."""
    w = np.asarray(w, dtype=float)
    theta = math.sqrt(float(w @ w))
    if theta == 0.0:
        return np.eye(3)
    K = skew(w / theta)
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def axis_angle(R):
    """Inverse of :func:`rodrigues`: return ``(angle, unit_axis)``.

    The angle lies in [0, pi].  For the identity the axis defaults to z.
    """
    R = np.asarray(R, dtype=float)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    # atan2 keeps small angles accurate, where acos of the trace does not
    theta = math.atan2(0.5 * np.linalg.norm(v), 0.5 * (np.trace(R) - 1.0))
    if theta == 0.0:
        return 0.0, np.array([0.0, 0.0, 1.0])
    if math.pi - theta > 1e-6:
        return theta, v / np.linalg.norm(v)
    # near pi the antisymmetric part vanishes; use the symmetric part
    B = (R + np.eye(3)) / 2.0
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / math.sqrt(B[k, k])
    if v @ axis < 0:
        axis = -axis
    return theta, axis / np.linalg.norm(axis)


def _as_unit(axis, what="axis"):
    n = np.asarray(axis, dtype=float)
    if n.shape != (3,):
        raise ValueError(f"{what} must be a 3-vector, got shape {n.shape}")
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > UNIT_TOL:
        raise ValueError(f"{what} must have unit norm, got |n| = {norm!r}")
    return n


class _StepCache:
    """Rotation matrices on the grid t_k = k h, grown on demand."""

    def __init__(self):
        self.lock = threading.Lock()
        self.nodes = [np.eye(3)]


@dataclass(frozen=True)
class RotationSpec:
    """Rotational part of a frame trajectory.

    ``constant_axis`` rotates about a fixed unit ``axis`` with angular
    velocity ``omega`` (a number or a function of time).  ``piecewise`` takes
    ``segments = ((t_start, axis, omega), ...)`` with constant axis and
    angular velocity on each segment.  ``callback`` takes arbitrary
    ``axis_fn(t)`` and ``omega_fn(t)`` and evaluates the time-ordered
    exponential numerically with step ``step``.
    """

    mode: str = "constant_axis"
    axis: Vector = (0.0, 0.0, 1.0)
    omega: Union[float, ScalarFn] = 0.0
    segments: Tuple = ()
    axis_fn: Optional[Callable[[float], Sequence[float]]] = None
    omega_fn: Optional[ScalarFn] = None
    step: Optional[float] = None
    _cache: _StepCache = field(default_factory=_StepCache, compare=False,
                               repr=False)

    def __post_init__(self):
        if self.mode not in ROTATION_MODES:
            raise ValueError(f"unknown rotation mode {self.mode!r}; "
                             f"expected one of {ROTATION_MODES}")
        if self.mode == "constant_axis":
            _as_unit(self.axis)
        elif self.mode == "piecewise":
            if not self.segments:
                raise ValueError("piecewise rotation needs at least one segment")
            starts = [float(s[0]) for s in self.segments]
            if starts[0] != 0.0:
                raise ValueError("first piecewise segment must start at t = 0")
            if any(b <= a for a, b in zip(starts, starts[1:])):
                raise ValueError("segment start times must increase strictly")
            for s in self.segments:
                _as_unit(s[1], "segment axis")
        else:
            if self.axis_fn is None or self.omega_fn is None:
                raise ValueError("callback rotation needs axis_fn and omega_fn")
            if self.step is not None and not self.step > 0:
                raise ValueError("rotation step must be positive")

    @classmethod
    def constant(cls, axis=(0.0, 0.0, 1.0), omega=0.0):
        return cls(mode="constant_axis", axis=tuple(float(a) for a in axis),
                   omega=omega)

    @classmethod
    def piecewise(cls, segments):
        segs = tuple((float(t0), tuple(float(a) for a in ax), float(om))
                     for t0, ax, om in segments)
        return cls(mode="piecewise", segments=segs)

    @classmethod
    def callback(cls, axis_fn, omega_fn, step=None):
        return cls(mode="callback", axis_fn=axis_fn, omega_fn=omega_fn,
                   step=step)

    @property
    def is_trivial(self):
        """True when the frame never rotates."""
        if self.mode == "constant_axis":
            return not callable(self.omega) and self.omega == 0.0
        if self.mode == "piecewise":
            return all(s[2] == 0.0 for s in self.segments)
        return False

    def axis_at(self, t):
        if self.mode == "constant_axis":
            return np.asarray(self.axis, dtype=float)
        if self.mode == "piecewise":
            return np.asarray(self._segment(t)[1], dtype=float)
        return _as_unit(self.axis_fn(t), f"axis_fn({t})")

    def omega_at(self, t):
        if self.mode == "constant_axis":
            return float(self.omega(t)) if callable(self.omega) else float(self.omega)
        if self.mode == "piecewise":
            return float(self._segment(t)[2])
        return float(self.omega_fn(t))

    def angular_velocity(self, t):
        """The vector Omega(t) n(t)."""
        return self.omega_at(t) * self.axis_at(t)

    def _segment(self, t):
        seg = self.segments[0]
        for s in self.segments:
            if s[0] <= t:
                seg = s
            else:
                break
        return seg

    def _step_size(self):
        if self.step is not None:
            return float(self.step)
        om = abs(self.omega_at(0.0))
        period = 2.0 * math.pi / om if om > 0 else 1.0
        return 1e-4 * period


@dataclass(frozen=True)
class TranslationSpec:
    """Translational part of a frame trajectory.

    Modes: ``none``, ``boost`` (zeta = v t), ``constant_accel``
    (zeta = a t^2 / 2) and ``callback`` (zeta given by ``zeta_fn``; missing
    derivatives come from central finite differences).
    """

    mode: str = "none"
    velocity: Vector = (0.0, 0.0, 0.0)
    acceleration: Vector = (0.0, 0.0, 0.0)
    zeta_fn: Optional[Callable[[float], Sequence[float]]] = None
    zeta_dot_fn: Optional[Callable[[float], Sequence[float]]] = None
    zeta_ddot_fn: Optional[Callable[[float], Sequence[float]]] = None
    fd_step: float = 1e-6
    fd_step2: float = 1e-4

    def __post_init__(self):
        if self.mode not in TRANSLATION_MODES:
            raise ValueError(f"unknown translation mode {self.mode!r}; "
                             f"expected one of {TRANSLATION_MODES}")
        if self.mode == "callback":
            if self.zeta_fn is None:
                raise ValueError("callback translation needs zeta_fn")
            z0 = np.asarray(self.zeta_fn(0.0), dtype=float)
            if z0.shape != (3,) or np.max(np.abs(z0)) > 1e-12:
                raise ValueError("translation must start at zeta(0) = 0")

    @classmethod
    def boost(cls, velocity):
        return cls(mode="boost", velocity=tuple(float(v) for v in velocity))

    @classmethod
    def constant_accel(cls, acceleration):
        return cls(mode="constant_accel",
                   acceleration=tuple(float(a) for a in acceleration))

    @classmethod
    def callback(cls, zeta_fn, zeta_dot_fn=None, zeta_ddot_fn=None, fd_step=1e-6):
        return cls(mode="callback", zeta_fn=zeta_fn, zeta_dot_fn=zeta_dot_fn,
                   zeta_ddot_fn=zeta_ddot_fn, fd_step=fd_step)

    @property
    def is_trivial(self):
        return self.mode == "none"

    @property
    def has_acceleration(self):
        return self.mode in ("constant_accel", "callback")


@dataclass(frozen=True)
class FrameTrajectory:
    rotation: RotationSpec = field(default_factory=RotationSpec)
    translation: TranslationSpec = field(default_factory=TranslationSpec)

    @property
    def is_inertial(self):
        return self.rotation.is_trivial and self.translation.is_trivial


def _magnus_step(spec, t, h):
    """Fourth-order Magnus rotation vector for the step [t, t + h]."""
    c = math.sqrt(3.0) / 6.0
    w1 = spec.angular_velocity(t + (0.5 - c) * h)
    w2 = spec.angular_velocity(t + (0.5 + c) * h)
    return 0.5 * h * (w1 + w2) + (math.sqrt(3.0) / 12.0) * h * h * np.cross(w2, w1)


def _callback_rotation(spec, t):
    h = spec._step_size()
    k = int(math.floor(t / h))
    cache = spec._cache
    with cache.lock:
        nodes = cache.nodes
        while len(nodes) <= k:
            j = len(nodes) - 1
            nodes.append(rodrigues(_magnus_step(spec, j * h, h)) @ nodes[j])
        base = nodes[k]
    rest = t - k * h
    if rest <= 0.0:
        return base.copy()
    return rodrigues(_magnus_step(spec, k * h, rest)) @ base


def rotation_at(traj, t):
    """Rotation matrix R_t of the frame at time ``t`` (t >= 0).

    Later rotations multiply from the left, so that dR/dt = Omega n.J R.
    """
    if t < 0:
        raise ValueError(f"rotation_at requires t >= 0, got {t}")
    spec = traj.rotation if isinstance(traj, FrameTrajectory) else traj
    if spec.mode == "constant_axis":
        if callable(spec.omega):
            angle = quad(spec.omega, 0.0, t, epsabs=1e-14, epsrel=1e-13)[0]
        else:
            angle = float(spec.omega) * t
        return rodrigues(angle * np.asarray(spec.axis, dtype=float))
    if spec.mode == "piecewise":
        R = np.eye(3)
        segs = spec.segments
        for i, (t0, axis, om) in enumerate(segs):
            if t0 > t:
                break
            t1 = segs[i + 1][0] if i + 1 < len(segs) else math.inf
            dt = min(t, t1) - t0
            R = rodrigues(om * dt * np.asarray(axis, dtype=float)) @ R
        return R
    return _callback_rotation(spec, t)


def translation_state_at(traj, t):
    """Return ``(zeta, zeta_dot, zeta_ddot)`` at time ``t`` as 3-vectors."""
    if t < 0:
        raise ValueError(f"translation_state_at requires t >= 0, got {t}")
    spec = traj.translation if isinstance(traj, FrameTrajectory) else traj
    zero = np.zeros(3)
    if spec.mode == "none":
        return zero, zero.copy(), zero.copy()
    if spec.mode == "boost":
        v = np.asarray(spec.velocity, dtype=float)
        return v * t, v.copy(), zero
    if spec.mode == "constant_accel":
        a = np.asarray(spec.acceleration, dtype=float)
        return 0.5 * a * t * t, a * t, a.copy()
    f = lambda s: np.asarray(spec.zeta_fn(s), dtype=float)
    z = f(t)
    if spec.zeta_dot_fn is not None:
        zd = np.asarray(spec.zeta_dot_fn(t), dtype=float)
    else:
        h = spec.fd_step
        zd = (f(t + h) - f(t - h)) / (2.0 * h)
    if spec.zeta_ddot_fn is not None:
        zdd = np.asarray(spec.zeta_ddot_fn(t), dtype=float)
    elif spec.zeta_dot_fn is not None:
        h = spec.fd_step
        g = lambda s: np.asarray(spec.zeta_dot_fn(s), dtype=float)
        zdd = (g(t + h) - g(t - h)) / (2.0 * h)
    else:
        h = spec.fd_step2
        zdd = (f(t + h) - 2.0 * z + f(t - h)) / (h * h)
    return z, zd, zdd
