"""System Hamiltonian and field coupling in a non-inertial frame.

The frame-transformed system Hamiltonian is

    H_S(t) = p^2/2m + V0(r) - Omega(t) n(t) . (R_t L) + m zeta''_t . (R_t r)

and in the long-wavelength limit the particle couples to the field through

    H_SE = -sum_i Q_i(t) A_i,   Q(t) = e R~_t^{-1} (R_t p / m + zeta'_t),

where (R~, zeta~) is the motion of the field frame.  The diamagnetic
e^2 A^2 term is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigurationError
from .frames import (FrameTrajectory, axis_angle, rotation_at,
                     translation_state_at)
from .operators import (Basis, Operator, is_hermitian, oscillator2d_basis,
                        oscillator_basis, ring_basis, two_level_basis)

__all__ = [
    "AXES",
    "SystemModel",
    "FieldFrame",
    "CouplingSet",
    "TransformationReport",
    "two_level_model",
    "ring_model",
    "oscillator_model",
    "system_hamiltonian_at",
    "coupling_operators_at",
    "is_time_independent",
    "verify_transformation_identities",
]

AXES = ("x", "y", "z")
_ZERO_COEFF = 1e-13


@dataclass(frozen=True, eq=False)
class SystemModel:
    """A charged particle on a finite basis.

    ``kinetic`` stands for p^2/2m (for the ring, L_z^2 / 2 I_r) and
    ``potential`` for the body-fixed V0.  Vector operators are given by
    component, keyed by ``"x"``, ``"y"``, ``"z"``; components the motion
    never needs may be left out.  ``field_components`` lists the spatial
    components of the field the particle couples to (default: the momentum
    components).  ``operators`` holds named operators for observables.
    """

    basis: Basis
    mass: float
    charge: float
    kinetic: Operator
    potential: Operator
    position: Mapping[str, Operator] = field(default_factory=dict)
    momentum: Mapping[str, Operator] = field(default_factory=dict)
    angular_momentum: Mapping[str, Operator] = field(default_factory=dict)
    field_components: Tuple[str, ...] = ()
    operators: Mapping[str, Operator] = field(default_factory=dict)

    def __post_init__(self):
        if not self.mass > 0:
            raise ConfigurationError(f"mass must be positive, got {self.mass}")
        ops = [("kinetic", self.kinetic), ("potential", self.potential)]
        for name, group in (("position", self.position),
                            ("momentum", self.momentum),
                            ("angular_momentum", self.angular_momentum)):
            for k, op in group.items():
                if k not in AXES:
                    raise ConfigurationError(f"{name} key {k!r} is not one of {AXES}")
                ops.append((f"{name}[{k!r}]", op))
        for name, op in ops:
            if op.basis != self.basis:
                raise ConfigurationError(f"{name} is defined on a different basis")
            if not is_hermitian(op):
                raise ConfigurationError(f"{name} must be Hermitian")
        comps = self.field_components or tuple(a for a in AXES if a in self.momentum)
        if not comps:
            raise ConfigurationError("model couples to no field component")
        for c in comps:
            if c not in AXES:
                raise ConfigurationError(f"field component {c!r} is not one of {AXES}")
        object.__setattr__(self, "field_components", tuple(comps))

    @property
    def dimension(self):
        return self.basis.dimension

    @property
    def bare_hamiltonian(self):
        return self.kinetic + self.potential

    def identity(self):
        return Operator.identity(self.basis)


@dataclass(frozen=True)
class FieldFrame:
    """Motion of the frame in which the field is quantized.

    ``comoving``: the field frame follows the particle (R~ = R, zeta~ = zeta).
    ``static``: the field frame is inertial (R~ = I, zeta~ = 0).
    ``custom``: the field frame follows its own trajectory ``frame``.
    """

    mode: str = "static"
    frame: Optional[FrameTrajectory] = None

    def __post_init__(self):
        if self.mode not in ("static", "comoving", "custom"):
            raise ConfigurationError(f"unknown field frame mode {self.mode!r}")
        if self.mode == "custom" and self.frame is None:
            raise ConfigurationError("custom field frame needs a trajectory")

    @classmethod
    def static(cls):
        return cls("static")

    @classmethod
    def comoving(cls):
        return cls("comoving")

    @classmethod
    def custom(cls, frame):
        return cls("custom", frame)

    def rotation(self, system_frame, t):
        if self.mode == "static":
            return np.eye(3)
        if self.mode == "comoving":
            return rotation_at(system_frame, t)
        return rotation_at(self.frame, t)

    def translation(self, system_frame, t):
        if self.mode == "static":
            return np.zeros(3)
        if self.mode == "comoving":
            return translation_state_at(system_frame, t)[0]
        return translation_state_at(self.frame, t)[0]


@dataclass(frozen=True, eq=False)
class CouplingSet:
    """Q_i(t) split into an operator part and a c-number drive part."""

    components: Tuple[str, ...]
    operator_parts: Tuple[Operator, ...]
    scalar_parts: np.ndarray

    def total(self, i):
        op = self.operator_parts[i]
        return op + self.scalar_parts[i] * Operator.identity(op.basis)

    def __len__(self):
        return len(self.components)


# -- builders ---------------------------------------------------------------

def two_level_model(omega0=1.0, coupling="sz", mass=1.0, charge=1.0):
    """Two-level system H = omega0 sz / 2 coupled through Q_x = e c / m.

    ``coupling`` names the Pauli operator ``c`` that plays the role of the
    momentum component along x.
    """
    ops = two_level_basis()
    if coupling not in ("sx", "sy", "sz"):
        raise ConfigurationError(f"coupling must be sx, sy or sz, got {coupling!r}")
    b = ops["I"].basis
    return SystemModel(
        basis=b, mass=mass, charge=charge,
        kinetic=Operator.zero(b),
        potential=0.5 * omega0 * ops["sz"],
        momentum={"x": ops[coupling]},
        operators=dict(ops),
    )


def ring_model(m_max=3, moment_of_inertia=1.0, radius=1.0, mass=1.0,
               charge=1.0, barrier=0.0):
    """Particle on a ring of given radius in the xy plane.

    Kinetic energy L_z^2 / 2 I_r, body-fixed potential ``barrier * cos(theta)``.
    Position r = a (cos, sin, 0); momentum is the symmetrized tangential
    momentum (L_z / a) e_theta.
    """
    if not moment_of_inertia > 0 or not radius > 0:
        raise ConfigurationError("ring moment of inertia and radius must be positive")
    ops = ring_basis(m_max)
    b = ops["I"].basis
    Lz, c, s = ops["Lz"].matrix, ops["cos"].matrix, ops["sin"].matrix
    px = -(s @ Lz + Lz @ s) / (2.0 * radius)
    py = (c @ Lz + Lz @ c) / (2.0 * radius)
    named = dict(ops)
    named.update(px=Operator(b, px), py=Operator(b, py))
    return SystemModel(
        basis=b, mass=mass, charge=charge,
        kinetic=Operator(b, Lz @ Lz / (2.0 * moment_of_inertia)),
        potential=barrier * ops["cos"],
        position={"x": radius * ops["cos"], "y": radius * ops["sin"]},
        momentum={"x": named["px"], "y": named["py"]},
        angular_momentum={"z": ops["Lz"]},
        operators=named,
    )


def oscillator_model(n_max=20, mass=1.0, omega0=1.0, charge=1.0, dims=1):
    """Harmonic oscillator in one dimension (x) or in the xy plane."""
    if dims == 1:
        ops = oscillator_basis(n_max, mass, omega0)
        return SystemModel(
            basis=ops["I"].basis, mass=mass, charge=charge,
            kinetic=ops["kinetic"], potential=ops["potential"],
            position={"x": ops["x"]}, momentum={"x": ops["p"]},
            operators=dict(ops),
        )
    if dims == 2:
        ops = oscillator2d_basis(n_max, mass, omega0)
        return SystemModel(
            basis=ops["I"].basis, mass=mass, charge=charge,
            kinetic=ops["kinetic"], potential=ops["potential"],
            position={"x": ops["x"], "y": ops["y"]},
            momentum={"x": ops["px"], "y": ops["py"]},
            angular_momentum={"z": ops["Lz"]},
            operators=dict(ops),
        )
    raise ConfigurationError(f"oscillator dims must be 1 or 2, got {dims}")


# -- assembly ---------------------------------------------------------------

def _combine(group, coeffs, group_name, purpose, basis):
    """sum_k coeffs[k] * group[k]; absent components must have zero weight."""
    out = np.zeros((basis.dimension, basis.dimension), dtype=complex)
    for k, axis in enumerate(AXES):
        c = float(coeffs[k])
        op = group.get(axis)
        if op is None:
            if abs(c) > _ZERO_COEFF:
                raise ConfigurationError(
                    f"{purpose} requires {group_name}[{axis!r}], which the "
                    f"model does not provide")
            continue
        if c != 0.0:
            out += c * op.matrix
    return out


def system_hamiltonian_at(model, frame, t):
    """H_S(t) for ``model`` seen from the moving ``frame``."""
    H = model.kinetic.matrix + model.potential.matrix
    rot = frame.rotation
    omega = rot.omega_at(t)
    _, _, zdd = translation_state_at(frame, t)
    needs_R = omega != 0.0 or np.any(zdd != 0.0)
    if not needs_R:
        return Operator(model.basis, H)
    R = rotation_at(frame, t)
    if omega != 0.0:
        # n . (R L) = (R^T n) . L
        coeff = omega * (R.T @ rot.axis_at(t))
        H = H - _combine(model.angular_momentum, coeff, "angular_momentum",
                         "rotation", model.basis)
    if np.any(zdd != 0.0):
        coeff = model.mass * (R.T @ zdd)
        H = H + _combine(model.position, coeff, "position",
                         "acceleration", model.basis)
    return Operator(model.basis, 0.5 * (H + H.conj().T))


def coupling_operators_at(model, frame, field_frame, t):
    """Q_i(t) for every field component of ``model``.

    The operator part is (e/m) [R~^T R p]_i and the scalar part
    e [R~^T zeta']_i; for a comoving field R~^T R is exactly the identity.
    """
    _, zd, _ = translation_state_at(frame, t)
    if field_frame.mode == "comoving":
        mix = np.eye(3)
        Rf = rotation_at(frame, t) if np.any(zd != 0.0) else np.eye(3)
    else:
        Rf = field_frame.rotation(frame, t)
        mix = Rf.T @ rotation_at(frame, t)
        if frame.rotation.is_trivial and field_frame.mode == "static":
            mix = np.eye(3)
    drive = model.charge * (Rf.T @ zd)
    scale = model.charge / model.mass
    parts = []
    scalars = []
    for comp in model.field_components:
        i = AXES.index(comp)
        m = _combine(model.momentum, scale * mix[i], "momentum",
                     f"coupling component {comp!r}", model.basis)
        parts.append(Operator(model.basis, 0.5 * (m + m.conj().T)))
        scalars.append(float(drive[i]))
    return CouplingSet(model.field_components, tuple(parts), np.array(scalars))


def is_time_independent(frame, field_frame):
    """True when H_S and Q_i do not depend on time."""
    if not frame.rotation.is_trivial:
        return False
    if frame.translation.mode not in ("none", "boost"):
        return False
    if field_frame.mode == "custom":
        return field_frame.frame.rotation.is_trivial
    return True


# -- transformation identities -----------------------------------------------

@dataclass
class TransformationReport:
    residuals: Dict[str, float]
    tol: float
    interior_size: int

    @property
    def passed(self):
        return all(v < self.tol for v in self.residuals.values())

    @property
    def max_residual(self):
        return max(self.residuals.values(), default=0.0)


def _interior(basis, margin):
    labels = basis.labels
    if basis.kind == "oscillator":
        top = labels[-1]
        keep = [i for i, n in enumerate(labels) if n <= top - margin]
    elif basis.kind == "oscillator2d":
        top = labels[-1][0]
        keep = [i for i, (N, _) in enumerate(labels) if N <= top - margin]
    elif basis.kind == "ring":
        top = labels[-1]
        keep = [i for i, m in enumerate(labels) if abs(m) <= top - margin]
    else:
        raise ConfigurationError(
            f"transformation identities need an oscillator or ring basis, "
            f"not {basis.kind!r}")
    if not keep:
        raise ConfigurationError(f"margin {margin} leaves an empty interior block")
    return np.array(keep)


def _expi(G):
    """exp(iG) for Hermitian G."""
    evals, V = np.linalg.eigh(0.5 * (G + G.conj().T))
    return (V * np.exp(1j * evals)) @ V.conj().T


def verify_transformation_identities(model, frame, t, tol=1e-6, margin=None):
    """Check the frame-transformation operator identities on a truncated basis.

    Builds U2 = exp(-i m zeta'.r) exp(i zeta.p) and the rotation unitary
    U1 = exp(i phi n.L) (phi, n the axis-angle of R_t) and reports the
    interior-block Frobenius norms of

        U2 r U2^+ - (r + zeta),   U2 p U2^+ - (p + m zeta'),
        U1 (r + zeta) U1^+ - (R r + zeta),
        U1 (p + m zeta') U1^+ - (R p + m zeta'),   U1 L U1^+ - R L.

    ``margin`` is the number of top quantum numbers excluded from the check
    (default 20 for oscillators, 0 for the ring).
    """
    basis = model.basis
    if margin is None:
        margin = 0 if basis.kind == "ring" else 20
    keep = _interior(basis, margin)
    d = basis.dimension
    eye = np.eye(d)
    z, zd, _ = translation_state_at(frame, t)
    R = rotation_at(frame, t)
    m = model.mass
    block = lambda X: float(np.linalg.norm(X[np.ix_(keep, keep)]))
    conj = lambda U, X: U @ X @ U.conj().T

    gen_r = _combine(model.position, -m * zd, "position", "boost identity", basis)
    gen_p = _combine(model.momentum, z, "momentum", "displacement identity", basis)
    U2 = _expi(gen_r) @ _expi(gen_p)
    phi, n = axis_angle(R)
    U1 = _expi(_combine(model.angular_momentum, phi * n, "angular_momentum",
                        "rotation identity", basis))

    res = {}
    for k, axis in enumerate(AXES):
        if axis in model.position:
            r = model.position[axis].matrix
            res[f"U2 r_{axis} U2^+ - (r_{axis} + zeta_{axis})"] = block(
                conj(U2, r) - (r + z[k] * eye))
        if axis in model.momentum:
            p = model.momentum[axis].matrix
            res[f"U2 p_{axis} U2^+ - (p_{axis} + m zeta'_{axis})"] = block(
                conj(U2, p) - (p + m * zd[k] * eye))
    for name, group, shift in (("r", model.position, z),
                               ("p", model.momentum, m * zd),
                               ("L", model.angular_momentum, np.zeros(3))):
        for k, axis in enumerate(AXES):
            if axis not in group:
                continue
            try:
                rotated = _combine(group, R[k], name, "rotation identity", basis)
            except ConfigurationError:
                continue  # R mixes in a component the model lacks
            lhs = conj(U1, group[axis].matrix + shift[k] * eye)
            res[f"U1 {name}_{axis} U1^+ - (R {name})_{axis}"] = block(
                lhs - (rotated + shift[k] * eye))
    return TransformationReport(res, tol, len(keep))
