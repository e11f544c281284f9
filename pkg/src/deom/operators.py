"""Dense operators on finite, labelled bases."""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Number
from typing import Tuple

import numpy as np

from .errors import BasisMismatchError

__all__ = [
    "Basis",
    "Operator",
    "two_level_basis",
    "ring_basis",
    "oscillator_basis",
    "oscillator2d_basis",
    "commutator",
    "adjoint",
    "expectation",
    "trace",
    "is_hermitian",
    "unitary_propagate",
]

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class Basis:
    """A finite basis identified by its kind and ordered state labels."""

    kind: str
    labels: Tuple

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValueError("a basis needs at least one state")
        if any(b <= a for a, b in zip(self.labels, self.labels[1:])):
            raise ValueError("basis labels must be strictly increasing")

    @property
    def dimension(self):
        return len(self.labels)


class Operator:
    """Square complex matrix tagged with the basis it acts on.

    Arithmetic between operators on different bases raises
    :class:`BasisMismatchError`.  The wrapped array is read-only.
    """

    __slots__ = ("basis", "matrix")
    __array_priority__ = 1000

    def __init__(self, basis, matrix):
        m = np.array(matrix, dtype=complex)
        d = basis.dimension
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match basis "
                             f"dimension {d}")
        m.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("Operator is immutable")

    @classmethod
    def identity(cls, basis):
        return cls(basis, np.eye(basis.dimension))

    @classmethod
    def zero(cls, basis):
        return cls(basis, np.zeros((basis.dimension, basis.dimension)))

    @property
    def dim(self):
        return self.basis.dimension

    def _check(self, other):
        if not isinstance(other, Operator):
            raise TypeError(f"expected Operator, got {type(other).__name__}")
        if other.basis != self.basis:
            raise BasisMismatchError(
                f"operator bases differ: {self.basis.kind}[{self.dim}] vs "
                f"{other.basis.kind}[{other.dim}]")

    def __add__(self, other):
        self._check(other)
        return Operator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return Operator(self.basis, self.matrix - other.matrix)

    def __neg__(self):
        return Operator(self.basis, -self.matrix)

    def __mul__(self, scalar):
        if not isinstance(scalar, Number):
            return NotImplemented
        return Operator(self.basis, scalar * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, Number):
            return NotImplemented
        return Operator(self.basis, self.matrix / scalar)

    def __matmul__(self, other):
        self._check(other)
        return Operator(self.basis, self.matrix @ other.matrix)

    def dag(self):
        return Operator(self.basis, self.matrix.conj().T)

    def tr(self):
        return complex(np.trace(self.matrix))

    def __eq__(self, other):
        return (isinstance(other, Operator) and other.basis == self.basis
                and np.array_equal(other.matrix, self.matrix))

    __hash__ = None

    def __repr__(self):
        return f"Operator({self.basis.kind}, dim={self.dim})"


def commutator(A, B):
    A._check(B)
    return Operator(A.basis, A.matrix @ B.matrix - B.matrix @ A.matrix)


def adjoint(A):
    return A.dag()


def trace(A):
    return A.tr()


def expectation(A, rho):
    """tr(A rho)."""
    A._check(rho)
    return complex(np.einsum("ij,ji->", A.matrix, rho.matrix))


def is_hermitian(A, tol=HERMITIAN_TOL):
    m = A.matrix if isinstance(A, Operator) else np.asarray(A)
    scale = max(1.0, float(np.linalg.norm(m)))
    return float(np.linalg.norm(m - m.conj().T)) <= tol * scale


def unitary_propagate(H, rho, t):
    """Return exp(-iHt) rho exp(iHt) using the eigendecomposition of H."""
    H._check(rho)
    if not is_hermitian(H):
        raise ValueError("unitary_propagate requires a Hermitian Hamiltonian")
    if t == 0:
        return rho
    h = 0.5 * (H.matrix + H.matrix.conj().T)
    evals, V = np.linalg.eigh(h)
    U = (V * np.exp(-1j * evals * t)) @ V.conj().T
    return Operator(rho.basis, U @ rho.matrix @ U.conj().T)


# -- basis builders ---------------------------------------------------------

def two_level_basis():
    """Pauli operators ``sx, sy, sz`` and identity ``I`` on {|0>, |1>}.

    ``sz|0> = +|0>``.
    """
    b = Basis("two_level", (0, 1))
    return {
        "sx": Operator(b, [[0, 1], [1, 0]]),
        "sy": Operator(b, [[0, -1j], [1j, 0]]),
        "sz": Operator(b, [[1, 0], [0, -1]]),
        "I": Operator.identity(b),
    }


def ring_basis(m_max):
    """Angular-momentum basis m = -m_max..m_max for a particle on a ring.

    Returns ``Lz``, ``cos`` and ``sin`` (of the ring angle) and ``I``.  The
    ladder e^{i theta}|m> = |m+1> is truncated at the edges.
    """
    if int(m_max) != m_max or m_max < 1:
        raise ValueError(f"ring basis needs integer m_max >= 1, got {m_max}")
    m_max = int(m_max)
    ms = tuple(range(-m_max, m_max + 1))
    b = Basis("ring", ms)
    d = len(ms)
    raise_op = np.diag(np.ones(d - 1), -1)  # <m+1|e^{i theta}|m> = 1
    lower = raise_op.T
    return {
        "Lz": Operator(b, np.diag(np.array(ms, dtype=float))),
        "cos": Operator(b, 0.5 * (raise_op + lower)),
        "sin": Operator(b, (raise_op - lower) / 2j),
        "I": Operator.identity(b),
    }


def _ladder(n_max):
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)


def oscillator_basis(n_max, mass=1.0, omega0=1.0):
    """Truncated harmonic-oscillator basis n = 0..n_max.

    ``x`` and ``p`` come from the ladder operators; ``H0`` is
    p^2/2m + m w0^2 x^2/2 built from the truncated matrices, so its
    spectrum is w0 (n + 1/2) except at the top state.
    """
    if int(n_max) != n_max or n_max < 2:
        raise ValueError(f"oscillator basis needs integer n_max >= 2, got {n_max}")
    if not (mass > 0 and omega0 > 0):
        raise ValueError("oscillator mass and frequency must be positive")
    n_max = int(n_max)
    b = Basis("oscillator", tuple(range(n_max + 1)))
    a = _ladder(n_max)
    x = (a + a.T) / math.sqrt(2.0 * mass * omega0)
    p = 1j * math.sqrt(mass * omega0 / 2.0) * (a.T - a)
    kinetic = p @ p / (2.0 * mass)
    potential = 0.5 * mass * omega0 ** 2 * (x @ x)
    return {
        "x": Operator(b, x),
        "p": Operator(b, p),
        "H0": Operator(b, kinetic + potential),
        "kinetic": Operator(b, kinetic),
        "potential": Operator(b, potential),
        "I": Operator.identity(b),
    }


def oscillator2d_basis(n_max, mass=1.0, omega0=1.0):
    """Isotropic planar oscillator truncated at total quanta n_x + n_y <= n_max.

    Labels are ``(N, n_x)`` with N the total quanta.  The truncation keeps
    whole N shells, so ``Lz`` is exact on the retained space.
    """
    if int(n_max) != n_max or n_max < 2:
        raise ValueError(f"oscillator basis needs integer n_max >= 2, got {n_max}")
    if not (mass > 0 and omega0 > 0):
        raise ValueError("oscillator mass and frequency must be positive")
    n_max = int(n_max)
    labels = tuple((N, nx) for N in range(n_max + 1) for nx in range(N + 1))
    index = {lab: i for i, lab in enumerate(labels)}
    d = len(labels)
    ax = np.zeros((d, d))
    ay = np.zeros((d, d))
    for i, (N, nx) in enumerate(labels):
        ny = N - nx
        if nx > 0:
            ax[index[(N - 1, nx - 1)], i] = math.sqrt(nx)
        if ny > 0:
            ay[index[(N - 1, nx)], i] = math.sqrt(ny)
    b = Basis("oscillator2d", labels)
    s = 1.0 / math.sqrt(2.0 * mass * omega0)
    q = math.sqrt(mass * omega0 / 2.0)
    x, y = s * (ax + ax.T), s * (ay + ay.T)
    px, py = 1j * q * (ax.T - ax), 1j * q * (ay.T - ay)
    kinetic = (px @ px + py @ py) / (2.0 * mass)
    potential = 0.5 * mass * omega0 ** 2 * (x @ x + y @ y)
    # x py - y px written with ladder operators stays inside each N shell
    lz = 1j * (ay.T @ ax - ax.T @ ay)
    return {
        "x": Operator(b, x),
        "y": Operator(b, y),
        "px": Operator(b, px),
        "py": Operator(b, py),
        "Lz": Operator(b, lz),
        "H0": Operator(b, kinetic + potential),
        "kinetic": Operator(b, kinetic),
        "potential": Operator(b, potential),
        "I": Operator.identity(b),
    }
