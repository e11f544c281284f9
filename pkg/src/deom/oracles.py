"""Reference solutions that do not use the hierarchy.

These are used by the test suite and by ``deom validate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .bath import reconstruct_correlation
from .frames import FrameTrajectory
from .model import system_hamiltonian_at
from .operators import Operator, is_hermitian

__all__ = [
    "OracleResult",
    "closed_system_oracle",
    "dephasing_function",
    "pure_dephasing_oracle",
    "gibbs_oracle",
]


@dataclass
class OracleResult:
    name: str
    times: np.ndarray
    values: np.ndarray
    tol: float

    def max_deviation(self, other):
        other = np.asarray(other)
        if other.shape != self.values.shape:
            raise ValueError(f"shape {other.shape} does not match oracle "
                             f"{self.values.shape}")
        return float(np.max(np.abs(other - self.values)))

    def compare(self, other):
        return self.max_deviation(other) <= self.tol


def _static_hamiltonian(frame):
    rot, tr = frame.rotation, frame.translation
    static_rot = rot.is_trivial or (rot.mode == "constant_axis" and not callable(rot.omega))
    static_tr = tr.mode in ("none", "boost") or (tr.mode == "constant_accel" and rot.is_trivial)
    return static_rot and static_tr


def _expm_herm(H, t):
    evals, V = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (V * np.exp(-1j * evals * t)) @ V.conj().T


def closed_system_oracle(model, frame, rho0, t_grid, step=1e-4, tol=1e-8):
    """Uncoupled evolution rho(t) = U(t) rho0 U(t)^+ on ``t_grid``.

    For a time-independent H_S the propagator comes from one
    eigendecomposition; otherwise a midpoint product of exponentials with
    step ``step`` is used (second order in the step).
    """
    frame = frame or FrameTrajectory()
    times = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("t_grid must be nondecreasing and start at t >= 0")
    rho = rho0.matrix
    out = np.empty((len(times),) + rho.shape, dtype=complex)
    if _static_hamiltonian(frame):
        H = system_hamiltonian_at(model, frame, 0.0).matrix
        evals, V = np.linalg.eigh(H)
        rho_e = V.conj().T @ rho @ V
        for n, t in enumerate(times):
            ph = np.exp(-1j * evals * t)
            out[n] = V @ (ph[:, None] * rho_e * ph.conj()[None, :]) @ V.conj().T
        return OracleResult("closed_system", times, out, tol)
    U = np.eye(rho.shape[0], dtype=complex)
    t_now = 0.0
    for n, t in enumerate(times):
        steps = int(math.ceil((t - t_now) / step - 1e-9))
        if steps > 0:
            h = (t - t_now) / steps
            for k in range(steps):
                mid = t_now + (k + 0.5) * h
                U = _expm_herm(system_hamiltonian_at(model, frame, mid).matrix, h) @ U
            t_now = t
        out[n] = U @ rho @ U.conj().T
    return OracleResult("closed_system", times, out, tol)


def _g_from_expansion(expansion, t):
    """g(t) = int_0^t (t - s) C(s) ds by quadrature over the expansion."""
    if t == 0.0:
        return 0j
    c = lambda s: complex(reconstruct_correlation(expansion, s)[0, 0])
    kw = dict(limit=400, epsabs=1e-13, epsrel=1e-12)
    re = quad(lambda s: (t - s) * c(s).real, 0.0, t, **kw)[0]
    im = quad(lambda s: (t - s) * c(s).imag, 0.0, t, **kw)[0]
    return complex(re, im)


def _g_from_spectrum(shape, beta, t):
    """g(t) from the spectral density by frequency quadrature.

    Re g = (1/pi) int J coth(beta w/2) (1 - cos wt) / w^2 dw,
    Im g = (1/pi) int J (sin wt - wt) / w^2 dw.
    """
    if t == 0.0:
        return 0j
    W = max(20.0, 60.0 / t)
    kw = dict(limit=2000, epsabs=1e-13, epsrel=1e-12)

    def coth_over(w):
        y = 0.5 * beta * w
        if y < 1e-8:
            return 2.0 / (beta * w)
        return 1.0 / math.tanh(y)

    def re_core(w):
        if w < 1e-6:
            return shape.over_omega(w) * coth_over(w) * w * 0.5 * t * t
        return shape.over_omega(w) * coth_over(w) * (1.0 - math.cos(w * t)) / w

    def im_core(w):
        if w < 1e-4:
            return -shape.over_omega(w) * (w * t) ** 3 / (6.0 * w)
        return shape.over_omega(w) * (math.sin(w * t) - w * t) / w

    re = quad(re_core, 0.0, W, **kw)[0]
    tail = lambda w: shape.over_omega(w) * coth_over(w) / w
    re += quad(tail, W, np.inf, **kw)[0]
    re -= quad(tail, W, np.inf, weight="cos", wvar=t, limlst=200, epsabs=1e-13)[0]
    im = quad(im_core, 0.0, W, **kw)[0]
    im += quad(lambda w: shape.over_omega(w) / w, W, np.inf, weight="sin", wvar=t,
               limlst=200, epsabs=1e-13)[0]
    im -= t * quad(shape.over_omega, W, np.inf, **kw)[0]
    return complex(re, im) / math.pi


def dephasing_function(t_grid, expansion=None, spec=None, beta=None):
    """g(t) = int_0^t (t - s) C(s) ds on ``t_grid``.

    Give either a scalar ``expansion`` or a scalar spectral density
    ``spec`` with inverse temperature ``beta``.
    """
    times = np.asarray(t_grid, dtype=float)
    if expansion is not None:
        if expansion.size != 1:
            raise ValueError("dephasing needs a scalar bath")
        return np.array([_g_from_expansion(expansion, t) for t in times])
    if spec is None or beta is None:
        raise ValueError("give an expansion, or a spectral density and beta")
    if spec.size != 1:
        raise ValueError("dephasing needs a scalar bath")
    out = np.zeros(len(times), dtype=complex)
    for shape, c in spec.terms:
        out += c[0, 0] * np.array([_g_from_spectrum(shape, beta, t) for t in times])
    return out


def pure_dephasing_oracle(omega0, t_grid, expansion=None, spec=None, beta=None,
                          rho01=0.5, q=(1.0, -1.0), hamiltonian=None,
                          coupling=None, tol=1e-4):
    """Exact coherence of a two-level system whose coupling commutes with H_S.

    For H_S = omega0 sz / 2 and coupling eigenvalues ``q = (q0, q1)``

        rho01(t) = rho01(0) exp(-i omega0 t) exp(-(q0 - q1)(q0 g - q1 g^*)),

    which for Q = sz is exp(-Gamma(t)) with Gamma = 4 Re g.  When
    ``hamiltonian`` and ``coupling`` operators are given they must commute.
    """
    if hamiltonian is not None and coupling is not None:
        H, Q = hamiltonian.matrix, coupling.matrix
        if np.linalg.norm(H @ Q - Q @ H) > 1e-12 * max(1.0, np.linalg.norm(H)):
            raise ValueError("pure dephasing requires [H_S, Q] = 0")
        if not (is_hermitian(H) and is_hermitian(Q)):
            raise ValueError("H_S and Q must be Hermitian")
    times = np.asarray(t_grid, dtype=float)
    g = dephasing_function(times, expansion, spec, beta)
    q0, q1 = q
    vals = rho01 * np.exp(-1j * omega0 * times) * np.exp(-(q0 - q1) * (q0 * g - q1 * np.conj(g)))
    return OracleResult("pure_dephasing", times, vals, tol)


def gibbs_oracle(H, beta):
    """exp(-beta H) / tr exp(-beta H) via the eigendecomposition of H."""
    if not is_hermitian(H):
        raise ValueError("gibbs_oracle requires a Hermitian Hamiltonian")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    m = 0.5 * (H.matrix + H.matrix.conj().T)
    evals, V = np.linalg.eigh(m)
    w = np.exp(-beta * (evals - evals[0]))
    w /= w.sum()
    return Operator(H.basis, (V * w) @ V.conj().T)
