"""Spectral densities, the fluctuation-dissipation theorem and exponential
decompositions of bath correlation functions.

A spectral density is stored as a sum of terms ``f(w) * c`` where ``f`` is a
scalar odd shape function and ``c`` a real symmetric matrix over the coupled
spatial components.  The correlation function

    C_ij(t) = (1/pi) int dw e^{-iwt} J_ij(w) / (1 - e^{-beta w})

is approximated by ``sum_k eta_ijk exp(-gamma_k t)`` by closing the contour
in the lower half plane, with the Bose function written either as its
Matsubara series or as a Pade pole decomposition.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import QuadratureError, UnsupportedSpectralDensity

__all__ = [
    "Drude",
    "OhmicExponential",
    "LorentzianMode",
    "LorentzPair",
    "Mode",
    "SpectralDensity",
    "SymmetryReport",
    "BathExpansion",
    "FitReport",
    "eval_spectral_density",
    "validate_symmetry",
    "correlation_fdt",
    "bose_poles",
    "matsubara_expansion",
    "pade_expansion",
    "reconstruct_correlation",
    "fit_report",
    "time_reversal_holds",
]

SYMMETRY_TOL = 1e-12
_SUPPORTED = "drude, lorentzian_mode or discrete_modes"


# -- scalar shapes ----------------------------------------------------------

@dataclass(frozen=True)
class Drude:
    """J(w) = 2 lambda gamma w / (w^2 + gamma^2)."""

    lam: float
    gamma: float
    kind = "drude"

    def __post_init__(self):
        if not self.lam >= 0 or not self.gamma > 0:
            raise ValueError("drude needs lambda >= 0 and gamma > 0")

    def __call__(self, w):
        return 2.0 * self.lam * self.gamma * w / (w * w + self.gamma ** 2)

    def over_omega(self, w):
        return 2.0 * self.lam * self.gamma / (w * w + self.gamma ** 2)

    @property
    def high_freq_moment(self):
        """lim w J(w) for w -> infinity."""
        return 2.0 * self.lam * self.gamma

    def lhp_poles(self):
        return [(complex(0.0, -self.gamma), complex(self.lam * self.gamma, 0.0))]


@dataclass(frozen=True)
class OhmicExponential:
    """J(w) = eta w exp(-|w| / w_c)."""

    eta: float
    omega_c: float
    kind = "ohmic_exponential"

    def __post_init__(self):
        if not self.eta >= 0 or not self.omega_c > 0:
            raise ValueError("ohmic_exponential needs eta >= 0 and omega_c > 0")

    def __call__(self, w):
        return self.eta * w * np.exp(-np.abs(w) / self.omega_c)

    def over_omega(self, w):
        return self.eta * np.exp(-np.abs(w) / self.omega_c)

    high_freq_moment = 0.0

    def lhp_poles(self):
        raise UnsupportedSpectralDensity(
            "ohmic_exponential has no closed-form pole structure; use "
            f"{_SUPPORTED} for exponential expansions")


@dataclass(frozen=True)
class LorentzianMode:
    """Brownian-oscillator density 2 lambda w0^2 gamma w / ((w^2 - w0^2)^2 + gamma^2 w^2)."""

    lam: float
    omega0: float
    gamma: float
    kind = "lorentzian_mode"

    def __post_init__(self):
        if not self.lam >= 0 or not self.omega0 > 0 or not self.gamma > 0:
            raise ValueError("lorentzian_mode needs lambda >= 0, omega0 > 0, gamma > 0")

    def _den(self, w):
        return (w * w - self.omega0 ** 2) ** 2 + (self.gamma * w) ** 2

    def __call__(self, w):
        return 2.0 * self.lam * self.omega0 ** 2 * self.gamma * w / self._den(w)

    def over_omega(self, w):
        return 2.0 * self.lam * self.omega0 ** 2 * self.gamma / self._den(w)

    high_freq_moment = 0.0

    def lhp_poles(self):
        g, w0 = self.gamma, self.omega0
        disc = w0 * w0 - 0.25 * g * g
        if disc > 0:
            z = math.sqrt(disc)
            poles = [complex(z, -0.5 * g), complex(-z, -0.5 * g)]
        elif disc < 0:
            s = math.sqrt(-disc)
            poles = [complex(0.0, -(0.5 * g - s)), complex(0.0, -(0.5 * g + s))]
        else:
            raise UnsupportedSpectralDensity(
                "critically damped lorentzian_mode has a double pole; perturb "
                "gamma or omega0 slightly")
        num = 2.0 * self.lam * w0 ** 2 * g
        out = []
        for p in poles:
            dden = 4.0 * p * (p * p - w0 ** 2) + 2.0 * g * g * p
            out.append((p, num * p / dden))
        return out


@dataclass(frozen=True)
class LorentzPair:
    """Broadened delta pair w/((x - wk)^2 + w^2) - w/((x + wk)^2 + w^2)."""

    frequency: float
    width: float
    kind = "lorentz_pair"

    def __post_init__(self):
        if not self.frequency > 0 or not self.width > 0:
            raise ValueError("mode frequency and width must be positive")

    def __call__(self, w):
        a, g = self.frequency, self.width
        return g / ((w - a) ** 2 + g * g) - g / ((w + a) ** 2 + g * g)

    def over_omega(self, w):
        a, g = self.frequency, self.width
        return 4.0 * a * g / (((w - a) ** 2 + g * g) * ((w + a) ** 2 + g * g))

    high_freq_moment = 0.0

    def lhp_poles(self):
        a, g = self.frequency, self.width
        return [(complex(a, -g), 0.5j), (complex(-a, -g), -0.5j)]


@dataclass(frozen=True)
class Mode:
    """A field mode with frequency, weight g^2 and polarization vectors."""

    frequency: float
    weight: float
    polarizations: Tuple[Tuple[float, ...], ...] = ((1.0,),)


# -- spectral density --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Matrix-valued spectral density ``J_ij(w) = sum_terms f(w) c_ij``.

    Use the constructors :meth:`isotropic`, :meth:`composite` and
    :meth:`discrete_modes`.  ``components`` names the spatial components
    the matrix indices refer to.
    """

    kind: str
    components: Tuple[str, ...]
    terms: Tuple[Tuple[object, np.ndarray], ...]

    def __post_init__(self):
        n = len(self.components)
        if n == 0:
            raise ValueError("spectral density needs at least one component")
        for _, c in self.terms:
            if c.shape != (n, n):
                raise ValueError("term matrix does not match component count")
            if not np.array_equal(c, c.T) or np.iscomplexobj(c):
                raise ValueError("term matrices must be real symmetric")

    @property
    def size(self):
        return len(self.components)

    @classmethod
    def isotropic(cls, shape, components=("x",)):
        n = len(components)
        return cls(shape.kind, tuple(components), ((shape, np.eye(n)),))

    @classmethod
    def composite(cls, entries, components=("x", "y", "z")):
        """Matrix of scalar shapes; ``entries[(i, j)]`` fills J_ij and J_ji."""
        n = len(components)
        terms = []
        seen = set()
        for (i, j), shape in entries.items():
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"entry {key} given twice")
            seen.add(key)
            c = np.zeros((n, n))
            c[i, j] = 1.0
            c[j, i] = 1.0
            terms.append((shape, c))
        return cls("composite", tuple(components), tuple(terms))

    @classmethod
    def discrete_modes(cls, modes, width_factor=1e-2, components=("x",)):
        """Field modes broadened to Lorentzians of width ``width_factor * w_k``."""
        n = len(components)
        terms = []
        for m in modes:
            c = np.zeros((n, n))
            for eps in m.polarizations:
                e = np.asarray(eps, dtype=float)
                if e.shape != (n,):
                    raise ValueError("polarization length must match components")
                c += m.weight * np.outer(e, e)
            c = 0.5 * (c + c.T)
            terms.append((LorentzPair(m.frequency, width_factor * m.frequency), c))
        return cls("discrete_modes", tuple(components), tuple(terms))

    def __call__(self, w):
        return eval_spectral_density(self, w)


def eval_spectral_density(spec, w):
    """J_ij(w) as an (n, n) complex matrix."""
    out = np.zeros((spec.size, spec.size), dtype=complex)
    for shape, c in spec.terms:
        out += shape(w) * c
    return out


@dataclass
class SymmetryReport:
    violations: List[Tuple[int, int, float, str]] = field(default_factory=list)
    max_residual: float = 0.0

    @property
    def passed(self):
        return not self.violations


def validate_symmetry(J, grid, tol=SYMMETRY_TOL, check_positivity=True):
    """Check J*_ij(w) = -J_ij(-w) = J_ji(w) pointwise on ``grid``.

    ``J`` is a :class:`SpectralDensity` or any callable returning a square
    matrix.  With ``check_positivity`` the conditions J_ii(w)/w >= 0 and
    |J_ij|^2 <= J_ii J_jj are checked as well.  Each violation is reported
    as ``(i, j, w, relation)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("symmetry grid must be nonempty")
    f = J if callable(J) else None
    rep = SymmetryReport()
    for w in grid:
        Jp = np.atleast_2d(np.asarray(f(w), dtype=complex))
        Jm = np.atleast_2d(np.asarray(f(-w), dtype=complex))
        n = Jp.shape[0]
        for i in range(n):
            for j in range(n):
                scale = max(1.0, abs(Jp[i, j]))
                r1 = abs(np.conj(Jp[i, j]) + Jm[i, j]) / scale
                r2 = abs(np.conj(Jp[i, j]) - Jp[j, i]) / scale
                rep.max_residual = max(rep.max_residual, r1, r2)
                if r1 > tol:
                    rep.violations.append((i, j, float(w), "conj(J(w)) != -J(-w)"))
                if r2 > tol:
                    rep.violations.append((i, j, float(w), "conj(J_ij) != J_ji"))
        if check_positivity and w != 0.0:
            for i in range(n):
                if (Jp[i, i].real / w) < -tol * max(1.0, abs(Jp[i, i])):
                    rep.violations.append((i, i, float(w), "J_ii/w < 0"))
            for i in range(n):
                for j in range(i + 1, n):
                    bound = Jp[i, i].real * Jp[j, j].real
                    if abs(Jp[i, j]) ** 2 > bound + tol * max(1.0, abs(bound)):
                        rep.violations.append((i, j, float(w), "|J_ij|^2 > J_ii J_jj"))
    return rep


# -- fluctuation-dissipation theorem -----------------------------------------

def _x_coth(beta, w):
    """w coth(beta w / 2), continuous at w = 0."""
    y = 0.5 * beta * w
    if abs(y) < 1e-8:
        return 2.0 / beta * (1.0 + y * y / 3.0)
    return w / math.tanh(y)


# Absolute tolerances tried in turn.  Integrands that decay only like 1/w
# (high temperature) make QAWF give up at 1e-12 but converge one step later.
_EPSABS_LADDER = (1e-12, 1e-11, 1e-10)


def _quad(fn, t, weight, what):
    last = None
    for eps in _EPSABS_LADDER:
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                if weight is None:
                    val, err = quad(fn, 0.0, np.inf, limit=400, epsabs=eps, epsrel=1e-12)
                else:
                    val, err = quad(fn, 0.0, np.inf, weight=weight, wvar=t,
                                    limlst=200, limit=400, epsabs=eps)
            except IntegrationWarning as exc:
                last = exc
                continue
        if not np.isfinite(val):
            raise QuadratureError(f"{what} quadrature returned {val} at t={t}")
        return val, err
    raise QuadratureError(f"{what} quadrature did not converge at t={t}: {last}")


def _scalar_correlation(shape, beta, t):
    sign = 1.0
    if t < 0:
        t, sign = -t, -1.0
    if t == 0.0:
        if shape.high_freq_moment != 0.0:
            raise QuadratureError(
                "Re C(0) diverges: w J(w) does not vanish at high frequency",
                estimate=float("inf"))
        re, _ = _quad(lambda w: shape.over_omega(w) * _x_coth(beta, w), t, None, "Re C")
        im = -0.5 * shape.high_freq_moment
    else:
        re, _ = _quad(lambda w: shape.over_omega(w) * _x_coth(beta, w), t, "cos", "Re C")
        im, _ = _quad(shape, t, "sin", "Im C")
        im = -im
    return complex(re, sign * im) / math.pi


def correlation_fdt(spec, beta, t):
    """Bath correlation function C_ij(t) by quadrature of the FDT integral.

    At t = 0 the imaginary part is the t -> 0+ limit.  A divergent integral
    (e.g. Re C(0) for a Drude density) raises :class:`QuadratureError`.
    Negative times use C(-t) = C(t)^*.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    t = float(t)
    out = np.zeros((spec.size, spec.size), dtype=complex)
    for shape, c in spec.terms:
        out += _scalar_correlation(shape, beta, t) * c
    return out


# -- Bose function poles -----------------------------------------------------

def _pade_xi_eta(N):
    """Poles xi_j and weights eta_j of the [N-1/N] Pade form of the Bose function.

    1/(1 - e^{-x}) ~ 1/x + 1/2 + sum_j 2 eta_j x / (x^2 + xi_j^2).
    """
    if N == 0:
        return np.zeros(0), np.zeros(0)

    def tridiag_roots(m, shift, count):
        b = 1.0 / np.sqrt((2 * m + shift) * (2 * m + shift + 2))
        A = np.diag(b, 1) + np.diag(b, -1)
        ev = np.linalg.eigvalsh(A)[-count:]
        return np.sort(2.0 / ev)

    xi = tridiag_roots(np.arange(1, 2 * N, dtype=float), 1, N)
    if N == 1:
        zeta = np.zeros(0)
    else:
        zeta = tridiag_roots(np.arange(1, 2 * N - 1, dtype=float), 3, N - 1)
    eta = np.empty(N)
    for j in range(N):
        # pair sorted factors so each ratio stays O(1) and large N cannot overflow
        others = np.delete(xi, j)
        ratios = (zeta ** 2 - xi[j] ** 2) / (others ** 2 - xi[j] ** 2)
        eta[j] = 0.5 * N * (2 * N + 3) * np.prod(ratios)
    return xi, eta


def bose_poles(method, K, beta):
    """Lower-half-plane poles -i nu_j of the Bose function and their weights.

    Returns ``(nu, weight)`` with nu_j = xi_j / beta and residue weight_j / beta.
    """
    if K < 0 or int(K) != K:
        raise ValueError(f"K must be a nonnegative integer, got {K}")
    K = int(K)
    if method == "matsubara":
        return 2.0 * math.pi * np.arange(1, K + 1) / beta, np.ones(K)
    if method == "pade":
        xi, eta = _pade_xi_eta(K)
        return xi / beta, eta
    raise ValueError(f"unknown Bose decomposition {method!r}")


# -- expansions ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BathExpansion:
    """C_ij(t) ~ sum_k coefficients[k, i, j] exp(-exponents[k] t).

    ``conjugate[k]`` is the index whose exponent equals conj(exponents[k])
    bitwise.
    """

    beta: float
    exponents: np.ndarray
    coefficients: np.ndarray
    conjugate: Tuple[int, ...]
    components: Tuple[str, ...] = ("x",)
    method: str = "custom"

    def __post_init__(self):
        g = np.array(self.exponents, dtype=complex)
        c = np.array(self.coefficients, dtype=complex)
        n = len(self.components)
        if c.ndim != 3 or c.shape[0] != g.shape[0] or c.shape[1:] != (n, n):
            raise ValueError("coefficients must have shape (K, n, n) matching exponents")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if np.any(g.real <= 0):
            raise ValueError("every exponent needs a positive real part")
        conj = tuple(int(k) for k in self.conjugate)
        if len(conj) != g.shape[0]:
            raise ValueError("conjugate map has the wrong length")
        for k, kb in enumerate(conj):
            if not 0 <= kb < len(conj) or conj[kb] != k:
                raise ValueError("conjugate map must be an involution")
            if g[kb] != np.conj(g[k]):
                raise ValueError(f"exponent {kb} is not the conjugate of exponent {k}")
        g.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "exponents", g)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "conjugate", conj)
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def K(self):
        return self.exponents.shape[0]

    @property
    def size(self):
        return len(self.components)

    def to_json(self):
        n = self.size
        coeffs = {f"{i}{j}": [[float(z.real), float(z.imag)]
                               for z in self.coefficients[:, i, j]]
                  for i in range(n) for j in range(n)}
        doc = {
            "beta": float(self.beta),
            "components": list(self.components),
            "method": self.method,
            "exponents": [[float(z.real), float(z.imag)] for z in self.exponents],
            "coefficients": coeffs,
            "conjugate_map": list(self.conjugate),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        comps = tuple(doc.get("components", ["x"]))
        n = len(comps)
        g = np.array([complex(a, b) for a, b in doc["exponents"]])
        c = np.zeros((len(g), n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                c[:, i, j] = [complex(a, b) for a, b in doc["coefficients"][f"{i}{j}"]]
        return cls(doc["beta"], g, c, tuple(doc["conjugate_map"]), comps,
                   doc.get("method", "custom"))


def _conjugate_map(exponents):
    index = {}
    for k, g in enumerate(exponents):
        index.setdefault(g, k)
    out = []
    for k, g in enumerate(exponents):
        kb = index.get(g.conjugate())
        if kb is None:
            raise ValueError(f"exponent {g} has no conjugate partner")
        out.append(kb)
    return tuple(out)


def _expand(spec, beta, K, method):
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    nu, weight = bose_poles(method, K, beta)
    n = spec.size
    terms: Dict[complex, np.ndarray] = {}

    def add(gamma, coeff):
        if gamma in terms:
            terms[gamma] = terms[gamma] + coeff
        else:
            terms[gamma] = coeff

    pole_lists = []
    for shape, c in spec.terms:
        try:
            poles = shape.lhp_poles()
        except UnsupportedSpectralDensity:
            raise
        except AttributeError:
            raise UnsupportedSpectralDensity(
                f"{spec.kind} has no closed-form pole structure; use {_SUPPORTED}")
        pole_lists.append(poles)
        for p, r in poles:
            bp = beta * p
            # 1 - e^{-beta p} vanishes on the Matsubara axis
            m = bp.imag / (2.0 * math.pi)
            if abs(bp.real) < 1e-12 and abs(m - round(m)) < 1e-12:
                raise UnsupportedSpectralDensity(
                    f"spectral density pole {p} coincides with a Bose pole")
            n_exact = 1.0 / (1.0 - np.exp(-bp))
            gamma = complex(-p.imag, p.real + 0.0)
            add(gamma, (-2j * r * n_exact) * c)
    for j, v in enumerate(nu):
        coeff = np.zeros((n, n), dtype=complex)
        for (shape, c), poles in zip(spec.terms, pole_lists):
            for p, _ in poles:
                if abs(p - complex(0.0, -v)) < 1e-12 * max(1.0, v):
                    raise UnsupportedSpectralDensity(
                        f"spectral density pole {p} coincides with a Bose pole")
            coeff = coeff + (-2j * weight[j] / beta) * shape(complex(0.0, -v)) * c
        add(complex(float(v), 0.0), coeff)
    exps = list(terms)
    coeffs = np.array([terms[g] for g in exps]).reshape(len(exps), n, n)
    return BathExpansion(beta, np.array(exps), coeffs, _conjugate_map(exps),
                         spec.components, method)


def matsubara_expansion(spec, beta, K):
    """Residue expansion with K Matsubara poles nu_n = 2 pi n / beta."""
    return _expand(spec, beta, K, "matsubara")


def pade_expansion(spec, beta, K):
    """Residue expansion with the K-pole Pade decomposition of the Bose function."""
    return _expand(spec, beta, K, "pade")


def reconstruct_correlation(exp, t):
    """sum_k eta_k exp(-gamma_k t); ``t`` scalar gives (n, n), array gives (T, n, n)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("reconstruct_correlation requires t >= 0")
    w = np.exp(-np.multiply.outer(t_arr, exp.exponents))
    return np.tensordot(w, exp.coefficients, axes=([-1], [0]))


def time_reversal_holds(exp):
    """Multiset identity {(g_k^*, eta_k^*)} == {(g_k, eta_kbar^*)} on stored data.

    Values are compared bitwise (with -0.0 identified with +0.0).
    """
    def key(g, eta):
        flat = np.concatenate([[g], eta.ravel()]) + 0.0
        return tuple((float(z.real) + 0.0, float(z.imag) + 0.0) for z in flat)

    lhs = sorted(key(np.conj(g), np.conj(e))
                 for g, e in zip(exp.exponents, exp.coefficients))
    rhs = sorted(key(g, np.conj(exp.coefficients[exp.conjugate[k]]))
                 for k, g in enumerate(exp.exponents))
    return lhs == rhs


@dataclass
class FitReport:
    """Pointwise relative errors ||C_exp(t) - C_fdt(t)||_F / ||C_fdt(t)||_F."""

    window: Tuple[float, float]
    times: np.ndarray
    relative_errors: np.ndarray
    absolute_errors: np.ndarray
    divergent_times: List[float]

    @property
    def max_relative(self):
        return float(np.max(self.relative_errors))

    @property
    def mean_relative(self):
        return float(np.mean(self.relative_errors))

    def as_dict(self):
        return {
            "window": list(self.window),
            "samples": int(len(self.times)),
            "max_relative_error": self.max_relative,
            "mean_relative_error": self.mean_relative,
            "max_absolute_error": float(np.max(self.absolute_errors)),
            "divergent_times": list(self.divergent_times),
        }


def fit_report(exp, spec, window=(0.0, 5.0), samples=101):
    """Compare the expansion with FDT quadrature on an evenly spaced window.

    Samples where the quadrature diverges count as infinite error and are
    listed in ``divergent_times``.
    """
    t0, t1 = float(window[0]), float(window[1])
    times = np.linspace(t0, t1, int(samples))
    rel = np.empty(len(times))
    ab = np.empty(len(times))
    divergent = []
    for k, t in enumerate(times):
        approx = reconstruct_correlation(exp, t)
        try:
            ref = correlation_fdt(spec, exp.beta, t)
        except QuadratureError:
            divergent.append(float(t))
            rel[k] = ab[k] = math.inf
            continue
        ab[k] = float(np.linalg.norm(approx - ref))
        nref = float(np.linalg.norm(ref))
        rel[k] = ab[k] / nref if nref > 0 else (0.0 if ab[k] == 0 else math.inf)
    return FitReport((t0, t1), times, rel, ab, divergent)
