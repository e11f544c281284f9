"""Dissipaton density operators and their equation of motion.

Dissipaton labels are a = i * K + k for spatial component i (in the order of
the bath expansion's components) and expansion term k.  With X_i = -Q_i the
system part of H_SE = -sum_i Q_i A_i, the equation of motion reads

    d rho_n/dt = -i[H_S, rho_n] - (sum_a n_a gamma_a) rho_n
                 - i sum_a [X_i(a), rho_{n+a}]
                 - i sum_a n_a (A_a rho_{n-a} - rho_{n-a} B_a)

with A_a = sum_j eta_{i j k} X_j and B_a = sum_j conj(eta_{i j kbar}) X_j.
The hierarchy is truncated at total occupation L.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, List, Optional

import numpy as np

from .errors import ConfigurationError, DivergenceError, ResourceBudgetError
from .model import (coupling_operators_at, is_time_independent,
                    system_hamiltonian_at)
from .operators import Basis, Operator, is_hermitian

__all__ = [
    "IndexCatalog",
    "enumerate_indices",
    "HierarchyState",
    "initial_hierarchy",
    "HierarchyEngine",
    "deom_rhs",
    "Trajectory",
    "propagate",
    "scale_factors",
    "rescale",
    "conjugate_slots",
    "conjugacy_residual",
    "save_checkpoint",
    "load_checkpoint",
    "catalog_size",
    "state_bytes",
]

STABILITY_LIMIT = 2.5
SUPEROP_MAX_DIM = 8


def catalog_size(M, L):
    return math.comb(M + L, L)


def state_bytes(M, L, d):
    """Approximate working memory of a propagation (state plus RK4 buffers)."""
    return 7 * catalog_size(M, L) * d * d * 16


class IndexCatalog:
    """Occupation vectors with total <= L in graded lexicographic order.

    ``plus[s, a]`` and ``minus[s, a]`` hold the slot of n +/- e_a, or
    ``size`` when that neighbour lies outside the catalog.
    """

    def __init__(self, M, L):
        self.M = int(M)
        self.L = int(L)
        rows = []
        for tier in range(self.L + 1):
            block = []
            for combo in combinations_with_replacement(range(self.M), tier):
                occ = [0] * self.M
                for a in combo:
                    occ[a] += 1
                block.append(tuple(occ))
            block.sort()
            rows.extend(block)
        self.indices = np.array(rows, dtype=np.int64).reshape(len(rows), self.M)
        self.indices.setflags(write=False)
        self._slot = {r: s for s, r in enumerate(rows)}
        self.tiers = self.indices.sum(axis=1)
        N = len(rows)
        plus = np.full((N, self.M), N, dtype=np.int64)
        minus = np.full((N, self.M), N, dtype=np.int64)
        for s, r in enumerate(rows):
            occ = list(r)
            for a in range(self.M):
                occ[a] += 1
                plus[s, a] = self._slot.get(tuple(occ), N)
                occ[a] -= 2
                if occ[a] >= 0:
                    minus[s, a] = self._slot[tuple(occ)]
                occ[a] += 1
        self.plus = plus
        self.minus = minus

    @property
    def size(self):
        return self.indices.shape[0]

    def __len__(self):
        return self.size

    def slot(self, occupation):
        """Slot of an occupation vector; KeyError when outside the catalog."""
        return self._slot[tuple(int(x) for x in occupation)]

    def __contains__(self, occupation):
        return tuple(int(x) for x in occupation) in self._slot

    def index(self, slot):
        return tuple(int(x) for x in self.indices[slot])

    def unit(self, a):
        """Slot of the singly occupied index e_a."""
        occ = [0] * self.M
        occ[a] = 1
        return self.slot(occ)


def enumerate_indices(M, L, max_slots=None):
    """Build the catalog for M labels truncated at tier L.

    Raises :class:`ResourceBudgetError` (carrying the size) when the
    catalog would exceed ``max_slots``.
    """
    if M < 1 or L < 0:
        raise ValueError(f"need M >= 1 and L >= 0, got M={M}, L={L}")
    size = catalog_size(M, L)
    if max_slots is not None and size > max_slots:
        raise ResourceBudgetError(
            f"hierarchy with M={M}, L={L} has {size} slots, budget allows "
            f"{max_slots}", size)
    return IndexCatalog(M, L)


@dataclass
class HierarchyState:
    """All DDOs at one time.

    ``ddos`` has shape (N, d, d); slot 0 is the reduced density matrix.
    Time is ``origin + step * dt`` during propagation.  When ``scaled`` is
    set the DDOs are stored multiplied by the weights of :func:`rescale`
    computed from ``factors``.
    """

    catalog: IndexCatalog
    basis: Basis
    ddos: np.ndarray
    t: float = 0.0
    step: int = 0
    origin: float = 0.0
    scaled: bool = False
    factors: Optional[np.ndarray] = None

    def copy(self):
        return HierarchyState(self.catalog, self.basis, self.ddos.copy(), self.t,
                              self.step, self.origin, self.scaled,
                              None if self.factors is None else self.factors.copy())

    def ddo(self, slot):
        """DDO at ``slot`` in the unscaled representation."""
        m = self.ddos[slot]
        if self.scaled:
            m = m / _slot_weights(self.catalog, self.factors)[slot]
        return Operator(self.basis, m)

    def unscaled(self):
        """(N, d, d) array of DDOs in the unscaled representation."""
        if not self.scaled:
            return self.ddos
        w = _slot_weights(self.catalog, self.factors)
        return self.ddos / w[:, None, None]


def initial_hierarchy(rho0, catalog, tol=1e-10):
    """Factorized initial condition: slot 0 holds ``rho0``, all others zero."""
    m = rho0.matrix
    if not is_hermitian(rho0, tol):
        raise ValueError("initial density matrix must be Hermitian")
    tr = np.trace(m)
    if abs(tr - 1.0) > tol:
        raise ValueError(f"initial density matrix must have unit trace, got {tr}")
    if np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T))) < -tol:
        raise ValueError("initial density matrix must be positive semidefinite")
    d = rho0.dim
    ddos = np.zeros((catalog.size, d, d), dtype=complex)
    ddos[0] = m
    return HierarchyState(catalog, rho0.basis, ddos)


# -- scaling -----------------------------------------------------------------

def scale_factors(expansion):
    """Per-label scale |eta_{i i k}|; zero moduli fall back to 1 with a warning."""
    K, n = expansion.K, expansion.size
    s = np.empty(n * K)
    for i in range(n):
        for k in range(K):
            s[i * K + k] = abs(expansion.coefficients[k, i, i])
    zero = s == 0.0
    if np.any(zero):
        warnings.warn(f"labels {np.flatnonzero(zero).tolist()} have zero diagonal "
                      f"coefficient; scaling disabled for them", RuntimeWarning)
        s[zero] = 1.0
    return s


def _slot_weights(catalog, factors):
    """prod_a (n_a! s_a^{n_a})^{-1/2} per slot."""
    n = catalog.indices
    logw = np.zeros(catalog.size)
    for a in range(catalog.M):
        na = n[:, a]
        logw -= 0.5 * (np.array([math.lgamma(x + 1) for x in na]) + na * math.log(factors[a]))
    return np.exp(logw)


def rescale(state, expansion, direction="forward"):
    """Switch between the unscaled and scaled DDO representations.

    ``forward`` multiplies each DDO by prod_a (n_a! s_a^{n_a})^{-1/2};
    ``inverse`` undoes it.  Slot 0 is unchanged.
    """
    if direction == "forward":
        if state.scaled:
            raise ValueError("state is already scaled")
        s = scale_factors(expansion)
        w = _slot_weights(state.catalog, s)
        out = state.copy()
        out.ddos = state.ddos * w[:, None, None]
        out.scaled, out.factors = True, s
        return out
    if direction == "inverse":
        if not state.scaled:
            raise ValueError("state is not scaled")
        out = state.copy()
        out.ddos = state.unscaled().copy()
        out.scaled, out.factors = False, None
        return out
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


# -- conjugacy --------------------------------------------------------------

def conjugate_slots(catalog, expansion):
    """Slot of n-bar for every slot n, where n-bar swaps (i, k) <-> (i, kbar)."""
    K = expansion.K
    perm_labels = np.array([i * K + expansion.conjugate[k]
                            for i in range(expansion.size) for k in range(K)])
    if len(perm_labels) != catalog.M:
        raise ConfigurationError("catalog label count does not match expansion")
    out = np.empty(catalog.size, dtype=np.int64)
    for s in range(catalog.size):
        n = catalog.indices[s]
        nbar = np.empty_like(n)
        nbar[perm_labels] = n
        out[s] = catalog.slot(nbar)
    return out


def conjugacy_residual(state, expansion):
    """max_n ||rho_n^+ - rho_nbar||_F over the unscaled DDOs."""
    perm = conjugate_slots(state.catalog, expansion)
    rho = state.unscaled()
    diff = np.conj(np.swapaxes(rho, 1, 2)) - rho[perm]
    return float(np.max(np.linalg.norm(diff, axis=(1, 2))))


# -- engine ------------------------------------------------------------------

def _num_threads():
    raw = os.environ.get("DEOM_NUM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"DEOM_NUM_THREADS must be an integer, got {raw!r}")


class HierarchyEngine:
    """Evaluates the hierarchy right-hand side for one model and bath.

    Parameters
    ----------
    model, frame, field_frame
        System description; H_S(t) and Q_i(t) are re-evaluated at each call
        unless the frame makes them time independent.
    expansion : BathExpansion
        Its components must be field components of the model.
    catalog : IndexCatalog
        Must have M = len(components) * K labels.
    scaled : bool
        Propagate the rescaled DDOs.
    filter_tol : float, optional
        Slots whose norm is below this at the start of a step act as zero
        sources during that step.
    threads : int, optional
        Worker threads (default from ``DEOM_NUM_THREADS``, else 1).
    """

    def __init__(self, model, frame, field_frame, expansion, catalog,
                 scaled=False, filter_tol=None, threads=None):
        comps = expansion.components
        missing = [c for c in comps if c not in model.field_components]
        if missing:
            raise ConfigurationError(
                f"bath components {missing} are not field components of the "
                f"model {model.field_components}")
        K, n = expansion.K, len(comps)
        if catalog.M != n * K:
            raise ConfigurationError(
                f"catalog has M={catalog.M} labels, expansion needs {n * K}")
        self.model, self.frame, self.field_frame = model, frame, field_frame
        self.expansion, self.catalog = expansion, catalog
        self.d = model.dimension
        self.K, self.ncomp = K, n
        self.comp_index = [model.field_components.index(c) for c in comps]
        self.scaled = bool(scaled)
        self.filter_tol = filter_tol
        self.threads = threads or _num_threads()
        self.time_independent = is_time_independent(frame, field_frame)
        self._cache, self._cache_t = None, None
        # steady spin about a fixed axis leaves H_S constant since R^T n = n
        rot = frame.rotation
        self._static_H = (rot.mode == "constant_axis" and not callable(rot.omega)
                          and frame.translation.mode in ("none", "boost"))
        self._H = None

        M = catalog.M
        idx = catalog.indices.astype(float)
        gam = np.array([expansion.exponents[a % K] for a in range(M)])
        self.damp = idx @ gam
        self.factors = scale_factors(expansion) if self.scaled else None
        if self.scaled:
            s = self.factors
            self.up_coef = np.sqrt((idx + 1.0) * s)
            self.down_coef = np.sqrt(idx / s)
        else:
            self.up_coef = np.ones_like(idx)
            self.down_coef = idx
        # superoperators pay off only when they are built once
        small = self.d <= SUPEROP_MAX_DIM
        self.backend = "superop" if small and self.time_independent else "matrix"
        # labels with no occupation anywhere never source tier-down terms
        self.active_down = [a for a in range(M) if np.any(idx[:, a] > 0)]

    # operators at time t -----------------------------------------------------

    def operators_at(self, t):
        """(H, X list, A list, B list) as (d, d) arrays at time t."""
        if self._cache is not None and (self.time_independent or self._cache_t == t):
            return self._cache
        if self._H is not None:
            H = self._H
        else:
            H = system_hamiltonian_at(self.model, self.frame, t).matrix
            if self._static_H:
                self._H = H
        eye = np.eye(self.d)
        if self.model.charge == 0.0:
            # an uncharged particle does not couple, whatever the frame does
            X_op = [np.zeros((self.d, self.d), dtype=complex)] * self.ncomp
            X_full = X_op
        else:
            cs = coupling_operators_at(self.model, self.frame, self.field_frame, t)
            X_op = [-cs.operator_parts[ci].matrix for ci in self.comp_index]
            X_full = [X_op[i] - cs.scalar_parts[ci] * eye
                      for i, ci in enumerate(self.comp_index)]
        eta = self.expansion.coefficients
        conj = self.expansion.conjugate
        A, B = [], []
        for i in range(self.ncomp):
            for k in range(self.K):
                A.append(sum(eta[k, i, j] * X_full[j] for j in range(self.ncomp)))
                B.append(sum(np.conj(eta[conj[k], i, j]) * X_full[j]
                             for j in range(self.ncomp)))
        ops = (H, X_op, A, B)
        if self.backend == "superop":
            I = np.eye(self.d)
            left = lambda Y: np.kron(Y, I)
            right = lambda Y: np.kron(I, Y.T)
            Lh = (-1j * (left(H) - right(H))).T.copy()
            C = [(-1j * (left(X) - right(X))).T.copy() for X in X_op]
            D = [(-1j * (left(a) - right(b))).T.copy() for a, b in zip(A, B)]
            ops = (Lh, C, D)
        # RK4 evaluates the midpoint twice, so keep the last time as well
        self._cache, self._cache_t = ops, t
        return ops

    # right-hand side -------------------------------------------------------

    def _rows(self, src, ops, lo, hi, out):
        N, K, d = self.catalog.size, self.K, self.d
        plus = self.catalog.plus[lo:hi]
        minus = self.catalog.minus[lo:hi]
        own = src[lo:hi]
        damp = self.damp[lo:hi, None]
        if self.backend == "superop":
            Lh, C, D = ops
            res = own @ Lh - damp * own
            if self.catalog.L > 0:
                for i in range(self.ncomp):
                    S = 0
                    for k in range(K):
                        a = i * K + k
                        S = S + self.up_coef[lo:hi, a, None] * src[plus[:, a]]
                    res += S @ C[i]
                for a in self.active_down:
                    T = self.down_coef[lo:hi, a, None] * src[minus[:, a]]
                    res += T @ D[a]
            out[lo:hi] = res
            return
        H, X, A, B = ops
        m = lambda arr: arr.reshape(-1, d, d)
        own3 = m(own)
        res = -1j * (H @ own3 - own3 @ H) - damp[:, :, None] * own3
        if self.catalog.L > 0:
            for i in range(self.ncomp):
                S = 0
                for k in range(K):
                    a = i * K + k
                    S = S + self.up_coef[lo:hi, a, None, None] * m(src[plus[:, a]])
                res += -1j * (X[i] @ S - S @ X[i])
            for a in self.active_down:
                T = self.down_coef[lo:hi, a, None, None] * m(src[minus[:, a]])
                res += -1j * (A[a] @ T - T @ B[a])
        out[lo:hi] = res.reshape(hi - lo, d * d)

    def rhs(self, V, t, mask=None):
        """Derivative of the padded flat state ``V`` (shape (N + 1, d^2)) at t.

        Row N of ``V`` must be zero.  ``mask`` (bool, length N) marks slots
        that act as sources; unmarked slots are treated as zero.
        """
        N = self.catalog.size
        src = V
        if mask is not None:
            src = V.copy()
            src[:N][~mask] = 0.0
        ops = self.operators_at(t)
        out = np.empty((N, self.d * self.d), dtype=complex)
        if self.threads <= 1 or N < 2 * self.threads:
            self._rows(src, ops, 0, N, out)
        else:
            bounds = np.linspace(0, N, self.threads + 1).astype(int)
            with ThreadPoolExecutor(self.threads) as pool:
                list(pool.map(lambda lh: self._rows(src, ops, lh[0], lh[1], out),
                              zip(bounds[:-1], bounds[1:])))
        return out

    def stability_number(self, dt):
        Hm = system_hamiltonian_at(self.model, self.frame, 0.0).matrix
        hnorm = float(np.linalg.norm(Hm, 2))
        gmax = float(np.max(np.abs(self.expansion.exponents))) if self.K else 0.0
        return dt * max(self.catalog.L * gmax, 2.0 * hnorm)


def deom_rhs(state, t, model, frame, field_frame, expansion):
    """Per-slot derivative matrices (N, d, d) of an unscaled state at time t."""
    if state.ddos.shape[1] != model.dimension:
        raise ValueError("state dimension does not match the model")
    eng = HierarchyEngine(model, frame, field_frame, expansion, state.catalog,
                          scaled=state.scaled, threads=1)
    N, d = state.catalog.size, model.dimension
    V = np.zeros((N + 1, d * d), dtype=complex)
    V[:N] = state.ddos.reshape(N, d * d)
    return eng.rhs(V, t).reshape(N, d, d)


# -- propagation --------------------------------------------------------------

@dataclass
class Trajectory:
    """Snapshots emitted by :func:`propagate`."""

    times: List[float] = field(default_factory=list)
    states: List[HierarchyState] = field(default_factory=list)
    values: List[object] = field(default_factory=list)
    final: Optional[HierarchyState] = None


def propagate(engine, state, t_end, dt, stride=1, observe=None, store=True,
              include_start=True, divergence_bound=1e8,
              checkpoint_every=None, checkpoint_fn=None):
    """Fixed-step RK4 propagation from ``state`` to ``t_end``.

    Snapshots are taken whenever the absolute step count is a multiple of
    ``stride``.  ``observe(state)`` is evaluated on each snapshot; with
    ``store`` the snapshot states are kept as well.  Time is computed as
    ``origin + step * dt`` so that a resumed run retraces the uninterrupted
    one exactly.  ``checkpoint_fn(state)`` is called every
    ``checkpoint_every`` steps.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if state.scaled != engine.scaled:
        raise ValueError("state and engine disagree on scaling")
    stab = engine.stability_number(dt)
    if stab > STABILITY_LIMIT:
        warnings.warn(f"dt * max(L |gamma|, 2 ||H||) = {stab:.3g} exceeds "
                      f"{STABILITY_LIMIT}; RK4 may be unstable", RuntimeWarning)
    N, d = engine.catalog.size, engine.d
    traj = Trajectory()
    cur = state.copy()
    if engine.scaled:
        cur.factors = engine.factors
    V = np.zeros((N + 1, d * d), dtype=complex)
    V[:N] = cur.ddos.reshape(N, d * d)
    n_steps = int(round((t_end - cur.t) / dt))

    def snapshot():
        cur.ddos = V[:N].reshape(N, d, d).copy()
        snap = cur.copy()
        traj.times.append(snap.t)
        if store:
            traj.states.append(snap)
        if observe is not None:
            traj.values.append(observe(snap))

    if include_start and cur.step % stride == 0:
        snapshot()
    tiers = engine.catalog.tiers
    for _ in range(n_steps):
        t = cur.origin + cur.step * dt
        mask = None
        if engine.filter_tol:
            mask = np.linalg.norm(V[:N], axis=1) >= engine.filter_tol
            mask[0] = True
        k1 = engine.rhs(V, t, mask)
        W = V.copy()
        W[:N] = V[:N] + 0.5 * dt * k1
        k2 = engine.rhs(W, t + 0.5 * dt, mask)
        W[:N] = V[:N] + 0.5 * dt * k2
        k3 = engine.rhs(W, t + 0.5 * dt, mask)
        W[:N] = V[:N] + dt * k3
        k4 = engine.rhs(W, t + dt, mask)
        V[:N] += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        cur.step += 1
        cur.t = cur.origin + cur.step * dt
        peak = np.max(np.abs(V[:N]), axis=1)
        bad = ~np.isfinite(peak) | (peak > divergence_bound)
        if np.any(bad):
            slot = int(np.flatnonzero(bad)[0])
            raise DivergenceError(
                f"DDO at slot {slot} (tier {int(tiers[slot])}) exceeded "
                f"{divergence_bound:g} at t={cur.t}", int(tiers[slot]), slot, cur.t)
        if cur.step % stride == 0:
            snapshot()
        if checkpoint_fn is not None and checkpoint_every and cur.step % checkpoint_every == 0:
            cur.ddos = V[:N].reshape(N, d, d).copy()
            checkpoint_fn(cur.copy())
    cur.ddos = V[:N].reshape(N, d, d).copy()
    traj.final = cur
    return traj


# -- checkpoints --------------------------------------------------------------

def _encode_label(x):
    return list(x) if isinstance(x, tuple) else x


def _decode_label(x):
    return tuple(x) if isinstance(x, list) else x


def save_checkpoint(state, path, dt, config=None):
    """Write ``state`` as JSON with DDOs as row-major [re, im] pairs."""
    flat = state.ddos.reshape(-1)
    doc = {
        "format": "deom-checkpoint",
        "version": 1,
        "M": state.catalog.M,
        "L": state.catalog.L,
        "basis": {"kind": state.basis.kind,
                  "labels": [_encode_label(x) for x in state.basis.labels]},
        "t": state.t,
        "step": state.step,
        "origin": state.origin,
        "dt": float(dt),
        "scaled": state.scaled,
        "factors": None if state.factors is None else [float(x) for x in state.factors],
        "ddos": [[float(z.real), float(z.imag)] for z in flat],
        "config": config,
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Return ``(state, dt, config)`` from a checkpoint file."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "deom-checkpoint":
        raise ValueError(f"{path} is not a hierarchy checkpoint")
    catalog = IndexCatalog(doc["M"], doc["L"])
    basis = Basis(doc["basis"]["kind"],
                  tuple(_decode_label(x) for x in doc["basis"]["labels"]))
    d = basis.dimension
    pairs = np.array(doc["ddos"], dtype=float).reshape(-1, 2)
    ddos = np.empty(len(pairs), dtype=complex)
    ddos.real, ddos.imag = pairs[:, 0], pairs[:, 1]
    ddos = ddos.reshape(catalog.size, d, d)
    factors = None if doc["factors"] is None else np.array(doc["factors"])
    state = HierarchyState(catalog, basis, ddos, doc["t"], doc["step"],
                           doc["origin"], doc["scaled"], factors)
    return state, doc["dt"], doc["config"]
