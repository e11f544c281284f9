"""Physical quantities extracted from hierarchy states."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .model import coupling_operators_at
from .operators import Operator

__all__ = [
    "ObservableSpec",
    "parse_observable",
    "reduced_density",
    "population",
    "coherence",
    "expectation_value",
    "dissipaton_moment",
    "coupling_energy",
    "Table",
    "timeseries",
    "write_csv",
    "RunContext",
    "evaluate",
]


def reduced_density(state):
    """The reduced system density matrix (slot 0)."""
    return Operator(state.basis, state.ddos[0])


def population(state, i):
    return complex(state.ddos[0][i, i])


def coherence(state, i, j):
    return complex(state.ddos[0][i, j])


def expectation_value(state, op):
    """tr(op rho_S)."""
    return complex(np.einsum("ij,ji->", op.matrix, state.ddos[0]))


def _label(expansion, i, k):
    if isinstance(i, str):
        if i not in expansion.components:
            raise KeyError(f"component {i!r} not in bath components "
                           f"{expansion.components}")
        i = expansion.components.index(i)
    if not (0 <= i < expansion.size and 0 <= k < expansion.K):
        raise KeyError(f"dissipaton label ({i}, {k}) outside the expansion")
    return i * expansion.K + k


def dissipaton_moment(state, expansion, i, k):
    """<f_{ik}> = tr rho_{e_a} for the singly occupied label a = (i, k)."""
    a = _label(expansion, i, k)
    if state.catalog.L < 1:
        raise KeyError("catalog has no first tier")
    slot = state.catalog.unit(a)
    return complex(np.trace(state.ddo(slot).matrix))


def coupling_energy(state, t, model, frame, field_frame, expansion,
                    return_imag=False):
    """<H_SE> = -sum_{i,k} tr[Q_i(t) rho_{(i,k)}], real part.

    With ``return_imag`` the imaginary residual is returned as well.
    """
    if state.catalog.L < 1:
        return (0.0, 0.0) if return_imag else 0.0
    cs = coupling_operators_at(model, frame, field_frame, t)
    total = 0j
    for i, comp in enumerate(expansion.components):
        ci = model.field_components.index(comp)
        Q = cs.total(ci).matrix
        for k in range(expansion.K):
            rho = state.ddo(state.catalog.unit(i * expansion.K + k)).matrix
            total -= np.einsum("ij,ji->", Q, rho)
    return (total.real, total.imag) if return_imag else total.real


@dataclass(frozen=True)
class ObservableSpec:
    """One column group of a time series.

    kinds: ``population`` (args (i,)), ``coherence`` (i, j), ``expectation``
    (operator name), ``coupling_energy`` and ``dissipaton_moment``
    (component, k).
    """

    kind: str
    args: Tuple = ()

    @property
    def name(self):
        if self.kind == "population":
            return f"population_{self.args[0]}"
        if self.kind == "coherence":
            return f"coherence_{self.args[0]}_{self.args[1]}"
        if self.kind == "expectation":
            return f"expect_{self.args[0]}"
        if self.kind == "coupling_energy":
            return "coupling_energy"
        if self.kind == "dissipaton_moment":
            return f"moment_{self.args[0]}_{self.args[1]}"
        raise ValueError(f"unknown observable kind {self.kind!r}")

    def check(self, dimension, operators=(), components=(), K=None):
        """Raise ValueError when this observable does not fit the run."""
        if self.kind in ("population", "coherence"):
            if any(not 0 <= i < dimension for i in self.args):
                raise ValueError(f"{self.name}: index outside dimension {dimension}")
        elif self.kind == "expectation":
            if self.args[0] not in operators:
                raise ValueError(f"{self.name}: unknown operator {self.args[0]!r}; "
                                 f"available: {sorted(operators)}")
        elif self.kind == "dissipaton_moment":
            comp, k = self.args
            if comp not in components:
                raise ValueError(f"{self.name}: component {comp!r} not coupled")
            if K is not None and not 0 <= k < K:
                raise ValueError(f"{self.name}: term {k} outside 0..{K - 1}")


_PATTERNS = [
    (re.compile(r"population_(\d+)$"), lambda m: ObservableSpec("population", (int(m[1]),))),
    (re.compile(r"coherence_(\d+)_(\d+)$"),
     lambda m: ObservableSpec("coherence", (int(m[1]), int(m[2])))),
    (re.compile(r"expect_(\w+)$"), lambda m: ObservableSpec("expectation", (m[1],))),
    (re.compile(r"coupling_energy$"), lambda m: ObservableSpec("coupling_energy")),
    (re.compile(r"moment_([xyz])_(\d+)$"),
     lambda m: ObservableSpec("dissipaton_moment", (m[1], int(m[2])))),
]


def parse_observable(text):
    """Parse names such as ``population_0``, ``coherence_0_1``,
    ``expect_sz``, ``coupling_energy`` or ``moment_x_0``."""
    for pat, build in _PATTERNS:
        m = pat.match(text)
        if m:
            return build(m)
    raise ValueError(f"cannot parse observable {text!r}")


@dataclass(frozen=True)
class RunContext:
    model: object
    frame: object
    field_frame: object
    expansion: object


def evaluate(spec, state, ctx):
    if spec.kind == "population":
        return population(state, spec.args[0])
    if spec.kind == "coherence":
        return coherence(state, *spec.args)
    if spec.kind == "expectation":
        return expectation_value(state, ctx.model.operators[spec.args[0]])
    if spec.kind == "coupling_energy":
        return complex(coupling_energy(state, state.t, ctx.model, ctx.frame,
                                       ctx.field_frame, ctx.expansion))
    if spec.kind == "dissipaton_moment":
        return dissipaton_moment(state, ctx.expansion, *spec.args)
    raise ValueError(f"unknown observable kind {spec.kind!r}")


@dataclass
class Table:
    names: List[str]
    times: List[float]
    rows: List[List[complex]]

    def column(self, name):
        k = self.names.index(name)
        return np.array([r[k] for r in self.rows])


def timeseries(states, specs, ctx):
    """Evaluate ``specs`` on each state; columns follow the order of ``specs``."""
    table = Table([s.name for s in specs], [], [])
    for st in states:
        table.times.append(st.t)
        table.rows.append([evaluate(s, st, ctx) for s in specs])
    return table


def write_csv(table, path):
    """CSV with header ``t,<name>.re,<name>.im,...`` and 17 significant digits."""
    head = ["t"] + [f"{n}.{p}" for n in table.names for p in ("re", "im")]
    lines = [",".join(head)]
    for t, row in zip(table.times, table.rows):
        vals = ["%.17g" % t]
        for z in row:
            vals.append("%.17g" % z.real)
            vals.append("%.17g" % z.imag)
        lines.append(",".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
