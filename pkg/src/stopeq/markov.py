"""Finite Markov chains and truncated binomial lattices."""

from __future__ import annotations

import enum
import numbers
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from stopeq.errors import (
    DimensionMismatch,
    DuplicateLabel,
    IndexOutOfRange,
    NegativeEntry,
    NonStochasticRow,
    ValidationError,
)

ROW_SUM_TOL = 1e-12


class Boundary(str, enum.Enum):
    """How the two edge states of a truncated lattice behave."""

    ABSORB_TOP_ZERO = "absorb_top_zero"
    REFLECT = "reflect"


@dataclass(frozen=True, eq=False)
class Chain:
    """A validated, immutable finite Markov chain.

    ``labels`` identify states in reports and configs; ``coords`` is the
    numeric coordinate of each state (price level, integer label, ...).
    Use :func:`build_finite_chain` or :func:`build_lattice_chain` rather than
    calling the constructor directly.
    """

    labels: tuple
    coords: np.ndarray
    transition: np.ndarray

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: Hashable) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            # "2" on the command line should find the state labelled 2
            for i, lab in enumerate(self.labels):
                if str(lab) == str(label):
                    return i
            raise IndexOutOfRange(f"unknown state label {label!r}") from None

    def __repr__(self):
        return f"Chain(n={self.n}, labels={list(self.labels)!r})"


@dataclass(frozen=True)
class LatticeSpec:
    """Binomial lattice ``{u**i : -window <= i <= window}``."""

    u: float
    p: float
    window: int
    boundary: Boundary = Boundary.ABSORB_TOP_ZERO

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if not (np.isfinite(self.u) and self.u > 1):
            raise ValidationError(f"lattice up-factor must exceed 1, got {self.u}")
        if not 0 < self.p < 1:
            raise ValidationError(f"lattice up-probability must lie in (0, 1), got {self.p}")
        if isinstance(self.window, bool) or not isinstance(self.window, numbers.Integral) or self.window < 1:
            raise ValidationError(f"lattice window must be an integer >= 1, got {self.window!r}")


def _coordinate(label, position):
    if isinstance(label, numbers.Real) and not isinstance(label, bool):
        return float(label)
    try:
        return float(label)
    except (TypeError, ValueError):
        return float(position)


def build_finite_chain(labels: Sequence[Hashable], matrix, coords=None) -> Chain:
    """Validate ``matrix`` as a row-stochastic kernel over ``labels``.

    Numeric labels double as state coordinates unless ``coords`` is given;
    non-numeric labels get their position as coordinate.
    """
    labels = tuple(labels)
    P = np.array(matrix, dtype=float)
    n = len(labels)
    if n < 1:
        raise DimensionMismatch("a chain needs at least one state")
    if P.ndim != 2 or P.shape != (n, n):
        raise DimensionMismatch(f"transition matrix has shape {P.shape}, expected ({n}, {n})")
    seen = set()
    for lab in labels:
        if lab in seen:
            raise DuplicateLabel(f"duplicate state label {lab!r}")
        seen.add(lab)
    if not np.all(np.isfinite(P)):
        raise NonStochasticRow("transition matrix contains non-finite entries")
    neg = np.argwhere(P < 0)
    if len(neg):
        i, j = neg[0]
        raise NegativeEntry(f"entry ({labels[i]!r}, {labels[j]!r}) is negative: {P[i, j]}")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if len(bad):
        i = bad[0]
        raise NonStochasticRow(f"row {labels[i]!r} sums to {float(sums[i])!r}, not 1")
    if coords is None:
        coords = [_coordinate(lab, k) for k, lab in enumerate(labels)]
    coords = np.array(coords, dtype=float)
    if coords.shape != (n,):
        raise DimensionMismatch(f"expected {n} coordinates, got shape {coords.shape}")
    P.flags.writeable = False
    coords.flags.writeable = False
    return Chain(labels=labels, coords=coords, transition=P)


def build_lattice_chain(spec: LatticeSpec) -> Chain:
    """Chain on ``u**-m, ..., u**m`` moving up with probability ``p``.

    Labels are the strings ``"u^i"``; coordinates are the price levels.
    """
    m, p = spec.window, spec.p
    q = 1.0 - p
    n = 2 * m + 1
    P = np.zeros((n, n))
    for k in range(1, n - 1):
        P[k, k + 1] = p
        P[k, k - 1] = q
    if spec.boundary is Boundary.ABSORB_TOP_ZERO:
        P[0, 0] = 1.0
        P[-1, -1] = 1.0
    else:
        P[0, 0], P[0, 1] = q, p
        P[-1, -1], P[-1, -2] = p, q
    exps = np.arange(-m, m + 1)
    labels = [f"u^{i}" for i in exps]
    return build_finite_chain(labels, P, coords=spec.u ** exps.astype(float))


def step_distribution(chain: Chain, state: int) -> np.ndarray:
    """One-step distribution out of ``state`` (a fresh copy)."""
    if isinstance(state, bool) or not isinstance(state, numbers.Integral) or not 0 <= state < chain.n:
        raise IndexOutOfRange(f"state index {state!r} outside 0..{chain.n - 1}")
    return chain.transition[state].copy()


def conditional_mean(chain: Chain) -> np.ndarray:
    """E[X_1 | X_0 = x] in coordinates, for every state x."""
    return chain.transition @ chain.coords


def is_submartingale(chain: Chain, rows=None, atol=1e-12) -> bool:
    """Whether the coordinate process drifts weakly upward on ``rows``."""
    rows = np.arange(chain.n) if rows is None else np.asarray(rows)
    drift = conditional_mean(chain)[rows] - chain.coords[rows]
    return bool(np.all(drift >= -atol * np.maximum(1.0, np.abs(chain.coords[rows]))))
