"""Discount curves and the decreasing-impatience checks.

All curves satisfy ``delta(0) == 1`` and decrease strictly to zero.  The
table family stores an explicit prefix ``delta(0..L)`` and continues it
geometrically with the ratio of its last two entries.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from stopeq.errors import ValidationError

DI_TOL = 1e-15
STRICT_RATIO_RTOL = 1e-12


class Family(str, enum.Enum):
    EXPONENTIAL = "exponential"
    HYPERBOLIC = "hyperbolic"
    GENERALIZED_HYPERBOLIC = "generalized_hyperbolic"
    QUASI_HYPERBOLIC = "quasi_hyperbolic"
    PSEUDO_EXPONENTIAL = "pseudo_exponential"
    TABLE = "table"


_PARAMS = {
    Family.EXPONENTIAL: ("beta",),
    Family.HYPERBOLIC: ("beta",),
    Family.GENERALIZED_HYPERBOLIC: ("beta", "k"),
    Family.QUASI_HYPERBOLIC: ("beta", "rho"),
    Family.PSEUDO_EXPONENTIAL: ("lam", "rho1", "rho2"),
    Family.TABLE: (),
}


@dataclass(frozen=True)
class DiscountCurve:
    """A discount function on the nonnegative integers.

    Parameters per family:

    * ``exponential(beta)``: ``(1 + beta) ** -t``
    * ``hyperbolic(beta)``: ``1 / (1 + beta t)``
    * ``generalized_hyperbolic(beta, k)``: ``(1 + beta t) ** -k``
    * ``quasi_hyperbolic(beta, rho)``: ``1`` at 0, ``beta rho**t`` after
    * ``pseudo_exponential(lam, rho1, rho2)``:
      ``lam exp(-rho1 t) + (1 - lam) exp(-rho2 t)``
    * ``table(values)``: explicit prefix, geometric tail
    """

    family: Family
    params: dict = field(default_factory=dict)
    values: tuple = ()

    def __post_init__(self):
        try:
            fam = Family(self.family)
        except ValueError:
            raise ValidationError(f"unknown discount family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        params = {k: float(v) for k, v in dict(self.params).items()}
        expected = set(_PARAMS[fam])
        if set(params) != expected:
            raise ValidationError(
                f"{fam.value} discount needs parameters {sorted(expected)}, got {sorted(params)}")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        self._validate()

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items())), self.values))

    def _validate(self):
        fam, pr = self.family, self.params
        if any(not math.isfinite(v) for v in pr.values()):
            raise ValidationError("discount parameters must be finite")
        if fam in (Family.EXPONENTIAL, Family.HYPERBOLIC) and pr["beta"] <= 0:
            raise ValidationError("beta must be positive")
        if fam is Family.GENERALIZED_HYPERBOLIC and (pr["beta"] <= 0 or pr["k"] <= 0):
            raise ValidationError("beta and k must be positive")
        if fam is Family.QUASI_HYPERBOLIC and not (0 < pr["beta"] <= 1 and 0 < pr["rho"] < 1):
            raise ValidationError("quasi-hyperbolic needs beta in (0, 1] and rho in (0, 1)")
        if fam is Family.PSEUDO_EXPONENTIAL and not (
                0 < pr["lam"] < 1 and pr["rho1"] > 0 and pr["rho2"] > 0):
            raise ValidationError("pseudo-exponential needs lam in (0, 1) and positive rates")
        if fam is Family.TABLE:
            v = self.values
            if len(v) < 2:
                raise ValidationError("a discount table needs at least delta(0) and delta(1)")
            if v[0] != 1.0:
                raise ValidationError(f"discount table must start at 1, got {v[0]}")
            if not all(math.isfinite(x) and 0 < x <= 1 for x in v):
                raise ValidationError("discount table entries must lie in (0, 1]")
            if any(b >= a for a, b in zip(v, v[1:])):
                raise ValidationError("discount table must be strictly decreasing")
        elif self.values:
            raise ValidationError("only the table family takes explicit values")

    # -- constructors -------------------------------------------------------

    @classmethod
    def exponential(cls, beta=None, *, gamma=None):
        """``exponential(beta=...)`` or ``exponential(gamma=...)`` with ``delta(t) = gamma**t``."""
        if (beta is None) == (gamma is None):
            raise ValidationError("give exactly one of beta or gamma")
        if gamma is not None:
            if not 0 < gamma < 1:
                raise ValidationError("gamma must lie in (0, 1)")
            beta = 1.0 / gamma - 1.0
        return cls(Family.EXPONENTIAL, {"beta": beta})

    @classmethod
    def hyperbolic(cls, beta):
        return cls(Family.HYPERBOLIC, {"beta": beta})

    @classmethod
    def generalized_hyperbolic(cls, beta, k):
        return cls(Family.GENERALIZED_HYPERBOLIC, {"beta": beta, "k": k})

    @classmethod
    def quasi_hyperbolic(cls, beta, rho):
        return cls(Family.QUASI_HYPERBOLIC, {"beta": beta, "rho": rho})

    @classmethod
    def pseudo_exponential(cls, lam, rho1, rho2):
        return cls(Family.PSEUDO_EXPONENTIAL, {"lam": lam, "rho1": rho1, "rho2": rho2})

    @classmethod
    def table(cls, values):
        return cls(Family.TABLE, {}, tuple(values))

    # -- evaluation ---------------------------------------------------------

    def __call__(self, t):
        return delta(self, t)

    def array(self, t_max: int) -> np.ndarray:
        """``delta(0), ..., delta(t_max)`` as a float array."""
        return _delta_vec(self, np.arange(t_max + 1, dtype=float))

    @property
    def tail_ratio(self) -> float:
        if self.family is not Family.TABLE:
            raise AttributeError("tail_ratio is only defined for table curves")
        return self.values[-1] / self.values[-2]

    def to_dict(self) -> dict:
        if self.family is Family.TABLE:
            return {"type": "table", "values": list(self.values)}
        return {"family": self.family.value, "params": dict(self.params)}


def _delta_vec(curve: DiscountCurve, t: np.ndarray) -> np.ndarray:
    fam, pr = curve.family, curve.params
    if fam is Family.EXPONENTIAL:
        return np.exp(-t * math.log1p(pr["beta"]))
    if fam is Family.HYPERBOLIC:
        return 1.0 / (1.0 + pr["beta"] * t)
    if fam is Family.GENERALIZED_HYPERBOLIC:
        return (1.0 + pr["beta"] * t) ** -pr["k"]
    if fam is Family.QUASI_HYPERBOLIC:
        return np.where(t == 0, 1.0, pr["beta"] * pr["rho"] ** t)
    if fam is Family.PSEUDO_EXPONENTIAL:
        lam = pr["lam"]
        return lam * np.exp(-pr["rho1"] * t) + (1 - lam) * np.exp(-pr["rho2"] * t)
    vals = np.asarray(curve.values)
    last = len(vals) - 1
    inside = np.minimum(t, last).astype(int)
    tail = vals[-1] * curve.tail_ratio ** np.maximum(t - last, 0)
    return np.where(t <= last, vals[inside], tail)


def delta(curve: DiscountCurve, t: int) -> float:
    """Discount factor ``delta(t)`` for a nonnegative integer ``t``."""
    if t < 0:
        raise ValidationError(f"discount time must be nonnegative, got {t}")
    return float(_delta_vec(curve, np.array([float(t)]))[0])


@dataclass(frozen=True)
class DIReport:
    holds: bool
    first_violation: tuple | None
    horizon: int
    strict: bool = False

    def to_dict(self):
        return {"holds": self.holds,
                "first_violation": list(self.first_violation) if self.first_violation else None,
                "horizon": self.horizon}


def check_DI(curve: DiscountCurve, horizon: int = 200) -> DIReport:
    """Check ``delta(i) delta(j) <= delta(i + j)`` for ``i + j <= horizon``.

    Reports the lexicographically smallest violating ``(i, j)``.
    """
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    d = curve.array(horizon)
    for i in range(horizon + 1):
        j = np.arange(horizon - i + 1)
        bad = np.flatnonzero(d[i] * d[j] > d[i + j] + DI_TOL)
        if len(bad):
            return DIReport(False, (i, int(j[bad[0]])), horizon)
    return DIReport(True, None, horizon)


def check_strict_DI(curve: DiscountCurve, horizon: int = 200, strict: bool = True) -> DIReport:
    """Check that ``i -> delta(i + j) / delta(i)`` increases for every ``j >= 1``.

    With ``strict=False`` only a nondecreasing ratio is required, which is
    what quasi-hyperbolic curves satisfy past ``i = 0``.  A violation
    ``(i, j)`` means the ratio at ``i + 1`` fails to exceed the one at ``i``.
    Ratios are compared with a relative slack of 1e-12 so that exponential
    curves (constant ratios) fail the strict test deterministically.
    """
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    d = curve.array(horizon)
    first = None
    for j in range(1, horizon + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = d[j:] / d[: horizon + 1 - j]
        if len(r) < 2:
            continue
        step = np.diff(r)
        slack = STRICT_RATIO_RTOL * np.abs(r[:-1])
        bad = (step <= slack) if strict else (step < -slack)
        bad &= np.isfinite(step)
        idx = np.flatnonzero(bad)
        if len(idx):
            cand = (int(idx[0]), j)
            if first is None or cand < first:
                first = cand
    return DIReport(first is None, first, horizon, strict=strict)
