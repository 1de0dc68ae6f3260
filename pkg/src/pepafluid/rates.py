"""Finite and passive rate values.

A passive rate ``w*infty`` is unspecified and defers to its cooperation
partner.  Ordering and arithmetic follow the usual PEPA rules: every finite
rate is smaller than every passive one, passive weights add, the ratio of two
passive rates is the ratio of their weights and ``0 * infty = 0``.
"""

from dataclasses import dataclass
from functools import total_ordering


@total_ordering
@dataclass(frozen=True)
class RateValue:
    """A finite positive rate or a passive rate with a positive weight.

    Parameters
    ----------
    value : float
        Rate (finite) or weight (passive).  Must be positive.
    passive : bool
        True for ``value * infty``.
    """

    value: float
    passive: bool = False

    def __post_init__(self):
        if not self.value > 0:
            kind = "passive weight" if self.passive else "rate"
            raise ValueError(f"{kind} must be positive, got {self.value!r}")

    @classmethod
    def finite(cls, value):
        return cls(float(value), False)

    @classmethod
    def infty(cls, weight=1.0):
        return cls(float(weight), True)

    def __lt__(self, other):
        if not isinstance(other, RateValue):
            return NotImplemented
        if self.passive != other.passive:
            return not self.passive
        return self.value < other.value

    def __add__(self, other):
        if not isinstance(other, RateValue):
            return NotImplemented
        if self.passive != other.passive:
            raise ValueError("cannot add a finite rate to a passive rate")
        return RateValue(self.value + other.value, self.passive)

    def ratio(self, other):
        """Return ``self / other`` for two rates of the same kind."""
        if self.passive != other.passive:
            raise ValueError("ratio of a finite and a passive rate is undefined")
        return self.value / other.value

    def scale(self, x):
        """Multiply by a nonnegative population ``x``.

        Returns ``0.0`` (a plain float) when ``x == 0``, which encodes
        ``0 * infty = 0``; otherwise a RateValue of the same kind.
        """
        if x < 0:
            raise ValueError("population must be nonnegative")
        if x == 0:
            return 0.0
        return RateValue(self.value * x, self.passive)

    def __str__(self):
        if self.passive:
            return "infty" if self.value == 1 else f"{_num(self.value)}*infty"
        return _num(self.value)


def _num(v):
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def rate_min(values):
    """Minimum over scaled apparent rates.

    Parameters
    ----------
    values : iterable of RateValue or float
        Entries are either RateValue (a positive scaled rate) or ``0.0``
        (zero population, including ``0 * infty``).

    Returns
    -------
    RateValue or float
        ``0.0`` if any entry is zero; otherwise the least entry under the
        finite-before-passive order.
    """
    best = None
    for v in values:
        if not isinstance(v, RateValue):
            if v == 0:
                return 0.0
            v = RateValue.finite(v)
        if best is None or v < best:
            best = v
    if best is None:
        raise ValueError("rate_min of an empty sequence")
    return best
