"""Scalar reverse-mode differentiation on a recording tape.

Tracked values wrap a float and a node id; every arithmetic operation
appends one record (parents + local partials) to the owning tape, so a
single backward sweep yields exact derivatives of any scalar result with
respect to the leaf inputs.  This engine is the *verification* route for
the hand-vectorized gradients used by the optimizer and the trainer: it is
deliberately simple and is not meant for bulk number crunching.

The module-level helpers (``exp``, ``sqrt``, ``min_select``, ...) dispatch
on type, so numeric code written against them runs unchanged on plain
floats and on tracked scalars.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


class NumericError(ArithmeticError):
    """A primitive left its numeric domain or produced a non-finite value."""


class Tape:
    """Append-only operation record, topologically ordered.

    A tape is single-threaded during recording and backward; distinct tapes
    are independent and may live on distinct threads.
    """

    __slots__ = ("values", "parents", "partials")

    def __init__(self):
        self.values: list[float] = []
        self.parents: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []

    def __len__(self) -> int:
        return len(self.values)

    def record(self, op: str, value: float, parents=(), partials=()) -> int:
        if not math.isfinite(value):
            raise NumericError(f"{op} produced non-finite value {value!r}")
        self.values.append(value)
        self.parents.append(parents)
        self.partials.append(partials)
        return len(self.values) - 1

    def leaf(self, value: float) -> "AdScalar":
        return AdScalar(self, self.record("leaf", float(value)))

    def backward(self, node: int) -> list[float]:
        """Adjoints of every node with respect to node ``node``."""
        adjoint = [0.0] * len(self.values)
        adjoint[node] = 1.0
        for i in range(node, -1, -1):
            a = adjoint[i]
            if a == 0.0:
                continue
            for parent, partial in zip(self.parents[i], self.partials[i]):
                adjoint[parent] += a * partial
        return adjoint


class AdScalar:
    """A float tracked on a tape.

    Arithmetic records operations eagerly; ``value`` always equals the
    plain numeric result.  Comparisons act on values and return plain
    bools, so branch logic written for floats works unchanged.
    """

    __slots__ = ("tape", "node")

    def __init__(self, tape: Tape, node: int):
        self.tape = tape
        self.node = node

    @property
    def value(self) -> float:
        return self.tape.values[self.node]

    def __repr__(self):
        return f"AdScalar({self.value!r})"

    def _record(self, op, value, parents, partials):
        return AdScalar(self.tape, self.tape.record(op, value, parents, partials))

    def _coerce(self, other):
        """Return (value, node-or-None) for the other operand."""
        if isinstance(other, AdScalar):
            if other.tape is not self.tape:
                raise ValueError("cannot combine scalars from different tapes")
            return other.value, other.node
        return float(other), None

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        ov, on = self._coerce(other)
        if on is None:
            return self._record("add", self.value + ov, (self.node,), (1.0,))
        return self._record("add", self.value + ov, (self.node, on), (1.0, 1.0))

    __radd__ = __add__

    def __sub__(self, other):
        ov, on = self._coerce(other)
        if on is None:
            return self._record("sub", self.value - ov, (self.node,), (1.0,))
        return self._record("sub", self.value - ov, (self.node, on), (1.0, -1.0))

    def __rsub__(self, other):
        ov, _ = self._coerce(other)
        return self._record("sub", ov - self.value, (self.node,), (-1.0,))

    def __mul__(self, other):
        ov, on = self._coerce(other)
        if on is None:
            return self._record("mul", self.value * ov, (self.node,), (ov,))
        return self._record("mul", self.value * ov, (self.node, on), (ov, self.value))

    __rmul__ = __mul__

    def __truediv__(self, other):
        ov, on = self._coerce(other)
        if ov == 0.0:
            raise NumericError("division by zero")
        if on is None:
            return self._record("div", self.value / ov, (self.node,), (1.0 / ov,))
        val = self.value / ov
        return self._record("div", val, (self.node, on), (1.0 / ov, -val / ov))

    def __rtruediv__(self, other):
        ov, _ = self._coerce(other)
        if self.value == 0.0:
            raise NumericError("division by zero")
        val = ov / self.value
        return self._record("div", val, (self.node,), (-val / self.value,))

    def __neg__(self):
        return self._record("neg", -self.value, (self.node,), (-1.0,))

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if exponent == 2:
            return pow2(self)
        return NotImplemented

    # unary methods (numpy ufuncs on object arrays call these by name) ------

    def exp(self):
        try:
            val = math.exp(self.value)
        except OverflowError as err:
            raise NumericError(f"exp overflow at {self.value!r}") from err
        return self._record("exp", val, (self.node,), (val,))

    def sqrt(self):
        if self.value < 0.0:
            raise NumericError(f"sqrt of negative value {self.value!r}")
        val = math.sqrt(self.value)
        # subgradient 0 at the origin; keeps norms of coincident points finite
        partial = 0.0 if val == 0.0 else 0.5 / val
        return self._record("sqrt", val, (self.node,), (partial,))

    def tanh(self):
        val = math.tanh(self.value)
        return self._record("tanh", val, (self.node,), (1.0 - val * val,))

    # comparisons on values --------------------------------------------------

    def __lt__(self, other):
        return self.value < value_of(other)

    def __le__(self, other):
        return self.value <= value_of(other)

    def __gt__(self, other):
        return self.value > value_of(other)

    def __ge__(self, other):
        return self.value >= value_of(other)

    def __eq__(self, other):
        return self.value == value_of(other)

    def __ne__(self, other):
        return self.value != value_of(other)

    __hash__ = object.__hash__

    def __float__(self):
        return self.value


# dispatching helpers --------------------------------------------------------


def value_of(x) -> float:
    """Plain float of a tracked or untracked scalar."""
    if isinstance(x, AdScalar):
        return x.value
    return float(x)


def exp(x):
    if isinstance(x, AdScalar):
        return x.exp()
    return math.exp(x)


def sqrt(x):
    if isinstance(x, AdScalar):
        return x.sqrt()
    if x < 0.0:
        raise NumericError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def tanh(x):
    if isinstance(x, AdScalar):
        return x.tanh()
    return math.tanh(x)


def pow2(x):
    if isinstance(x, AdScalar):
        return x._record("pow2", x.value * x.value, (x.node,), (2.0 * x.value,))
    return x * x


def min_select(a, b):
    """Smaller argument; gradient flows only to the selected one (ties: first)."""
    return a if value_of(a) <= value_of(b) else b


def max_select(a, b):
    """Larger argument; gradient flows only to the selected one (ties: first)."""
    return a if value_of(a) >= value_of(b) else b


def stop_gradient(x):
    """Pass the value through and block the gradient."""
    if isinstance(x, AdScalar):
        return AdScalar(x.tape, x.tape.record("stop_gradient", x.value))
    return x


def hypot(coords) -> float:
    """Euclidean norm of a sequence of generic scalars."""
    total = 0.0
    for c in coords:
        total = total + pow2(c)
    return sqrt(total)


def sigmoid(x):
    """Logistic function, overflow-free via tanh."""
    return 0.5 * (tanh(0.5 * x) + 1.0)


# gradient entry points -------------------------------------------------------


def gradient(f: Callable, params: Sequence[float]) -> np.ndarray:
    """Derivatives of ``f(params)`` via one forward record and one backward sweep.

    ``f`` receives a list of tracked scalars and must return a single scalar
    built from them (a plain float return means the output is constant).
    """
    tape = Tape()
    xs = [tape.leaf(float(p)) for p in params]
    out = f(xs)
    if not isinstance(out, AdScalar):
        if not math.isfinite(float(out)):
            raise NumericError(f"objective returned non-finite value {out!r}")
        return np.zeros(len(xs))
    adjoint = tape.backward(out.node)
    return np.array([adjoint[x.node] for x in xs])


def finite_difference(f: Callable, params: Sequence[float], h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``f`` evaluated on plain floats."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for i in range(params.size):
        hi = params.copy()
        lo = params.copy()
        hi[i] += h
        lo[i] -= h
        grad[i] = (float(f(list(hi))) - float(f(list(lo)))) / (2.0 * h)
    return grad


def grad_check(f: Callable, params: Sequence[float], h: float = 1e-5) -> float:
    """Max relative error between the tape gradient and central differences.

    The relative error uses ``max(1, |analytic|)`` as denominator, so small
    components are judged on absolute error.
    """
    if h <= 0.0:
        raise ValueError("finite-difference step must be positive")
    analytic = gradient(f, params)
    numeric = finite_difference(f, params, h)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
