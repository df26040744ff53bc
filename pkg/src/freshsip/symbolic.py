"""Symbolic intervals over the inputs plus fresh variables.

Each row ``i`` of a :class:`SymbolicIntervalFV` encloses one quantity between
two affine functions::

    lower[i] @ v + lower_off[i]  <=  z_i  <=  upper[i] @ v + upper_off[i]

where ``v`` stacks the ``d_0`` network inputs followed by the ``k`` live fresh
variables. Every fresh variable is in turn enclosed by affine bounds over the
inputs alone (the fresh table), which are substituted back in before a
bound is concretized over the input box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch
from .model_io import Hyperrectangle, Network

__all__ = [
    "ConcreteBounds",
    "SymbolicIntervalFV",
    "affine_transform",
    "concretize",
    "concretize_split",
    "init_identity",
    "input_bounds",
    "interval_arithmetic_pass",
    "linear_range",
    "split_ranges",
    "substitute_to_inputs",
]


@dataclass(frozen=True, eq=False)
class ConcreteBounds:
    lo: np.ndarray
    hi: np.ndarray

    def __len__(self):
        return self.lo.size

    def contains(self, values, tol=0.0) -> bool:
        values = np.asarray(values)
        return bool(np.all(values >= self.lo - tol) and np.all(values <= self.hi + tol))

    def intersect(self, other: "ConcreteBounds") -> "ConcreteBounds":
        return ConcreteBounds(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def __eq__(self, other):
        if not isinstance(other, ConcreteBounds):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)


@dataclass(frozen=True, eq=False)
class SymbolicIntervalFV:
    """Symbolic interval with fresh variables.

    Attributes
    ----------
    lower, upper : ndarray, shape (n, d_0 + k)
        Coefficients of the lower and upper bound functions.
    lower_off, upper_off : ndarray, shape (n,)
        Constant terms.
    fresh_lower, fresh_upper : ndarray, shape (k, d_0)
        Input-only bound functions of each fresh variable.
    fresh_lower_off, fresh_upper_off : ndarray, shape (k,)
    fresh_range : ndarray, shape (k, 2)
        Concrete range of each fresh variable at introduction time. Only the
        selection heuristics look at it; concretization always substitutes.
    domain : Hyperrectangle
    """

    lower: np.ndarray
    lower_off: np.ndarray
    upper: np.ndarray
    upper_off: np.ndarray
    fresh_lower: np.ndarray
    fresh_lower_off: np.ndarray
    fresh_upper: np.ndarray
    fresh_upper_off: np.ndarray
    fresh_range: np.ndarray
    domain: Hyperrectangle

    @property
    def n_rows(self) -> int:
        return self.lower.shape[0]

    @property
    def input_dim(self) -> int:
        return self.domain.dim

    @property
    def var_count(self) -> int:
        return self.fresh_lower.shape[0]

    def with_bounds(self, lower, lower_off, upper, upper_off) -> "SymbolicIntervalFV":
        """Same fresh table and domain, new bound functions."""
        return SymbolicIntervalFV(
            lower, lower_off, upper, upper_off,
            self.fresh_lower, self.fresh_lower_off,
            self.fresh_upper, self.fresh_upper_off,
            self.fresh_range, self.domain,
        )


def init_identity(domain: Hyperrectangle) -> SymbolicIntervalFV:
    d = domain.dim
    eye = np.eye(d)
    zeros = np.zeros(d)
    return SymbolicIntervalFV(
        eye, zeros, eye.copy(), zeros.copy(),
        np.zeros((0, d)), np.zeros(0),
        np.zeros((0, d)), np.zeros(0),
        np.zeros((0, 2)), domain,
    )


def affine_transform(W, b, s: SymbolicIntervalFV) -> SymbolicIntervalFV:
    """Push ``s`` through ``y = W z + b``; exact, no overapproximation."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != s.n_rows or b.shape != (W.shape[0],):
        raise DimensionMismatch(
            f"cannot apply W{W.shape}, b{b.shape} to a symbolic interval with {s.n_rows} rows"
        )
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    lower = Wp @ s.lower + Wn @ s.upper
    upper = Wp @ s.upper + Wn @ s.lower
    lower_off = Wp @ s.lower_off + Wn @ s.upper_off + b
    upper_off = Wp @ s.upper_off + Wn @ s.lower_off + b
    return s.with_bounds(lower, lower_off, upper, upper_off)


def _substitute(coef, off, s: SymbolicIntervalFV, maximize: bool):
    """Eliminate the fresh variables of ``coef @ v + off``.

    For an input-only function that is below (``maximize=False``) or above
    (``maximize=True``) the original for every admissible value of the fresh
    variables, a positive coefficient takes the fresh variable's lower bound
    when minimizing and its upper bound when maximizing; negative ones the
    opposite.
    """
    d = s.input_dim
    if s.var_count == 0:
        return coef, off
    F = coef[:, d:]
    Fp, Fn = np.maximum(F, 0.0), np.minimum(F, 0.0)
    if maximize:
        Fp, Fn = Fn, Fp
    # Fp takes the fresh lower bounds, Fn the fresh upper bounds
    out = coef[:, :d] + Fp @ s.fresh_lower + Fn @ s.fresh_upper
    out_off = off + Fp @ s.fresh_lower_off + Fn @ s.fresh_upper_off
    return out, out_off


def input_bounds(s: SymbolicIntervalFV):
    """Input-only bound functions ``(lower, lower_off, upper, upper_off)`` of every row."""
    lower, lower_off = _substitute(s.lower, s.lower_off, s, maximize=False)
    upper, upper_off = _substitute(s.upper, s.upper_off, s, maximize=True)
    return lower, lower_off, upper, upper_off


def substitute_to_inputs(s: SymbolicIntervalFV) -> SymbolicIntervalFV:
    """Replace every fresh variable by its stored input-space bounds.

    A positive coefficient in a lower bound takes the fresh variable's lower
    bound, a negative one its upper bound; symmetrically for upper bounds.
    The result has no fresh variables.
    """
    if s.var_count == 0:
        return s
    lower, lower_off, upper, upper_off = input_bounds(s)
    d = s.input_dim
    return SymbolicIntervalFV(
        lower, lower_off, upper, upper_off,
        np.zeros((0, d)), np.zeros(0), np.zeros((0, d)), np.zeros(0),
        np.zeros((0, 2)), s.domain,
    )


def linear_range(coef, off, box: Hyperrectangle):
    """Row-wise minimum and maximum of ``coef @ x + off`` over ``box``."""
    pos = np.maximum(coef, 0.0)
    neg = np.minimum(coef, 0.0)
    lo = off + pos @ box.lo + neg @ box.hi
    hi = off + pos @ box.hi + neg @ box.lo
    return lo, hi


def split_ranges(s: SymbolicIntervalFV):
    """Ranges of the lower and of the upper bound function of every row.

    Returns ``(l_l, l_u, u_l, u_u)``: ``lower_i(v)`` lies in ``[l_l, l_u]`` and
    ``upper_i(v)`` in ``[u_l, u_u]`` for every input in the domain and every
    admissible value of the fresh variables. With fresh variables present the
    inner ends (``l_u`` and ``u_l``) need the opposite substitution from the
    one used by :func:`input_bounds`.
    """
    lower, lower_off, upper, upper_off = input_bounds(s)
    l_l, _ = linear_range(lower, lower_off, s.domain)
    _, u_u = linear_range(upper, upper_off, s.domain)
    _, l_u = linear_range(*_substitute(s.lower, s.lower_off, s, maximize=True), s.domain)
    u_l, _ = linear_range(*_substitute(s.upper, s.upper_off, s, maximize=False), s.domain)
    return l_l, l_u, u_l, u_u


def concretize(s: SymbolicIntervalFV) -> ConcreteBounds:
    lower, lower_off, upper, upper_off = input_bounds(s)
    lo, _ = linear_range(lower, lower_off, s.domain)
    _, hi = linear_range(upper, upper_off, s.domain)
    return ConcreteBounds(lo, hi)


def concretize_split(s: SymbolicIntervalFV, row: int, which: str) -> ConcreteBounds:
    """Range of a single bound function (``which`` is ``"lower"`` or ``"upper"``)."""
    if not 0 <= row < s.n_rows:
        raise IndexError(f"row {row} out of range for {s.n_rows} rows")
    if which not in ("lower", "upper"):
        raise ValueError(f"which must be 'lower' or 'upper', got {which!r}")
    l_l, l_u, u_l, u_u = split_ranges(s)
    lo, hi = (l_l, l_u) if which == "lower" else (u_l, u_u)
    return ConcreteBounds(lo[row : row + 1], hi[row : row + 1])


def interval_arithmetic_pass(net: Network, box: Hyperrectangle) -> list[ConcreteBounds]:
    """Plain interval propagation; pre-activation bounds for every layer."""
    if box.dim != net.input_dim:
        raise DimensionMismatch(f"box has {box.dim} dimensions, network expects {net.input_dim}")
    lo, hi = box.lo, box.hi
    out = []
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
        z_lo = Wp @ lo + Wn @ hi + b
        z_hi = Wp @ hi + Wn @ lo + b
        out.append(ConcreteBounds(z_lo, z_hi))
        if l < net.n_layers - 1:
            lo, hi = np.maximum(z_lo, 0.0), np.maximum(z_hi, 0.0)
    return out
