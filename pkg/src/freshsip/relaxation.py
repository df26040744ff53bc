"""ReLU relaxation, fresh-variable heuristics and the symbolic forward pass."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .model_io import Hyperrectangle, Network
from .symbolic import (
    ConcreteBounds,
    SymbolicIntervalFV,
    affine_transform,
    concretize,
    init_identity,
    input_bounds,
    linear_range,
    split_ranges,
)

__all__ = [
    "FreshVarConfig",
    "LayerStatus",
    "NeuronState",
    "PassResult",
    "forward_pass",
    "introduce_fresh",
    "layer_budget",
    "layer_status",
    "relu_relax",
    "select_fresh",
]

# Below this width the upper bound function is treated as a constant.
DEGENERATE_WIDTH = 1e-12

BUDGET_RULES = ("dpneurifyfv", "neurodiff", "none")
PRIORITY_RULES = ("range", "earliest")


class NeuronState(IntEnum):
    FIXED_ZERO = 0
    FIXED_ACTIVE = 1
    UNSTABLE = 2


@dataclass(frozen=True)
class FreshVarConfig:
    """How many fresh variables to introduce, and where.

    Parameters
    ----------
    max_total : int
        Cap on fresh variables over the whole pass.
    lam : float
        Per-layer fraction, ``floor(lam * n_l)`` variables at most.
    budget_rule : {"dpneurifyfv", "neurodiff", "none"}
        ``"neurodiff"`` allows ``floor(N_l / l)`` variables in hidden layer
        ``l`` with ``N_l`` unstable neurons and ignores ``lam``.
    priority_rule : {"range", "earliest"}
        Widest pre-activation range first, or lowest neuron index first.
    forbid_last_hidden : bool
        No fresh variables in the last hidden layer (``dpneurifyfv`` only).
    exclude_fixed_zero : bool
        Count only fixed-active and unstable neurons in ``n_l``.
    """

    max_total: int = 20
    lam: float = 0.5
    budget_rule: str = "dpneurifyfv"
    priority_rule: str = "range"
    forbid_last_hidden: bool = True
    exclude_fixed_zero: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.max_total < 0:
            raise ValueError(f"max_total must be non-negative, got {self.max_total}")
        if self.budget_rule not in BUDGET_RULES:
            raise ValueError(f"budget_rule must be one of {BUDGET_RULES}, got {self.budget_rule!r}")
        if self.priority_rule not in PRIORITY_RULES:
            raise ValueError(f"priority_rule must be one of {PRIORITY_RULES}, got {self.priority_rule!r}")

    @classmethod
    def neurodiff(cls, max_total=20) -> "FreshVarConfig":
        return cls(max_total=max_total, lam=1.0, budget_rule="neurodiff",
                   priority_rule="earliest", forbid_last_hidden=False, exclude_fixed_zero=False)

    @classmethod
    def disabled(cls) -> "FreshVarConfig":
        return cls(max_total=0, lam=0.0, budget_rule="none")


@dataclass(frozen=True, eq=False)
class LayerStatus:
    """Per-neuron state of one hidden layer.

    ``bounds`` is the (possibly refined) pre-activation enclosure ``[l, u]``,
    with ``l`` the minimum of the lower bound function and ``u`` the maximum
    of the upper one. ``lower_range``/``upper_range`` are the ranges of the
    lower and upper bound functions used by the separate relaxations.
    """

    state: np.ndarray
    bounds: ConcreteBounds
    lower_range: ConcreteBounds
    upper_range: ConcreteBounds

    @property
    def unstable(self) -> np.ndarray:
        return self.state == NeuronState.UNSTABLE

    @property
    def fixed_zero(self) -> np.ndarray:
        return self.state == NeuronState.FIXED_ZERO

    @property
    def fixed_active(self) -> np.ndarray:
        return self.state == NeuronState.FIXED_ACTIVE


@dataclass(frozen=True, eq=False)
class PassResult:
    """Everything a symbolic forward pass over one region produces.

    ``bounds`` holds pre-activation bounds for every layer, the output layer
    last. ``statuses`` has one entry per hidden layer. ``lower_coef`` and
    ``upper_coef`` are the input-only coefficient matrices of each hidden
    layer's pre-activation bounds.
    """

    output: SymbolicIntervalFV
    bounds: list
    statuses: list
    lower_coef: list
    upper_coef: list
    fresh_placements: list = field(default_factory=list)

    @property
    def output_bounds(self) -> ConcreteBounds:
        return self.bounds[-1]

    @property
    def n_fresh(self) -> int:
        return len(self.fresh_placements)

    @property
    def n_unstable(self) -> int:
        return int(sum(st.unstable.sum() for st in self.statuses))


def layer_status(s: SymbolicIntervalFV, prior: ConcreteBounds | None = None) -> LayerStatus:
    """Classify the rows of a pre-activation symbolic interval.

    With ``prior`` (a valid enclosure from a parent region) the concrete
    bounds are intersected with it before classification.
    """
    return _classify(*split_ranges(s), prior)


def _classify(l_l, l_u, u_l, u_u, prior) -> LayerStatus:
    if prior is not None:
        l_l = np.maximum(l_l, prior.lo)
        u_u = np.minimum(u_u, prior.hi)
    state = np.full(l_l.shape, NeuronState.UNSTABLE, dtype=np.int8)
    state[l_l >= 0.0] = NeuronState.FIXED_ACTIVE
    state[u_u <= 0.0] = NeuronState.FIXED_ZERO
    return LayerStatus(
        state=state,
        bounds=ConcreteBounds(l_l, u_u),
        lower_range=ConcreteBounds(l_l, l_u),
        upper_range=ConcreteBounds(u_l, u_u),
    )


def relu_relax(s: SymbolicIntervalFV, status: LayerStatus) -> SymbolicIntervalFV:
    """Propagate ``s`` through an elementwise ReLU.

    Lower and upper bound functions are relaxed separately, each over its own
    concrete range. The upper one goes through the chord from ``(u_l, 0)`` to
    ``(u_u, u_u)``; the lower one becomes either itself or zero, whichever
    leaves less area.
    """
    L, Lo = s.lower.copy(), s.lower_off.copy()
    U, Uo = s.upper.copy(), s.upper_off.copy()
    l_l, l_u = status.lower_range.lo, status.lower_range.hi
    u_l, u_u = status.upper_range.lo, status.upper_range.hi

    zero = status.fixed_zero
    unstable = status.unstable

    # upper bound function: keep where it never goes negative
    chord = unstable & (u_l < 0.0)
    width = u_u - u_l
    flat = chord & (width < DEGENERATE_WIDTH)
    slope_rows = chord & ~flat
    slope = np.where(slope_rows, u_u / np.where(slope_rows, width, 1.0), 1.0)
    U[slope_rows] *= slope[slope_rows, None]
    Uo[slope_rows] = slope[slope_rows] * (Uo[slope_rows] - u_l[slope_rows])
    U[flat] = 0.0
    Uo[flat] = np.maximum(u_u[flat], 0.0)

    # lower bound function: zero when it is never positive, or when the
    # negative part dominates
    drop = unstable & (l_l < 0.0) & ((l_u <= 0.0) | (l_u < -l_l))

    L[zero | drop] = 0.0
    Lo[zero | drop] = 0.0
    U[zero] = 0.0
    Uo[zero] = 0.0
    return s.with_bounds(L, Lo, U, Uo)


def layer_budget(cfg: FreshVarConfig, layer_index: int, n_hidden: int,
                 status: LayerStatus, remaining_total: int) -> int:
    """Number of fresh variables hidden layer ``layer_index`` (1-based) may get."""
    if remaining_total <= 0 or cfg.budget_rule == "none":
        return 0
    if cfg.budget_rule == "neurodiff":
        n_unstable = int(status.unstable.sum())
        return min(n_unstable // layer_index, remaining_total)
    if cfg.forbid_last_hidden and layer_index == n_hidden:
        return 0
    if cfg.exclude_fixed_zero:
        n_l = int((~status.fixed_zero).sum())
    else:
        n_l = status.state.size
    # guard against 0.29 * 100 = 28.999999999999996
    return min(int(math.floor(cfg.lam * n_l + 1e-9)), remaining_total)


def select_fresh(status: LayerStatus, budget: int, priority_rule: str = "range") -> np.ndarray:
    """Indices of the unstable neurons that receive fresh variables."""
    candidates = np.flatnonzero(status.unstable)
    if budget <= 0 or candidates.size == 0:
        return np.zeros(0, dtype=np.intp)
    if priority_rule == "range":
        width = status.bounds.hi[candidates] - status.bounds.lo[candidates]
        candidates = candidates[np.argsort(-width, kind="stable")]
    elif priority_rule != "earliest":
        raise ValueError(f"unknown priority rule {priority_rule!r}")
    return candidates[:budget]


def introduce_fresh(s: SymbolicIntervalFV, rows) -> SymbolicIntervalFV:
    """Replace the bounds of ``rows`` by new variables ``[x_new, x_new]``.

    The current bounds of those rows are rewritten over the inputs only and
    appended to the fresh table.
    """
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        return s
    d, k, m = s.input_dim, s.var_count, rows.size
    lower, lower_off, upper, upper_off = input_bounds(s)
    new_lower, new_lower_off = lower[rows], lower_off[rows]
    new_upper, new_upper_off = upper[rows], upper_off[rows]
    lo, _ = linear_range(new_lower, new_lower_off, s.domain)
    _, hi = linear_range(new_upper, new_upper_off, s.domain)

    pad = np.zeros((s.n_rows, m))
    L = np.hstack([s.lower, pad])
    U = np.hstack([s.upper, pad.copy()])
    L[rows] = 0.0
    U[rows] = 0.0
    cols = d + k + np.arange(m)
    L[rows, cols] = 1.0
    U[rows, cols] = 1.0
    Lo = s.lower_off.copy()
    Uo = s.upper_off.copy()
    Lo[rows] = 0.0
    Uo[rows] = 0.0

    return SymbolicIntervalFV(
        L, Lo, U, Uo,
        np.vstack([s.fresh_lower, new_lower]),
        np.concatenate([s.fresh_lower_off, new_lower_off]),
        np.vstack([s.fresh_upper, new_upper]),
        np.concatenate([s.fresh_upper_off, new_upper_off]),
        np.vstack([s.fresh_range, np.column_stack([lo, np.maximum(lo, hi)])]),
        s.domain,
    )


def forward_pass(net: Network, box: Hyperrectangle, cfg: FreshVarConfig | None = None,
                 prior_bounds: list | None = None) -> PassResult:
    """One symbolic pass over ``box``.

    ``prior_bounds`` are pre-activation enclosures of every layer that are
    known to hold on ``box`` (typically the parent region's); each layer's
    new bounds are intersected with them, so they never get looser.
    """
    cfg = cfg or FreshVarConfig()
    n_hidden = net.n_layers - 1
    s = init_identity(box)
    bounds, statuses, lower_coef, upper_coef, placements = [], [], [], [], []
    remaining = cfg.max_total

    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        s = affine_transform(W, b, s)
        prior = prior_bounds[l] if prior_bounds is not None else None
        if l == n_hidden:
            out = concretize(s)
            if prior is not None:
                out = out.intersect(prior)
            bounds.append(out)
            break

        lower, _, upper, _ = input_bounds(s)
        lower_coef.append(lower)
        upper_coef.append(upper)
        status = _classify(*split_ranges(s), prior)
        statuses.append(status)
        bounds.append(status.bounds)

        s = relu_relax(s, status)
        budget = layer_budget(cfg, l + 1, n_hidden, status, remaining)
        rows = select_fresh(status, budget, cfg.priority_rule)
        if rows.size:
            s = introduce_fresh(s, rows)
            remaining -= rows.size
            placements.extend((l, int(r)) for r in rows)

    return PassResult(s, bounds, statuses, lower_coef, upper_coef, placements)
