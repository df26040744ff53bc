"""Random networks and independent oracles for testing the verifier.

The certified oracle deliberately uses plain interval propagation and exact
affine composition on activation-fixed regions, so it shares no bounding
code with the symbolic engine.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .exceptions import BudgetExceeded
from .model_io import Hyperrectangle, MaxViolation, Network

_LP_TOL = 1e-8

__all__ = ["GenSpec", "certified_opt", "gen_network", "identity_network", "sample_max"]


@dataclass(frozen=True)
class GenSpec:
    """Ranges (inclusive) for random network generation."""

    input_dim: tuple[int, int] = (1, 3)
    hidden_layers: tuple[int, int] = (1, 4)
    width: tuple[int, int] = (1, 10)
    output_dim: tuple[int, int] = (1, 3)
    weight_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "hidden_layers", "width", "output_dim"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} range {lo, hi} is empty or non-positive")
        if self.weight_scale <= 0:
            raise ValueError("weight_scale must be positive")


def gen_network(spec: GenSpec) -> Network:
    """Network with weights and biases uniform in ``[-scale, scale]``."""
    rng = np.random.default_rng(spec.seed)

    def draw(r):
        return int(rng.integers(r[0], r[1] + 1))

    d_in = draw(spec.input_dim)
    n_hidden = draw(spec.hidden_layers)
    sizes = [d_in] + [draw(spec.width) for _ in range(n_hidden)] + [draw(spec.output_dim)]
    s = spec.weight_scale
    weights = [rng.uniform(-s, s, (sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)]
    biases = [rng.uniform(-s, s, sizes[i + 1]) for i in range(len(sizes) - 1)]
    return Network(weights, biases)


def identity_network(dim: int, shift: float = 10.0) -> Network:
    """``y = x`` on ``x >= -shift``, built as ``relu(x + shift) - shift``."""
    eye = np.eye(dim)
    return Network([eye, eye], [np.full(dim, shift), np.full(dim, -shift)])


def sample_max(net: Network, box: Hyperrectangle, objective, n_samples: int, seed: int = 0) -> float:
    """Best objective value over uniform samples.

    Max mode returns the largest ``c^T f(x) + b`` seen, so it never exceeds
    the true maximum. Polytope mode returns the smallest ``max_k g_k(f(x))``
    seen, never below the true minimum.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    values = objective.value(net.forward(box.sample(rng, n_samples)))
    return float(values.max() if isinstance(objective, MaxViolation) else values.min())


def _interval_forward(net: Network, lo, hi):
    """Interval propagation; returns output box and whether every ReLU is fixed."""
    fixed = True
    masks = []
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
        lo, hi = Wp @ lo + Wn @ hi + b, Wp @ hi + Wn @ lo + b
        if l < net.n_layers - 1:
            if np.any((lo < 0.0) & (hi > 0.0)):
                fixed = False
            masks.append(lo >= 0.0)
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return lo, hi, fixed, masks


def _affine_composite(net: Network, masks):
    """The network as ``A x + a`` given a fixed activation pattern."""
    A = np.eye(net.input_dim)
    a = np.zeros(net.input_dim)
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        A, a = W @ A, W @ a + b
        if l < net.n_layers - 1:
            m = masks[l].astype(float)
            A, a = A * m[:, None], a * m
    return A, a


def _minmax_affine(G, g0, lo, hi):
    """``min_x max_k G_k x + g0_k`` over the box ``[lo, hi]`` as a small LP.

    Returns a lower bound on the optimum (the LP value less a small solver
    tolerance) and the minimizer.
    """
    k, d = G.shape
    if k == 1:
        x = np.where(G[0] > 0.0, lo, hi)
        return float(G[0] @ x + g0[0]), x
    res = linprog(
        np.r_[np.zeros(d), 1.0],
        A_ub=np.hstack([G, -np.ones((k, 1))]),
        b_ub=-g0,
        bounds=[(a, b) for a, b in zip(lo, hi)] + [(None, None)],
        method="highs",
    )
    if res.status != 0:
        # fall back to the per-constraint relaxation, which is always valid
        per = np.where(G > 0.0, lo, hi)
        return float(np.max(np.einsum("kd,kd->k", G, per) + g0)), 0.5 * (lo + hi)
    x = np.clip(res.x[:d], lo, hi)
    return float(res.fun) - _LP_TOL * (1.0 + abs(res.fun)), x


def certified_opt(net: Network, box: Hyperrectangle, objective, delta: float = 1e-4,
                  max_regions: int = 10**6, stop_at_zero: bool = False,
                  gap: float = 0.0) -> tuple[float, float]:
    """Certified enclosure ``[lower, upper]`` of the optimum of ``objective``.

    Max mode encloses ``max_x c^T f(x) + b``; polytope mode encloses
    ``min_x max_k (c_k^T f(x) + b_k)``. Regions are bisected along their
    widest side until their activation pattern is fixed under interval
    propagation (the network is then affine there) or they are narrower than
    ``delta``. Affine regions are solved exactly: by corner choice for a
    single objective, and by a small linear program for several polytope
    constraints.

    With ``stop_at_zero`` the search ends as soon as the enclosure excludes
    zero. A positive ``gap`` stops refining regions whose bound is within
    ``gap`` of the best attained value; the enclosure stays certified but may
    be up to ``gap`` wide.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if gap < 0:
        raise ValueError("gap must be non-negative")
    maximize = isinstance(objective, MaxViolation)
    C, off = objective.matrix, objective.offsets
    Cp, Cn = np.maximum(C, 0.0), np.minimum(C, 0.0)
    # work with "larger is better" internally; polytope values are negated
    sign = 1.0 if maximize else -1.0

    def value(x):
        return sign * float(objective.value(net.forward(x)))

    # heap entries: (-optimistic bound of the parent, seq, lo, hi). The
    # incumbent is the best value actually attained at some point; settled is
    # the best bound of regions that were given up on without being pruned.
    incumbent = value(box.center)
    settled = -np.inf
    heap = [(-np.inf, 0, box.lo, box.hi)]
    seq = 1
    processed = 0

    def enclosure():
        best = max(incumbent, settled, -heap[0][0] if heap else -np.inf)
        if maximize:
            return incumbent, best
        return -best, -incumbent

    while heap:
        if stop_at_zero:
            lo_e, hi_e = enclosure()
            if lo_e > 0.0 or hi_e <= 0.0:
                break
        _, _, lo, hi = heapq.heappop(heap)
        processed += 1
        if processed > max_regions:
            raise BudgetExceeded(f"more than {max_regions} regions")

        out_lo, out_hi, fixed, masks = _interval_forward(net, lo, hi)
        incumbent = max(incumbent, value(0.5 * (lo + hi)))

        if fixed:
            A, a = _affine_composite(net, masks)
            G, g0 = C @ A, C @ a + off
            if maximize:
                x = np.where(G[0] > 0.0, hi, lo)
                bound = float(G[0] @ x + g0[0])
            else:
                low, x = _minmax_affine(G, g0, lo, hi)
                bound = -low
            incumbent = max(incumbent, value(x))
            settled = max(settled, bound)
            continue

        if maximize:
            bound = float(Cp[0] @ out_hi + Cn[0] @ out_lo + off[0])
        else:
            bound = -float(np.max(Cp @ out_lo + Cn @ out_hi + off))
        if bound <= incumbent:
            continue
        width = hi - lo
        if width.max() < delta or bound <= incumbent + gap:
            settled = max(settled, bound)
            continue
        i = int(np.argmax(width))
        mid = 0.5 * (lo[i] + hi[i])
        left_hi, right_lo = hi.copy(), lo.copy()
        left_hi[i] = mid
        right_lo[i] = mid
        for clo, chi in ((lo, left_hi), (right_lo, hi)):
            heapq.heappush(heap, (-bound, seq, clo, chi))
            seq += 1

    return enclosure()
