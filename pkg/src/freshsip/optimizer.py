"""Input-splitting branch and bound on top of the symbolic forward pass."""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import AllDegenerate, ZeroWidth
from .model_io import Hyperrectangle, MaxViolation, VerificationProblem
from .relaxation import FreshVarConfig, PassResult, forward_pass
from .symbolic import affine_transform, input_bounds, linear_range

__all__ = [
    "SolverConfig",
    "SubProblem",
    "VerdictReport",
    "bisect",
    "candidate_point",
    "choose_split",
    "evaluate_region",
    "region_bound",
    "smear_scores",
    "solve",
]

logger = logging.getLogger(__name__)

SPLIT_RULES = ("smear", "widest")
CANDIDATE_RULES = ("argmax", "center")


@dataclass(frozen=True)
class SolverConfig:
    fresh: FreshVarConfig = field(default_factory=FreshVarConfig)
    split_rule: str = "smear"
    candidate_rule: str = "argmax"
    monotone_refinement: bool = True
    timeout: float = 60.0
    max_nodes: int | None = None
    # regions narrower than this in every dimension are not split further
    min_width: float = 1e-12

    def __post_init__(self):
        if self.split_rule not in SPLIT_RULES:
            raise ValueError(f"split_rule must be one of {SPLIT_RULES}, got {self.split_rule!r}")
        if self.candidate_rule not in CANDIDATE_RULES:
            raise ValueError(f"candidate_rule must be one of {CANDIDATE_RULES}, got {self.candidate_rule!r}")
        if not self.timeout > 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")
        if self.max_nodes is not None and self.max_nodes < 1:
            raise ValueError(f"max_nodes must be at least 1, got {self.max_nodes}")

    def as_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "fresh"}
        out.update({f"fresh.{k}": v for k, v in asdict(self.fresh).items()})
        return out


@dataclass(frozen=True, eq=False)
class SubProblem:
    """A queued region together with what its evaluation left behind.

    ``bound`` is an upper bound on the objective over the region in max
    mode, a lower bound on ``min_x max_k g_k(x)`` in polytope mode.
    ``layer_bounds`` are the pre-activation enclosures handed to the
    children for refinement.
    """

    region: Hyperrectangle
    layer_bounds: list | None
    bound: float
    seq: int
    split_dim: int | None = None


@dataclass
class VerdictReport:
    verdict: str
    name: str
    mode: str
    bound: float
    best_value: float
    counterexample: np.ndarray | None
    counterexample_value: float | None
    nodes: int
    elapsed: float
    reason: str
    config: dict = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.verdict in ("SAT", "UNSAT")

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.counterexample is not None:
            out["counterexample"] = [float(v) for v in self.counterexample]
        return out


# ---------------------------------------------------------------------------
# Heuristics
# ---------------------------------------------------------------------------


def smear_scores(pass_: PassResult, region: Hyperrectangle) -> np.ndarray:
    """Per-input estimate of how much bisecting it tightens unstable neurons.

    ``s_i = sum_j 0.5 * width_i * (|l_ij| + |u_ij|)`` over all unstable
    neurons ``j``, using their input-only symbolic bound coefficients.
    """
    mass = np.zeros(region.dim)
    for st, lower, upper in zip(pass_.statuses, pass_.lower_coef, pass_.upper_coef):
        mask = st.unstable
        if mask.any():
            mass += np.abs(lower[mask]).sum(axis=0) + np.abs(upper[mask]).sum(axis=0)
    return 0.5 * region.width * mass


def choose_split(pass_: PassResult | None, region: Hyperrectangle, rule: str = "smear",
                 min_width: float = 0.0) -> int:
    """Input dimension to bisect.

    Only dimensions wider than ``min_width`` are eligible. Ties go to the
    lowest index; smear scores that are all zero fall back to the widest
    dimension.
    """
    width = region.width
    eligible = width > min_width
    if not eligible.any():
        raise AllDegenerate(f"no dimension is wider than {min_width}")
    if rule == "smear":
        scores = np.where(eligible, smear_scores(pass_, region), -1.0)
        if scores.max() > 0.0:
            return int(np.argmax(scores))
    elif rule != "widest":
        raise ValueError(f"unknown split rule {rule!r}")
    return int(np.argmax(np.where(eligible, width, -1.0)))


def bisect(region: Hyperrectangle, index: int) -> tuple[Hyperrectangle, Hyperrectangle]:
    lo, hi = region.lo, region.hi
    if not hi[index] > lo[index]:
        raise ZeroWidth(f"dimension {index} has zero width")
    mid = 0.5 * (lo[index] + hi[index])
    left_hi = hi.copy()
    left_hi[index] = mid
    right_lo = lo.copy()
    right_lo[index] = mid
    return Hyperrectangle(lo, left_hi), Hyperrectangle(right_lo, hi)


def _objective_bounds(pass_: PassResult, objective):
    """Input-only symbolic bounds of every constraint row ``C y + b``."""
    sym = affine_transform(objective.matrix, objective.offsets, pass_.output)
    return input_bounds(sym)


def _constraint_lower_bounds(pass_, objective, lower, lower_off):
    sym_lo, _ = linear_range(lower, lower_off, pass_.output.domain)
    out = pass_.output_bounds
    C = objective.matrix
    interval_lo = np.maximum(C, 0.0) @ out.lo + np.minimum(C, 0.0) @ out.hi + objective.offsets
    return np.maximum(sym_lo, interval_lo)


def region_bound(pass_: PassResult, objective) -> float:
    """Sound bound of the objective over the region the pass was computed on.

    Max mode: upper bound on ``c^T y + b``. Polytope mode: lower bound on
    ``min_x max_k (c_k^T y + b_k)``. Each constraint is bounded both through
    its own symbolic bound and through the concrete output box, and the
    tighter of the two is kept.
    """
    lower, lower_off, upper, upper_off = _objective_bounds(pass_, objective)
    if isinstance(objective, MaxViolation):
        _, sym_hi = linear_range(upper, upper_off, pass_.output.domain)
        out = pass_.output_bounds
        c = objective.c
        interval_hi = np.maximum(c, 0.0) @ out.hi + np.minimum(c, 0.0) @ out.lo + objective.b
        return float(min(sym_hi[0], interval_hi))
    return float(np.max(_constraint_lower_bounds(pass_, objective, lower, lower_off)))


def candidate_point(pass_: PassResult, region: Hyperrectangle, objective, rule: str = "argmax") -> np.ndarray:
    """Input likely to violate the property, always inside ``region``.

    ``"argmax"`` maximizes the symbolic upper bound of the objective (max
    mode) or minimizes the symbolic lower bound of the constraint that
    attains the region bound (polytope mode). ``"center"`` returns the
    midpoint.
    """
    if rule == "center":
        return region.center
    if rule != "argmax":
        raise ValueError(f"unknown candidate rule {rule!r}")
    lower, lower_off, upper, upper_off = _objective_bounds(pass_, objective)
    if isinstance(objective, MaxViolation):
        coef = upper[0]
        toward_hi = coef > 0.0
        toward_lo = coef < 0.0
    else:
        k = int(np.argmax(_constraint_lower_bounds(pass_, objective, lower, lower_off)))
        coef = lower[k]
        toward_hi = coef < 0.0
        toward_lo = coef > 0.0
    return np.where(toward_hi, region.hi, np.where(toward_lo, region.lo, region.center))


def evaluate_region(problem: VerificationProblem, region: Hyperrectangle, cfg: SolverConfig,
                    parent: SubProblem | None = None) -> tuple[PassResult, float]:
    """Forward pass plus region bound, refined by ``parent`` when enabled."""
    refine = cfg.monotone_refinement and parent is not None
    prior = parent.layer_bounds if refine else None
    pass_ = forward_pass(problem.network, region, cfg.fresh, prior)
    bound = region_bound(pass_, problem.objective)
    if refine:
        if isinstance(problem.objective, MaxViolation):
            bound = min(bound, parent.bound)
        else:
            bound = max(bound, parent.bound)
    return pass_, bound


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


class _Search:
    """Bookkeeping for one run of :func:`solve`."""

    def __init__(self, problem: VerificationProblem, cfg: SolverConfig):
        self.problem = problem
        self.cfg = cfg
        self.maximize = isinstance(problem.objective, MaxViolation)
        self.heap = []
        self.seq = 0
        self.nodes = 0
        self.unresolved = []
        # worst bound among regions discarded as safe
        self.resolved = -np.inf if self.maximize else np.inf
        self.best_value = -np.inf if self.maximize else np.inf
        self.best_point = None
        # bound of the region a counterexample was found in
        self.hit_bound = None

    def is_safe(self, bound: float) -> bool:
        return bound <= 0.0 if self.maximize else bound > 0.0

    def is_violation(self, value: float) -> bool:
        return value > 0.0 if self.maximize else value <= 0.0

    def better(self, a: float, b: float) -> bool:
        return a > b if self.maximize else a < b

    def worst(self, values) -> float:
        values = list(values)
        if not values:
            return self.resolved
        return max(values) if self.maximize else min(values)

    def expand(self, region: Hyperrectangle, parent: SubProblem | None):
        """Evaluate a region; returns a counterexample value if one is found."""
        cfg, problem = self.cfg, self.problem
        self.nodes += 1
        pass_, bound = evaluate_region(problem, region, cfg, parent)
        x = candidate_point(pass_, region, problem.objective, cfg.candidate_rule)
        value = float(problem.objective.value(problem.network.forward(x)))
        if self.better(value, self.best_value):
            self.best_value, self.best_point = value, x
        if self.is_violation(value):
            self.hit_bound = bound
            return value
        if self.is_safe(bound):
            self.resolved = self.worst([self.resolved, bound])
            return None
        try:
            split = choose_split(pass_, region, cfg.split_rule, cfg.min_width)
        except AllDegenerate:
            split = None
        node = SubProblem(region, pass_.bounds, bound, self.seq, split)
        self.seq += 1
        if split is None:
            self.unresolved.append(node)
        else:
            key = -bound if self.maximize else bound
            heapq.heappush(self.heap, (key, node.seq, node))
        return None

    def global_bound(self) -> float:
        pending = [n.bound for _, _, n in self.heap] + [n.bound for n in self.unresolved]
        if self.hit_bound is not None:
            pending.append(self.hit_bound)
        return self.worst(pending + [self.resolved])


def solve(problem: VerificationProblem, cfg: SolverConfig | None = None) -> VerdictReport:
    """Prove or refute the property of ``problem``.

    Regions are expanded best-first on their bound (ties in insertion
    order). Each evaluated region contributes a candidate input that is run
    through the network exactly; a violating candidate ends the search with
    SAT. Regions whose bound is on the safe side of zero are discarded; once
    none remain the result is UNSAT. Timeouts and the node budget give
    INCONCLUSIVE.
    """
    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    search = _Search(problem, cfg)

    def report(verdict, reason, bound):
        cex = search.best_point if verdict == "SAT" else None
        return VerdictReport(
            verdict=verdict,
            name=problem.name,
            mode=problem.objective.mode,
            bound=float(bound),
            best_value=float(search.best_value),
            counterexample=None if cex is None else np.array(cex),
            counterexample_value=float(search.best_value) if cex is not None else None,
            nodes=search.nodes,
            elapsed=time.perf_counter() - start,
            reason=reason,
            config=cfg.as_dict(),
        )

    if search.expand(problem.input, None) is not None:
        return report("SAT", "counterexample", search.global_bound())

    while search.heap:
        if time.perf_counter() - start >= cfg.timeout:
            return report("INCONCLUSIVE", "timeout", search.global_bound())
        if cfg.max_nodes is not None and search.nodes >= cfg.max_nodes:
            return report("INCONCLUSIVE", "max_nodes", search.global_bound())
        _, _, node = heapq.heappop(search.heap)
        for child in bisect(node.region, node.split_dim):
            if search.expand(child, node) is not None:
                return report("SAT", "counterexample", search.global_bound())

    if search.unresolved:
        logger.debug("%d regions reached the minimum width unresolved", len(search.unresolved))
        return report("INCONCLUSIVE", "degenerate", search.global_bound())
    return report("UNSAT", "exhausted", search.resolved)
