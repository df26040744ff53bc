"""Networks, input boxes, objectives, and their text formats.

Three formats are handled here:

* NNet, the plain-text format the ACAS Xu networks are distributed in.
* A small line-oriented property format (input bounds plus linear output
  constraints).
* The ``key=value`` result document written after a verification run.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DimensionMismatch,
    EmptyObjective,
    MalformedHeader,
    ModeMismatch,
    NumericParse,
    ParseError,
    UnboundedInput,
)

__all__ = [
    "Hyperrectangle",
    "MaxViolation",
    "Network",
    "Normalization",
    "PolytopeAvoid",
    "VerificationProblem",
    "load_nnet",
    "load_property",
    "parse_nnet",
    "parse_property",
    "parse_result",
    "serialize_nnet",
    "serialize_property",
    "serialize_result",
]


def _frozen_array(values, ndim=None):
    arr = np.array(values, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hyperrectangle:
    """Axis-aligned box ``lo <= x <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _frozen_array(self.lo, ndim=1)
        hi = _frozen_array(self.hi, ndim=1)
        if lo.shape != hi.shape:
            raise DimensionMismatch(f"lo has {lo.size} entries, hi has {hi.size}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("hyperrectangle bounds must be finite")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValueError(f"empty box: lo[{bad}]={lo[bad]} > hi[{bad}]={hi[bad]}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` points uniformly from the box, shape ``(n, dim)``."""
        return self.lo + rng.random((n, self.dim)) * self.width

    def __eq__(self, other):
        if not isinstance(other, Hyperrectangle):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __repr__(self):
        return f"Hyperrectangle(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


@dataclass(frozen=True, eq=False)
class Normalization:
    """Input normalization constants carried by an NNet header.

    ``means`` and ``ranges`` hold one entry per input plus, optionally, a
    trailing entry for the output.
    """

    mins: np.ndarray
    maxes: np.ndarray
    means: np.ndarray
    ranges: np.ndarray

    def __post_init__(self):
        for name in ("mins", "maxes", "means", "ranges"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), ndim=1))

    @classmethod
    def neutral(cls, input_dim: int) -> "Normalization":
        return cls(
            mins=np.full(input_dim, -np.inf),
            maxes=np.full(input_dim, np.inf),
            means=np.zeros(input_dim + 1),
            ranges=np.ones(input_dim + 1),
        )

    def normalize_box(self, box: Hyperrectangle) -> Hyperrectangle:
        """Clip a raw-unit box to the declared input range, then normalize it."""
        d = box.dim
        lo = np.clip(box.lo, self.mins[:d], self.maxes[:d])
        hi = np.clip(box.hi, self.mins[:d], self.maxes[:d])
        mean, rng = self.means[:d], self.ranges[:d]
        return Hyperrectangle((lo - mean) / rng, (hi - mean) / rng)

    def __eq__(self, other):
        if not isinstance(other, Normalization):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("mins", "maxes", "means", "ranges")
        )


@dataclass(frozen=True, eq=False)
class Network:
    """Fully connected network, ReLU on every hidden layer, identity on the output.

    Parameters
    ----------
    weights : sequence of arrays
        ``weights[l]`` has shape ``(d_{l+1}, d_l)``.
    biases : sequence of arrays
        ``biases[l]`` has shape ``(d_{l+1},)``.
    normalization : Normalization, optional
        Stored but never applied to the weights.
    """

    weights: tuple
    biases: tuple
    normalization: Normalization | None = None

    def __post_init__(self):
        weights = tuple(_frozen_array(w, ndim=2) for w in self.weights)
        biases = tuple(_frozen_array(b, ndim=1) for b in self.biases)
        if len(weights) != len(biases):
            raise DimensionMismatch(f"{len(weights)} weight matrices but {len(biases)} bias vectors")
        if len(weights) < 2:
            raise DimensionMismatch("a network needs at least one hidden layer")
        for l, (w, b) in enumerate(zip(weights, biases)):
            if w.shape[0] < 1 or w.shape[1] < 1:
                raise DimensionMismatch(f"layer {l} has an empty weight matrix")
            if b.size != w.shape[0]:
                raise DimensionMismatch(
                    f"layer {l}: bias has {b.size} entries, weight has {w.shape[0]} rows"
                )
            if l > 0 and w.shape[1] != weights[l - 1].shape[0]:
                raise DimensionMismatch(
                    f"layer {l}: weight has {w.shape[1]} columns, previous layer has "
                    f"{weights[l - 1].shape[0]} neurons"
                )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        """Number of affine layers (hidden layers plus the output layer)."""
        return len(self.weights)

    def forward(self, x) -> np.ndarray:
        """Evaluate the network on one point ``(d_0,)`` or a batch ``(n, d_0)``."""
        h = np.asarray(x, dtype=np.float64)
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if l < self.n_layers - 1:
                h = np.maximum(h, 0.0)
        return h

    def pre_activations(self, x) -> list[np.ndarray]:
        """Pre-activation values of every layer, output layer included."""
        h = np.asarray(x, dtype=np.float64)
        out = []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            out.append(z)
            h = np.maximum(z, 0.0) if l < self.n_layers - 1 else z
        return out

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            len(self.weights) == len(other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
            and self.normalization == other.normalization
        )

    def __repr__(self):
        return f"Network(layer_sizes={self.layer_sizes})"


@dataclass(frozen=True, eq=False)
class MaxViolation:
    """Single constraint ``c^T y + b <= 0``; the property fails where it is positive."""

    c: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen_array(self.c, ndim=1))
        object.__setattr__(self, "b", float(self.b))

    mode = "max"

    @property
    def output_dim(self) -> int:
        return self.c.size

    @property
    def matrix(self) -> np.ndarray:
        return self.c[None, :]

    @property
    def offsets(self) -> np.ndarray:
        return np.array([self.b])

    def value(self, y) -> np.ndarray:
        """Constraint value; positive means the property is violated."""
        return np.asarray(y, dtype=np.float64) @ self.c + self.b

    def violated(self, y) -> np.ndarray:
        return self.value(y) > 0.0

    def __eq__(self, other):
        if not isinstance(other, MaxViolation):
            return NotImplemented
        return np.array_equal(self.c, other.c) and self.b == other.b


@dataclass(frozen=True, eq=False)
class PolytopeAvoid:
    """Unsafe polytope ``{y : C y + b <= 0}``; the output must never enter it."""

    C: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        C = _frozen_array(self.C, ndim=2)
        b = _frozen_array(self.b, ndim=1)
        if C.shape[0] == 0:
            raise EmptyObjective("polytope objective needs at least one constraint")
        if b.size != C.shape[0]:
            raise DimensionMismatch(f"{C.shape[0]} constraints but {b.size} offsets")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b", b)

    mode = "polytope"

    @classmethod
    def from_constraints(cls, constraints) -> "PolytopeAvoid":
        constraints = list(constraints)
        if not constraints:
            raise EmptyObjective("polytope objective needs at least one constraint")
        return cls(np.array([c for c, _ in constraints]), np.array([b for _, b in constraints]))

    @property
    def output_dim(self) -> int:
        return self.C.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return self.C

    @property
    def offsets(self) -> np.ndarray:
        return self.b

    def value(self, y) -> np.ndarray:
        """Largest constraint value; ``<= 0`` means ``y`` lies inside the polytope."""
        return np.max(np.asarray(y, dtype=np.float64) @ self.C.T + self.b, axis=-1)

    def violated(self, y) -> np.ndarray:
        return self.value(y) <= 0.0

    def __eq__(self, other):
        if not isinstance(other, PolytopeAvoid):
            return NotImplemented
        return np.array_equal(self.C, other.C) and np.array_equal(self.b, other.b)


@dataclass(frozen=True, eq=False)
class VerificationProblem:
    network: Network
    input: Hyperrectangle
    objective: MaxViolation | PolytopeAvoid
    name: str = field(default="problem")

    def __post_init__(self):
        if self.input.dim != self.network.input_dim:
            raise DimensionMismatch(
                f"input box has {self.input.dim} dimensions, network expects {self.network.input_dim}"
            )
        if self.objective.output_dim != self.network.output_dim:
            raise DimensionMismatch(
                f"objective has {self.objective.output_dim} coefficients, network has "
                f"{self.network.output_dim} outputs"
            )


# ---------------------------------------------------------------------------
# NNet
# ---------------------------------------------------------------------------


def _as_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _tokens(line: str) -> list[str]:
    return [t.strip() for t in line.split(",") if t.strip()]


def _floats(tokens, lineno) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise NumericParse(f"not a real number: {exc}", lineno) from None


def _ints(tokens, lineno) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise NumericParse(f"expected integers, got {tokens}", lineno) from None


def parse_nnet(source) -> Network:
    """Parse an NNet document (``str``, ``bytes`` or a readable file object)."""
    lines = _as_text(source).splitlines()
    # (line number, stripped text) for every non-blank, non-comment line
    body = []
    in_header_comments = True
    for i, raw in enumerate(lines, start=1):
        text = raw.strip()
        if in_header_comments and text.startswith("//"):
            continue
        in_header_comments = False
        if text:
            body.append((i, text))

    it = iter(body)

    def next_line(what):
        try:
            return next(it)
        except StopIteration:
            last = body[-1][0] if body else len(lines)
            raise MalformedHeader(f"unexpected end of file while reading {what}", last) from None

    lineno, text = next_line("the size header")
    header = _ints(_tokens(text), lineno)
    if len(header) < 4:
        raise MalformedHeader(f"size header needs 4 integers, got {len(header)}", lineno)
    n_layers, input_size, output_size, max_size = header[:4]
    if n_layers < 2:
        raise MalformedHeader(f"need at least one hidden layer, header declares {n_layers} layers", lineno)

    lineno, text = next_line("layer sizes")
    sizes = _ints(_tokens(text), lineno)
    if len(sizes) != n_layers + 1:
        raise MalformedHeader(f"expected {n_layers + 1} layer sizes, got {len(sizes)}", lineno)
    if sizes[0] != input_size or sizes[-1] != output_size:
        raise MalformedHeader("layer sizes disagree with declared input/output size", lineno)
    if max(sizes) != max_size:
        raise MalformedHeader(f"max layer size {max_size} but largest layer is {max(sizes)}", lineno)
    if min(sizes) < 1:
        raise MalformedHeader("layer sizes must be positive", lineno)

    next_line("the legacy flag")

    def read_vector(what, allowed):
        lineno, text = next_line(what)
        vals = _floats(_tokens(text), lineno)
        if len(vals) not in allowed:
            raise DimensionMismatch(f"{what}: expected {' or '.join(map(str, allowed))} values, got {len(vals)}", lineno)
        return vals

    mins = read_vector("input minima", (input_size,))
    maxes = read_vector("input maxima", (input_size,))
    means = read_vector("means", (input_size, input_size + 1))
    ranges = read_vector("ranges", (input_size, input_size + 1))

    weights, biases = [], []
    for l in range(n_layers):
        rows, cols = sizes[l + 1], sizes[l]
        w = np.empty((rows, cols))
        for r in range(rows):
            lineno, text = next_line(f"layer {l} weight row {r}")
            vals = _floats(_tokens(text), lineno)
            if len(vals) != cols:
                raise DimensionMismatch(f"layer {l} weight row {r}: expected {cols} values, got {len(vals)}", lineno)
            w[r] = vals
        b = np.empty(rows)
        for r in range(rows):
            lineno, text = next_line(f"layer {l} bias {r}")
            vals = _floats(_tokens(text), lineno)
            if len(vals) != 1:
                raise DimensionMismatch(f"layer {l} bias {r}: expected 1 value, got {len(vals)}", lineno)
            b[r] = vals[0]
        weights.append(w)
        biases.append(b)

    leftover = next(it, None)
    if leftover is not None:
        raise DimensionMismatch("trailing data after the last bias", leftover[0])

    return Network(weights, biases, Normalization(mins, maxes, means, ranges))


def load_nnet(path) -> Network:
    return parse_nnet(Path(path).read_bytes())


def _fmt(x) -> str:
    return repr(float(x))


def serialize_nnet(net: Network, comment: str | None = None) -> str:
    """Write ``net`` as NNet text; ``parse_nnet`` recovers it exactly."""
    norm = net.normalization or Normalization.neutral(net.input_dim)
    sizes = net.layer_sizes
    out = io.StringIO()
    for line in (comment or "Generated by freshsip").splitlines():
        out.write(f"// {line}\n")
    out.write(f"{net.n_layers},{net.input_dim},{net.output_dim},{max(sizes)},\n")
    out.write(",".join(map(str, sizes)) + ",\n")
    out.write("0,\n")
    for vec in (norm.mins, norm.maxes, norm.means, norm.ranges):
        out.write(",".join(_fmt(v) for v in vec) + ",\n")
    for w, b in zip(net.weights, net.biases):
        for row in w:
            out.write(",".join(_fmt(v) for v in row) + ",\n")
        for v in b:
            out.write(_fmt(v) + ",\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Property files
# ---------------------------------------------------------------------------


def parse_property(source) -> tuple[Hyperrectangle, MaxViolation | PolytopeAvoid]:
    """Parse a property document.

    Grammar, one statement per line (``#`` starts a comment)::

        in <i> >= <v>
        in <i> <= <v>
        out <c_1> ... <c_m> + <b> <= 0
        mode max | mode polytope

    In ``max`` mode the single ``out`` line is the constraint that must hold.
    In ``polytope`` mode the ``out`` lines describe the unsafe region.
    """
    lower: dict[int, float] = {}
    upper: dict[int, float] = {}
    outs: list[tuple[list[float], float, int]] = []
    mode = None
    mode_line = None

    for lineno, raw in enumerate(_as_text(source).splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        key = parts[0].lower()
        if key == "in":
            if len(parts) != 4 or parts[2] not in (">=", "<="):
                raise ParseError(f"expected 'in <i> >=|<= <v>', got {text!r}", lineno)
            try:
                idx = int(parts[1])
            except ValueError:
                raise NumericParse(f"bad input index {parts[1]!r}", lineno) from None
            if idx < 0:
                raise ParseError(f"negative input index {idx}", lineno)
            (val,) = _floats([parts[3]], lineno)
            if not math.isfinite(val):
                raise ParseError("input bounds must be finite", lineno)
            if parts[2] == ">=":
                lower[idx] = max(val, lower.get(idx, -math.inf))
            else:
                upper[idx] = min(val, upper.get(idx, math.inf))
        elif key == "out":
            if len(parts) < 6 or parts[-2:] != ["<=", "0"] or parts[-4] not in ("+", "-"):
                raise ParseError(f"expected 'out <coeffs> + <b> <= 0', got {text!r}", lineno)
            coeffs = _floats(parts[1:-4], lineno)
            (b,) = _floats([parts[-3]], lineno)
            if parts[-4] == "-":
                b = -b
            outs.append((coeffs, b, lineno))
        elif key == "mode":
            if len(parts) != 2 or parts[1] not in ("max", "polytope"):
                raise ParseError(f"expected 'mode max' or 'mode polytope', got {text!r}", lineno)
            if mode is not None and parts[1] != mode:
                raise ModeMismatch("conflicting mode declarations", lineno)
            mode, mode_line = parts[1], lineno
        else:
            raise ParseError(f"unknown statement {parts[0]!r}", lineno)

    if not outs:
        raise EmptyObjective("no 'out' constraint given")
    if mode is None:
        raise ParseError("missing 'mode max' or 'mode polytope' line")
    width = len(outs[0][0])
    for coeffs, _, lineno in outs:
        if len(coeffs) != width:
            raise DimensionMismatch(f"'out' line has {len(coeffs)} coefficients, expected {width}", lineno)
    if mode == "max" and len(outs) > 1:
        raise ModeMismatch(f"'mode max' takes one 'out' line, got {len(outs)}", mode_line)

    n_in = max(list(lower) + list(upper)) + 1 if (lower or upper) else 0
    if n_in == 0:
        raise UnboundedInput("no input bounds given")
    for i in range(n_in):
        if i not in lower or i not in upper:
            side = "lower" if i not in lower else "upper"
            raise UnboundedInput(f"input {i} has no {side} bound")
        if lower[i] > upper[i]:
            raise ParseError(f"input {i} has empty range [{lower[i]}, {upper[i]}]")
    box = Hyperrectangle([lower[i] for i in range(n_in)], [upper[i] for i in range(n_in)])

    if mode == "max":
        coeffs, b, _ = outs[0]
        objective = MaxViolation(coeffs, b)
    else:
        objective = PolytopeAvoid.from_constraints((c, b) for c, b, _ in outs)
    return box, objective


def load_property(path):
    return parse_property(Path(path).read_bytes())


def serialize_property(box: Hyperrectangle, objective) -> str:
    lines = []
    for i, (lo, hi) in enumerate(zip(box.lo, box.hi)):
        lines.append(f"in {i} >= {_fmt(lo)}")
        lines.append(f"in {i} <= {_fmt(hi)}")
    for c, b in zip(objective.matrix, objective.offsets):
        lines.append("out " + " ".join(_fmt(v) for v in c) + f" + {_fmt(b)} <= 0")
    lines.append(f"mode {objective.mode}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Result documents
# ---------------------------------------------------------------------------


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def serialize_result(report) -> str:
    """Render a ``VerdictReport`` as ``key=value`` lines.

    Keys: ``verdict``, ``name``, ``mode``, ``bound``, ``best_value``,
    ``counterexample`` and ``counterexample_value`` (SAT only), ``nodes``,
    ``elapsed``, then ``config.<field>`` for every solver setting.
    """
    rows = [
        ("verdict", report.verdict),
        ("name", report.name),
        ("mode", report.mode),
        ("bound", report.bound),
        ("best_value", report.best_value),
    ]
    if report.counterexample is not None:
        rows.append(("counterexample", report.counterexample))
        rows.append(("counterexample_value", report.counterexample_value))
    rows += [
        ("nodes", report.nodes),
        ("elapsed", report.elapsed),
        ("reason", report.reason),
    ]
    rows += [(f"config.{k}", v) for k, v in report.config.items()]
    return "".join(f"{k}={_fmt_value(v)}\n" for k, v in rows)


def parse_result(text: str) -> dict[str, str]:
    """Read a result document back into a ``{key: raw value}`` mapping."""
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
