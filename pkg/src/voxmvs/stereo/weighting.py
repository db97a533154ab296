"""
View-pair weighting and cube gating.

Each candidate view pair of a cube gets a raw score, either from a shallow
network r(theta, d, e_i, e_j) (one sigmoid hidden layer of 100 units and a
linear output) or from a closed-form heuristic. Scores are turned into
relative weights with a softmax across the cube's pairs.

A logistic-regression gate on the patch dissimilarity d decides whether a
cube is worth processing at all.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit, softmax

from voxmvs.core.exceptions import EmptyInputError, ParseError, SingleClassError
from voxmvs.stereo.descriptor import EMBEDDING_DIM
from voxmvs.stereo.geometry import Index3

logger = logging.getLogger(__name__)

HIDDEN_UNITS = 100
INPUT_DIM = 2 + 2 * EMBEDDING_DIM

HEURISTIC_THETA0 = math.radians(15.0)
HEURISTIC_SIGMA = math.radians(10.0)
HEURISTIC_LAMBDA = 4.0

WEIGHTNET_MAGIC = "VOXMVS-WEIGHTNET 1"
GATE_MAGIC = "VOXMVS-GATE 1"


@dataclass(frozen=True, eq=False)
class WeightNet:
    """Two-layer scoring network: W2 . sigmoid(W1 x + b1) + b2."""

    w1: NDArray[np.float64]
    b1: NDArray[np.float64]
    w2: NDArray[np.float64]
    b2: float
    loss_history: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        hidden = self.b1.shape[0]
        if self.w1.shape != (hidden, INPUT_DIM):
            raise ValueError(f"W1 must be {hidden}x{INPUT_DIM}, got {self.w1.shape}")
        if self.w2.shape != (1, hidden):
            raise ValueError(f"W2 must be 1x{hidden}, got {self.w2.shape}")
        arrays = (self.w1, self.b1, self.w2)
        if not all(np.all(np.isfinite(a)) for a in arrays) or not math.isfinite(self.b2):
            raise ValueError("WeightNet parameters must be finite")

    @classmethod
    def zeros(cls, hidden: int = HIDDEN_UNITS) -> "WeightNet":
        return cls(
            w1=np.zeros((hidden, INPUT_DIM)),
            b1=np.zeros(hidden),
            w2=np.zeros((1, hidden)),
            b2=0.0,
        )

    @classmethod
    def random(cls, seed: int, scale: float = 0.1, hidden: int = HIDDEN_UNITS) -> "WeightNet":
        rng = np.random.default_rng(seed)
        return cls(
            w1=rng.normal(0.0, scale, size=(hidden, INPUT_DIM)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, scale, size=(1, hidden)),
            b2=0.0,
        )


@dataclass(frozen=True)
class GateModel:
    """Logistic regression on the patch dissimilarity d."""

    slope: float
    intercept: float

    def similarity(self, d: float) -> float:
        """Predicted probability that the two patches are similar."""
        return float(expit(self.slope * d + self.intercept))


# Accepts a pair as similar when d <= 1.2 (orthogonal unit descriptors sit at sqrt(2)).
DEFAULT_GATE = GateModel(slope=-8.0, intercept=9.6)


@dataclass(frozen=True)
class PairEntry:
    """Weighting record of one candidate view pair."""

    pair: tuple[int, int]
    theta: float
    d: float
    raw_score: float
    w: float


@dataclass(frozen=True)
class PairWeighting:
    """Relative weights of the candidate view pairs of one cube."""

    cube_index: Index3
    entries: tuple[PairEntry, ...]


@dataclass(frozen=True, eq=False)
class WeightSample:
    """Training sample for the scoring network."""

    theta: float
    d: float
    e_i: NDArray[np.float64]
    e_j: NDArray[np.float64]
    quality: float


def _features(
    theta: float, d: float, e_i: NDArray[np.float64], e_j: NDArray[np.float64]
) -> NDArray[np.float64]:
    e_i = np.asarray(e_i, dtype=np.float64)
    e_j = np.asarray(e_j, dtype=np.float64)
    return np.concatenate([[theta, d], e_i, e_j])


def raw_score(
    net: WeightNet,
    theta: float,
    d: float,
    e_i: NDArray[np.float64],
    e_j: NDArray[np.float64],
) -> float:
    """Evaluate the scoring network on one view pair."""
    hidden = expit(net.w1 @ _features(theta, d, e_i, e_j) + net.b1)
    return float((net.w2 @ hidden)[0] + net.b2)


def softmax_weights(scores: Sequence[float]) -> list[float]:
    """
    Numerically stable softmax across the pairs of one cube.

    Raises:
        EmptyInputError: If scores is empty
    """
    if len(scores) == 0:
        raise EmptyInputError("softmax needs at least one score")
    values = np.asarray(scores, dtype=np.float64)
    return [float(w) for w in softmax(values - values.max())]


def heuristic_score(
    theta: float,
    d: float,
    theta0: float = HEURISTIC_THETA0,
    sigma: float = HEURISTIC_SIGMA,
    lam: float = HEURISTIC_LAMBDA,
) -> float:
    """Closed-form pair score: prefers a ~15 degree baseline and similar patches."""
    return -(((theta - theta0) / sigma) ** 2) - lam * d


def weigh_pairs(
    cube_index: Index3,
    pairs: Sequence[tuple[int, int]],
    thetas: Sequence[float],
    dissims: Sequence[float],
    scores: Sequence[float],
) -> PairWeighting:
    """Bundle per-pair features and softmax weights for one cube."""
    weights = softmax_weights(scores) if len(scores) else []
    entries = tuple(
        PairEntry(pair=pair, theta=float(theta), d=float(d), raw_score=float(score), w=w)
        for pair, theta, d, score, w in zip(pairs, thetas, dissims, scores, weights, strict=True)
    )
    return PairWeighting(cube_index=cube_index, entries=entries)


def _mse_loss(net: WeightNet, x: NDArray[np.float64], y: NDArray[np.float64]) -> float:
    hidden = expit(x @ net.w1.T + net.b1)
    out = expit(hidden @ net.w2[0] + net.b2)
    return float(np.mean((out - y) ** 2))


def fit_weightnet(
    samples: Sequence[WeightSample],
    epochs: int = 200,
    lr: float = 0.5,
    seed: int = 0,
    batch_size: int = 32,
    init: WeightNet | None = None,
) -> WeightNet:
    """
    Fit the scoring network so that sigmoid(raw_score) approximates pair quality.

    Mini-batch gradient descent on the mean squared error. The parameters with
    the lowest full-batch loss seen (initial parameters included) are returned,
    so the final training loss never exceeds the initial one.

    Args:
        samples: Training samples with quality in [0, 1]
        epochs: Passes over the data
        lr: Learning rate
        seed: Seed for initialization and shuffling
        batch_size: Mini-batch size
        init: Starting parameters (random when None)

    Returns:
        WeightNet with loss_history holding the full-batch loss after every epoch

    Raises:
        EmptyInputError: If samples is empty
    """
    if not samples:
        raise EmptyInputError("fit_weightnet needs at least one sample")

    rng = np.random.default_rng(seed)
    x = np.stack([_features(s.theta, s.d, s.e_i, s.e_j) for s in samples])
    y = np.array([s.quality for s in samples], dtype=np.float64)

    start = init if init is not None else WeightNet.random(seed)
    w1, b1 = start.w1.copy(), start.b1.copy()
    w2, b2 = start.w2[0].copy(), float(start.b2)

    best = WeightNet(w1=w1.copy(), b1=b1.copy(), w2=w2[None, :].copy(), b2=b2)
    best_loss = _mse_loss(best, x, y)
    history: list[float] = []
    logger.debug(f"fit_weightnet: {len(samples)} samples, initial loss {best_loss:.6f}")

    n = x.shape[0]
    for _epoch in range(epochs):
        order = rng.permutation(n)
        for start_idx in range(0, n, batch_size):
            batch = order[start_idx : start_idx + batch_size]
            xb, yb = x[batch], y[batch]
            hidden = expit(xb @ w1.T + b1)
            out = expit(hidden @ w2 + b2)
            # d(mean (out - y)^2) / d(score)
            delta = 2.0 * (out - yb) * out * (1.0 - out) / len(batch)
            grad_w2 = hidden.T @ delta
            grad_b2 = float(delta.sum())
            delta_hidden = np.outer(delta, w2) * hidden * (1.0 - hidden)
            grad_w1 = delta_hidden.T @ xb
            grad_b1 = delta_hidden.sum(axis=0)
            w1 -= lr * grad_w1
            b1 -= lr * grad_b1
            w2 -= lr * grad_w2
            b2 -= lr * grad_b2

        current = WeightNet(w1=w1.copy(), b1=b1.copy(), w2=w2[None, :].copy(), b2=b2)
        loss = _mse_loss(current, x, y)
        history.append(loss)
        if loss < best_loss:
            best, best_loss = current, loss

    logger.info(f"fit_weightnet: final loss {best_loss:.6f} after {epochs} epochs")
    return replace(best, loss_history=tuple(history))


def gate_cube(gate: GateModel, dissims: Sequence[float], n_min: int) -> bool:
    """Accept a cube when at least n_min view pairs are predicted similar (p >= 0.5)."""
    similar = sum(1 for d in dissims if gate.similarity(d) >= 0.5)
    return similar >= n_min


def fit_gate(
    samples: Sequence[tuple[float, bool]],
    epochs: int = 500,
    lr: float = 0.5,
) -> GateModel:
    """
    Fit the cube gate by batch gradient descent on the logistic loss.

    Args:
        samples: (d, similar) pairs
        epochs: Gradient steps
        lr: Learning rate

    Raises:
        SingleClassError: If samples is empty or holds a single label
    """
    labels = {bool(similar) for _, similar in samples}
    if len(labels) < 2:
        raise SingleClassError("fit_gate needs both similar and dissimilar samples")

    d = np.array([sample[0] for sample in samples], dtype=np.float64)
    y = np.array([1.0 if sample[1] else 0.0 for sample in samples])
    slope, intercept = 0.0, 0.0
    for _ in range(epochs):
        err = expit(slope * d + intercept) - y
        slope -= lr * float(np.mean(err * d))
        intercept -= lr * float(np.mean(err))

    logger.info(f"fit_gate: slope={slope:.4f} intercept={intercept:.4f} on {len(samples)} samples")
    return GateModel(slope=slope, intercept=intercept)


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def dumps_weightnet(net: WeightNet) -> str:
    """Serialize a WeightNet to its versioned text format."""
    hidden, inputs = net.w1.shape
    lines = [WEIGHTNET_MAGIC, f"dims {hidden} {inputs}"]
    lines.extend(" ".join(_fmt(v) for v in row) for row in net.w1)
    lines.append(" ".join(_fmt(v) for v in net.b1))
    lines.append(" ".join(_fmt(v) for v in net.w2[0]))
    lines.append(_fmt(net.b2))
    return "\n".join(lines) + "\n"


def _parse_floats(line: str, expected: int, lineno: int) -> NDArray[np.float64]:
    parts = line.split()
    if len(parts) != expected:
        raise ParseError(f"expected {expected} values, got {len(parts)}", line=lineno)
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError as e:
        raise ParseError(f"invalid number: {e}", line=lineno) from e


def loads_weightnet(text: str) -> WeightNet:
    """
    Parse the WeightNet text format.

    Raises:
        ParseError: On a wrong magic line, dimensions or value counts
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != WEIGHTNET_MAGIC:
        raise ParseError(f"missing '{WEIGHTNET_MAGIC}' header", line=1)
    dims = lines[1].split() if len(lines) > 1 else []
    if len(dims) != 3 or dims[0] != "dims":
        raise ParseError("expected 'dims <hidden> <inputs>'", line=2)
    try:
        hidden, inputs = int(dims[1]), int(dims[2])
    except ValueError as e:
        raise ParseError(f"invalid dimensions: {e}", line=2) from e
    if inputs != INPUT_DIM:
        raise ParseError(f"input dimension must be {INPUT_DIM}, got {inputs}", line=2)
    if len(lines) != 2 + hidden + 3:
        raise ParseError(f"expected {2 + hidden + 3} lines, got {len(lines)}", line=len(lines))

    w1 = np.stack([_parse_floats(lines[2 + r], inputs, 3 + r) for r in range(hidden)])
    b1 = _parse_floats(lines[2 + hidden], hidden, 3 + hidden)
    w2 = _parse_floats(lines[3 + hidden], hidden, 4 + hidden)
    b2 = _parse_floats(lines[4 + hidden], 1, 5 + hidden)
    try:
        return WeightNet(w1=w1, b1=b1, w2=w2[None, :], b2=float(b2[0]))
    except ValueError as e:
        raise ParseError(str(e)) from e


def dumps_gate(gate: GateModel) -> str:
    """Serialize a GateModel to its versioned text format."""
    return f"{GATE_MAGIC}\nslope {_fmt(gate.slope)}\nintercept {_fmt(gate.intercept)}\n"


def loads_gate(text: str) -> GateModel:
    """
    Parse the GateModel text format.

    Raises:
        ParseError: On a wrong magic line or missing parameters
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != GATE_MAGIC:
        raise ParseError(f"missing '{GATE_MAGIC}' header", line=1)
    values: dict[str, float] = {}
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2 or parts[0] not in ("slope", "intercept"):
            raise ParseError(f"unexpected entry {line!r}", line=lineno)
        try:
            values[parts[0]] = float(parts[1])
        except ValueError as e:
            raise ParseError(f"invalid number: {e}", line=lineno) from e
    if set(values) != {"slope", "intercept"}:
        raise ParseError("gate file needs both slope and intercept")
    if not all(math.isfinite(v) for v in values.values()):
        raise ParseError("gate parameters must be finite")
    return GateModel(slope=values["slope"], intercept=values["intercept"])


def save_weightnet(net: WeightNet, path: Path) -> None:
    path.write_text(dumps_weightnet(net), encoding="utf-8")


def load_weightnet(path: Path) -> WeightNet:
    return loads_weightnet(path.read_text(encoding="utf-8"))


def save_gate(gate: GateModel, path: Path) -> None:
    path.write_text(dumps_gate(gate), encoding="utf-8")


def load_gate(path: Path) -> GateModel:
    return loads_gate(path.read_text(encoding="utf-8"))
