"""Measurement-record post-processing and the trained linear readout.

Heterodyne records are reduced to time-averaged quadratures by a boxcar
filter, I(t) = (1/(t-t0)) * integral of J over (t0, t], optionally
averaged over repeated shots of the same input.  A linear layer with
softmax normalization then maps the averaged quadrature vector to class
scores; it is trained by full-batch gradient descent with backtracking
line search on the squared error against one-hot targets, which for a
softmax-linear model is a well-behaved (though not strictly convex)
objective with a reliably non-increasing loss under line search.

Quadrature vectors are interleaved per channel: (I_1^X, I_1^P, I_2^X,
I_2^P, ...).  An optional per-channel projection picks the single
quadrature cos(phi_k) I_k^X + sin(phi_k) I_k^P, halving the feature
dimension; the projection phases are trained by coordinate descent on a
phase grid with local refinement.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .integrate import HeterodyneRecord, steady_state

__all__ = [
    "ReadoutConfig",
    "MeasuredOutput",
    "OutputLayer",
    "TrainingInfo",
    "ClassificationMetrics",
    "Hyperplane",
    "boxcar_filter",
    "ensemble_average",
    "interleave_channels",
    "project_phi",
    "softmax",
    "train",
    "predict",
    "decision_boundaries",
    "metrics",
    "b12_metric",
    "train_on_means_baseline",
    "assemble_dataset",
    "one_hot",
    "save_dataset_csv",
    "load_dataset_csv",
    "save_layer_json",
    "load_layer_json",
]

DATASET_SCHEMA = "kerrchain-dataset-v1"
LAYER_SCHEMA = "kerrchain-output-layer-v1"


# --------------------------------------------------------------------------
# Configuration and data types


@dataclass(frozen=True)
class ReadoutConfig:
    """Filtering window and shot count for building measured outputs."""

    t0: float = 0.0
    t_final: float = 10.0
    n_shots: int = 1
    mode: str = "single_shot"

    def __post_init__(self):
        if not 0.0 <= self.t0 < self.t_final:
            raise ValueError(f"need 0 <= t0 < t_final, got t0={self.t0}, t_final={self.t_final}")
        if self.n_shots < 1:
            raise ValueError(f"n_shots must be >= 1, got {self.n_shots}")
        if self.mode not in ("single_shot", "ensemble"):
            raise ValueError(f"mode must be 'single_shot' or 'ensemble', got {self.mode!r}")
        if (self.mode == "single_shot") != (self.n_shots == 1):
            raise ValueError(
                f"mode {self.mode!r} is inconsistent with n_shots={self.n_shots}"
            )


@dataclass(frozen=True)
class MeasuredOutput:
    """One filtered readout sample: feature vector, class label, indices."""

    x: np.ndarray
    label: int
    trajectory: int
    time: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if not np.isfinite(x).all():
            raise ValueError("measured output contains non-finite entries")
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class OutputLayer:
    """Linear readout: class scores are softmax(W x + b).

    When ``phases`` is present the layer expects interleaved 2K-vectors
    and first projects them to K per-channel quadratures; W then has K
    columns.
    """

    weights: np.ndarray
    biases: np.ndarray
    phases: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"inconsistent layer shapes {w.shape} / {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("layer parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        if self.phases is not None:
            p = np.mod(np.asarray(self.phases, dtype=np.float64), 2.0 * math.pi)
            if w.shape[1] != p.shape[0]:
                raise ValueError(
                    f"{p.shape[0]} phases need {p.shape[0]} weight columns, got {w.shape[1]}"
                )
            object.__setattr__(self, "phases", p)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]


@dataclass
class TrainingInfo:
    """Outcome of one optimizer run."""

    converged: bool
    n_iterations: int
    loss: float
    grad_norm: float
    train_accuracy: float
    warning: Optional[str] = None


@dataclass
class ClassificationMetrics:
    """Accuracy curve summary: best value and where it is first attained.

    ``arg_max`` is the axis value (time or shot count) at the first curve
    index within ``tie_tol`` of the maximum, reported only when the
    maximum meets ``threshold``; otherwise None.
    """

    axis: np.ndarray
    accuracy_curve: np.ndarray
    c_max: float
    arg_max: Optional[float]
    threshold: float = 0.99
    tie_tol: float = 1e-9


@dataclass(frozen=True)
class Hyperplane:
    """Pairwise decision boundary offset + normal . x = 0."""

    offset: float
    normal: np.ndarray
    degenerate: bool = False


# --------------------------------------------------------------------------
# Filtering


def boxcar_filter(
    times: np.ndarray, values: np.ndarray, t0: float = 0.0
) -> Tuple[np.ndarray, np.ndarray]:
    """Running time-average of block-averaged currents.

    Args:
        times: block-end times of the stored record, shape (M,).
        values: block-averaged currents with the time axis third from the
            end, shape (..., M, K, 2); a bare (M,) series is also accepted.
        t0: averaging starts here; the average is normalized by (t - t0)
            when t0 > 0 and by t otherwise.  The current is treated as
            constant within each stored block.

    Returns:
        (out_times, filtered) where out_times are the stored times
        strictly after t0 and filtered has the matching shape.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        raise ValueError("empty record")
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[:, None, None]
    if values.shape[-3] != times.shape[0]:
        raise ValueError(
            f"time axis mismatch: {values.shape[-3]} blocks vs {times.shape[0]} times"
        )
    starts = np.concatenate([[0.0], times[:-1]])
    lengths = (times - starts)[:, None, None]
    cum = np.cumsum(values * lengths, axis=-3)
    if t0 <= 0.0:
        out = cum / times[:, None, None]
        return times, (out[..., 0, 0] if squeeze else out)
    # Stored times within float fuzz of t0 count as t0 itself; otherwise a
    # near-zero averaging window would amplify cancellation error.
    tol = 1e-12 * max(1.0, abs(t0))
    j = int(np.searchsorted(times, t0 + tol, side="right"))
    if j >= times.shape[0]:
        raise ValueError(f"t0={t0} leaves no stored samples (last time {times[-1]})")
    base = cum[..., j - 1, :, :] if j > 0 else 0.0
    if starts[j] < t0 - tol:
        base = base + values[..., j, :, :] * (t0 - starts[j])
    out_times = times[j:]
    out = (cum[..., j:, :, :] - np.asarray(base)[..., None, :, :]) / (
        out_times - t0
    )[:, None, None]
    return out_times, (out[..., 0, 0] if squeeze else out)


def ensemble_average(
    times: np.ndarray,
    shot_values: Union[np.ndarray, Sequence[np.ndarray]],
    t0: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean boxcar output over repeated shots of the same input.

    ``shot_values`` stacks the per-shot records along the first axis,
    shape (N_S, M, K, 2).  One shot reduces to ``boxcar_filter``.
    """
    stacked = np.asarray(shot_values, dtype=np.float64)
    if stacked.ndim == 3:
        stacked = stacked[None]
    out_times, filtered = boxcar_filter(times, stacked, t0=t0)
    return out_times, filtered.mean(axis=0)


def interleave_channels(filtered: np.ndarray) -> np.ndarray:
    """Flatten trailing (K, 2) quadrature axes to interleaved length 2K."""
    return np.asarray(filtered).reshape(*filtered.shape[:-2], -1)


def record_features(record: HeterodyneRecord, t0: float = 0.0):
    """Boxcar-filter one record into interleaved feature rows."""
    out_times, filtered = boxcar_filter(record.times, record.values, t0=t0)
    return out_times, interleave_channels(filtered)


# --------------------------------------------------------------------------
# Projection, softmax, prediction


def project_phi(x: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Per-channel quadrature projection of interleaved vectors.

    Maps (..., 2K) to (..., K) via cos(phi_k) x[2k] + sin(phi_k) x[2k+1].
    """
    x = np.asarray(x, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.float64)
    k = phases.shape[0]
    if x.shape[-1] != 2 * k:
        raise ValueError(f"need {2 * k} interleaved features, got {x.shape[-1]}")
    pairs = x.reshape(*x.shape[:-1], k, 2)
    return pairs[..., 0] * np.cos(phases) + pairs[..., 1] * np.sin(phases)


def softmax(z: np.ndarray, axis: int = 0) -> np.ndarray:
    """Numerically stable softmax along ``axis``."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _layer_inputs(layer: OutputLayer, x: np.ndarray) -> np.ndarray:
    """Feature matrix (D, N) the weights act on, applying any projection."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if layer.phases is not None:
        x = project_phi(x, layer.phases)
    return x.T


def predict(layer: OutputLayer, x: np.ndarray) -> np.ndarray:
    """Predicted class labels (1-based) for samples in rows of ``x``.

    Ties in the softmax scores go to the lowest class index.
    """
    feats = _layer_inputs(layer, x)
    scores = softmax(layer.weights @ feats + layer.biases[:, None], axis=0)
    return np.argmax(scores, axis=0) + 1


def class_scores(layer: OutputLayer, x: np.ndarray) -> np.ndarray:
    """Softmax class scores, shape (C, N)."""
    feats = _layer_inputs(layer, x)
    return softmax(layer.weights @ feats + layer.biases[:, None], axis=0)


def decision_boundaries(layer: OutputLayer, i: int, j: int) -> Hyperplane:
    """Hyperplane where classes ``i`` and ``j`` (1-based) score equally.

    Points x with offset + normal.x = 0 give a score tie; a vanishing
    normal (identical rows) degenerates to the whole space and is flagged.
    """
    wi, wj = layer.weights[i - 1], layer.weights[j - 1]
    normal = wi - wj
    offset = float(layer.biases[i - 1] - layer.biases[j - 1])
    degenerate = bool(np.linalg.norm(normal) < 1e-300)
    return Hyperplane(offset=offset, normal=normal, degenerate=degenerate)


# --------------------------------------------------------------------------
# Training


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """One-hot target matrix (C, N) from 1-based labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 1 or labels.max() > n_classes:
        raise ValueError(f"labels must lie in 1..{n_classes}")
    y = np.zeros((n_classes, labels.shape[0]))
    y[labels - 1, np.arange(labels.shape[0])] = 1.0
    return y


def _loss_and_grad(w, b, x, y):
    """Squared error against one-hot targets and its exact gradient."""
    z = w @ x + b[:, None]
    s = softmax(z, axis=0)
    diff = s - y
    loss = float(np.sum(diff * diff))
    # d loss / d z through the softmax Jacobian, column by column
    e = 2.0 * diff
    gz = s * e - s * np.sum(s * e, axis=0, keepdims=True)
    return loss, gz @ x.T, gz.sum(axis=1), s


def _descend(w, b, x, y, max_iter, grad_tol, fit_biases=True):
    """Gradient descent with backtracking; loss is non-increasing."""
    bias_mask = 1.0 if fit_biases else 0.0
    loss, gw, gb, _ = _loss_and_grad(w, b, x, y)
    gb = gb * bias_mask
    step = 1.0 / max(1.0, float(x.shape[1]))
    n_done = 0
    for n_done in range(1, max_iter + 1):
        gnorm_sq = float(np.sum(gw * gw) + np.sum(gb * gb))
        if math.sqrt(gnorm_sq) < grad_tol:
            n_done -= 1
            break
        accepted = False
        for _ in range(60):
            w_new = w - step * gw
            b_new = b - step * gb
            new_loss, gw_new, gb_new, _ = _loss_and_grad(w_new, b_new, x, y)
            gb_new = gb_new * bias_mask
            if new_loss <= loss - 1e-4 * step * gnorm_sq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        assert new_loss <= loss, "line search accepted an increasing step"
        w, b, loss, gw, gb = w_new, b_new, new_loss, gw_new, gb_new
        step *= 1.3
    gnorm = math.sqrt(float(np.sum(gw * gw) + np.sum(gb * gb)))
    return w, b, loss, gnorm, n_done


def _phase_objective(phases, x2k, y, w, b, budget, grad_tol, fit_biases):
    """Retrain (w, b) at fixed phases for a limited budget; return loss."""
    xp = project_phi(x2k.T, phases).T
    w, b, loss, _, _ = _descend(w, b, xp, y, budget, grad_tol, fit_biases)
    return loss, w, b


def train(
    x: np.ndarray,
    labels: np.ndarray,
    n_classes: Optional[int] = None,
    train_phases: bool = False,
    fit_biases: bool = True,
    max_iter: int = 5000,
    grad_tol: float = 1e-8,
    phase_grid: int = 64,
    phase_budget: int = 150,
) -> Tuple[OutputLayer, TrainingInfo]:
    """Fit the softmax linear layer to a labelled feature matrix.

    Args:
        x: features, shape (D, N) with one column per sample (interleaved
            quadratures; D = 2K).
        labels: 1-based class labels, shape (N,).
        n_classes: class count C; defaults to max(labels).
        train_phases: learn per-channel projection phases jointly with a
            (C, K) weight matrix by coordinate descent over ``phase_grid``
            candidate phases plus local refinement.
        fit_biases: when False the biases stay pinned at zero, so every
            pairwise decision boundary passes through the origin.  Tasks
            whose class signals are symmetric around the origin use this
            to keep the readout angle-only.
        max_iter, grad_tol: stopping rules of the final descent.
        phase_budget: inner descent iterations per phase candidate.

    Returns:
        (layer, info); if the gradient tolerance was not reached the best
        parameters found are returned and ``info.warning`` is set.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != labels.shape[0]:
        raise ValueError(f"feature/label mismatch: {x.shape} vs {labels.shape}")
    c = int(labels.max()) if n_classes is None else int(n_classes)
    counts = np.bincount(labels, minlength=c + 1)[1:]
    if (counts == 0).any():
        raise ValueError("every class needs at least one training sample")
    y = one_hot(labels, c)

    phases = None
    if train_phases:
        if x.shape[0] % 2:
            raise ValueError("phase training needs interleaved (2K) features")
        k = x.shape[0] // 2
        phases = np.zeros(k)
        w = np.zeros((c, k))
        b = np.zeros(c)
        grid = np.linspace(0.0, 2.0 * math.pi, phase_grid, endpoint=False)
        for _ in range(2):  # coordinate-descent sweeps over the channels
            for ch in range(k):
                best = (math.inf, phases[ch], w, b)
                for cand in grid:
                    trial = phases.copy()
                    trial[ch] = cand
                    loss, w_t, b_t = _phase_objective(
                        trial, x, y, w, b, phase_budget, grad_tol, fit_biases
                    )
                    if loss < best[0]:
                        best = (loss, cand, w_t, b_t)
                # local refinement: shrink a bracket around the grid winner
                lo = best[1] - 2.0 * math.pi / phase_grid
                hi = best[1] + 2.0 * math.pi / phase_grid
                for _ in range(8):
                    for cand in (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0):
                        trial = phases.copy()
                        trial[ch] = cand
                        loss, w_t, b_t = _phase_objective(
                            trial, x, y, w, b, phase_budget, grad_tol, fit_biases
                        )
                        if loss < best[0]:
                            best = (loss, cand, w_t, b_t)
                    width = (hi - lo) / 3.0
                    lo, hi = best[1] - width, best[1] + width
                phases[ch] = best[1]
                w, b = best[2], best[3]
        x_fit = project_phi(x.T, phases).T
    else:
        w = np.zeros((c, x.shape[0]))
        b = np.zeros(c)
        x_fit = x

    w, b, loss, gnorm, n_done = _descend(
        w, b, x_fit, y, max_iter, grad_tol, fit_biases
    )
    layer = OutputLayer(weights=w, biases=b, phases=phases)
    accuracy = float(np.mean(predict(layer, x.T) == labels))
    converged = gnorm < grad_tol
    info = TrainingInfo(
        converged=converged,
        n_iterations=n_done,
        loss=loss,
        grad_norm=gnorm,
        train_accuracy=accuracy,
        warning=None
        if converged
        else f"stopped after {n_done} iterations with gradient norm {gnorm:.3e}",
    )
    return layer, info


def train_on_means_baseline(
    x: np.ndarray, labels: np.ndarray, n_classes: Optional[int] = None
) -> OutputLayer:
    """Nearest-class-mean layer: boundaries are perpendicular bisectors.

    Row i of W is the class-i feature mean m_i with bias -|m_i|^2/2, so
    the i-j boundary is the perpendicular bisector of the segment m_i m_j.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    c = int(labels.max()) if n_classes is None else int(n_classes)
    w = np.zeros((c, x.shape[0]))
    b = np.zeros(c)
    for cls in range(1, c + 1):
        cols = labels == cls
        if not cols.any():
            raise ValueError(f"class {cls} has no samples")
        m = x[:, cols].mean(axis=1)
        w[cls - 1] = m
        b[cls - 1] = -0.5 * float(m @ m)
    return OutputLayer(weights=w, biases=b)


# --------------------------------------------------------------------------
# Metrics


def metrics(
    axis: np.ndarray,
    accuracy_curve: np.ndarray,
    threshold: float = 0.99,
    tie_tol: float = 1e-9,
) -> ClassificationMetrics:
    """Summarize an accuracy curve into (C_max, first-attained position).

    The position is the axis value at the first index within ``tie_tol``
    of the curve maximum; it is reported only when the maximum reaches
    ``threshold``.
    """
    axis = np.asarray(axis, dtype=np.float64)
    curve = np.asarray(accuracy_curve, dtype=np.float64)
    if axis.shape != curve.shape or curve.size == 0:
        raise ValueError("axis and accuracy curve must be equal-length, non-empty")
    if curve.min() < -tie_tol or curve.max() > 1.0 + tie_tol:
        raise ValueError("accuracies must lie in [0, 1]")
    c_max = float(curve.max())
    arg = None
    if c_max >= threshold:
        first = int(np.argmax(curve >= c_max - tie_tol))
        arg = float(axis[first])
    return ClassificationMetrics(
        axis=axis,
        accuracy_curve=curve,
        c_max=c_max,
        arg_max=arg,
        threshold=threshold,
        tie_tol=tie_tol,
    )


def accuracy(layer: OutputLayer, x: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows of ``x`` predicted as ``labels``."""
    labels = np.asarray(labels, dtype=np.int64)
    return float(np.mean(predict(layer, x) == labels))


def b12_metric(chain_1, chain_2, mode: str = "b1", **steady_kwargs) -> float:
    """Distance between the two classes' steady node amplitudes.

    Computes |<b>_ss(chain_1) - <b>_ss(chain_2)| for the named mode from
    the unconditional steady states.  Zero for linear chains whose classes
    share first moments; grows once the Kerr term couples the differing
    second cumulants back into the means.
    """
    s1 = steady_state(chain_1, **steady_kwargs)
    s2 = steady_state(chain_2, **steady_kwargs)
    i1 = chain_1.network.index(mode)
    i2 = chain_2.network.index(mode)
    return float(abs(s1.mu[i1] - s2.mu[i2]))


# --------------------------------------------------------------------------
# Dataset assembly and persistence


def assemble_dataset(
    outputs: Sequence[MeasuredOutput],
) -> Tuple[np.ndarray, np.ndarray]:
    """Stack measured outputs into (X, labels) with one column per sample."""
    if not outputs:
        raise ValueError("no measured outputs to assemble")
    dim = outputs[0].x.shape[0]
    if any(o.x.shape != (dim,) for o in outputs):
        raise ValueError("measured outputs have mixed feature dimensions")
    x = np.stack([o.x for o in outputs], axis=1)
    labels = np.array([o.label for o in outputs], dtype=np.int64)
    return x, labels


def save_dataset_csv(
    path,
    outputs: Iterable[MeasuredOutput],
    extra_comments: Optional[Sequence[str]] = None,
) -> None:
    """Write one row per measured output: t, label, trajectory, features.

    ``extra_comments`` become additional leading ``# key=value`` lines
    (used for config-hash stamping); the loader skips them.
    """
    it = iter(outputs)
    try:
        first = next(it)
    except StopIteration:
        raise ValueError("refusing to write an empty dataset") from None
    dim = first.x.shape[0]
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={DATASET_SCHEMA}\n")
        for line in extra_comments or ():
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "label", "trajectory"] + [f"x{i}" for i in range(dim)])
        for o in itertools.chain([first], it):
            writer.writerow(
                [repr(float(o.time)), o.label, o.trajectory]
                + [repr(float(v)) for v in o.x]
            )


def load_dataset_csv(path) -> List[MeasuredOutput]:
    """Parse a dataset CSV back into measured outputs (lossless)."""
    with open(path, newline="") as fh:
        schema_line = fh.readline().strip()
        if schema_line != f"# schema={DATASET_SCHEMA}":
            raise ValueError(f"unrecognized dataset schema line {schema_line!r}")
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        n_features = len(header) - 3
        outputs = []
        for row in reader:
            outputs.append(
                MeasuredOutput(
                    x=np.array([float(v) for v in row[3 : 3 + n_features]]),
                    label=int(row[1]),
                    trajectory=int(row[2]),
                    time=float(row[0]),
                )
            )
    return outputs


def save_layer_json(path, layer: OutputLayer, metadata: Optional[dict] = None) -> None:
    """Persist a trained layer with its provenance metadata."""
    payload = {
        "schema": LAYER_SCHEMA,
        "weights": layer.weights.tolist(),
        "biases": layer.biases.tolist(),
        "phases": None if layer.phases is None else layer.phases.tolist(),
        "metadata": metadata or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_layer_json(path) -> Tuple[OutputLayer, dict]:
    """Load a trained layer and its metadata."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema") != LAYER_SCHEMA:
        raise ValueError(f"unrecognized layer schema {payload.get('schema')!r}")
    layer = OutputLayer(
        weights=np.array(payload["weights"], dtype=np.float64),
        biases=np.array(payload["biases"], dtype=np.float64),
        phases=None
        if payload["phases"] is None
        else np.array(payload["phases"], dtype=np.float64),
    )
    return layer, payload.get("metadata", {})
