"""Synthetic single-shot readout generation and benchmark estimators."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EstimationError, UndefinedConditionalError

__all__ = [
    "BlobModel",
    "ShotSet",
    "ReadoutBenchmarks",
    "synth_shots",
    "assignment_fidelity",
    "pqnd",
    "depletion_time",
]


@dataclass(frozen=True)
class BlobModel:
    """Two Gaussian IQ blobs plus an optional leakage blob for |1> shots."""

    mean0: tuple
    mean1: tuple
    sigma: float
    leak_prob: float = 0.0
    mean2: tuple | None = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise DomainError("sigma must be positive")
        if not 0.0 <= self.leak_prob <= 1.0:
            raise DomainError("leak_prob must be in [0, 1]")
        if self.leak_prob > 0 and self.mean2 is None:
            raise DomainError("leakage requires a third blob center")


@dataclass
class ShotSet:
    i: np.ndarray
    q: np.ndarray
    labels: np.ndarray  # prepared state per shot, 0 or 1
    leaked: np.ndarray | None = None

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if not (len(self.i) == len(self.q) == len(self.labels)):
            raise DomainError("i, q and labels must have equal lengths")

    def __len__(self):
        return len(self.i)


@dataclass
class ReadoutBenchmarks:
    f_ro: float
    eps_ro: float
    threshold: float
    axis: tuple
    p_qnd: float | None = None
    extras: dict = field(default_factory=dict)


def synth_shots(model, n_per_state, seed):
    """Deterministic Gaussian shot generator for the estimator tests."""
    if n_per_state < 1:
        raise DomainError("n_per_state must be at least 1")
    rng = np.random.default_rng(seed)
    n = int(n_per_state)
    centers0 = np.tile(model.mean0, (n, 1))
    leaked1 = rng.random(n) < model.leak_prob
    centers1 = np.tile(model.mean1, (n, 1))
    if model.mean2 is not None:
        centers1[leaked1] = model.mean2
    pts = np.vstack([centers0, centers1]) + model.sigma * rng.standard_normal((2 * n, 2))
    labels = np.concatenate([np.zeros(n, dtype=int), np.ones(n, dtype=int)])
    leaked = np.concatenate([np.zeros(n, dtype=bool), leaked1])
    return ShotSet(i=pts[:, 0], q=pts[:, 1], labels=labels, leaked=leaked)


def assignment_fidelity(shots):
    """Average assignment fidelity via the optimal 1-d threshold.

    Shots are projected on the axis joining the per-label means; the
    threshold scan over midpoints of sorted projections maximizes the
    average correct-assignment probability.
    """
    labels = shots.labels
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise EstimationError("both prepared states are required")
    pts = np.column_stack([shots.i, shots.q])
    mu0 = pts[labels == 0].mean(axis=0)
    mu1 = pts[labels == 1].mean(axis=0)
    axis = mu1 - mu0
    norm = np.linalg.norm(axis)
    if norm == 0:
        axis = np.array([1.0, 0.0])
        norm = 1.0
    axis = axis / norm
    x = pts @ axis

    order = np.argsort(x, kind="stable")
    xs = x[order]
    ls = labels[order]
    n0 = int((labels == 0).sum())
    n1 = int((labels == 1).sum())
    # cum0[k]: zeros among the first k sorted shots (assigned 0 if threshold
    # sits after position k); correct = cum0[k]/n0 + (ones above k)/n1
    cum0 = np.concatenate([[0], np.cumsum(ls == 0)])
    cum1 = np.concatenate([[0], np.cumsum(ls == 1)])
    correct = cum0 / n0 + (n1 - cum1) / n1  # over split positions 0..n
    k = int(np.argmax(correct))
    f_ro = float(correct[k] / 2.0)
    if k == 0:
        threshold = xs[0] - 1.0
    elif k == len(xs):
        threshold = xs[-1] + 1.0
    else:
        threshold = 0.5 * (xs[k - 1] + xs[k])
    return ReadoutBenchmarks(
        f_ro=f_ro,
        eps_ro=1.0 - f_ro,
        threshold=float(threshold),
        axis=(float(axis[0]), float(axis[1])),
    )


def pqnd(m1, m2):
    """QND probability from the last two measurement outcomes.

    Returns [p(m1=0|m2=1) + p(m1=1|m2=0)] / 2 from empirical counts; the
    pi pulse between the measurements is the caller's sequence semantics.
    """
    m1 = np.asarray(m1, dtype=int)
    m2 = np.asarray(m2, dtype=int)
    if m1.shape != m2.shape or m1.ndim != 1 or len(m1) < 1:
        raise DomainError("m1 and m2 must be equal-length non-empty sequences")
    n2_1 = int((m2 == 1).sum())
    n2_0 = int((m2 == 0).sum())
    if n2_1 == 0:
        raise UndefinedConditionalError("no shots with m2=1", condition="m2=1")
    if n2_0 == 0:
        raise UndefinedConditionalError("no shots with m2=0", condition="m2=0")
    p01 = float(((m1 == 0) & (m2 == 1)).sum() / n2_1)
    p10 = float(((m1 == 1) & (m2 == 0)).sum() / n2_0)
    return 0.5 * (p01 + p10)


def depletion_time(kappa_eff, n_initial_over_threshold):
    """Exponential ring-down time to deplete to the photon threshold (s)."""
    if kappa_eff <= 0:
        raise DomainError("kappa_eff must be positive")
    if n_initial_over_threshold <= 1.0:
        return 0.0
    return math.log(n_initial_over_threshold) / (2.0 * math.pi * kappa_eff)
