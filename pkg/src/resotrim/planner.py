"""Quantized shoelace-removal planning.

Removing a grounding airbridge ("shoelace", 5 um pitch) from the
short-circuit end of a quarter-wave CPW resonator lengthens it by one
pitch and lowers its frequency by

    delta_f = -4 f0^2 delta_l / nu_rho,

with nu_rho the CPW phase velocity. Removal is irreversible, so planning
is downward-only and ties round toward fewer removals.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import pairmodel
from .errors import (
    DomainError,
    OutOfRangeError,
    UnderdeterminedError,
    UnmatchableError,
)

__all__ = [
    "ShoelaceArray",
    "ResonatorRecord",
    "TrimAction",
    "TrimPlan",
    "PairEntry",
    "TwoCycleResult",
    "NAIVE_SLOPE",
    "DEFAULT_PITCH",
    "DEFAULT_TOTAL",
    "freq_shift",
    "linear_shift_fn",
    "eq2_shift_fn",
    "shift_to_count",
    "plan_pair_match",
    "plan_match_all",
    "plan_crowding",
    "fit_nu_rho",
    "simulate_outcomes",
    "two_cycle_protocol",
]

DEFAULT_PITCH = 5e-6  # m
DEFAULT_TOTAL = 10
NAIVE_SLOPE = -2e12  # Hz per m of added length (-2 MHz/um), first-cycle default


@dataclass
class ShoelaceArray:
    total: int = DEFAULT_TOTAL
    remaining: int = DEFAULT_TOTAL
    pitch: float = DEFAULT_PITCH

    def __post_init__(self):
        if not (0 <= self.remaining <= self.total):
            raise DomainError("remaining must be in [0, total]")
        if self.pitch <= 0:
            raise DomainError("pitch must be positive")


@dataclass
class ResonatorRecord:
    id: str
    role: str  # "readout" | "purcell"
    f_meas: float  # Hz, latest characterization
    shoelaces: ShoelaceArray = field(default_factory=ShoelaceArray)

    def __post_init__(self):
        if self.role not in ("readout", "purcell"):
            raise DomainError(f"unknown resonator role {self.role!r}")
        if self.f_meas <= 0:
            raise DomainError("f_meas must be positive")


@dataclass(frozen=True)
class TrimAction:
    resonator_id: str
    n_remove: int
    delta_l: float
    predicted_delta_f: float
    predicted_f: float

    def __post_init__(self):
        if self.n_remove < 0 or self.predicted_delta_f > 0:
            raise DomainError("removal can only lower frequency")


@dataclass
class TrimPlan:
    actions: list
    objective_before: float
    objective_after: float
    cycle_index: int = 0
    feasible: bool = True
    notes: list = field(default_factory=list)

    @property
    def total_removed(self):
        return sum(a.n_remove for a in self.actions)


@dataclass
class PairEntry:
    """One readout/Purcell pair on a feedline: fitted params plus records."""

    pair_id: str
    params: pairmodel.PairParams
    readout: ResonatorRecord
    purcell: ResonatorRecord


def freq_shift(f0, nu_rho, delta_l):
    """Frequency shift (Hz, <= 0) from lengthening by delta_l meters."""
    if f0 <= 0 or nu_rho <= 0:
        raise DomainError("f0 and nu_rho must be positive")
    if delta_l < 0:
        raise DomainError("delta_l must be non-negative")
    return -4.0 * f0**2 * delta_l / nu_rho


def eq2_shift_fn(nu_rho):
    """Shift predictor (f0, delta_l) -> Hz from the phase velocity."""
    return lambda f0, delta_l: freq_shift(f0, nu_rho, delta_l)


def linear_shift_fn(slope=NAIVE_SLOPE):
    """Naive first-cycle predictor delta_f = slope * delta_l (slope < 0)."""
    if slope >= 0:
        raise DomainError("slope must be negative")
    return lambda f0, delta_l: slope * delta_l


def shift_to_count(f0, nu_rho, target_shift, remaining, pitch=DEFAULT_PITCH, shift_fn=None):
    """Shoelace count whose predicted shift best matches target_shift.

    Ties round toward fewer removals. Raises OutOfRangeError when the
    requested shift exceeds the full remaining range by more than half a
    trim quantum; the error carries the maximum achievable shift.
    """
    if target_shift > 0:
        raise DomainError("target_shift must be <= 0 (removal only lowers f)")
    if shift_fn is None:
        shift_fn = eq2_shift_fn(nu_rho)
    quantum = abs(shift_fn(f0, pitch))
    max_shift = shift_fn(f0, remaining * pitch)
    if abs(target_shift) > abs(max_shift) + 0.5 * quantum:
        raise OutOfRangeError(
            f"requested shift {target_shift:.3e} Hz exceeds remaining range "
            f"{max_shift:.3e} Hz",
            max_shift=max_shift,
        )
    best_n, best_err = 0, abs(target_shift)
    for n in range(1, remaining + 1):
        err = abs(shift_fn(f0, n * pitch) - target_shift)
        if err < best_err - 1e-12 * max(1.0, abs(target_shift)):
            best_n, best_err = n, err
    return best_n


def _action(record, n, shift_fn):
    delta_l = n * record.shoelaces.pitch
    df = shift_fn(record.f_meas, delta_l) if n else 0.0
    return TrimAction(
        resonator_id=record.id,
        n_remove=n,
        delta_l=delta_l,
        predicted_delta_f=df,
        predicted_f=record.f_meas + df,
    )


def plan_pair_match(r, p, nu_rho, shift_fn=None):
    """Trim the higher resonator of a pair to minimize |f_P - f_R|.

    Downward-only moves can only close the gap from above, so the action
    always targets whichever resonator currently sits higher. A gap
    already within half a trim quantum yields a zero-removal action.
    """
    if r.role != "readout" or p.role != "purcell":
        raise DomainError("expected (readout, purcell) records")
    if shift_fn is None:
        shift_fn = eq2_shift_fn(nu_rho)
    high, low = (p, r) if p.f_meas >= r.f_meas else (r, p)
    gap = high.f_meas - low.f_meas
    quantum = abs(shift_fn(high.f_meas, high.shoelaces.pitch))
    if gap <= 0.5 * quantum:
        return _action(high, 0, shift_fn)
    if high.shoelaces.remaining == 0:
        raise UnmatchableError(
            f"{high.id} has no shoelaces left and the gap is {gap:.3e} Hz"
        )
    best_n, best_gap = 0, gap
    for n in range(1, high.shoelaces.remaining + 1):
        new_gap = abs(high.f_meas + shift_fn(high.f_meas, n * high.shoelaces.pitch) - low.f_meas)
        if new_gap < best_gap - 1e-12 * max(1.0, gap):
            best_n, best_gap = n, new_gap
    return _action(high, best_n, shift_fn)


def _pair_candidates(entry, nu_rho, shift_fn):
    """Joint candidates for one pair: match action plus k extra shoelaces
    removed from both resonators (shifts the hybridized modes down while
    keeping the pair matched)."""
    base = plan_pair_match(entry.readout, entry.purcell, nu_rho, shift_fn)
    n_r = base.n_remove if base.resonator_id == entry.readout.id else 0
    n_p = base.n_remove if base.resonator_id == entry.purcell.id else 0
    head = min(
        entry.readout.shoelaces.remaining - n_r,
        entry.purcell.shoelaces.remaining - n_p,
    )
    out = []
    for k in range(head + 1):
        a_r = _action(entry.readout, n_r + k, shift_fn)
        a_p = _action(entry.purcell, n_p + k, shift_fn)
        out.append((a_r, a_p))
    return out


def _mode_frequencies(entry, a_r, a_p):
    params = entry.params.with_frequencies(a_r.predicted_f, a_p.predicted_f)
    low, high = pairmodel.eigenmodes(params, "ground")
    return low.f_mode, high.f_mode


def _crowding_objective(entries, choice, guard_band):
    """Lexicographic objective (violations, total mismatch, total removed).

    Spacings are counted between hybridized modes of *different* pairs;
    the intra-pair 2J splitting is fixed by design, not trimmable.
    Also returns the minimum inter-pair spacing for reporting.
    """
    modes = []
    mismatch = 0.0
    removed = 0
    for entry, (a_r, a_p) in zip(entries, choice):
        modes.append((_mode_frequencies(entry, a_r, a_p), entry.pair_id))
        mismatch += abs(a_p.predicted_f - a_r.predicted_f)
        removed += a_r.n_remove + a_p.n_remove
    violations = 0
    min_spacing = np.inf
    for (m1, id1), (m2, id2) in itertools.combinations(modes, 2):
        for fa in m1:
            for fb in m2:
                gap = abs(fa - fb)
                min_spacing = min(min_spacing, gap)
                if gap < guard_band:
                    violations += 1
    return (violations, mismatch, removed), min_spacing


def _greedy_crowding(entries, candidates, guard_band):
    """Greedy-then-local-search over per-pair candidate indices."""
    idx = [0] * len(entries)

    def score(ix):
        return _crowding_objective(
            entries, [candidates[i][ix[i]] for i in range(len(entries))], guard_band
        )

    best = score(idx)
    improved = True
    while improved:
        improved = False
        for i in range(len(entries)):
            for k in range(len(candidates[i])):
                if k == idx[i]:
                    continue
                trial = list(idx)
                trial[i] = k
                s = score(trial)
                if s < best:
                    idx, best = trial, s
                    improved = True
    return idx


def plan_crowding(pairs, guard_band=None, nu_rho=None, shift_fn=None, cycle_index=0):
    """Resolve frequency crowding of hybridized modes on one feedline.

    ``pairs`` is a list of :class:`PairEntry`. Searches joint downward
    trims (exhaustive for <= 4 pairs, greedy with local search beyond)
    minimizing lexicographically: guard-band violations between modes of
    different pairs, total R-P mismatch, total shoelaces removed. The
    default guard band is 3x the largest effective linewidth.
    """
    if not pairs:
        raise DomainError("need at least one pair")
    if shift_fn is None:
        if nu_rho is None:
            raise DomainError("provide nu_rho or shift_fn")
        shift_fn = eq2_shift_fn(nu_rho)
    if guard_band is None:
        widths = []
        for e in pairs:
            widths.extend(m.kappa_eff for m in pairmodel.eigenmodes(e.params, "ground"))
        guard_band = 3.0 * max(widths)

    candidates = [_pair_candidates(e, nu_rho, shift_fn) for e in pairs]
    zero_choice = [
        (_action(e.readout, 0, shift_fn), _action(e.purcell, 0, shift_fn)) for e in pairs
    ]
    (_, _, _), spacing_before = _crowding_objective(pairs, zero_choice, guard_band)

    n_joint = int(np.prod([len(c) for c in candidates]))
    if len(pairs) <= 4 and n_joint <= 200_000:
        best_idx, best_score = None, None
        for combo in itertools.product(*(range(len(c)) for c in candidates)):
            choice = [candidates[i][combo[i]] for i in range(len(pairs))]
            score, _ = _crowding_objective(pairs, choice, guard_band)
            if best_score is None or score < best_score:
                best_idx, best_score = combo, score
    else:
        best_idx = _greedy_crowding(pairs, candidates, guard_band)
        best_score, _ = _crowding_objective(
            pairs, [candidates[i][best_idx[i]] for i in range(len(pairs))], guard_band
        )

    choice = [candidates[i][best_idx[i]] for i in range(len(pairs))]
    score, spacing_after = _crowding_objective(pairs, choice, guard_band)
    actions = [a for a_r, a_p in choice for a in (a_r, a_p) if a.n_remove > 0]
    plan = TrimPlan(
        actions=actions,
        objective_before=float(spacing_before),
        objective_after=float(spacing_after),
        cycle_index=cycle_index,
        feasible=score[0] == 0,
    )
    if score[0] > 0:
        plan.notes.append(f"{score[0]} guard-band violations remain (best effort)")
    return plan


def fit_nu_rho(samples):
    """Least-squares phase velocity from (f0, delta_l, delta_f) samples.

    The model is linear in 1/nu_rho and solved in closed form. Returns
    (nu_rho, residual_rms_hz).
    """
    usable = [(f0, dl, df) for f0, dl, df in samples if dl > 0]
    if not usable:
        raise UnderdeterminedError("need at least one sample with delta_l > 0")
    a = np.array([-4.0 * f0**2 * dl for f0, dl, _ in usable])
    y = np.array([df for _, _, df in usable])
    inv_nu = float(a @ y / (a @ a))
    if inv_nu <= 0:
        raise UnderdeterminedError("samples imply a non-physical phase velocity")
    resid = y - a * inv_nu
    return 1.0 / inv_nu, float(np.sqrt(np.mean(resid**2)))


def simulate_outcomes(records, plan, nu_rho_true):
    """Realized frequencies after applying a plan with the true velocity.

    Returns {resonator_id: f_after} for every record, trimmed or not.
    """
    by_id = {a.resonator_id: a for a in plan.actions}
    out = {}
    for rec in records:
        a = by_id.get(rec.id)
        if a is None or a.n_remove == 0:
            out[rec.id] = rec.f_meas
        else:
            out[rec.id] = rec.f_meas + freq_shift(rec.f_meas, nu_rho_true, a.delta_l)
    return out


@dataclass
class TwoCycleResult:
    plan_cycle1: TrimPlan
    nu_rho: float
    nu_rho_residual_rms: float
    plan_cycle2: TrimPlan


def plan_match_all(pairs, nu_rho, shift_fn, cycle_index):
    actions = []
    for r, p in pairs:
        a = plan_pair_match(r, p, nu_rho, shift_fn)
        if a.n_remove > 0:
            actions.append(a)
    gaps_before = [abs(p.f_meas - r.f_meas) for r, p in pairs]
    gaps_after = []
    by_id = {a.resonator_id: a for a in actions}
    for r, p in pairs:
        fr = by_id[r.id].predicted_f if r.id in by_id else r.f_meas
        fp = by_id[p.id].predicted_f if p.id in by_id else p.f_meas
        gaps_after.append(abs(fp - fr))
    return TrimPlan(
        actions=actions,
        objective_before=float(np.mean(gaps_before)) if gaps_before else 0.0,
        objective_after=float(np.mean(gaps_after)) if gaps_after else 0.0,
        cycle_index=cycle_index,
    )


def two_cycle_protocol(pairs, measurements_cycle0, measurements_cycle1, naive_slope=NAIVE_SLOPE):
    """Two trimming cycles: naive linear slope first, fitted velocity second.

    ``pairs`` is a list of (readout, purcell) ResonatorRecord tuples;
    the measurement dicts map resonator id -> characterized frequency
    before cycle 1 and after cycle 1 respectively. Cycle-1 shifts are
    planned with delta_f = naive_slope * delta_l; the realized cycle-1
    shifts then fix nu_rho, and cycle 2 re-plans with the quadratic
    model. Returns plans for both cycles plus the fitted velocity.
    """
    records = [rec for pair in pairs for rec in pair]
    for rec in records:
        rec.f_meas = measurements_cycle0[rec.id]
    plan1 = plan_match_all(pairs, None, linear_shift_fn(naive_slope), cycle_index=1)

    samples = []
    for a in plan1.actions:
        f0 = measurements_cycle0[a.resonator_id]
        df = measurements_cycle1[a.resonator_id] - f0
        samples.append((f0, a.delta_l, df))
    nu_rho, resid = fit_nu_rho(samples)

    by_id = {a.resonator_id: a for a in plan1.actions}
    for rec in records:
        rec.f_meas = measurements_cycle1[rec.id]
        if rec.id in by_id:
            rec.shoelaces.remaining -= by_id[rec.id].n_remove
    plan2 = plan_match_all(pairs, nu_rho, None, cycle_index=2)
    return TwoCycleResult(plan1, nu_rho, resid, plan2)
