"""Coupled-mode models of a readout/Purcell resonator pair on an open feedline.

All public interfaces use ordinary frequency (Hz); angular factors live
inside the formulas. The transmission and linewidth expressions are
homogeneous of degree zero in the rates, so they are evaluated directly in
Hz without explicit 2*pi conversion.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, InvalidParamsError

__all__ = [
    "PairParams",
    "ModeDescriptor",
    "s21_ideal",
    "s21_full",
    "kappa_eff_pair",
    "eigenmodes",
    "readout_photon_fraction",
    "matching_figure",
]


@dataclass(frozen=True)
class PairParams:
    """Physical parameters of one readout/Purcell pair.

    Frequencies and rates are ordinary frequencies in Hz. ``chi`` is the
    full dispersive pull of the readout resonator (signed, Hz) when the
    transmon goes from ground to first excited state; the readout
    frequency ``f_r`` is understood to already include the Lamb shift.
    """

    f_r: float
    f_p: float
    j: float
    kappa: float
    gamma_r: float = 0.0
    gamma_p: float = 0.0
    kappa_drive: float = 0.0
    chi: float = 0.0

    def __post_init__(self):
        if not (self.f_r > 0 and self.f_p > 0):
            raise InvalidParamsError("resonator frequencies must be positive")
        if not (self.j > 0 and self.kappa > 0):
            raise InvalidParamsError("j and kappa must be positive")
        if min(self.gamma_r, self.gamma_p, self.kappa_drive) < 0:
            raise InvalidParamsError("loss rates must be non-negative")

    @property
    def delta_pr(self):
        """Purcell-readout detuning f_p - f_r in Hz."""
        return self.f_p - self.f_r

    def with_frequencies(self, f_r, f_p):
        return replace(self, f_r=f_r, f_p=f_p)


@dataclass(frozen=True)
class ModeDescriptor:
    """One hybridized mode of the pair.

    ``chi_eff`` is the state-dependent frequency pull of this mode in Hz
    (the analogue of ``PairParams.chi`` for the hybridized mode);
    ``r_weight`` is the readout-resonator fraction of the eigenvector.
    ``degenerate`` flags an exceptional-point result where the two modes
    coalesce and the weights default to 1/2.
    """

    f_mode: float
    kappa_eff: float
    chi_eff: float
    r_weight: float
    degenerate: bool = False


def s21_ideal(f, p):
    """Lossless feedline transmission of a pair at probe frequency f (Hz).

    Accepts a scalar or array of frequencies; returns complex values.
    """
    d_r = p.f_r - np.asarray(f, dtype=float)
    d_p = p.f_p - np.asarray(f, dtype=float)
    num = 1j * p.kappa * d_r
    den = 4.0 * p.j**2 + (2j * d_p + p.kappa) * (2j * d_r)
    out = 1.0 - num / den
    return out if np.ndim(out) else complex(out)


def s21_full(f, p):
    """Feedline transmission including intrinsic losses and drive-line decay.

    Reduces to :func:`s21_ideal` when gamma_r = gamma_p = kappa_drive = 0.
    """
    d_r = p.f_r - np.asarray(f, dtype=float)
    d_p = p.f_p - np.asarray(f, dtype=float)
    t_r = p.gamma_r + 2j * d_r + p.kappa_drive
    t_p = p.gamma_p + 2j * d_p + p.kappa
    out = 1.0 - (0.5 * p.kappa) * t_r / (4.0 * p.j**2 + t_p * t_r)
    return out if np.ndim(out) else complex(out)


def kappa_eff_pair(j, kappa, delta_pr):
    """Closed-form effective linewidths of the two hybridized modes (Hz).

    Returns (R-like, P-like), i.e. the minus and plus branches of

        kappa_eff = (kappa +/- Re sqrt(-16 J^2 + (kappa - 2i Delta)^2)) / 2

    with the principal branch of the square root (Re >= 0), so the R-like
    linewidth is never the larger of the two. Lossless formula; lossy
    cases go through :func:`eigenmodes`.
    """
    j = np.asarray(j, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    delta_pr = np.asarray(delta_pr, dtype=float)
    if np.any(j <= 0) or np.any(kappa <= 0):
        raise DomainError("j and kappa must be positive")
    root = np.sqrt(np.asarray(-16.0 * j**2 + (kappa - 2j * delta_pr) ** 2, dtype=complex))
    r_like = 0.5 * (kappa - root.real)
    p_like = 0.5 * (kappa + root.real)
    if r_like.ndim == 0:
        return float(r_like), float(p_like)
    return r_like, p_like


def _mode_matrix(p, excited):
    """2x2 complex coupled-mode matrix in Hz units.

    The full dispersive pull ``chi`` sits on the bare readout diagonal
    entry when the qubit is excited; per-mode pulls are outputs.
    """
    w_r = p.f_r + (p.chi if excited else 0.0)
    g_r = p.gamma_r + p.kappa_drive
    return np.array(
        [
            [w_r - 0.5j * g_r, p.j],
            [p.j, p.f_p - 0.5j * (p.kappa + p.gamma_p)],
        ],
        dtype=complex,
    )


# relative eigenvalue gap below which the matrix is treated as defective
_EP_RTOL = 1e-9


def _sorted_modes(p, excited):
    """Eigen-decomposition sorted by real eigenfrequency.

    Returns (freqs, kappa_effs, r_weights, degenerate).
    """
    m = _mode_matrix(p, excited)
    vals, vecs = np.linalg.eig(m)
    order = np.argsort(vals.real)
    vals = vals[order]
    vecs = vecs[:, order]
    freqs = vals.real
    kappas = -2.0 * vals.imag
    scale = max(abs(vals[0]), abs(vals[1]), p.kappa)
    degenerate = abs(vals[0] - vals[1]) <= _EP_RTOL * scale
    if degenerate:
        weights = np.array([0.5, 0.5])
    else:
        mags = np.abs(vecs) ** 2
        weights = mags[0, :] / mags.sum(axis=0)
    return freqs, kappas, weights, degenerate


def eigenmodes(p, qubit_state="ground"):
    """Hybridized modes of the pair for the given qubit state.

    Builds the coupled-mode matrix for both qubit states; each returned
    :class:`ModeDescriptor` carries the frequency, linewidth and
    eigenvector weight for the requested state and the state-dependent
    frequency pull ``chi_eff`` of that mode (excited minus ground, modes
    paired by frequency order). At an exceptional point (4J = kappa,
    Delta_PR = 0) the matrix is defective: two equal eigenvalues are
    returned with r_weight 0.5 and the degenerate flag set.
    """
    if qubit_state not in ("ground", "excited"):
        raise DomainError(f"unknown qubit state {qubit_state!r}")
    fg, kg, wg, dg = _sorted_modes(p, excited=False)
    fe, ke, we, de = _sorted_modes(p, excited=True)
    pulls = fe - fg
    if qubit_state == "ground":
        freqs, kappas, weights, degenerate = fg, kg, wg, dg
    else:
        freqs, kappas, weights, degenerate = fe, ke, we, de
    return tuple(
        ModeDescriptor(
            f_mode=float(freqs[k]),
            kappa_eff=float(kappas[k]),
            chi_eff=float(pulls[k]),
            r_weight=float(weights[k]),
            degenerate=bool(degenerate),
        )
        for k in range(2)
    )


def readout_photon_fraction(q_i, q_c):
    """Upper bound on the detected readout-photon fraction, Qi/2(Qc+Qi)."""
    if q_i <= 0 or q_c <= 0:
        raise DomainError("quality factors must be positive")
    return q_i / (2.0 * (q_c + q_i))


def matching_figure(chi_eff, kappa_eff):
    """SNR matching ratio |2 chi_eff| / kappa_eff; 1.0 is the optimum."""
    if kappa_eff <= 0:
        raise DomainError("kappa_eff must be positive")
    return abs(2.0 * chi_eff) / kappa_eff
