"""Circulant tridiagonal precision matrices for cyclically coupled errors.

The error precision for the K binned series has a common diagonal entry
(``prec_diag``) and a single off-diagonal coupling (``prec_offdiag``) between
each series and its two circular neighbours, including the corner entries
that close the cycle.  Such a matrix is circulant, so its eigenvectors are
the discrete Fourier basis and its eigenvalues are

    spectrum[m] = prec_diag + 2 * prec_offdiag * cos(2*pi*m/K),  m = 0..K-1.

Positive definiteness is certified through the positive coordinates

    prec_lo = sqrt(2) * (prec_diag + 2*prec_offdiag) / 2
    prec_hi = sqrt(2) * (prec_diag - 2*prec_offdiag) / 2

because sqrt(2)*prec_lo and sqrt(2)*prec_hi are the spectrum values at the
in-phase (m = 0) and alternating (m = K/2) frequencies, the extremes of the
cosine grid.  For even K positivity of both coordinates is equivalent to
positive definiteness; for odd K the alternating frequency is not attained,
so the box is sufficient but not necessary.

Every kernel below takes an optional array module ``xp`` so the same
formulas serve plain numpy callers and traced jax.numpy callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SQRT2 = float(np.sqrt(2.0))


def natural_coords(prec_lo, prec_hi):
    """Map the positive pair to (prec_diag, prec_offdiag)."""
    prec_diag = (prec_lo + prec_hi) / _SQRT2
    prec_offdiag = (prec_lo - prec_hi) / (2.0 * _SQRT2)
    return prec_diag, prec_offdiag


def positive_coords(prec_diag, prec_offdiag):
    """Inverse of natural_coords; both outputs positive certifies PD (even K)."""
    prec_lo = _SQRT2 * (prec_diag + 2.0 * prec_offdiag) / 2.0
    prec_hi = _SQRT2 * (prec_diag - 2.0 * prec_offdiag) / 2.0
    return prec_lo, prec_hi


def spectrum(prec_diag, prec_offdiag, n_series: int, xp=np):
    """Eigenvalues in DFT order, m = 0..K-1."""
    grid = np.cos(2.0 * np.pi * np.arange(n_series) / n_series)
    return prec_diag + 2.0 * prec_offdiag * grid


def log_det(prec_diag, prec_offdiag, n_series: int, xp=np):
    """log-determinant of the precision; requires a PD parameter pair."""
    return xp.sum(xp.log(spectrum(prec_diag, prec_offdiag, n_series, xp=xp)))


def quad_form(prec_diag, prec_offdiag, vectors, xp=np):
    """v' P v over the last axis; leading axes are batched.

    The tridiagonal-with-corners structure reduces the form to the sum of
    squares plus twice the sum of cyclically adjacent products.
    """
    squares = xp.sum(vectors * vectors, axis=-1)
    adjacent = xp.sum(vectors * xp.roll(vectors, -1, axis=-1), axis=-1)
    return prec_diag * squares + 2.0 * prec_offdiag * adjacent


def lag_correlations(prec_diag, prec_offdiag, n_series: int, xp=np):
    """Correlations of the implied covariance at circular lags 1..K//2.

    The covariance is the circulant with spectrum 1/spectrum(precision); its
    first row is the inverse DFT of those reciprocals, and correlations are
    that row scaled by the common variance.
    """
    m = np.arange(n_series)
    lags = np.arange(n_series // 2 + 1)
    # cos(2*pi*m*k/K) grid, columns indexed by lag k = 0..K//2
    grid = np.cos(2.0 * np.pi * np.outer(m, lags) / n_series)
    inv_spec = 1.0 / spectrum(prec_diag, prec_offdiag, n_series, xp=xp)
    row = inv_spec @ grid
    return row[1:] / row[0]


def dense(prec_diag, prec_offdiag, n_series: int) -> np.ndarray:
    """Materialise the K x K precision matrix (reporting and oracles only)."""
    out = np.zeros((n_series, n_series))
    np.fill_diagonal(out, prec_diag)
    idx = np.arange(n_series)
    out[idx, (idx + 1) % n_series] = prec_offdiag
    out[idx, (idx - 1) % n_series] = prec_offdiag
    return out


@dataclass(frozen=True)
class CirculantPrecision:
    """Value type for the cyclic error precision.

    Construction validates the positive coordinates, so every instance is
    positive definite for even ``n_series`` (and at least the certified box
    for odd ``n_series``).
    """

    prec_diag: float
    prec_offdiag: float
    n_series: int

    def __post_init__(self) -> None:
        if self.n_series < 3:
            raise ValueError("n_series must be at least 3")
        lo, hi = positive_coords(self.prec_diag, self.prec_offdiag)
        if not (lo > 0.0 and hi > 0.0):
            raise ValueError(
                f"precision pair outside the positive box: lo={lo}, hi={hi}"
            )

    @classmethod
    def from_positive(cls, prec_lo: float, prec_hi: float, n_series: int) -> "CirculantPrecision":
        if not (prec_lo > 0.0 and prec_hi > 0.0):
            raise ValueError("positive coordinates must both be > 0")
        d, o = natural_coords(prec_lo, prec_hi)
        return cls(float(d), float(o), n_series)

    @property
    def positive(self) -> tuple[float, float]:
        return positive_coords(self.prec_diag, self.prec_offdiag)

    def spectrum(self) -> np.ndarray:
        return spectrum(self.prec_diag, self.prec_offdiag, self.n_series)

    def log_det(self) -> float:
        return float(log_det(self.prec_diag, self.prec_offdiag, self.n_series))

    def quad_form(self, vectors: np.ndarray) -> np.ndarray | float:
        out = quad_form(self.prec_diag, self.prec_offdiag, np.asarray(vectors, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def lag_correlations(self) -> np.ndarray:
        return lag_correlations(self.prec_diag, self.prec_offdiag, self.n_series)

    def dense(self) -> np.ndarray:
        return dense(self.prec_diag, self.prec_offdiag, self.n_series)
