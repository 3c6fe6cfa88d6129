"""Seasonal clustering of weekly count series by first-harmonic phase.

Each series gets a 51-week seasonal profile (mean per week-of-year over the
observed sampling grid, centred to zero).  The phase of the profile's first
Fourier harmonic, under the convention profile(t) ~ a * sin(2*pi*t/51 + phase),
places the series into one of ``n_bins`` equal arcs of [-pi, pi].  Counts are
then summed within bins, logged, and scaled by the mean of the per-bin log
standard deviations so that the average bin has unit spread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data_io import SeriesTable

WEEKS_PER_YEAR = 51


class UndefinedPhaseError(ValueError):
    """Raised when a profile carries no first-harmonic signal."""


class EmptyBinError(ValueError):
    """Raised when a bin ends up with no usable series or observations."""


@dataclass(frozen=True)
class PhaseProfile:
    """First-harmonic summary of one series' seasonal profile."""

    otu_id: str
    phase: float
    amplitude: float

    def __post_init__(self) -> None:
        if not (-math.pi <= self.phase <= math.pi):
            raise ValueError(f"phase {self.phase} outside [-pi, pi]")
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0.0):
            raise ValueError("amplitude must be finite and non-negative")


@dataclass
class BinnedSeries:
    """Scaled log bin totals with the assignment and scaling bookkeeping.

    ``y[t, j]`` is meaningful only where ``missing_mask[t, j]`` is False.
    ``pseudocount`` records whether totals were shifted by one before the
    log (done exactly when some observed total is zero).
    """

    y: np.ndarray = field(repr=False)
    missing_mask: np.ndarray = field(repr=False)
    bin_of: dict
    s_bar: float
    bin_totals: np.ndarray = field(repr=False)
    n_bins: int
    timestamps: list = field(repr=False)
    bin_sds: np.ndarray = field(repr=False)
    pseudocount: bool

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        self.bin_totals = np.asarray(self.bin_totals, dtype=float)
        n, k = self.y.shape
        if k != self.n_bins:
            raise ValueError("y column count must equal n_bins")
        if self.missing_mask.shape != (n, k) or self.bin_totals.shape != (n, k):
            raise ValueError("mask/totals shape must match y")
        if len(self.timestamps) != n:
            raise ValueError("timestamp count must match rows")
        if not self.s_bar > 0:
            raise ValueError("s_bar must be positive")
        bins = set(self.bin_of.values())
        if not bins <= set(range(1, self.n_bins + 1)):
            raise ValueError("bin indices must lie in 1..n_bins")

    @property
    def n_times(self) -> int:
        return self.y.shape[0]

    def members(self, bin_index: int) -> list:
        return [o for o, b in self.bin_of.items() if b == bin_index]


def weekly_mean_profile(counts: SeriesTable, otu: str) -> np.ndarray:
    """Centred 51-point seasonal profile of one series.

    Week-of-year is the series' position on the observed sampling grid
    modulo 51: fully masked calendar-gap rows do not advance the index.
    Weeks never observed for this series contribute zero after centring.
    """
    if otu not in counts.columns:
        raise KeyError(f"unknown series id: {otu!r}")
    j = counts.columns.index(otu)
    observed_rows = np.flatnonzero(~counts.fully_masked_rows())
    if observed_rows.size < WEEKS_PER_YEAR:
        raise ValueError(
            f"need at least {WEEKS_PER_YEAR} observed weeks, got {observed_rows.size}"
        )
    sums = np.zeros(WEEKS_PER_YEAR)
    hits = np.zeros(WEEKS_PER_YEAR)
    for pos, row in enumerate(observed_rows):
        if counts.missing_mask[row, j]:
            continue
        w = pos % WEEKS_PER_YEAR
        sums[w] += counts.values[row, j]
        hits[w] += 1
    if not hits.any():
        raise ValueError(f"series {otu!r} has no observed values")
    grand = sums.sum() / hits.sum()
    profile = np.where(hits > 0, sums / np.maximum(hits, 1), grand)
    return profile - profile.mean()


def first_harmonic_phase(profile: np.ndarray, otu_id: str = "") -> PhaseProfile:
    """Phase and amplitude of the first harmonic of a 51-week profile.

    Convention: profile(t) ~ amplitude * sin(2*pi*t/51 + phase), so a pure
    sine has phase 0 and a pure cosine has phase pi/2.
    """
    profile = np.asarray(profile, dtype=float)
    if profile.shape != (WEEKS_PER_YEAR,):
        raise ValueError(f"profile must have length {WEEKS_PER_YEAR}")
    t = np.arange(WEEKS_PER_YEAR)
    angles = 2.0 * np.pi * t / WEEKS_PER_YEAR
    a_sin = (2.0 / WEEKS_PER_YEAR) * float(profile @ np.sin(angles))
    a_cos = (2.0 / WEEKS_PER_YEAR) * float(profile @ np.cos(angles))
    amplitude = math.hypot(a_sin, a_cos)
    scale = max(1.0, float(np.max(np.abs(profile))) if profile.size else 1.0)
    if amplitude <= 1e-12 * scale:
        raise UndefinedPhaseError(
            f"series {otu_id!r}: no first-harmonic signal" if otu_id
            else "no first-harmonic signal"
        )
    return PhaseProfile(otu_id=otu_id, phase=math.atan2(a_cos, a_sin),
                        amplitude=amplitude)


def phase_to_bin(phase: float, n_bins: int) -> int:
    """Map a phase in [-pi, pi] to one of n_bins equal arcs, 1-based.

    Bin j covers [-pi + (j-1)*2*pi/K, -pi + j*2*pi/K); the top endpoint
    phase = pi belongs to bin K.
    """
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    if not (-math.pi <= phase <= math.pi):
        raise ValueError(f"phase {phase} outside [-pi, pi]")
    # Compare against explicit boundaries rather than dividing, so a phase
    # computed as a boundary expression lands on the correct side.
    width = 2.0 * math.pi / n_bins
    edges = -math.pi + width * np.arange(1, n_bins)
    j = int(np.searchsorted(edges, phase, side="right")) + 1
    return min(j, n_bins)


def aggregate_and_scale(
    counts: SeriesTable, assignment: dict, n_bins: int
) -> BinnedSeries:
    """Sum counts within bins, log, and scale by the mean per-bin log sd.

    A bin total is masked wherever any member cell is masked, so partial
    information never silently deflates a total.  If any observed total is
    zero, all totals are shifted by one before the log (recorded on the
    result).  Per-bin standard deviations use the population convention.
    """
    unknown = [o for o in assignment if o not in counts.columns]
    if unknown:
        raise KeyError(f"assignment references unknown series: {unknown}")
    unassigned = [c for c in counts.columns if c not in assignment]
    if unassigned:
        raise ValueError(f"series without a bin: {unassigned}")
    bad = {o: b for o, b in assignment.items() if not 1 <= b <= n_bins}
    if bad:
        raise ValueError(f"bin indices outside 1..{n_bins}: {bad}")

    n = counts.n_rows
    totals = np.zeros((n, n_bins))
    mask = np.zeros((n, n_bins), dtype=bool)
    for j in range(1, n_bins + 1):
        cols = [counts.columns.index(o) for o, b in assignment.items() if b == j]
        if not cols:
            raise EmptyBinError(f"bin {j} has no assigned series")
        vals = np.where(counts.missing_mask[:, cols], 0.0, counts.values[:, cols])
        totals[:, j - 1] = vals.sum(axis=1)
        mask[:, j - 1] = counts.missing_mask[:, cols].any(axis=1)
    if mask.all(axis=0).any():
        j = int(np.flatnonzero(mask.all(axis=0))[0]) + 1
        raise EmptyBinError(f"bin {j} has no observed totals")

    pseudocount = bool((totals[~mask] == 0.0).any())
    shifted = totals + 1.0 if pseudocount else totals
    log_totals = np.full((n, n_bins), np.nan)
    log_totals[~mask] = np.log(shifted[~mask])

    bin_sds = np.array(
        [log_totals[~mask[:, j], j].std() for j in range(n_bins)]
    )
    s_bar = float(bin_sds.mean())
    if not s_bar > 0:
        raise EmptyBinError("all bins are constant; cannot scale")
    y = log_totals / s_bar
    y[mask] = np.nan
    return BinnedSeries(
        y=y,
        missing_mask=mask,
        bin_of=dict(assignment),
        s_bar=s_bar,
        bin_totals=totals,
        n_bins=n_bins,
        timestamps=list(counts.timestamps),
        bin_sds=bin_sds,
        pseudocount=pseudocount,
    )


def cluster(counts: SeriesTable, n_bins: int) -> tuple[BinnedSeries, list]:
    """Assign every series to a phase bin and aggregate.

    Series with no first-harmonic signal (constant or never observed with
    variation) get phase 0 by convention, landing in the arc containing 0.
    """
    profiles: list[PhaseProfile] = []
    assignment: dict[str, int] = {}
    for otu in counts.columns:
        profile = weekly_mean_profile(counts, otu)
        try:
            pp = first_harmonic_phase(profile, otu_id=otu)
        except UndefinedPhaseError:
            pp = PhaseProfile(otu_id=otu, phase=0.0, amplitude=0.0)
        profiles.append(pp)
        assignment[otu] = phase_to_bin(pp.phase, n_bins)
    binned = aggregate_and_scale(counts, assignment, n_bins)
    return binned, profiles
