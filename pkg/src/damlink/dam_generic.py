"""Generic delay-spread reduction: choose a set of delay pre-compensations that
pull the strongest paths into a window of width ``target_span`` and zero-force
every arrival that falls outside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .channel import MultipathChannel
from .numerics import orth_complement

ZERO_FORCE_RTOL = 1e-9


class InfeasiblePlanError(ValueError):
    """Not enough antennas for the requested residual span.

    ``min_feasible_span`` is the smallest target span that works for this
    channel and antenna count (None if even the full span fails).
    """

    def __init__(self, message: str, min_feasible_span: int | None = None):
        self.min_feasible_span = min_feasible_span
        super().__init__(message)


class UncoveredPathError(ValueError):
    """A path is outside the window for every pre-compensation, so its energy
    would be discarded entirely."""


@dataclass(frozen=True)
class DelayPlan:
    """A chosen set of delay pre-compensations and the window they target.

    ``kappas[l']`` aligns path L - L' + l' to n_max. ``outside_sets[l']`` /
    ``inside_sets[l']`` are the (0-based) path indices landing outside/inside
    the window [n_max - target_span, n_max] after shifting by kappas[l'].
    """

    num_precomp: int
    kappas: np.ndarray
    target_span: int
    outside_sets: tuple[tuple[int, ...], ...]
    inside_sets: tuple[tuple[int, ...], ...]
    window: tuple[int, int]

    @property
    def max_outside(self) -> int:
        """Largest per-compensation ZF burden |L_l'| (the trade-off knob)."""
        return max(len(s) for s in self.outside_sets)


@dataclass
class TimeDomainBeamformers:
    """Per-compensation matrices F_l' = bases[l'] @ inner[l'].

    ``bases[l']`` is the m_t x r_l' orthonormal complement of the
    outside-window path gains; ``inner[l']`` (r_l' x m_t) is free to design
    and defaults to identity blocks.
    """

    bases: list[np.ndarray]
    inner: list[np.ndarray]

    @property
    def ranks(self) -> list[int]:
        return [b.shape[1] for b in self.bases]

    @property
    def stacked_inner(self) -> np.ndarray:
        return np.vstack(self.inner)

    def matrices(self) -> list[np.ndarray]:
        return [b @ x for b, x in zip(self.bases, self.inner)]


def make_delay_plan(
    ch: MultipathChannel,
    num_precomp: int,
    target_span: int,
    allow_uncovered: bool = False,
    _hint: bool = True,
) -> DelayPlan:
    """Construct the delay plan for ``num_precomp`` pre-compensations.

    kappas follow the largest-delay anchoring rule
    kappa_l' = n_max - n_{L - L' + l'}; no alternative window search is done.
    A path inside no window is an error by default: its energy would be
    zero-forced away entirely. ``allow_uncovered`` opts into that trade-off
    (the path is simply dropped by every beamformer), which small-span plans
    with few pre-compensations need on unlucky delay draws.
    """
    L = ch.num_paths
    if not 1 <= num_precomp <= L:
        raise ValueError(f"num_precomp must be in [1, {L}]")
    if not 0 <= target_span <= ch.n_span:
        raise ValueError(f"target_span must be in [0, {ch.n_span}]")

    delays = ch.delays
    kappas = ch.n_max - delays[L - num_precomp :]
    window = (ch.n_max - target_span, ch.n_max)

    outside, inside = [], []
    for kappa in kappas:
        shifted = delays + kappa
        mask = (shifted >= window[0]) & (shifted <= window[1])
        inside.append(tuple(np.flatnonzero(mask)))
        outside.append(tuple(np.flatnonzero(~mask)))

    need = max(len(s) for s in outside) + 1
    if ch.m_t < need:
        min_span = _min_feasible_span(ch, num_precomp) if _hint else None
        raise InfeasiblePlanError(
            f"zero forcing needs m_t >= {need} antennas for target span "
            f"{target_span} (have {ch.m_t}); minimal feasible span is {min_span}",
            min_feasible_span=min_span,
        )

    covered = set().union(*inside)
    if covered != set(range(L)) and not allow_uncovered:
        missing = sorted(set(range(L)) - covered)
        raise UncoveredPathError(
            f"paths {missing} fall outside the window for every "
            f"pre-compensation; their energy would be silently discarded"
        )

    return DelayPlan(
        num_precomp=num_precomp,
        kappas=kappas,
        target_span=target_span,
        outside_sets=tuple(outside),
        inside_sets=tuple(inside),
        window=window,
    )


def _min_feasible_span(ch: MultipathChannel, num_precomp: int) -> int | None:
    """Smallest feasible target span for this channel and antenna count,
    searching pre-compensation counts from the requested one downward."""
    for span in range(ch.n_span + 1):
        for lp in range(num_precomp, 0, -1):
            try:
                make_delay_plan(ch, lp, span, _hint=False)
                return span
            except (InfeasiblePlanError, UncoveredPathError):
                continue
    return None


def zf_time_matrices(ch: MultipathChannel, plan: DelayPlan) -> TimeDomainBeamformers:
    """Complement bases for each outside-window path set; inner matrices start
    as identity blocks. An empty outside set gives the full-space identity."""
    gains = ch.gains
    bases, inner = [], []
    for out in plan.outside_sets:
        if out:
            basis = orth_complement(gains[list(out)].T)
        else:
            basis = np.eye(ch.m_t, dtype=complex)
        bases.append(basis)
        inner.append(np.eye(basis.shape[1], ch.m_t, dtype=complex))
    return TimeDomainBeamformers(bases=bases, inner=inner)


def effective_taps(
    ch: MultipathChannel, plan: DelayPlan, tbf: TimeDomainBeamformers
) -> np.ndarray:
    """(target_span + 1, m_t) rows: tap t = sum_l' g_l'^H[t] F_l'.

    g_l'^H[t] is h_l^H when path l is inside the window for l' and lands at
    offset t from the window start, else zero.
    """
    taps = np.zeros((plan.target_span + 1, ch.m_t), dtype=complex)
    mats = tbf.matrices()
    start = plan.window[0]
    for lp, kappa in enumerate(plan.kappas):
        for l in plan.inside_sets[lp]:
            t = ch.paths[l].delay + kappa - start
            taps[t] += ch.paths[l].gain.conj() @ mats[lp]
    return taps


def achieved_span(
    ch: MultipathChannel, plan: DelayPlan, tbf: TimeDomainBeamformers
) -> int:
    """Delay spread actually realized: max - min of n_l + kappa_l' over the
    pairs whose residual gain h_l^H F_l' is numerically nonzero."""
    mats = tbf.matrices()
    scale = max(np.linalg.norm(m) for m in mats) * np.linalg.norm(ch.gains)
    alive = []
    for lp, kappa in enumerate(plan.kappas):
        for l, path in enumerate(ch.paths):
            if np.linalg.norm(path.gain.conj() @ mats[lp]) > ZERO_FORCE_RTOL * scale:
                alive.append(path.delay + kappa)
    if not alive:
        raise ValueError("all signal energy was zero-forced; no surviving path")
    return int(max(alive) - min(alive))


def plan_to_dict(plan: DelayPlan) -> dict:
    return {
        "num_precomp": plan.num_precomp,
        "kappas": plan.kappas.tolist(),
        "target_span": plan.target_span,
        "outside_sets": [list(s) for s in plan.outside_sets],
    }


def save_plan(plan: DelayPlan, path: str) -> None:
    with open(path, "w") as f:
        json.dump(plan_to_dict(plan), f, indent=2)
