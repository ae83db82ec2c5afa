"""Sequential hypothesis testing on pairwise estimate differences.

Each content pair within a context is tested by a Bayes factor comparing
two accounts of the observed difference: a null in which the true
difference is zero and the observation is pure sampling noise, and an
alternative in which the true difference is itself Normal(0, tau). Both
are Gaussian in the observation, so the factor is a ratio of two normal
densities evaluated at the observed difference. Inverting the factor gives
an always-valid sequential p-value; the running minimum over updates is
the reported evidence and needs no post hoc multiple-comparison
correction, because shrinkage in the estimator already damps spurious
differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .design import Cell, ExperimentSpec, enumerate_comparisons
from .estimate import CellEstimate

__all__ = [
    "TauSpec",
    "ComparisonResult",
    "resolve_tau",
    "bayes_factor",
    "log_bayes_factor",
    "update_comparison",
    "run_all_comparisons",
    "replay_trace",
]

_MAX_LOG_K = 709.0  # exp saturates just below the double-precision ceiling


@dataclass(frozen=True)
class TauSpec:
    """How the alternative's effect-size variance tau is chosen.

    fixed: a constant; dynamic: the squared observed difference, floored so
    the hypotheses never coincide exactly; learnt: a value taken from a
    meta-analysis of past experiments.
    """

    kind: str
    value: float | None = None
    epsilon_floor: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("fixed", "dynamic", "learnt"):
            raise ValueError(f"unknown tau kind {self.kind!r}")
        if self.kind in ("fixed", "learnt"):
            if self.value is None or self.value <= 0:
                raise ValueError(f"{self.kind} tau requires a positive value")
        if self.epsilon_floor <= 0:
            raise ValueError("epsilon_floor must be positive")

    @classmethod
    def fixed(cls, value: float) -> "TauSpec":
        return cls("fixed", value)

    @classmethod
    def dynamic(cls, epsilon_floor: float = 1e-8) -> "TauSpec":
        return cls("dynamic", None, epsilon_floor)

    @classmethod
    def learnt(cls, value: float) -> "TauSpec":
        return cls("learnt", value)


@dataclass(frozen=True)
class ComparisonResult:
    """Running state of one pairwise test.

    p_min is the smallest sequential p-value seen so far and never
    increases; significance is judged against it.
    """

    context: tuple[int, ...]
    content_a: tuple[int, ...]
    content_b: tuple[int, ...]
    diff_mean: float = math.nan
    diff_var: float = math.nan
    bayes_factor: float = math.nan
    p_instant: float = 1.0
    p_min: float = 1.0
    significant: bool = False
    updates: int = 0


def resolve_tau(spec: TauSpec, diff_mean: float) -> float:
    """Concrete tau for one update; dynamic taus track the observed
    difference and are floored to keep the alternative distinct."""
    if spec.kind == "dynamic":
        return max(diff_mean**2, spec.epsilon_floor)
    return float(spec.value)


def log_bayes_factor(diff_mean: float, diff_var: float, tau: float) -> float:
    """log of Normal(d; 0, var+tau) / Normal(d; 0, var)."""
    if diff_var <= 0:
        raise ValueError("diff_var must be positive (degenerate estimate)")
    if tau <= 0:
        raise ValueError("tau must be positive")
    v, t, d2 = diff_var, tau, diff_mean**2
    return 0.5 * math.log(v / (v + t)) + d2 * t / (2.0 * v * (v + t))


def bayes_factor(diff_mean: float, diff_var: float, tau: float) -> float:
    """Evidence ratio for a real difference vs. none.

    Values near 1 mean no evidence either way; large values favor a
    difference. Saturates at exp(709) to stay finite; p-values are always
    derived from the exact log value.
    """
    return math.exp(min(log_bayes_factor(diff_mean, diff_var, tau), _MAX_LOG_K))


def update_comparison(
    state: ComparisonResult,
    diff_mean: float,
    diff_var: float,
    tau_spec: TauSpec,
    alpha: float = 0.05,
) -> ComparisonResult:
    """Fold one update's difference summary into the running test."""
    tau = resolve_tau(tau_spec, diff_mean)
    log_k = log_bayes_factor(diff_mean, diff_var, tau)
    p_instant = math.exp(-max(log_k, 0.0))
    p_min = min(state.p_min, p_instant)
    return replace(
        state,
        diff_mean=diff_mean,
        diff_var=diff_var,
        bayes_factor=math.exp(min(log_k, _MAX_LOG_K)),
        p_instant=p_instant,
        p_min=p_min,
        significant=p_min < alpha,
        updates=state.updates + 1,
    )


def _difference_summary(a: CellEstimate, b: CellEstimate) -> tuple[float, float]:
    if a.draws is not None and b.draws is not None:
        diffs = a.draws - b.draws
        return float(diffs.mean()), float(diffs.var(ddof=1))
    return a.mean - b.mean, a.variance + b.variance


def run_all_comparisons(
    estimates: list[CellEstimate],
    spec: ExperimentSpec,
    tau_spec: TauSpec,
    alpha: float = 0.05,
    prior: list[ComparisonResult] | None = None,
) -> list[ComparisonResult]:
    """Advance every pairwise test by one update.

    One result per pair from ``enumerate_comparisons``, in that order;
    pass the returned list back as ``prior`` on the next update. Draw-based
    estimates are differenced draw-wise (capturing their correlation);
    plain estimates use the difference of means and the sum of variances.
    A pair whose difference variance is exactly zero (degenerate counts)
    is carried forward unchanged for that update.
    """
    pairs = enumerate_comparisons(spec)
    if prior is not None and len(prior) != len(pairs):
        raise ValueError("prior state does not match the comparison enumeration")
    if len(estimates) != spec.n_cells:
        raise ValueError("need one estimate per cell")

    out = []
    for i, (ctx, a, b) in enumerate(pairs):
        for combo in (a, b):
            est = estimates[spec.cell_index(combo, ctx)]
            if not est.is_defined:
                raise ValueError(
                    "no estimate for cell "
                    f"({spec.describe_cell(Cell(combo + ctx))})"
                )
        state = prior[i] if prior is not None else ComparisonResult(ctx, a, b)
        e_a = estimates[spec.cell_index(a, ctx)]
        e_b = estimates[spec.cell_index(b, ctx)]
        diff_mean, diff_var = _difference_summary(e_a, e_b)
        if diff_var > 0:
            state = update_comparison(state, diff_mean, diff_var, tau_spec, alpha)
        out.append(state)
    return out


def replay_trace(
    diff_means: np.ndarray,
    diff_vars: np.ndarray,
    tau_spec: TauSpec,
    alpha: float = 0.05,
) -> np.ndarray:
    """Running p_min over a recorded sequence of difference summaries.

    Lets different tau strategies be evaluated on the same stored traces
    without re-estimating anything. Zero-variance entries are skipped, as
    in the live path. Returns the p_min value after each update.
    """
    p_min = 1.0
    out = np.empty(len(diff_means))
    for i, (d, v) in enumerate(zip(diff_means, diff_vars)):
        if v > 0:
            tau = resolve_tau(tau_spec, d)
            log_k = log_bayes_factor(d, v, tau)
            p_min = min(p_min, math.exp(-max(log_k, 0.0)))
        out[i] = p_min
    return out
