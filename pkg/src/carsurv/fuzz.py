"""Random inputs for the property suites: step curves, nuisances, records, perturbations."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .coarsening import ObservedLaw, ObservedRecord, gen_scar_law, push_forward
from .estimators import NuisanceSet
from .kernel import StepFn, product_integral


def random_hazard(
    rng: np.random.Generator, tau: int, max_increment: float = 0.5, density: float = 0.6
) -> StepFn:
    """Pure-jump cumulative hazard on ticks ``1..tau`` with increments below ``max_increment``."""
    inc = {u: float(rng.uniform(0.0, max_increment)) for u in range(1, tau + 1) if rng.random() < density}
    return StepFn.from_increments(inc)


def random_step_survival(
    rng: np.random.Generator, tau: int, max_increment: float = 0.5, density: float = 0.6
) -> StepFn:
    """Nonvanishing survival curve: the product integral of :func:`random_hazard`."""
    return product_integral(random_hazard(rng, tau, max_increment, density))


def random_nuisance(
    rng: np.random.Generator, labels: Sequence[str], tau: int, max_increment: float = 0.5
) -> NuisanceSet:
    """Internally consistent nuisances for both arms of every label.

    They need not come from any law; K and H stay strictly positive.
    """
    pi, lam_t, lam_c = {}, {}, {}
    for l in labels:
        p1 = float(rng.uniform(0.05, 0.95))
        pi[(1, l)], pi[(0, l)] = p1, 1.0 - p1
        for a in (0, 1):
            lam_t[(a, l)] = random_hazard(rng, tau, max_increment)
            lam_c[(a, l)] = random_hazard(rng, tau, max_increment)
    return NuisanceSet.from_hazards(pi, lam_t, lam_c)


def random_record(rng: np.random.Generator, labels: Sequence[str], tau: int) -> ObservedRecord:
    return ObservedRecord(
        str(labels[int(rng.integers(len(labels)))]),
        int(rng.integers(2)),
        int(rng.integers(2)),
        int(rng.integers(1, tau + 2)),
    )


def perturb_survival(rng: np.random.Generator, curve: StepFn, tau: int, scale: float = 0.6) -> StepFn:
    """A different valid, strictly positive survival curve on ``1..tau``.

    Each hazard increment is redrawn around a random multiple of the original.
    """
    ticks, values, s = [], [], 1.0
    for u in range(1, tau + 1):
        prev = curve.left(u)
        base = 1.0 - curve(u) / prev if prev > 0 else 0.5
        inc = min(0.9, max(0.0, base * float(rng.uniform(0.0, 2.0)) + float(rng.uniform(0.0, scale)) * 0.5))
        s *= 1.0 - inc
        ticks.append(u)
        values.append(s)
    return StepFn(tuple(ticks), tuple(values), 1.0)


def perturb_branch_a(rng: np.random.Generator, nuis: NuisanceSet, tau: int) -> NuisanceSet:
    """Keep propensity and censoring; replace every failure curve."""
    H = {s: perturb_survival(rng, h, tau) for s, h in nuis.H.items()}
    return NuisanceSet.from_survivals(nuis.pi, H, nuis.K)


def perturb_branch_b(rng: np.random.Generator, nuis: NuisanceSet, tau: int) -> NuisanceSet:
    """Keep failure curves; replace propensities and censoring curves."""
    pi = {s: float(rng.uniform(0.05, 1.0)) for s in nuis.pi}
    K = {s: perturb_survival(rng, k, tau) for s, k in nuis.K.items()}
    return NuisanceSet.from_survivals(pi, nuis.H, K)


def has_tie(obs: ObservedLaw) -> bool:
    """Some stratum has failure and censoring mass at the same tick."""
    fail = {(r.stratum, r.x) for r, p in obs.atoms if p > 0 and r.delta == 1}
    return any((r.stratum, r.x) in fail for r, p in obs.atoms if p > 0 and r.delta == 0)


def scar_laws(count: int, base_seed: int = 0, grid: int = 4, n_l: int = 2):
    """``count`` outputs of :func:`gen_scar_law` with consecutive seeds."""
    return [gen_scar_law(base_seed + i, n_l=n_l, grid=grid) for i in range(count)]


def tie_laws(count: int, base_seed: int = 0, grid: int = 3):
    """``count`` SCAR laws whose observed law carries at least one tie."""
    out, seed = [], base_seed
    while len(out) < count:
        law = gen_scar_law(seed, grid=grid)
        if has_tie(push_forward(law)):
            out.append(law)
        seed += 1
    return out


def close(a: float, b: float, tol: float) -> bool:
    return math.isfinite(a) and math.isfinite(b) and abs(a - b) <= tol
