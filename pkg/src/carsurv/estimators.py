"""Nuisance fitting, influence-function evaluators and one-step estimation.

Conventions for a record ``O = (L, A, Δ, X)``, a target arm ``a`` and tick ``t``:

* IPW term      I(A=a)/π(a;L) · Δ/K(X-;a,L) · I(X > t)
* AIPW EIF      IPW − η − (I(A=a)−π)/π · H(t) + I(A=a)/π ∫ H(t∨u)/H(u) dM_C(u)/K(u)
* g-comp EIF    H(t) − η − I(A=a)/π ∫_(0,t] H(t)/H(u) dM_T(u)/K(u-)

The two EIF forms agree pointwise whenever K and H are the product integrals
of the hazards used in M_C and M_T.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .coarsening import ObservedLaw, ObservedRecord
from .errors import EmptyStratum, PositivityViolation, ZeroSurvival
from .kernel import (
    StepFn,
    cum_hazard_C,
    cum_hazard_T,
    hazard_from_survival,
    mc_integral,
    mt_integral,
    product_integral,
)

Stratum = tuple[int, str]
METHODS = ("ipw", "aipw-onestep", "gcomp-corrected")


class TieWarning(UserWarning):
    """A failure shares its tick with censoring hazard in the same stratum."""


class FlooringWarning(UserWarning):
    """Fitted propensities or censoring survival were floored."""


@dataclass(frozen=True)
class NuisanceSet:
    """Per-stratum propensities, hazards and survival curves.

    ``pi`` is keyed by ``(a, l)`` for both arms of every observed ``l`` (it can
    be 0); the curve maps only hold populated strata.
    """

    pi: Mapping[Stratum, float]
    lambda_T: Mapping[Stratum, StepFn]
    lambda_C: Mapping[Stratum, StepFn]
    K: Mapping[Stratum, StepFn]
    H: Mapping[Stratum, StepFn]
    floored: bool = False

    @classmethod
    def from_hazards(
        cls,
        pi: Mapping[Stratum, float],
        lambda_T: Mapping[Stratum, StepFn],
        lambda_C: Mapping[Stratum, StepFn],
    ) -> "NuisanceSet":
        return cls(
            dict(pi),
            dict(lambda_T),
            dict(lambda_C),
            {s: product_integral(lam) for s, lam in lambda_C.items()},
            {s: product_integral(lam) for s, lam in lambda_T.items()},
        )

    @classmethod
    def from_survivals(
        cls, pi: Mapping[Stratum, float], H: Mapping[Stratum, StepFn], K: Mapping[Stratum, StepFn]
    ) -> "NuisanceSet":
        return cls(
            dict(pi),
            {s: hazard_from_survival(c) for s, c in H.items()},
            {s: hazard_from_survival(c) for s, c in K.items()},
            dict(K),
            dict(H),
        )

    def propensity(self, a: int, l: str) -> float:
        try:
            return self.pi[(a, l)]
        except KeyError:
            raise EmptyStratum(f"no propensity for (a={a}, l={l!r})") from None

    def curves(self, a: int, l: str) -> tuple[StepFn, StepFn, StepFn, StepFn]:
        """``(K, H, Λ_C, Λ_T)`` of a stratum."""
        s = (a, l)
        try:
            return self.K[s], self.H[s], self.lambda_C[s], self.lambda_T[s]
        except KeyError:
            raise EmptyStratum(f"stratum (a={a}, l={l!r}) is not populated") from None

    def consistency_error(self) -> float:
        """Largest gap between K, H and the product integrals of their hazards."""
        worst = 0.0
        for pairs in ((self.K, self.lambda_C), (self.H, self.lambda_T)):
            for s, curve in pairs[0].items():
                worst = max(worst, curve.max_abs_diff(product_integral(pairs[1][s])))
        return worst

    def check(self, tol: float = 1e-12, eps: float | None = None, tau: int | None = None) -> None:
        gap = self.consistency_error()
        if gap > tol:
            raise ValueError(f"survival curves differ from product integrals by {gap:.3g}")
        if eps is not None:
            for (a, l) in self.K:
                k_tau = self.K[(a, l)](tau) if tau is not None else min(self.K[(a, l)].jump_values, default=1.0)
                if self.pi[(a, l)] < eps or k_tau < eps:
                    raise PositivityViolation(f"stratum (a={a}, l={l!r}) violates positivity at eps={eps}")


@dataclass(frozen=True)
class IFIndex:
    """Index functions ``h1(l)`` and ``h2(u, a, l)`` of the influence-function class."""

    h1: Callable[[str], float]
    h2: Callable[[int, int, str], float]
    bound: float = 1.0

    @classmethod
    def zero(cls) -> "IFIndex":
        return cls(lambda l: 0.0, lambda u, a, l: 0.0, 0.0)

    @classmethod
    def from_tables(
        cls, h1: Mapping[str, float], h2: Mapping[tuple[int, int, str], float], bound: float | None = None
    ) -> "IFIndex":
        h1, h2 = dict(h1), dict(h2)
        if bound is None:
            bound = max([abs(v) for v in h1.values()] + [abs(v) for v in h2.values()] + [0.0])
        return cls(lambda l: h1.get(l, 0.0), lambda u, a, l: h2.get((u, a, l), 0.0), bound)

    @classmethod
    def random(cls, rng: np.random.Generator, labels: Sequence[str], tau: int, bound: float = 1.0) -> "IFIndex":
        h1 = {l: float(rng.uniform(-bound, bound)) for l in labels}
        h2 = {
            (u, a, l): float(rng.uniform(-bound, bound))
            for u in range(1, tau + 1)
            for a in (0, 1)
            for l in labels
        }
        return cls.from_tables(h1, h2, bound)


@dataclass(frozen=True)
class EstimateReport:
    a: int
    t: int
    point: float
    se: float
    ci_low: float
    ci_high: float
    n: int
    method: str
    floored: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "estimand": {"a": self.a, "t": self.t},
            "point": self.point,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n": self.n,
            "method": self.method,
            "floored": self.floored,
        }


# -- nuisances -------------------------------------------------------------------


def identified_nuisance(obs: ObservedLaw, censor_risk: str = "dagger") -> NuisanceSet:
    """Exact nuisance functionals of an observed law.

    ``censor_risk`` is forwarded to :func:`cum_hazard_C`; anything other than
    the default is a deliberately wrong variant used for mutation checks.
    """
    by_l: dict[str, list[float]] = {}
    by_al: dict[Stratum, list[float]] = {}
    for rec, p in obs.atoms:
        by_l.setdefault(rec.l, []).append(p)
        by_al.setdefault(rec.stratum, []).append(p)
    pi = {}
    for l, ps in by_l.items():
        pl = math.fsum(ps)
        if pl <= 0:
            continue
        for a in (0, 1):
            pi[(a, l)] = math.fsum(by_al.get((a, l), ())) / pl
    strata = obs.strata()
    if not strata:
        raise EmptyStratum("observed law has no populated stratum")
    lam_t = {s: cum_hazard_T(obs, s) for s in strata}
    lam_c = {s: cum_hazard_C(obs, s, risk=censor_risk) for s in strata}
    return NuisanceSet.from_hazards(pi, lam_t, lam_c)


def fit_nuisance(sample: Sequence[ObservedRecord], tau: int | None = None) -> NuisanceSet:
    """Plug-in nuisances from a sample: :func:`identified_nuisance` of its empirical law."""
    if not sample:
        raise ValueError("sample is empty")
    if tau is not None:
        late = [r for r in sample if r.x > tau]
        if late:
            raise ValueError(f"{len(late)} records have x beyond tau={tau}, e.g. {late[0]}")
    return identified_nuisance(ObservedLaw.empirical(sample))


def floor_nuisance(nuis: NuisanceSet, eps: float) -> NuisanceSet:
    """Floor propensities and censoring survival at ``eps``.

    Censoring hazards are recomputed from the floored curves so that K stays
    the product integral of Λ_C.
    """
    pi = {s: max(p, eps) if p > 0 else p for s, p in nuis.pi.items()}
    K, changed = {}, pi != dict(nuis.pi)
    for s, curve in nuis.K.items():
        vals = tuple(max(v, eps) for v in curve.jump_values)
        changed |= vals != curve.jump_values
        K[s] = StepFn(curve.jump_ticks, vals, curve.initial_value)
    if not changed:
        return nuis
    warnings.warn(f"propensity or censoring survival floored at {eps}", FlooringWarning, stacklevel=2)
    lam_c = {s: hazard_from_survival(curve) for s, curve in K.items()}
    return NuisanceSet(pi, dict(nuis.lambda_T), lam_c, K, dict(nuis.H), floored=True)


# -- influence-function terms ------------------------------------------------------


def _div(num: float, den: float, what: str) -> float:
    if den == 0.0:
        if num == 0.0:
            return 0.0
        raise ZeroSurvival(f"{what} vanishes where it is inverted")
    return num / den


def ipw_term(record: ObservedRecord, nuis: NuisanceSet, a: int, t: int) -> float:
    if record.a != a or record.delta == 0 or record.x <= t:
        return 0.0
    pi = nuis.propensity(a, record.l)
    K = nuis.curves(a, record.l)[0]
    return _div(1.0, pi, "propensity") * _div(1.0, K.left(record.x), "K(X-)")


def if_class_term(
    record: ObservedRecord, nuis: NuisanceSet, a: int, t: int, idx: IFIndex, eta: float
) -> float:
    """Element of the full influence-function class indexed by ``idx``.

    The censoring augmentation uses the record's own stratum, so it stays
    active when ``A != a``.
    """
    pi = nuis.propensity(a, record.l)
    value = ipw_term(record, nuis, a, t) - eta - ((record.a == a) - pi) * idx.h1(record.l)
    lam_c = nuis.curves(record.a, record.l)[2]
    return value + mc_integral(record, lambda u: idx.h2(u, record.a, record.l), lam_c)


def shares_censoring_tick(record: ObservedRecord, nuis: NuisanceSet, a: int) -> bool:
    """Whether ``record`` fails at a tick where its arm-``a`` censoring hazard jumps."""
    if record.a != a or record.delta != 1:
        return False
    return nuis.curves(a, record.l)[2].jump(record.x) != 0.0


def tsiatis_class_term(
    record: ObservedRecord, nuis: NuisanceSet, a: int, t: int, idx: IFIndex, eta: float
) -> float:
    """Element of the narrower class whose augmentation vanishes off arm ``a``.

    Evaluated with the Y†-based residual.  The class was derived assuming no
    shared failure/censoring ticks; records that break this raise a
    :class:`TieWarning`.
    """
    pi = nuis.propensity(a, record.l)
    value = ipw_term(record, nuis, a, t) - eta - _div((record.a == a) - pi, pi, "propensity") * idx.h1(record.l)
    if record.a != a:
        return value
    if shares_censoring_tick(record, nuis, a):
        warnings.warn(f"record {record} fails at a censoring tick", TieWarning, stacklevel=2)
    K, _, lam_c, _ = nuis.curves(a, record.l)
    aug = mc_integral(record, lambda u: _div(idx.h2(u, a, record.l), K(u), "K"), lam_c)
    return value + aug / pi


def _h_ratio(num: float, den: float) -> float:
    # H is nonincreasing, so den == 0 forces num == 0; 0/0 is 0.
    return 0.0 if den == 0.0 else num / den


def _aipw_uncentered(record: ObservedRecord, nuis: NuisanceSet, a: int, t: int) -> float:
    pi = nuis.propensity(a, record.l)
    _, H, _, _ = nuis.curves(a, record.l)
    h_t = H(t)
    value = ipw_term(record, nuis, a, t) - _div((record.a == a) - pi, pi, "propensity") * h_t
    if record.a != a:
        return value
    K, _, lam_c, _ = nuis.curves(a, record.l)

    def weight(u: int) -> float:
        # H(t∨u) = H(t) I(u <= t) + H(u) I(u > t)
        ratio = _h_ratio(h_t, H(u)) if u <= t else 1.0
        return _div(ratio, K(u), "K")

    return value + mc_integral(record, weight, lam_c) / pi


def _gcomp_uncentered(record: ObservedRecord, nuis: NuisanceSet, a: int, t: int) -> float:
    _, H, _, lam_t = nuis.curves(a, record.l)
    h_t = H(t)
    if record.a != a:
        return h_t
    pi = nuis.propensity(a, record.l)
    K = nuis.curves(a, record.l)[0]

    def weight(u: int) -> float:
        return _div(_h_ratio(h_t, H(u)), K.left(u), "K(u-)")

    return h_t - _div(mt_integral(record, weight, lam_t, (0, t)), pi, "propensity")


def eif_aipw_term(record: ObservedRecord, nuis: NuisanceSet, a: int, t: int, eta: float) -> float:
    """Efficient influence function, augmented-IPW form with a censoring martingale."""
    return _aipw_uncentered(record, nuis, a, t) - eta


def eif_gcomp_term(record: ObservedRecord, nuis: NuisanceSet, a: int, t: int, eta: float) -> float:
    """Efficient influence function, g-computation form with a failure martingale."""
    return _gcomp_uncentered(record, nuis, a, t) - eta


# -- expectations and estimation -------------------------------------------------------


def exact_mean(obs: ObservedLaw, term: Callable[[ObservedRecord], float]) -> float:
    return math.fsum(p * term(rec) for rec, p in obs.atoms if p > 0)


def exact_variance(obs: ObservedLaw, term: Callable[[ObservedRecord], float]) -> float:
    values = [(p, term(rec)) for rec, p in obs.atoms if p > 0]
    mean = math.fsum(p * v for p, v in values)
    return math.fsum(p * (v - mean) ** 2 for p, v in values)


_UNCENTERED = {
    "ipw": ipw_term,
    "aipw-onestep": _aipw_uncentered,
    "gcomp-corrected": _gcomp_uncentered,
}


def _prepare(
    sample: Sequence[ObservedRecord], method: str, nuisance: NuisanceSet | None, epsilon_floor: float | None
) -> tuple[list[ObservedRecord], NuisanceSet]:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    sample = list(sample)
    if not sample:
        raise ValueError("sample is empty")
    nuis = nuisance if nuisance is not None else fit_nuisance(sample)
    if epsilon_floor is not None:
        nuis = floor_nuisance(nuis, epsilon_floor)
    return sample, nuis


def influence_values(
    sample: Sequence[ObservedRecord], method: str, a: int, t: int, nuis: NuisanceSet
) -> np.ndarray:
    """Uncentered estimating-function values, one per record of ``sample``.

    Their mean is the point estimate; subtracting it gives the realized
    influence-function values.
    """
    needed = {r.l for r in sample} if method != "ipw" else {r.l for r in sample if r.a == a}
    for l in sorted(needed):
        if (a, l) not in nuis.pi:
            raise EmptyStratum(f"no records with l={l!r} to fit a propensity")
        if nuis.pi[(a, l)] <= 0.0:
            raise PositivityViolation(f"no records with a={a} and l={l!r}")
    fn = _UNCENTERED[method]
    cache: dict[ObservedRecord, float] = {}
    out = np.empty(len(sample))
    for i, rec in enumerate(sample):
        if rec not in cache:
            cache[rec] = fn(rec, nuis, a, t)
        out[i] = cache[rec]
    return out


def _summarize(values: np.ndarray, z: float) -> tuple[float, float, float, float]:
    n = len(values)
    point = math.fsum(values) / n
    se = math.sqrt(math.fsum((values - point) ** 2) / (n - 1)) / math.sqrt(n) if n > 1 else 0.0
    return point, se, point - z * se, point + z * se


def estimate(
    sample: Sequence[ObservedRecord],
    method: str,
    a: int,
    t: int,
    nuisance: NuisanceSet | None = None,
    epsilon_floor: float | None = 0.01,
    z: float = 1.96,
) -> EstimateReport:
    """Estimate ``P(T*_a > t)`` from a sample.

    Each method averages an estimating function that is linear in η and solves
    for it; the standard error is the sample standard deviation of the
    realized influence-function values over sqrt(n).  Nuisances are fitted
    from ``sample`` unless given, then floored at ``epsilon_floor``.
    """
    sample, nuis = _prepare(sample, method, nuisance, epsilon_floor)
    point, se, lo, hi = _summarize(influence_values(sample, method, a, t, nuis), z)
    return EstimateReport(a, t, point, se, lo, hi, len(sample), method, nuis.floored)


def estimate_contrast(
    sample: Sequence[ObservedRecord],
    method: str,
    t: int,
    nuisance: NuisanceSet | None = None,
    epsilon_floor: float | None = 0.01,
    z: float = 1.96,
) -> dict[str, Any]:
    """``P(T*_1 > t) − P(T*_0 > t)`` with a standard error from paired values."""
    sample, nuis = _prepare(sample, method, nuisance, epsilon_floor)
    diff = influence_values(sample, method, 1, t, nuis) - influence_values(sample, method, 0, t, nuis)
    point, se, lo, hi = _summarize(diff, z)
    return {
        "estimand": {"contrast": "1-0", "t": t},
        "point": point,
        "se": se,
        "ci_low": lo,
        "ci_high": hi,
        "n": len(sample),
        "method": method,
        "floored": nuis.floored,
    }
