"""The observed-data map, coarsening-at-random checks and law generators.

The full data are ``(L, T*_0, T*_1)``; the coarsening variables are
``(A, C*_0, C*_1)``.  An observation keeps ``L`` and ``A`` and reveals the
treated arm's failure time only if it does not exceed that arm's censoring
time (ties resolve to failure).
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .finite_law import (
    FiniteLaw,
    FullAtom,
    cond_indep,
    condition,
    make_law,
)
from .errors import LawError, MassError, ZeroProbabilityEvent
from .kernel import StepFn

CAR_TOL = 1e-9


@dataclass(frozen=True, order=True)
class ObservedRecord:
    l: str
    a: int
    delta: int
    x: int

    def __post_init__(self) -> None:
        if self.a not in (0, 1) or self.delta not in (0, 1):
            raise ValueError(f"a and delta must be bits, got a={self.a!r}, delta={self.delta!r}")
        if isinstance(self.x, bool) or not isinstance(self.x, int) or self.x <= 0:
            raise ValueError(f"x must be a positive integer tick, got {self.x!r}")

    @property
    def stratum(self) -> tuple[int, str]:
        return (self.a, self.l)


@dataclass(frozen=True)
class ObservedLaw:
    atoms: tuple[tuple[ObservedRecord, float], ...]
    mass_tolerance: float = 1e-12

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))
        seen = set()
        for rec, p in self.atoms:
            if rec in seen:
                raise LawError(f"record {rec} appears more than once")
            if p < 0:
                raise MassError(f"negative mass {p!r} on {rec}")
            seen.add(rec)
        total = math.fsum(p for _, p in self.atoms)
        if abs(total - 1.0) > self.mass_tolerance:
            raise MassError(f"observed law has total mass {total!r}")

    @classmethod
    def empirical(cls, sample: Iterable[ObservedRecord]) -> "ObservedLaw":
        counts: dict[ObservedRecord, int] = {}
        for rec in sample:
            counts[rec] = counts.get(rec, 0) + 1
        n = sum(counts.values())
        if n == 0:
            raise ValueError("sample is empty")
        return cls(tuple((rec, c / n) for rec, c in counts.items()))

    def as_dict(self) -> dict[ObservedRecord, float]:
        return dict(self.atoms)

    @property
    def records(self) -> list[ObservedRecord]:
        return [r for r, _ in self.atoms]

    @property
    def labels(self) -> list[str]:
        out: list[str] = []
        for rec, _ in self.atoms:
            if rec.l not in out:
                out.append(rec.l)
        return out

    def strata(self) -> list[tuple[int, str]]:
        out: list[tuple[int, str]] = []
        for rec, p in self.atoms:
            if p > 0 and rec.stratum not in out:
                out.append(rec.stratum)
        return out


def phi_map(atom: FullAtom | Sequence) -> ObservedRecord:
    """Observed record ``(L, A, I(T_A <= C_A), min(T_A, C_A))`` of a full tuple."""
    if not isinstance(atom, FullAtom):
        l, a, t0, t1, c0, c1 = tuple(atom)[:6]
        atom = FullAtom(l, a, t0, t1, c0, c1, 0.0)
    t, c = atom.t(atom.a), atom.c(atom.a)
    return ObservedRecord(atom.l, atom.a, int(t <= c), min(t, c))


def push_forward(law: FiniteLaw) -> ObservedLaw:
    masses: dict[ObservedRecord, list[float]] = {}
    for atom in law.atoms:
        masses.setdefault(phi_map(atom), []).append(atom.p)
    return ObservedLaw(tuple((rec, math.fsum(ps)) for rec, ps in masses.items()))


def fiber(obs: ObservedRecord) -> Callable[[FullAtom | Sequence], bool]:
    """Predicate for the full tuples that could produce ``obs``.

    Checks the covariate and the observed arm's times; the other arm and the
    recorded treatment are left free.
    """

    def accepts(atom: FullAtom | Sequence) -> bool:
        if isinstance(atom, FullAtom):
            l, t, c = atom.l, atom.t(obs.a), atom.c(obs.a)
        else:
            l, _, t0, t1, c0, c1 = tuple(atom)[:6]
            t, c = (t1, c1) if obs.a else (t0, c0)
        if l != obs.l:
            return False
        if obs.delta == 1:
            return t == obs.x and c >= obs.x
        return t > obs.x and c == obs.x

    return accepts


def _in_full_fiber(obs: ObservedRecord, l: str, t0: int, t1: int) -> bool:
    t = t1 if obs.a else t0
    if l != obs.l:
        return False
    return t == obs.x if obs.delta == 1 else t > obs.x


def car_by_definition(law: FiniteLaw, tol: float = CAR_TOL) -> bool:
    """CAR checked directly on conditional densities.

    For each observed value ``o`` the probability ``P(O = o | L, T*_0, T*_1)``
    must be the same for every full-data value of positive mass that could
    have produced ``o``.
    """
    full_mass: dict[tuple, list[float]] = defaultdict(list)
    joint: dict[tuple, dict[ObservedRecord, list[float]]] = defaultdict(lambda: defaultdict(list))
    for atom in law.atoms:
        if atom.p <= 0:
            continue
        k = (atom.l, atom.t0, atom.t1)
        full_mass[k].append(atom.p)
        joint[k][phi_map(atom)].append(atom.p)
    pk = {k: math.fsum(v) for k, v in full_mass.items()}
    observed = {o for cells in joint.values() for o in cells}
    for o in observed:
        lo, hi = math.inf, -math.inf
        for k, mass in pk.items():
            if not _in_full_fiber(o, *k):
                continue
            q = math.fsum(joint[k].get(o, ())) / mass
            lo, hi = min(lo, q), max(hi, q)
        if hi - lo > tol:
            return False
    return True


def _given_arm(law: FiniteLaw, a: int) -> FiniteLaw | None:
    try:
        return condition(law, lambda at: at.a == a)
    except ZeroProbabilityEvent:
        return None


def _treatment_ignorable(law: FiniteLaw, tol: float) -> bool:
    return cond_indep(law, ("t0", "t1"), ("a",), ("l",), tol=tol)


def car_characterization(law: FiniteLaw, tol: float = CAR_TOL) -> bool:
    """The three conditional independences equivalent to CAR."""
    if not _treatment_ignorable(law, tol):
        return False
    for a in (0, 1):
        arm = _given_arm(law, a)
        if arm is None:
            continue
        ta, ca, tb, da = f"t{a}", f"c{a}", f"t{1 - a}", f"d{a}"
        censored_first = lambda v, ta=ta, ca=ca: v[ca] < v[ta]
        if not cond_indep(arm, ("t0", "t1"), (ca,), ("l",), restriction=censored_first, tol=tol):
            return False
        if not cond_indep(arm, (tb,), (da,), ("l", ta), tol=tol):
            return False
    return True


def scar_characterization(law: FiniteLaw, tol: float = CAR_TOL) -> bool:
    """Sequential CAR: ignorable treatment plus T*_a ⊥ C*_a on C*_a < T*_a."""
    if not _treatment_ignorable(law, tol):
        return False
    for a in (0, 1):
        arm = _given_arm(law, a)
        if arm is None:
            continue
        ta, ca = f"t{a}", f"c{a}"
        censored_first = lambda v, ta=ta, ca=ca: v[ca] < v[ta]
        if not cond_indep(arm, (ta,), (ca,), ("l",), restriction=censored_first, tol=tol):
            return False
    return True


def full_support_connected(law: FiniteLaw) -> bool:
    """Whether each covariate slice of the (T*_0, T*_1) support is connected.

    Joining t0 and t1 values that co-occur gives a bipartite graph.  The CAR
    characterization needs this graph connected for CAR to force an
    ignorable treatment; product supports always are.
    """
    edges: dict[str, set[tuple[int, int]]] = defaultdict(set)
    for atom in law.support:
        edges[atom.l].add((atom.t0, atom.t1))
    for pairs in edges.values():
        parent: dict[tuple[str, int], tuple[str, int]] = {}

        def find(v):
            while parent.setdefault(v, v) != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for t0, t1 in pairs:
            parent[find(("0", t0))] = find(("1", t1))
        if len({find(v) for v in list(parent)}) > 1:
            return False
    return True


# -- full-data functionals ---------------------------------------------------


def true_eta(law: FiniteLaw, a: int, t: int) -> float:
    """Counterfactual survival ``P(T*_a > t)``."""
    return math.fsum(at.p for at in law.atoms if at.t(a) > t)


def _survival_curve(pairs: list[tuple[int, float]], horizon: int) -> StepFn:
    total = math.fsum(p for _, p in pairs)
    ticks, values = [], []
    for u in range(1, horizon + 1):
        ticks.append(u)
        values.append(math.fsum(p for v, p in pairs if v > u) / total)
    return StepFn(tuple(ticks), tuple(values), 1.0)


def true_failure_survival(law: FiniteLaw, a: int, l: str, horizon: int) -> StepFn:
    """``H*(u; a, l) = P(T*_a > u | L = l)`` on ticks ``1..horizon``."""
    pairs = [(at.t(a), at.p) for at in law.atoms if at.l == l and at.p > 0]
    if not pairs:
        raise ZeroProbabilityEvent(f"L={l!r} has no mass")
    return _survival_curve(pairs, horizon)


def true_censoring_survival(law: FiniteLaw, a: int, l: str, horizon: int) -> StepFn:
    """``K*(u; a, l) = P(C*_a > u | A = a, L = l)`` on ticks ``1..horizon``."""
    pairs = [(at.c(a), at.p) for at in law.atoms if at.l == l and at.a == a and at.p > 0]
    if not pairs:
        raise ZeroProbabilityEvent(f"stratum (a={a}, l={l!r}) has no mass")
    return _survival_curve(pairs, horizon)


def satisfies_truncation(law: FiniteLaw, tau: int) -> bool:
    """Observed time at risk never exceeds ``tau``."""
    return all(phi_map(at).x <= tau for at in law.support)


def satisfies_positivity(law: FiniteLaw, tau: int, eps: float) -> bool:
    """``pi(a; l) K*(tau; a, l) > eps`` for both arms of every supported l."""
    for l in {at.l for at in law.support}:
        pl = math.fsum(at.p for at in law.atoms if at.l == l)
        for a in (0, 1):
            joint = math.fsum(at.p for at in law.atoms if at.l == l and at.a == a and at.c(a) > tau)
            if joint / pl <= eps:
                return False
    return True


# -- generators --------------------------------------------------------------


def _labels(n_l: int) -> list[str]:
    return [f"l{i}" for i in range(n_l)]


def _product_law(
    p_l: Mapping[str, float],
    p_a: Callable[[str, int, int], float],
    p_t: Mapping[str, Mapping[tuple[int, int], float]],
    p_c: Callable[[int, str, int, int, int], Mapping[int, float]],
    tau: int | None,
) -> FiniteLaw:
    """Assemble P(L) P(T|L) P(A=1|L,T) P(C0|A,L,T) P(C1|A,L,T)."""
    atoms = []
    for l, pl in p_l.items():
        for (t0, t1), pt in p_t[l].items():
            pa1 = p_a(l, t0, t1)
            for a, pa in ((0, 1.0 - pa1), (1, pa1)):
                if pa <= 0:
                    continue
                c0s, c1s = p_c(0, l, a, t0, t1), p_c(1, l, a, t0, t1)
                for c0, q0 in c0s.items():
                    for c1, q1 in c1s.items():
                        p = pl * pt * pa * q0 * q1
                        if p > 0:
                            atoms.append(FullAtom(l, a, t0, t1, c0, c1, p))
    total = math.fsum(at.p for at in atoms)
    atoms = [FullAtom(*at.key, at.p / total) for at in atoms]
    return make_law(atoms, tau=tau)


def gen_scar_law(seed: int, n_l: int = 2, n_a: int = 2, grid: int = 4) -> FiniteLaw:
    """Random law with ignorable treatment and censoring independent of failure.

    Failure ticks fill ``1..grid`` (so ``tau = grid``) with full joint support.
    Censoring ticks are ``1..grid-1`` plus ``grid+1``, the latter standing for
    "still under observation after tau"; it always carries at least a
    quarter of the mass so positivity holds.  ``n_a = 1`` fixes A = 1.
    """
    if min(n_l, n_a, grid) < 1 or n_a > 2:
        raise ValueError("need n_l >= 1, n_a in {1, 2}, grid >= 1")
    rng = np.random.default_rng(seed)
    labels = _labels(n_l)
    p_l = dict(zip(labels, rng.dirichlet(np.ones(n_l))))
    pa1 = {l: (float(rng.uniform(0.2, 0.8)) if n_a == 2 else 1.0) for l in labels}
    pairs = list(itertools.product(range(1, grid + 1), repeat=2))
    p_t = {l: dict(zip(pairs, rng.dirichlet(np.ones(len(pairs))))) for l in labels}
    c_ticks = list(range(1, grid)) + [grid + 1]
    c_tab = {}
    for arm in (0, 1):
        for l in labels:
            for a in (0, 1):
                w = 0.75 * rng.dirichlet(np.ones(len(c_ticks)))
                w[-1] += 0.25
                c_tab[arm, l, a] = dict(zip(c_ticks, w))
    return _product_law(
        p_l,
        lambda l, t0, t1: pa1[l],
        p_t,
        lambda arm, l, a, t0, t1: c_tab[arm, l, a],
        tau=grid,
    )


LATTICE = 24
C_PATTERNS = ("indep", "own", "other", "both", "above")


def _composition(rng: np.random.Generator, n: int, total: int = LATTICE, floor: int = 0) -> list[int]:
    """Random split of ``total`` into ``n`` integer parts, each at least ``floor``."""
    base = [floor] * n
    left = total - floor * n
    if left < 0:
        raise ValueError(f"cannot split {total} into {n} parts of at least {floor}")
    for i in rng.integers(0, n, size=left):
        base[i] += 1
    return base


def _lattice_dist(rng, support: Sequence[int], floor: int = 0) -> dict[int, float]:
    parts = _composition(rng, len(support), floor=floor)
    return {v: k / LATTICE for v, k in zip(support, parts) if k}


def lattice_law(
    rng: np.random.Generator,
    grid: int = 3,
    n_l: int = 2,
    a_pattern: str = "l",
    t_pattern: str = "joint",
    c_patterns: tuple[str, str] = ("indep", "indep"),
) -> FiniteLaw:
    """Random law whose conditional tables sit on a 1/24 lattice.

    ``a_pattern`` is ``"l"`` (treatment depends on L only) or ``"t"`` (also on
    the potential failure times).  ``t_pattern`` is ``"indep"`` (T*_0 ⊥ T*_1 | L)
    or ``"joint"``; both give every (t0, t1) pair positive mass.  Each entry of
    ``c_patterns`` says what C*_a may depend on besides (A, L): nothing,
    its own arm's failure time, the other arm's, both, or (``"above"``) both
    but only for censoring at or after the own failure time.
    """
    ticks = list(range(1, grid + 1))
    labels = _labels(n_l)
    p_l = _lattice_dist(rng, labels, floor=1) if n_l > 1 else {labels[0]: 1.0}

    p_t = {}
    for l in labels:
        if t_pattern == "joint":
            pairs = list(itertools.product(ticks, repeat=2))
            p_t[l] = dict(zip(pairs, (k / LATTICE for k in _composition(rng, len(pairs), floor=1))))
        elif t_pattern == "indep":
            m0 = _lattice_dist(rng, ticks, floor=1)
            m1 = _lattice_dist(rng, ticks, floor=1)
            p_t[l] = {(t0, t1): m0[t0] * m1[t1] for t0 in ticks for t1 in ticks}
        else:
            raise ValueError(f"unknown t_pattern {t_pattern!r}")

    def draw_a():
        return int(rng.integers(1, LATTICE)) / LATTICE

    if a_pattern == "l":
        a_tab = {l: draw_a() for l in labels}
        p_a = lambda l, t0, t1: a_tab[l]
    elif a_pattern == "t":
        a_tab = {(l, t0, t1): draw_a() for l in labels for t0 in ticks for t1 in ticks}
        p_a = lambda l, t0, t1: a_tab[l, t0, t1]
    else:
        raise ValueError(f"unknown a_pattern {a_pattern!r}")

    c_tab: dict[tuple, dict[int, float]] = {}
    below: dict[tuple, dict[int, int]] = {}

    def c_dist(arm, l, a, t0, t1):
        pattern = c_patterns[arm]
        own, other = (t1, t0) if arm else (t0, t1)
        if pattern == "above":
            if (arm, l, a) not in below:
                # mass kept below every possible own failure tick: <= 12/24
                parts = _composition(rng, grid, total=LATTICE // 2)
                below[arm, l, a] = dict(zip(ticks, parts[:-1] + [0]))
            g = below[arm, l, a]
            key = (arm, l, a, t0, t1)
            if key not in c_tab:
                low = {c: g[c] for c in ticks if c < own}
                rest = LATTICE - sum(low.values())
                high = dict(zip(range(own, grid + 1), _composition(rng, grid - own + 1, total=rest)))
                c_tab[key] = {c: k / LATTICE for c, k in {**low, **high}.items() if k}
            return c_tab[key]
        dep = {"indep": (), "own": (own,), "other": (other,), "both": (own, other)}[pattern]
        key = (arm, l, a) + dep
        if key not in c_tab:
            c_tab[key] = _lattice_dist(rng, ticks)
        return c_tab[key]

    return _product_law(p_l, p_a, p_t, c_dist, tau=None)


FUZZ_FAMILIES = ("scar", "above", "cross", "confounded", "own", "random")


def gen_fuzz_law(seed: int, grid: int = 3, n_l: int = 2, family: str | None = None) -> FiniteLaw:
    """Random law from a named structural family (random family if None).

    The families straddle the CAR/SCAR boundary: ``scar`` and ``above`` satisfy
    both notions, ``cross`` satisfies SCAR but not CAR, and ``confounded``,
    ``own`` and ``random`` usually satisfy neither.
    """
    rng = np.random.default_rng(seed)
    if family is None:
        family = FUZZ_FAMILIES[int(rng.integers(len(FUZZ_FAMILIES)))]
    spec = {
        "scar": ("l", "joint", ("indep", "indep")),
        "above": ("l", "joint", ("above", "above")),
        "cross": ("l", "indep", ("other", "other")),
        "confounded": ("t", "joint", ("indep", "indep")),
        "own": ("l", "joint", ("own", "own")),
        "random": ("t", "joint", ("both", "both")),
    }[family]
    return lattice_law(rng, grid=grid, n_l=n_l, a_pattern=spec[0], t_pattern=spec[1], c_patterns=spec[2])


WITNESS_MODES = ("car-not-scar", "scar-not-car")
DEFAULT_WITNESS_BUDGET = 400


def search_witness(
    mode: str, seed: int = 0, budget: int = DEFAULT_WITNESS_BUDGET, grid: int = 3
) -> FiniteLaw | None:
    """Randomized search for a law separating CAR from sequential CAR.

    Candidates are lattice laws on a grid of at most 4 ticks with binary L;
    each draw picks a treatment pattern, a failure-time pattern and a
    censoring pattern per arm at random.  Returns the first candidate whose
    two characterizations match ``mode``, or None once ``budget`` candidates
    have been tried.
    """
    if mode not in WITNESS_MODES:
        raise ValueError(f"mode must be one of {WITNESS_MODES}, got {mode!r}")
    if grid > 4:
        raise ValueError("witness search is limited to grids of at most 4 ticks")
    want_car = mode == "car-not-scar"
    for i in range(budget):
        rng = np.random.default_rng([seed, i])
        a_pattern = ("l", "t")[int(rng.integers(2))]
        t_pattern = ("indep", "joint")[int(rng.integers(2))]
        c_patterns = tuple(C_PATTERNS[int(j)] for j in rng.integers(len(C_PATTERNS), size=2))
        law = lattice_law(rng, grid=grid, n_l=2, a_pattern=a_pattern, t_pattern=t_pattern, c_patterns=c_patterns)
        car = car_characterization(law)
        scar = scar_characterization(law)
        if car == want_car and scar != want_car:
            return law
    return None
