"""Exact finite joint laws over (L, A, T*_0, T*_1, C*_0, C*_1).

A :class:`FiniteLaw` is a list of weighted outcome tuples.  Every query here
is answered by direct enumeration, which makes these laws the brute-force
oracle the rest of the package is checked against.

Times are positive integer ticks so that ties and the strict/weak
inequalities in the failure indicator are exact.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import DuplicateAtom, LawError, MassError, ZeroProbabilityEvent

COORDS = ("l", "a", "t0", "t1", "c0", "c1")
# Potential failure indicators I(T*_a <= C*_a); computed on demand.
DERIVED = ("d0", "d1")

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class FullAtom:
    """One outcome (l, a, t0, t1, c0, c1) with its probability mass."""

    l: str
    a: int
    t0: int
    t1: int
    c0: int
    c1: int
    p: float

    def __post_init__(self) -> None:
        if self.a not in (0, 1):
            raise LawError(f"treatment must be 0 or 1, got {self.a!r}")
        for name in ("t0", "t1", "c0", "c1"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise LawError(f"{name} must be a positive integer tick, got {v!r}")
        if not (self.p >= 0.0) or math.isinf(self.p):
            raise MassError(f"atom mass must be finite and non-negative, got {self.p!r}")

    @property
    def key(self) -> tuple:
        return (self.l, self.a, self.t0, self.t1, self.c0, self.c1)

    def t(self, a: int) -> int:
        return self.t1 if a else self.t0

    def c(self, a: int) -> int:
        return self.c1 if a else self.c0

    def d(self, a: int) -> int:
        return int(self.t(a) <= self.c(a))

    def value(self, coord: str) -> Any:
        if coord == "d0":
            return self.d(0)
        if coord == "d1":
            return self.d(1)
        if coord not in COORDS:
            raise KeyError(f"unknown coordinate {coord!r}")
        return getattr(self, coord)


@dataclass(frozen=True)
class FiniteLaw:
    atoms: tuple[FullAtom, ...]
    mass_tolerance: float = DEFAULT_TOL
    tau: int | None = None
    time_unit: str = "tick"

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if not self.atoms:
            raise LawError("a law needs at least one atom")
        seen = set()
        for atom in self.atoms:
            if atom.key in seen:
                raise DuplicateAtom(f"atom {atom.key} appears more than once")
            seen.add(atom.key)
        total = math.fsum(atom.p for atom in self.atoms)
        if abs(total - 1.0) > self.mass_tolerance:
            raise MassError(f"total mass {total!r} differs from 1 by more than {self.mass_tolerance}")

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def support(self) -> tuple[FullAtom, ...]:
        return tuple(atom for atom in self.atoms if atom.p > 0)

    def as_dict(self) -> dict[tuple, float]:
        return {atom.key: atom.p for atom in self.atoms}

    @property
    def labels(self) -> list[str]:
        out: list[str] = []
        for atom in self.atoms:
            if atom.l not in out:
                out.append(atom.l)
        return out

    @property
    def max_tick(self) -> int:
        return max(max(at.t0, at.t1, at.c0, at.c1) for at in self.atoms)


def make_law(
    atoms: Iterable[FullAtom],
    mass_tolerance: float = DEFAULT_TOL,
    tau: int | None = None,
    time_unit: str = "tick",
) -> FiniteLaw:
    """Validate ``atoms`` and wrap them as a law.

    Zero-mass atoms are kept; they never contribute to a query.
    """
    return FiniteLaw(tuple(atoms), mass_tolerance=mass_tolerance, tau=tau, time_unit=time_unit)


def law_from_masses(
    masses: Mapping[tuple, float], *, normalize: bool = False, tau: int | None = None
) -> FiniteLaw:
    """Build a law from ``{(l, a, t0, t1, c0, c1): p}``."""
    items = [(k, float(p)) for k, p in masses.items()]
    if normalize:
        total = math.fsum(p for _, p in items)
        items = [(k, p / total) for k, p in items]
    return make_law((FullAtom(*k, p) for k, p in items), tau=tau)


def _coords_of(atom: FullAtom, coords: Sequence[str]) -> tuple:
    return tuple(atom.value(c) for c in coords)


def marginal(law: FiniteLaw, coords: Sequence[str]) -> dict[tuple, float]:
    """Law of the sub-tuple ``coords``, as ``{values: mass}`` in first-seen order."""
    coords = tuple(coords)
    if not coords:
        raise ValueError("coords must be non-empty")
    parts: dict[tuple, list[float]] = defaultdict(list)
    for atom in law.atoms:
        parts[_coords_of(atom, coords)].append(atom.p)
    return {k: math.fsum(v) for k, v in parts.items()}


def probability(law: FiniteLaw, event: Callable[[FullAtom], bool]) -> float:
    return math.fsum(atom.p for atom in law.atoms if event(atom))


def condition(law: FiniteLaw, event: Callable[[FullAtom], bool]) -> FiniteLaw:
    """Restrict ``law`` to ``event`` and renormalize."""
    kept = [atom for atom in law.atoms if event(atom)]
    mass = math.fsum(atom.p for atom in kept)
    if mass <= 0.0:
        raise ZeroProbabilityEvent("conditioning event has probability zero")
    return FiniteLaw(
        tuple(FullAtom(*atom.key, atom.p / mass) for atom in kept),
        mass_tolerance=law.mass_tolerance,
        tau=law.tau,
        time_unit=law.time_unit,
    )


def expectation(law: FiniteLaw, f: Callable[[FullAtom], float]) -> float:
    return math.fsum(atom.p * f(atom) for atom in law.atoms if atom.p > 0)


def cond_indep(
    law: FiniteLaw,
    x: Sequence[str],
    y: Sequence[str],
    z: Sequence[str] = (),
    restriction: Callable[[Mapping[str, Any]], bool] | None = None,
    tol: float = 1e-9,
) -> bool:
    """Test ``X ⊥ Y | Z``, optionally only on a restricting event.

    The check is slice equality: within each ``Z = z`` slice, the conditional
    probability ``P(Y = y | X = x, Z = z)`` must be the same for every ``x``
    of positive mass.  With ``restriction`` given, the comparison for a pair
    ``(x, y)`` is made only if ``restriction`` accepts the merged coordinate
    values ``{name: value}`` of x, y and z.  Without a restriction this is
    ordinary conditional independence.
    """
    x, y, z = tuple(x), tuple(y), tuple(z)
    joint: dict[tuple, dict[tuple, dict[tuple, float]]] = defaultdict(
        lambda: defaultdict(lambda: defaultdict(float))
    )
    for atom in law.atoms:
        if atom.p <= 0:
            continue
        joint[_coords_of(atom, z)][_coords_of(atom, x)][_coords_of(atom, y)] += atom.p
    if not joint:
        raise ZeroProbabilityEvent("law has no positive-mass slice")

    for zv, by_x in joint.items():
        px = {xv: math.fsum(cells.values()) for xv, cells in by_x.items()}
        yvals = {yv for cells in by_x.values() for yv in cells}
        for yv in yvals:
            lo, hi = math.inf, -math.inf
            for xv, cells in by_x.items():
                if restriction is not None:
                    named = dict(zip(z, zv))
                    named.update(zip(x, xv))
                    named.update(zip(y, yv))
                    if not restriction(named):
                        continue
                q = cells.get(yv, 0.0) / px[xv]
                lo, hi = min(lo, q), max(hi, q)
            if hi - lo > tol:
                return False
    return True


def law_to_json(law: FiniteLaw) -> dict[str, Any]:
    return {
        "time_unit": law.time_unit,
        "tau": law.tau,
        "atoms": [
            {"l": at.l, "a": at.a, "t0": at.t0, "t1": at.t1, "c0": at.c0, "c1": at.c1, "p": at.p}
            for at in law.atoms
        ],
    }


def law_from_json(doc: Mapping[str, Any]) -> FiniteLaw:
    try:
        raw_atoms = doc["atoms"]
    except (KeyError, TypeError) as exc:
        raise LawError("law document needs an 'atoms' list") from exc
    atoms = []
    for i, item in enumerate(raw_atoms):
        try:
            atoms.append(
                FullAtom(
                    str(item["l"]), item["a"], item["t0"], item["t1"], item["c0"], item["c1"],
                    float(item["p"]),
                )
            )
        except KeyError as exc:
            raise LawError(f"atom {i} lacks field {exc}") from exc
    tau = doc.get("tau")
    if tau is not None and (not isinstance(tau, int) or tau <= 0):
        raise LawError(f"tau must be a positive integer, got {tau!r}")
    return make_law(atoms, tau=tau, time_unit=str(doc.get("time_unit", "tick")))


def save_law(law: FiniteLaw, path: str | Path) -> None:
    Path(path).write_text(json.dumps(law_to_json(law), indent=2) + "\n")


def load_law(path: str | Path) -> FiniteLaw:
    return law_from_json(json.loads(Path(path).read_text()))
