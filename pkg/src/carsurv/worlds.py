"""Small hand-built laws used as shared fixtures.

W1  no censoring before tau; T*_1 = 2, T*_0 = 1; A ~ Bernoulli(1/2).
W2  A = 1; T*_1 uniform on {2, 3}; C*_1 uniform on {1, 4}, independent.
W3  A = 1; T*_1 = C*_1 = 2, a failure/censoring tie with no positivity.
"""

from __future__ import annotations

from .finite_law import FiniteLaw, FullAtom, make_law


def world_w1() -> FiniteLaw:
    return make_law(
        [
            FullAtom("l0", 1, 1, 2, 4, 4, 0.5),
            FullAtom("l0", 0, 1, 2, 4, 4, 0.5),
        ],
        tau=3,
    )


def world_w2() -> FiniteLaw:
    atoms = [FullAtom("l0", 1, t, t, c, c, 0.25) for t in (2, 3) for c in (1, 4)]
    return make_law(atoms, tau=3)


def world_w3() -> FiniteLaw:
    # T*_0 and C*_0 mirror the treated arm; they never reach the data since A = 1.
    return make_law([FullAtom("l0", 1, 2, 2, 2, 2, 1.0)], tau=2)


WORLDS = {"W1": world_w1, "W2": world_w2, "W3": world_w3}
