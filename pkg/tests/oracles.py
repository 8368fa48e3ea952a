"""Brute-force reference computations over full laws.

These walk the full-data atoms directly and share no code with the package's
hazard, survival or estimator routines.
"""

from __future__ import annotations

from fractions import Fraction


def _arm(atom, a):
    t = atom.t1 if a else atom.t0
    c = atom.c1 if a else atom.c0
    return t, c


def stratum_hazards(law, a, l):
    """Failure and censoring hazard increments of stratum (a, l), by enumeration.

    Failure risk set: X >= u.  Censoring risk set: still unobserved just after
    a failure at u, i.e. X > u, or X == u and censored.
    """
    rows = [(atom, *_arm(atom, a)) for atom in law.atoms if atom.a == a and atom.l == l and atom.p > 0]
    ticks = sorted({min(t, c) for _, t, c in rows})
    d_fail, d_cens = {}, {}
    for u in ticks:
        fail = sum(at.p for at, t, c in rows if t == u and t <= c)
        cens = sum(at.p for at, t, c in rows if c == u and c < t)
        risk = sum(at.p for at, t, c in rows if min(t, c) >= u)
        risk_c = sum(at.p for at, t, c in rows if min(t, c) > u or (c == u and c < t))
        if fail:
            d_fail[u] = fail / risk
        if cens:
            d_cens[u] = cens / risk_c
    return d_fail, d_cens


def survival_from_increments(increments, horizon):
    out, s = {}, 1.0
    for u in range(0, horizon + 1):
        s *= 1.0 - increments.get(u, 0.0)
        out[u] = s
    return out


def counterfactual_survival(law, a, t):
    return sum(atom.p for atom in law.atoms if (atom.t1 if a else atom.t0) > t)


def exact_fraction_mean(pairs):
    """Mean of ``(weight, value)`` pairs in exact rational arithmetic."""
    return float(sum(Fraction(w) * Fraction(v) for w, v in pairs))


def true_curves(law, a, l, horizon):
    """``(K*, H*)`` on ticks ``0..horizon``: P(C_a > u | A=a, L=l) and P(T_a > u | L=l)."""
    in_l = [atom for atom in law.atoms if atom.l == l]
    in_s = [atom for atom in in_l if atom.a == a]
    pl, ps = sum(at.p for at in in_l), sum(at.p for at in in_s)
    K = {u: sum(at.p for at in in_s if _arm(at, a)[1] > u) / ps for u in range(horizon + 1)}
    H = {u: sum(at.p for at in in_l if _arm(at, a)[0] > u) / pl for u in range(horizon + 1)}
    return K, H
