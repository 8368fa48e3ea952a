import itertools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carsurv.coarsening import (
    FUZZ_FAMILIES,
    ObservedLaw,
    ObservedRecord,
    car_by_definition,
    car_characterization,
    fiber,
    full_support_connected,
    gen_fuzz_law,
    gen_scar_law,
    lattice_law,
    phi_map,
    push_forward,
    satisfies_positivity,
    satisfies_truncation,
    scar_characterization,
    search_witness,
    true_eta,
)
from carsurv.errors import LawError, MassError
from carsurv.finite_law import FullAtom, load_law, make_law
from carsurv.worlds import world_w1, world_w2, world_w3

FIXTURES = Path(__file__).parent / "fixtures"


def product_law():
    atoms = [
        FullAtom("l0", a, t0, t1, c0, c1, 1 / 32)
        for a in (0, 1)
        for t0 in (1, 3)
        for t1 in (2, 3)
        for c0 in (1, 4)
        for c1 in (2, 4)
    ]
    return make_law(atoms)


def shifted_censoring_law():
    # C*_1 = T*_1 - 1 with T*_1 uniform on {2, 3}
    return make_law([FullAtom("l0", 1, t, t, t - 1, t - 1, 0.5) for t in (2, 3)])


class TestPhi:
    def test_failure_first(self):
        assert phi_map(("l0", 1, 1, 2, 4, 4)) == ObservedRecord("l0", 1, 1, 2)

    def test_tie_is_failure(self):
        assert phi_map(("l0", 1, 5, 2, 5, 2)) == ObservedRecord("l0", 1, 1, 2)

    def test_censored(self):
        assert phi_map(("l0", 0, 3, 1, 1, 1)) == ObservedRecord("l0", 0, 0, 1)


class TestPushForward:
    def test_w1(self):
        assert push_forward(world_w1()).as_dict() == {
            ObservedRecord("l0", 1, 1, 2): 0.5,
            ObservedRecord("l0", 0, 1, 1): 0.5,
        }

    def test_tie_world(self):
        assert push_forward(world_w3()).as_dict() == {ObservedRecord("l0", 1, 1, 2): 1.0}

    def test_point_mass(self):
        law = make_law([FullAtom("l3", 0, 4, 2, 1, 1, 1.0)])
        assert push_forward(law).as_dict() == {ObservedRecord("l3", 0, 0, 1): 1.0}

    @pytest.mark.parametrize("seed", range(5))
    def test_mass_preserved(self, seed):
        obs = push_forward(gen_scar_law(seed, grid=3))
        assert abs(sum(p for _, p in obs.atoms) - 1.0) <= 1e-12


class TestObservedTypes:
    def test_record_validation(self):
        with pytest.raises(ValueError):
            ObservedRecord("l0", 1, 1, 0)
        with pytest.raises(ValueError):
            ObservedRecord("l0", 2, 1, 1)

    def test_law_validation(self):
        with pytest.raises(MassError):
            ObservedLaw(((ObservedRecord("l0", 1, 1, 1), 0.4),))
        rec = ObservedRecord("l0", 1, 1, 1)
        with pytest.raises(LawError):
            ObservedLaw(((rec, 0.5), (rec, 0.5)))

    def test_empirical(self):
        r1, r2 = ObservedRecord("l0", 1, 1, 1), ObservedRecord("l0", 0, 0, 2)
        assert ObservedLaw.empirical([r1, r2, r1, r1]).as_dict() == {r1: 0.75, r2: 0.25}


class TestFiber:
    def test_accepts_consistent_tuple(self):
        assert fiber(ObservedRecord("l0", 1, 1, 2))(("l0", 0, 7, 2, 9, 2))

    def test_censored_needs_later_failure(self):
        assert not fiber(ObservedRecord("l0", 1, 0, 2))(("l0", 1, 1, 2, 1, 2))

    def test_other_arm_is_free(self):
        accepts = fiber(ObservedRecord("l0", 0, 1, 3))
        assert all(accepts(("l0", 0, 3, t1, 5, 1)) for t1 in range(1, 6))

    def test_covariate_must_match(self):
        assert not fiber(ObservedRecord("l1", 1, 1, 2))(("l0", 1, 1, 2, 4, 4))

    @pytest.mark.parametrize("seed", range(4))
    def test_soundness(self, seed):
        for atom in gen_fuzz_law(seed).support:
            assert fiber(phi_map(atom))(atom)

    def test_completeness_on_small_grid(self):
        ticks = range(1, 4)
        for o in [ObservedRecord("l0", a, d, x) for a in (0, 1) for d in (0, 1) for x in ticks]:
            accepts = fiber(o)
            for t0, t1, c0, c1 in itertools.product(ticks, repeat=4):
                full = ("l0", o.a, t0, t1, c0, c1)
                if accepts(full):
                    assert phi_map(full) == o


class TestCar:
    def test_product_law(self):
        law = product_law()
        assert car_by_definition(law) and car_characterization(law) and scar_characterization(law)

    def test_shifted_censoring(self):
        law = shifted_censoring_law()
        assert not car_by_definition(law)
        assert not car_characterization(law)
        assert not scar_characterization(law)

    def test_w2(self):
        law = world_w2()
        assert car_by_definition(law) and car_characterization(law) and scar_characterization(law)

    def test_treatment_depends_on_failure(self):
        atoms = [FullAtom("l0", a, 1, a + 1, 5, 5, 0.5) for a in (0, 1)]
        law = make_law(atoms)
        assert not car_characterization(law) and not scar_characterization(law)

    def test_stored_witness(self):
        law = load_law(FIXTURES / "witness_scar_not_car.json")
        assert scar_characterization(law)
        assert not car_characterization(law)
        assert not car_by_definition(law)


class TestGenerators:
    @pytest.mark.parametrize("seed", range(5))
    def test_scar_law_is_scar(self, seed):
        law = gen_scar_law(seed)
        assert scar_characterization(law)
        assert abs(sum(at.p for at in law.atoms) - 1.0) <= 1e-12

    def test_support_bound(self):
        assert len(gen_scar_law(11, n_l=2, n_a=2, grid=4)) <= 2 * 2 * 4**4

    def test_deterministic(self):
        assert gen_scar_law(5).as_dict() == gen_scar_law(5).as_dict()

    def test_assumptions_hold(self):
        law = gen_scar_law(3)
        assert satisfies_truncation(law, law.tau)
        assert satisfies_positivity(law, law.tau, 0.01)

    def test_single_arm(self):
        law = gen_scar_law(3, n_a=1)
        assert all(at.a == 1 for at in law.atoms)

    def test_fuzz_families_straddle_the_boundary(self):
        def verdicts(family):
            law = gen_fuzz_law(1, family=family)
            return car_characterization(law), scar_characterization(law)

        assert verdicts("scar") == (True, True)
        assert verdicts("above") == (True, True)
        assert verdicts("cross") == (False, True)
        assert verdicts("confounded") == (False, False)

    def test_true_eta(self):
        assert true_eta(world_w2(), 1, 2) == 0.5
        assert true_eta(world_w1(), 0, 1) == 0.0


class TestWitnessSearch:
    def test_scar_not_car(self):
        law = search_witness("scar-not-car", seed=0)
        assert law is not None
        assert scar_characterization(law) and not car_characterization(law)

    def test_zero_budget(self):
        assert search_witness("scar-not-car", budget=0) is None

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            search_witness("neither")

    def test_deterministic(self):
        a = search_witness("scar-not-car", seed=4)
        b = search_witness("scar-not-car", seed=4)
        assert a.as_dict() == b.as_dict()


def random_lattice_law(seed, grid=3):
    rng = np.random.default_rng(seed)
    c = ("indep", "own", "other", "both", "above")
    return lattice_law(
        rng,
        grid=grid,
        a_pattern=("l", "t")[int(rng.integers(2))],
        t_pattern=("indep", "joint")[int(rng.integers(2))],
        c_patterns=tuple(c[int(i)] for i in rng.integers(5, size=2)),
    )


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_definition_matches_characterization(seed):
    law = random_lattice_law(seed)
    assert car_by_definition(law) == car_characterization(law)


@pytest.mark.parametrize("family", FUZZ_FAMILIES)
def test_definition_matches_characterization_per_family(family):
    for seed in range(5):
        law = gen_fuzz_law(seed, family=family)
        assert car_by_definition(law) == car_characterization(law)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 100_000))
def test_car_characterization_implies_scar(seed):
    # restricted independence of the failure pair from censoring implies it for
    # the own-arm failure time alone, so no law can be CAR without being SCAR
    law = random_lattice_law(seed)
    if car_characterization(law):
        assert scar_characterization(law)


def test_disconnected_support_breaks_the_equivalence():
    # two failure-time pairs that no observation can link: the definition is
    # satisfied vacuously while treatment still depends on the failure times
    law = load_law(FIXTURES / "car_definition_not_scar.json")
    assert not full_support_connected(law)
    assert car_by_definition(law)
    assert not car_characterization(law)
    assert not scar_characterization(law)


def test_generated_supports_are_connected():
    assert all(full_support_connected(gen_fuzz_law(s)) for s in range(10))
    assert all(full_support_connected(gen_scar_law(s, grid=3)) for s in range(5))
