import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ctmceq.model import (
    AdmissibleRowSet,
    DomainError,
    ExponentialMixture,
    GenericDiscount,
    GeneratorMatrix,
    InfeasibleRowError,
    MaximizerAtom,
    ModelError,
    NoMaximumError,
    PiecewisePolynomial,
    RowPayoff,
    feasible_directions,
    maximize_tilted,
    two_state_generator,
    validate_generator,
)

from .helpers import random_model, random_row_free


# ---------------------------------------------------------------------------
# Piecewise polynomials
# ---------------------------------------------------------------------------

class TestPiecewisePolynomial:
    def test_single_piece_eval(self):
        p = PiecewisePolynomial.from_coefficients([1.0, 2.0, -1.0], 0.0, math.inf)
        assert p.value(0.0) == 1.0
        assert p.value(2.0) == 1.0 + 4.0 - 4.0
        assert p.derivative_value(0.5) == 2.0 - 1.0

    def test_continuity_enforced(self):
        with pytest.raises(ModelError, match="disagree at knot"):
            PiecewisePolynomial(
                np.array([0.0, 1.0, 2.0]),
                (np.array([0.0]), np.array([1.0])),
            )

    def test_smooth_flag(self):
        # value-continuous but kinked at 1: x vs 2x-1
        kinked = PiecewisePolynomial(
            np.array([0.0, 1.0, 2.0]),
            (np.array([0.0, 1.0]), np.array([-1.0, 2.0])),
        )
        assert not kinked.smooth
        assert kinked.derivative_value(1.0, "left") == 1.0
        assert kinked.derivative_value(1.0, "right") == 2.0

    def test_domain_error(self):
        p = PiecewisePolynomial.from_coefficients([0.0, 1.0], 0.0, 2.0)
        with pytest.raises(DomainError):
            p.value(2.5)
        with pytest.raises(DomainError):
            p.value(-0.5)

    def test_scaled(self):
        p = PiecewisePolynomial.from_coefficients([1.0, 0.0, -1.0], 0.0, 4.0)
        q = p.scaled(0.5, 2.0)  # 0.5 * p(x / 2)
        for x in [0.0, 1.0, 3.0, 8.0]:
            assert q.value(x) == pytest.approx(0.5 * p.value(x / 2.0), abs=1e-14)
        assert q.domain == (0.0, 8.0)

    @given(
        st.lists(st.floats(-3, 3), min_size=1, max_size=4),
        st.floats(0.01, 2.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_derivative_matches_fd(self, coeffs, x):
        p = PiecewisePolynomial.from_coefficients(coeffs, 0.0, 3.0)
        h = 1e-5
        if not (h < x < 3.0 - h):
            return
        fd = (p.value(x + h) - p.value(x - h)) / (2 * h)
        assert p.derivative_value(x) == pytest.approx(fd, abs=1e-7, rel=1e-6)


class TestMaximizeTilted:
    def test_interior_quadratic(self):
        p = PiecewisePolynomial.from_coefficients([0.0, 0.0, -1.0], 0.0, math.inf)
        val, atoms = maximize_tilted(p, 0.0, 2.0, 1.0, 1e-9)  # -x^2 + x
        assert val == pytest.approx(0.25, abs=1e-14)
        assert len(atoms) == 1 and not atoms[0].is_interval
        assert atoms[0].lo == pytest.approx(0.5, abs=1e-12)

    def test_flat_piece_becomes_interval(self):
        p = PiecewisePolynomial(
            np.array([0.0, 1.0, math.inf]),
            (np.array([1.0]), np.array([2.0, -1.0])),
        )
        val, atoms = maximize_tilted(p, 0.0, 3.0, 0.0, 1e-9)
        assert val == pytest.approx(1.0)
        assert atoms[0].is_interval and atoms[0].lo == 0.0 and atoms[0].hi == 1.0

    def test_two_tied_points(self):
        # -x^2 (x-2)^2 has equal maxima 0 at x=0 and x=2
        p = PiecewisePolynomial.from_coefficients(
            [0.0, 0.0, -4.0, 4.0, -1.0], 0.0, math.inf
        )
        val, atoms = maximize_tilted(p, 0.0, 3.0, 0.0, 1e-9)
        assert val == pytest.approx(0.0, abs=1e-12)
        assert len(atoms) == 2
        assert atoms[0].lo == pytest.approx(0.0, abs=1e-9)
        assert atoms[1].lo == pytest.approx(2.0, abs=1e-9)

    def test_unbounded_increasing_rejected(self):
        p = PiecewisePolynomial.from_coefficients([0.0, 1.0], 0.0, math.inf)
        with pytest.raises(NoMaximumError):
            maximize_tilted(p, 0.0, math.inf, 0.0, 1e-9)

    def test_unbounded_coercive_ok(self):
        p = PiecewisePolynomial.from_coefficients([0.0, 4.0, -1.0], 0.0, math.inf)
        val, atoms = maximize_tilted(p, 0.0, math.inf, 0.0, 1e-9)
        assert val == pytest.approx(4.0, abs=1e-12)
        assert atoms[0].lo == pytest.approx(2.0, abs=1e-12)

    def test_representatives(self):
        atom = MaximizerAtom(0.0, 1.0)
        assert atom.representatives() == [0.0, 0.5, 1.0]
        assert MaximizerAtom(0.3, 0.3).representatives() == [0.3]


# ---------------------------------------------------------------------------
# Discounts
# ---------------------------------------------------------------------------

class TestDiscounts:
    def test_mixture_validation(self):
        with pytest.raises(ModelError):
            ExponentialMixture(np.array([0.5, 0.6]), np.array([1.0, 2.0]))
        with pytest.raises(ModelError):
            ExponentialMixture(np.array([1.0]), np.array([-1.0]))

    def test_mixture_closed_form_integral_vs_quadrature(self):
        mix = ExponentialMixture(np.array([0.3, 0.7]), np.array([0.8, 2.5]))
        closed = mix.integral()
        horizon = mix.horizon_for_tail(1e-14)
        numeric, _ = quad(lambda t: float(mix.value(t)), 0.0, horizon, limit=400)
        assert abs(closed - numeric) < 1e-10

    def test_mixture_at_zero(self):
        mix = ExponentialMixture(np.array([0.5, 0.5]), np.array([1.0, 2.0]))
        assert float(mix.value(0.0)) == pytest.approx(1.0, abs=1e-15)
        assert mix.derivative_at_zero() == pytest.approx(-1.5, abs=1e-15)

    def test_generic_discount_validation(self):
        GenericDiscount(
            lambda t: 1.0 / (1.0 + t) ** 2,
            lambda t: -2.0 / (1.0 + t) ** 3,
            t_max=1e4,
            tail_bound=1e-4,
        )
        with pytest.raises(ModelError, match="delta\\(0\\)"):
            GenericDiscount(lambda t: 0.9, lambda t: 0.0, 10.0, 1e-6)
        with pytest.raises(ModelError, match="nonincreasing"):
            GenericDiscount(lambda t: 1.0 + t, lambda t: 1.0, 10.0, 1e-6)


# ---------------------------------------------------------------------------
# Generators and validation
# ---------------------------------------------------------------------------

class TestValidateGenerator:
    def test_two_state_valid(self, eg41_spec):
        verdict = validate_generator(eg41_spec, two_state_generator(0.3, 1.1))
        assert verdict.ok and not verdict.violations

    def test_negative_off_diagonal_reported(self, eg41_spec):
        raw = np.array([[0.1, -0.1], [0.5, -0.5]])
        verdict = validate_generator(eg41_spec, raw)
        assert not verdict.ok
        kinds = {v.kind for v in verdict.violations}
        assert "off-diagonal-sign" in kinds
        sign = next(v for v in verdict.violations if v.kind == "off-diagonal-sign")
        assert (sign.state, sign.target) == (0, 1)

    def test_row_sum_reported(self, rng):
        model = random_model(rng, 3)
        raw = np.array([[-1.0, 0.5, 0.5], [0.1, -0.2, 0.1 + 1e-6], [0.0, 0.0, 0.0]])
        verdict = validate_generator(model, raw)
        assert not verdict.ok
        assert any(v.kind == "row-sum" and v.state == 1 for v in verdict.violations)

    def test_box_reported(self, eg41_spec):
        verdict = validate_generator(eg41_spec, two_state_generator(5.0, 0.1))
        assert not verdict.ok
        assert any(v.kind == "box" and (v.state, v.target) == (0, 1)
                   for v in verdict.violations)

    def test_generator_constructor_rejects_bad_rows(self):
        with pytest.raises(ModelError):
            GeneratorMatrix(np.array([[-1.0, 0.9], [0.0, 0.0]]))
        with pytest.raises(ModelError):
            GeneratorMatrix(np.array([[0.5, -0.5], [0.0, 0.0]]))

    @given(st.integers(1, 4), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_row_reconstruction_exact(self, n, seed):
        rng = np.random.default_rng(seed)
        rates = rng.uniform(0.0, 3.0, size=(n, n))
        Q = GeneratorMatrix.from_rates(rates)
        for i in range(n):
            off = [Q.matrix[i, j] for j in range(n) if j != i]
            assert Q.matrix[i, i] == -np.sum(off)


class TestFeasibleDirections:
    def test_interior_point_both_ways(self, eg41_spec):
        flags = feasible_directions(eg41_spec.constraints[0], {1: 0.7})
        assert flags.increase[1] and flags.decrease[1]

    def test_at_lower_bound_only_up(self, eg41_spec):
        flags = feasible_directions(eg41_spec.constraints[1], {0: 0.0})
        assert flags.increase[0] and not flags.decrease[0]

    def test_at_upper_bound_only_down(self, eg41_spec):
        flags = feasible_directions(eg41_spec.constraints[0], {1: 2.0})
        assert not flags.increase[1] and flags.decrease[1]

    def test_infeasible_rejected(self, eg41_spec):
        with pytest.raises(InfeasibleRowError):
            feasible_directions(eg41_spec.constraints[0], {1: 2.5})


# ---------------------------------------------------------------------------
# Payoff fields
# ---------------------------------------------------------------------------

class TestRowPayoff:
    def test_gradient_matches_centered_differences(self, rng):
        model = random_model(rng, 3)
        for i in range(3):
            payoff = model.payoff[i]
            box = model.constraints[i]
            for _ in range(100):
                free = random_row_free(rng, model, i)
                # keep strictly interior so the FD stencil stays in domain
                free = {j: min(max(v, 0.01), box.hi[j] - 0.01) for j, v in free.items()}
                grad = payoff.gradient_free(free)
                for j in box.targets:
                    h = 1e-4
                    up = dict(free, **{j: free[j] + h})
                    dn = dict(free, **{j: free[j] - h})
                    fd = (payoff.value_free(up) - payoff.value_free(dn)) / (2 * h)
                    assert grad[j] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_terms_must_target_other_states(self):
        piece = PiecewisePolynomial.from_coefficients([0.0], 0.0, math.inf)
        with pytest.raises(ModelError):
            RowPayoff(0, {0: piece})


class TestAdmissibleRowSet:
    def test_bounds_validation(self):
        with pytest.raises(ModelError):
            AdmissibleRowSet(0, {1: -0.1}, {1: 1.0})
        with pytest.raises(ModelError):
            AdmissibleRowSet(0, {1: 1.0}, {1: 0.5})

    def test_unbounded_flag(self):
        box = AdmissibleRowSet(0, {1: 0.0}, {1: math.inf})
        assert not box.is_bounded
