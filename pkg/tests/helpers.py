"""Shared test utilities: random model generation and small oracles."""

from __future__ import annotations

import numpy as np

from ctmceq.model import (
    AdmissibleRowSet,
    ExponentialMixture,
    GeneratorMatrix,
    ModelSpec,
    PiecewisePolynomial,
    RowPayoff,
    StateSpace,
)


def random_model(rng: np.random.Generator, n_states: int, strictly_concave=True):
    """A random mixture-discount model with concave quadratic payoffs.

    Every payoff term is -c (x - m)^2 with c > 0, so the rows are
    strictly concave and smooth; boxes are [0, hi] with hi in [0.8, 2].
    """
    k = int(rng.integers(1, 4))
    weights = rng.uniform(0.2, 1.0, size=k)
    weights /= weights.sum()
    rates = rng.uniform(0.5, 2.5, size=k)
    discount = ExponentialMixture(weights, rates)
    payoffs = []
    boxes = []
    for i in range(n_states):
        terms = {}
        lo, hi = {}, {}
        for j in range(n_states):
            if j == i:
                continue
            span = float(rng.uniform(0.8, 2.0))
            c = float(rng.uniform(0.3, 1.5)) if strictly_concave else float(
                rng.uniform(0.0, 1.5)
            )
            m = float(rng.uniform(0.1, 0.9)) * span
            d = float(rng.uniform(-1.0, 1.0))
            # -c (x - m)^2 + d, expanded in ascending powers
            terms[j] = PiecewisePolynomial.from_coefficients(
                [d - c * m * m, 2.0 * c * m, -c], 0.0, np.inf
            )
            lo[j] = 0.0
            hi[j] = span
        payoffs.append(RowPayoff(i, terms))
        boxes.append(AdmissibleRowSet(i, lo, hi))
    return ModelSpec(StateSpace(n_states), discount, tuple(payoffs), tuple(boxes))


def random_generator(rng: np.random.Generator, model: ModelSpec) -> GeneratorMatrix:
    """A uniformly random feasible generator for the model's boxes."""
    n = model.n_states
    rates = np.zeros((n, n))
    for i in range(n):
        box = model.constraints[i]
        for j in box.targets:
            rates[i, j] = rng.uniform(box.lo[j], box.hi[j])
    return GeneratorMatrix.from_rates(rates)


def random_row_free(rng: np.random.Generator, model: ModelSpec, i: int):
    box = model.constraints[i]
    return {j: float(rng.uniform(box.lo[j], box.hi[j])) for j in box.targets}


def bisect(fn, lo: float, hi: float, iters: int = 200) -> float:
    """Plain bisection for a sign change of fn on [lo, hi]."""
    flo = fn(lo)
    if flo == 0.0:
        return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def loglog_slope(xs, ys) -> float:
    xs = np.log(np.abs(np.asarray(xs, dtype=float)))
    ys = np.log(np.abs(np.asarray(ys, dtype=float)))
    return float(np.polyfit(xs, ys, 1)[0])
