"""Domain types for controlled continuous-time Markov chains.

A control is a generator matrix Q whose i-th row is chosen from an
admissible box of off-diagonal rates.  The running payoff is separable,
``f(t, i, q) = delta(t) * g_i(q)``, where ``delta`` is a discount
function and ``g_i`` is a per-state piecewise-polynomial field over the
row's off-diagonal rates.  All types here are immutable values after
construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Validation constants (absolute); configurable per call where it matters.
ROW_SUM_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12
CONTINUITY_TOL = 1e-9


class ModelError(ValueError):
    """Invalid model data (bad dimensions, broken invariants)."""


class InfeasibleRowError(ModelError):
    """A generator row lies outside its admissible set."""


class DomainError(ModelError):
    """Evaluation outside a payoff piece's declared domain."""


class NoMaximumError(ModelError):
    """A row objective has no attained maximum over the admissible set."""


def _as_readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Piecewise polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewisePolynomial:
    """Univariate piecewise polynomial with explicit knots.

    ``breaks`` has length m+1 and is strictly increasing; ``breaks[-1]``
    may be ``inf``.  ``coeffs[p]`` holds ascending-power coefficients of
    piece p in the global variable.  Pieces must agree in value at the
    interior knots; whether one-sided derivatives also agree is recorded
    in ``smooth`` (C^1 flag).  Evaluation outside ``[breaks[0],
    breaks[-1]]`` raises ``DomainError`` instead of extrapolating.
    """

    breaks: np.ndarray
    coeffs: tuple[np.ndarray, ...]
    smooth: bool = field(init=False)

    def __post_init__(self):
        breaks = _as_readonly(self.breaks)
        if breaks.ndim != 1 or breaks.size < 2:
            raise ModelError("need at least one piece (two breakpoints)")
        if not np.all(np.diff(breaks) > 0):
            raise ModelError("breakpoints must be strictly increasing")
        if not math.isfinite(breaks[0]):
            raise ModelError("left endpoint of the domain must be finite")
        coeffs = tuple(_as_readonly(c) for c in self.coeffs)
        if len(coeffs) != breaks.size - 1:
            raise ModelError(
                f"{len(coeffs)} coefficient rows for {breaks.size - 1} pieces"
            )
        for c in coeffs:
            if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
                raise ModelError("piece coefficients must be finite 1-d arrays")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "coeffs", coeffs)
        smooth = True
        for k in range(1, breaks.size - 1):
            x = breaks[k]
            left = _polyval(coeffs[k - 1], x)
            right = _polyval(coeffs[k], x)
            scale = 1.0 + max(abs(left), abs(right))
            if abs(left - right) > CONTINUITY_TOL * scale:
                raise ModelError(
                    f"pieces disagree at knot {x!r}: {left!r} vs {right!r}"
                )
            dl = _polyval(_polyder(coeffs[k - 1]), x)
            dr = _polyval(_polyder(coeffs[k]), x)
            if abs(dl - dr) > CONTINUITY_TOL * (1.0 + max(abs(dl), abs(dr))):
                smooth = False
        object.__setattr__(self, "smooth", smooth)

    @classmethod
    def from_coefficients(cls, coeffs, lo=0.0, hi=math.inf) -> "PiecewisePolynomial":
        """Single polynomial piece on [lo, hi]."""
        return cls(np.array([lo, hi]), (np.asarray(coeffs, dtype=float),))

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.breaks[0]), float(self.breaks[-1])

    def _piece_index(self, x: float) -> int:
        lo, hi = self.domain
        if not (lo - 1e-12 <= x <= hi + 1e-12):
            raise DomainError(f"{x!r} outside declared domain [{lo!r}, {hi!r}]")
        # Points at a knot belong to the right piece; continuity makes the
        # value unambiguous either way.
        idx = int(np.searchsorted(self.breaks, x, side="right")) - 1
        return min(max(idx, 0), len(self.coeffs) - 1)

    def value(self, x: float) -> float:
        return _polyval(self.coeffs[self._piece_index(x)], x)

    def derivative_value(self, x: float, side: str = "right") -> float:
        """One-sided derivative; sides differ only at non-smooth knots."""
        idx = self._piece_index(x)
        if side == "left" and idx > 0 and x <= self.breaks[idx]:
            idx -= 1
        return _polyval(_polyder(self.coeffs[idx]), x)

    def scaled(self, value_factor: float, arg_factor: float) -> "PiecewisePolynomial":
        """Return x -> value_factor * p(x / arg_factor)."""
        if arg_factor <= 0:
            raise ModelError("argument scale must be positive")
        breaks = self.breaks * arg_factor
        coeffs = []
        for c in self.coeffs:
            powers = arg_factor ** (-np.arange(c.size, dtype=float))
            coeffs.append(c * powers * value_factor)
        return PiecewisePolynomial(breaks, tuple(coeffs))

    def concave_on(self, lo: float, hi: float, samples: int = 64) -> bool:
        """Sampled check of d2p/dx2 <= 0 on [lo, hi] (advisory only)."""
        hi = min(hi, float(self.breaks[-1]))
        if not math.isfinite(hi):
            hi = max(lo + 1.0, float(self.breaks[-2]) + 1.0)
        xs = np.linspace(lo, hi, samples)
        for x in xs:
            c2 = _polyder(_polyder(self.coeffs[self._piece_index(x)]))
            if _polyval(c2, x) > 1e-9:
                return False
        return True


def _polyval(c: np.ndarray, x: float) -> float:
    return float(np.polynomial.polynomial.polyval(x, c))


def _polyder(c: np.ndarray) -> np.ndarray:
    if len(c) <= 1:
        return np.zeros(1)
    return np.polynomial.polynomial.polyder(c)


def _real_roots(c: np.ndarray, lo: float, hi: float) -> list[float]:
    """Real roots of the polynomial with coefficients c inside [lo, hi]."""
    c = np.trim_zeros(np.asarray(c, dtype=float), "b")
    if c.size <= 1:
        return []
    roots = np.polynomial.polynomial.polyroots(c)
    out = []
    der = _polyder(c)
    for r in roots:
        if abs(r.imag) > 1e-8 * (1.0 + abs(r.real)):
            continue
        x = float(r.real)
        # Two Newton polish steps; eigenvalue-based roots are ~1e-14 already.
        for _ in range(2):
            d = _polyval(der, x)
            if d != 0.0:
                x -= _polyval(c, x) / d
        if lo - 1e-12 <= x <= hi + 1e-12:
            out.append(min(max(x, lo), hi))
    return sorted(out)


@dataclass(frozen=True)
class MaximizerAtom:
    """One connected component of an argmax set: a point or an interval."""

    lo: float
    hi: float

    @property
    def is_interval(self) -> bool:
        return self.hi > self.lo

    def representatives(self) -> list[float]:
        if not self.is_interval:
            return [self.lo]
        return [self.lo, 0.5 * (self.lo + self.hi), self.hi]


def maximize_tilted(
    piece: PiecewisePolynomial,
    lo: float,
    hi: float,
    tilt: float,
    tie_tol: float,
) -> tuple[float, list[MaximizerAtom]]:
    """Exact maximum of p(x) + tilt*x over [lo, hi] with its argmax atoms.

    Atoms are connected components of {x : value(x) >= max - tie_tol};
    flat stretches (value range <= tie_tol over a sub-piece) become
    interval atoms, isolated maximizers become point atoms.  ``hi`` may
    be ``inf`` when the tilted last piece eventually decreases; a flat
    or increasing tail raises ``NoMaximumError``.
    """
    dom_lo, dom_hi = piece.domain
    if lo < dom_lo - 1e-12 or hi > dom_hi + 1e-12:
        raise DomainError(
            f"box [{lo!r}, {hi!r}] outside payoff domain [{dom_lo!r}, {dom_hi!r}]"
        )
    lo = max(lo, dom_lo)

    if math.isinf(hi):
        c_last = np.array(piece.coeffs[-1], dtype=float)
        if c_last.size >= 2:
            c_last = c_last.copy()
            c_last[1] += tilt
        elif tilt != 0.0:
            c_last = np.append(c_last, tilt)
        c_last = np.trim_zeros(c_last, "b")
        if c_last.size <= 1 or c_last[-1] > 0:
            raise NoMaximumError(
                "objective does not attain a maximum on an unbounded row set"
            )
        crit = _real_roots(_polyder(c_last), float(piece.breaks[-2]), math.inf)
        hi = max([float(piece.breaks[-2])] + crit) + 1.0

    def tilted(c):
        c = np.array(c, dtype=float)
        if c.size >= 2:
            c[1] += tilt
        else:
            c = np.append(c, tilt)
        return c

    segments = []  # (seg_lo, seg_hi, max_val, argmax pts, min_val)
    for p, c in enumerate(piece.coeffs):
        s_lo = max(lo, float(piece.breaks[p]))
        s_hi = min(hi, float(piece.breaks[p + 1]))
        if s_lo > s_hi:
            continue
        ct = tilted(c)
        xs = [s_lo, s_hi] + _real_roots(_polyder(ct), s_lo, s_hi)
        vals = [_polyval(ct, x) for x in xs]
        vmax = max(vals)
        vmin = min(vals)
        arg = sorted({x for x, v in zip(xs, vals) if v >= vmax - tie_tol})
        segments.append((s_lo, s_hi, vmax, arg, vmin))
    if not segments:
        raise ModelError(f"empty admissible interval [{lo!r}, {hi!r}]")

    global_max = max(s[2] for s in segments)
    atoms: list[MaximizerAtom] = []
    for s_lo, s_hi, vmax, arg, vmin in segments:
        if vmax < global_max - tie_tol:
            continue
        if vmax - vmin <= tie_tol:
            atoms.append(MaximizerAtom(s_lo, s_hi))
        else:
            for x in arg:
                atoms.append(MaximizerAtom(x, x))
    atoms.sort(key=lambda a: (a.lo, a.hi))
    merged: list[MaximizerAtom] = []
    for a in atoms:
        if merged and a.lo <= merged[-1].hi + 1e-12:
            prev = merged.pop()
            a = MaximizerAtom(prev.lo, max(prev.hi, a.hi))
        merged.append(a)
    return global_max, merged


# ---------------------------------------------------------------------------
# Discount specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialMixture:
    """Discount delta(t) = sum_k w_k exp(-r_k t), w_k > 0 summing to 1.

    Keeps every payoff functional in closed resolvent form.  The classic
    two-cohort case is ``ExponentialMixture([lam, 1-lam], [rho, rho2])``.
    """

    weights: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        w = _as_readonly(self.weights)
        r = _as_readonly(self.rates)
        if w.ndim != 1 or w.shape != r.shape or w.size == 0:
            raise ModelError("weights and rates must be matching 1-d arrays")
        if np.any(w <= 0):
            raise ModelError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ModelError(f"mixture weights sum to {w.sum()!r}, not 1")
        if np.any(r <= 0):
            raise ModelError("mixture rates must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        decay = np.exp(-np.multiply.outer(t, self.rates))
        return np.sum(self.weights * decay, axis=-1)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        decay = np.exp(-np.multiply.outer(t, self.rates))
        return -np.sum(self.weights * self.rates * decay, axis=-1)

    def derivative_at_zero(self) -> float:
        return float(-np.sum(self.weights * self.rates))

    def integral(self) -> float:
        """Closed form of the total discounted mass, sum_k w_k / r_k."""
        return float(np.sum(self.weights / self.rates))

    def tail_integral(self, t: float) -> float:
        return float(np.sum(self.weights * np.exp(-self.rates * t) / self.rates))

    def horizon_for_tail(self, bound: float) -> float:
        """Smallest T with tail_integral(T) <= bound, via bisection."""
        if bound <= 0:
            raise ModelError("tail bound must be positive")
        hi = 1.0
        while self.tail_integral(hi) > bound:
            hi *= 2.0
            if hi > 1e9:
                raise ModelError("tail bound unreachable")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.tail_integral(mid) > bound:
                lo = mid
            else:
                hi = mid
        return hi


@dataclass(frozen=True)
class GenericDiscount:
    """Discount given by callables, integrated by quadrature up to t_max.

    The declared ``tail_bound`` on the discount mass beyond ``t_max`` is
    the caller's responsibility; only delta(0) = 1 and monotonicity on a
    sample grid are machine-checked.
    """

    fn: Callable[[float], float]
    fn_prime: Callable[[float], float]
    t_max: float
    tail_bound: float

    def __post_init__(self):
        if self.t_max <= 0 or self.tail_bound <= 0:
            raise ModelError("t_max and tail_bound must be positive")
        if abs(float(self.fn(0.0)) - 1.0) > 1e-12:
            raise ModelError("discount must satisfy delta(0) = 1")
        grid = np.linspace(0.0, self.t_max, 257)
        vals = np.array([float(self.fn(t)) for t in grid])
        if np.any(np.diff(vals) > 1e-12):
            raise ModelError("discount must be nonincreasing")

    def value(self, t):
        return np.vectorize(self.fn, otypes=[float])(t)

    def derivative(self, t):
        return np.vectorize(self.fn_prime, otypes=[float])(t)

    def derivative_at_zero(self) -> float:
        return float(self.fn_prime(0.0))


DiscountSpec = ExponentialMixture | GenericDiscount


# ---------------------------------------------------------------------------
# Running payoffs, admissible sets, generators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RowPayoff:
    """Running payoff g_i for one state: a separable piecewise-polynomial
    field over the row's off-diagonal rates,

        g_i(q) = constant + sum_{j != i} terms[j](q_j).

    ``terms`` maps target-state indices (0-based, j != i) to univariate
    pieces; missing targets contribute nothing.
    """

    state: int
    terms: dict[int, PiecewisePolynomial]
    constant: float = 0.0

    def __post_init__(self):
        if self.state in self.terms:
            raise ModelError("payoff terms are indexed by target states j != i")
        object.__setattr__(self, "terms", dict(self.terms))

    def value_free(self, free: dict[int, float]) -> float:
        v = self.constant
        for j, piece in self.terms.items():
            v += piece.value(free[j])
        return v

    def gradient_free(self, free: dict[int, float]) -> dict[int, float]:
        return {j: piece.derivative_value(free[j]) for j, piece in self.terms.items()}

    def is_concave(self, box: "AdmissibleRowSet") -> bool:
        return all(
            piece.concave_on(box.lo[j], box.hi[j]) for j, piece in self.terms.items()
        )


@dataclass(frozen=True)
class AdmissibleRowSet:
    """Per-entry box for row i: lo_ij <= q_ij <= hi_ij for each j != i.

    A feasible row also has q_ii = -sum_{j != i} q_ij.  ``hi`` entries
    may be ``inf``; solve and existence paths require them finite.
    """

    state: int
    lo: dict[int, float]
    hi: dict[int, float]

    def __post_init__(self):
        if set(self.lo) != set(self.hi):
            raise ModelError("lo and hi must cover the same target states")
        if self.state in self.lo:
            raise ModelError("bounds are indexed by target states j != i")
        for j in self.lo:
            if self.lo[j] < 0:
                raise ModelError(f"lower bound for rate ({self.state}->{j}) negative")
            if self.hi[j] < self.lo[j]:
                raise ModelError(f"empty box for rate ({self.state}->{j})")
        object.__setattr__(self, "lo", dict(self.lo))
        object.__setattr__(self, "hi", dict(self.hi))

    @property
    def targets(self) -> list[int]:
        return sorted(self.lo)

    @property
    def is_bounded(self) -> bool:
        return all(math.isfinite(self.hi[j]) for j in self.hi)

    def contains_free(self, free: dict[int, float], tol: float = 1e-9) -> bool:
        return all(
            self.lo[j] - tol <= free[j] <= self.hi[j] + tol for j in self.targets
        )


@dataclass(frozen=True)
class GeneratorMatrix:
    """An N x N rate matrix: off-diagonals >= 0, rows summing to zero."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_readonly(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelError("generator must be square")
        if not np.all(np.isfinite(m)):
            raise ModelError("generator entries must be finite")
        n = m.shape[0]
        off = m[~np.eye(n, dtype=bool)]
        if off.size and off.min() < -ROW_SUM_TOL:
            raise ModelError("off-diagonal rates must be nonnegative")
        sums = m.sum(axis=1)
        if np.any(np.abs(sums) > ROW_SUM_TOL * max(1.0, float(np.abs(m).max()))):
            raise ModelError("generator rows must sum to zero")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_rates(cls, rates: np.ndarray) -> "GeneratorMatrix":
        """Build from off-diagonal rates; diagonal set to minus the row sum."""
        m = np.array(rates, dtype=float)
        np.fill_diagonal(m, 0.0)
        np.fill_diagonal(m, -m.sum(axis=1))
        return cls(m)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.matrix[i]

    def free(self, i: int) -> dict[int, float]:
        """Off-diagonal rates of row i keyed by target state."""
        return {j: float(self.matrix[i, j]) for j in range(self.n_states) if j != i}

    def with_row(self, i: int, free: dict[int, float]) -> "GeneratorMatrix":
        m = np.array(self.matrix)
        for j, v in free.items():
            m[i, j] = v
        m[i, i] = 0.0
        m[i, i] = -m[i].sum()
        return GeneratorMatrix(m)


def two_state_generator(a: float, b: float) -> GeneratorMatrix:
    """The Q ~ (a, b) convention: rows (-a, a) and (b, -b)."""
    return GeneratorMatrix(np.array([[-a, a], [b, -b]], dtype=float))


def row_from_free(n: int, i: int, free: dict[int, float]) -> np.ndarray:
    row = np.zeros(n)
    for j, v in free.items():
        row[j] = v
    row[i] = -row.sum()
    return row


# ---------------------------------------------------------------------------
# Assembled model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateSpace:
    n_states: int

    def __post_init__(self):
        if self.n_states < 1:
            raise ModelError("need at least one state")


@dataclass(frozen=True)
class ModelSpec:
    """A complete control problem: states, discount, payoffs, row boxes."""

    state_space: StateSpace
    discount: DiscountSpec
    payoff: tuple[RowPayoff, ...]
    constraints: tuple[AdmissibleRowSet, ...]

    def __post_init__(self):
        n = self.state_space.n_states
        payoff = tuple(self.payoff)
        constraints = tuple(self.constraints)
        if len(payoff) != n or len(constraints) != n:
            raise ModelError("payoff and constraints must have one entry per state")
        for i, (g, box) in enumerate(zip(payoff, constraints)):
            if g.state != i or box.state != i:
                raise ModelError(f"entry {i} labelled for state {g.state}/{box.state}")
            expected = {j for j in range(n) if j != i}
            if set(box.targets) != expected:
                raise ModelError(f"row {i} box must bound every rate to j != i")
            if not set(g.terms) <= expected:
                raise ModelError(f"row {i} payoff refers to invalid target states")
            for j, piece in g.terms.items():
                d_lo, d_hi = piece.domain
                if box.lo[j] < d_lo - 1e-12 or box.hi[j] > d_hi + 1e-12:
                    raise ModelError(
                        f"box for rate ({i}->{j}) exceeds the payoff piece domain"
                    )
        object.__setattr__(self, "payoff", payoff)
        object.__setattr__(self, "constraints", constraints)

    @property
    def n_states(self) -> int:
        return self.state_space.n_states

    def g_row(self, i: int, free: dict[int, float]) -> float:
        return self.payoff[i].value_free(free)

    def g_vector(self, Q: GeneratorMatrix) -> np.ndarray:
        return np.array(
            [self.g_row(i, Q.free(i)) for i in range(self.n_states)]
        )

    def is_bounded(self) -> bool:
        return all(box.is_bounded for box in self.constraints)

    def derivative_at_zero(self) -> float:
        return self.discount.derivative_at_zero()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str           # "off-diagonal-sign" | "row-sum" | "box" | "shape"
    state: int
    target: int | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]

    def __bool__(self) -> bool:
        return self.ok


def validate_generator(model: ModelSpec, Q) -> ValidationReport:
    """Check a candidate rate matrix against every generator invariant.

    Accepts a raw array or a GeneratorMatrix; the verdict lists every
    violated invariant with indices rather than raising.
    """
    m = Q.matrix if isinstance(Q, GeneratorMatrix) else np.asarray(Q, dtype=float)
    n = model.n_states
    out: list[Violation] = []
    if m.shape != (n, n):
        return ValidationReport(
            False,
            (Violation("shape", -1, None, f"expected {(n, n)}, got {m.shape}"),),
        )
    scale = max(1.0, float(np.abs(m).max()))
    for i in range(n):
        for j in range(n):
            if j != i and m[i, j] < -ROW_SUM_TOL:
                out.append(
                    Violation(
                        "off-diagonal-sign",
                        i,
                        j,
                        f"rate ({i}->{j}) = {float(m[i, j])!r} < 0",
                    )
                )
        s = float(m[i].sum())
        if abs(s) > ROW_SUM_TOL * scale:
            out.append(Violation("row-sum", i, None, f"row {i} sums to {s!r}"))
        box = model.constraints[i]
        for j in box.targets:
            if not (box.lo[j] - ROW_SUM_TOL <= m[i, j] <= box.hi[j] + ROW_SUM_TOL):
                out.append(
                    Violation(
                        "box",
                        i,
                        j,
                        f"rate ({i}->{j}) = {float(m[i, j])!r} outside "
                        f"[{box.lo[j]!r}, {box.hi[j]!r}]",
                    )
                )
    return ValidationReport(not out, tuple(out))


@dataclass(frozen=True)
class DirectionFlags:
    """Feasible one-coordinate moves at a row point, per target state.

    ``increase[j]`` means q_ij can grow (with the diagonal compensating);
    ``decrease[j]`` the opposite move.  Interior points allow both.
    """

    increase: dict[int, bool]
    decrease: dict[int, bool]


def feasible_directions(
    row_set: AdmissibleRowSet, free: dict[int, float], tol: float = 1e-9
) -> DirectionFlags:
    if not row_set.contains_free(free, tol):
        raise InfeasibleRowError(
            f"row point {free!r} infeasible for state {row_set.state}"
        )
    inc = {}
    dec = {}
    for j in row_set.targets:
        inc[j] = free[j] < row_set.hi[j] - tol
        dec[j] = free[j] > row_set.lo[j] + tol
    return DirectionFlags(inc, dec)
