"""Classification and search of equilibrium controls.

A candidate Q* is checked row by row.  The first-order coefficient of a
brief deviation to row q in state i is

    gamma(q) = g_i(q) + q . F(Q*),

and Q* passes the first-order (weak) test iff each of its rows
maximizes gamma over the admissible box.  At first-order ties the
second-order coefficient

    lambda_bar(q) = delta'(0) g_i(q) + q . (2 G(Q*) + gamma*(Q*))

decides: a tie row with strictly larger lambda_bar is a profitable
brief deviation, so Q* is weak but not strong.  Border cases that the
two coefficients cannot settle are probed numerically by sweeping the
actual payoff difference over a geometric grid of deviation windows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import (
    AdmissibleRowSet,
    GeneratorMatrix,
    InfeasibleRowError,
    MaximizerAtom,
    ModelError,
    ModelSpec,
    PiecewisePolynomial,
    maximize_tilted,
    row_from_free,
)
from .payoff import concat_payoff, derivative_payoff_vector, payoff_vector

_ZERO_PIECE = PiecewisePolynomial.from_coefficients([0.0], 0.0, math.inf)

#: Default window grid for expansion probes: geometric, ratio 1/2.
DEFAULT_SWEEP_GRID = tuple(0.1 * 0.5**k for k in range(12))
#: Shorter tail used by the classification audit sweeps.
AUDIT_SWEEP_GRID = tuple(0.01 * 0.5**k for k in range(8))


class Verdict(Enum):
    NOT_WEAK = "NOT_WEAK"
    WEAK_NOT_STRONG = "WEAK_NOT_STRONG"
    STRONG = "STRONG"
    WEAK_INCONCLUSIVE_STRONG = "WEAK_INCONCLUSIVE_STRONG"


@dataclass(frozen=True)
class ClassifyOptions:
    """Tolerances for the first/second-order tests.

    ``tie_tol`` is relative (scaled by 1 + |row max|); ``val_tol`` is
    absolute.  ``audit`` enables the window sweeps used for the cases
    the closed-form coefficients cannot settle.
    """

    tie_tol: float = 1e-7
    val_tol: float = 1e-9
    audit: bool = True
    audit_grid: tuple[float, ...] = AUDIT_SWEEP_GRID
    max_tie_reps: int = 16


@dataclass(frozen=True)
class SolveOptions:
    n_starts: int = 8
    damping: float = 0.5
    max_iter: int = 2000
    tol: float = 1e-12
    dedup_tol: float = 1e-6


# ---------------------------------------------------------------------------
# Row coefficients
# ---------------------------------------------------------------------------

def _free_of_row(model: ModelSpec, i: int, row) -> dict[int, float]:
    row = np.asarray(row, dtype=float)
    if row.shape != (model.n_states,):
        raise ModelError(f"row must have length {model.n_states}")
    return {j: float(row[j]) for j in range(model.n_states) if j != i}


def _require_feasible(model: ModelSpec, i: int, free: dict[int, float]):
    if not model.constraints[i].contains_free(free):
        raise InfeasibleRowError(f"row {i} point {free!r} outside its box")


def gamma_row(model: ModelSpec, i: int, row, Fstar: np.ndarray) -> float:
    """First-order deviation coefficient g_i(q) + q . F* for a full row q."""
    free = _free_of_row(model, i, row)
    _require_feasible(model, i, free)
    return model.g_row(i, free) + float(np.dot(row_from_free(model.n_states, i, free), Fstar))


def lambda_bar_row(
    model: ModelSpec,
    i: int,
    row,
    Gstar: np.ndarray,
    gamma_star_vec: np.ndarray,
) -> float:
    """Second-order coefficient delta'(0) g_i(q) + q . (2 G* + gamma*).

    With the other rows held at the baseline this equals the matrix
    coefficient of a single-row deviation whenever q is a first-order
    tie, which is the only place it is used to decide anything.
    """
    free = _free_of_row(model, i, row)
    _require_feasible(model, i, free)
    q = row_from_free(model.n_states, i, free)
    return model.derivative_at_zero() * model.g_row(i, free) + float(
        np.dot(q, 2.0 * Gstar + gamma_star_vec)
    )


def lambda_matrix(
    model: ModelSpec,
    i: int,
    Q: GeneratorMatrix,
    Fstar: np.ndarray,
    Gstar: np.ndarray,
) -> float:
    """Second-order coefficient for a full deviation matrix Q observed
    from state i: delta'(0) g_i(Q_i) + Q_i . (2 G* + gamma(Q))."""
    gamma_vec = np.array(
        [gamma_row(model, j, Q.row(j), Fstar) for j in range(model.n_states)]
    )
    free = Q.free(i)
    return model.derivative_at_zero() * model.g_row(i, free) + float(
        np.dot(Q.row(i), 2.0 * Gstar + gamma_vec)
    )


@dataclass(frozen=True)
class Baseline:
    """Quantities of the candidate needed by every row test."""

    Q: GeneratorMatrix
    F: np.ndarray
    G: np.ndarray
    gamma_star: np.ndarray

    @classmethod
    def at(cls, model: ModelSpec, Qstar: GeneratorMatrix) -> "Baseline":
        F = payoff_vector(model, Qstar)
        G = derivative_payoff_vector(model, Qstar)
        gam = np.array(
            [gamma_row(model, i, Qstar.row(i), F) for i in range(model.n_states)]
        )
        return cls(Qstar, F, G, gam)


# ---------------------------------------------------------------------------
# Row maximization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RowGammaProfile:
    """Argmax structure of gamma over one row's box.

    The objective is separable across off-diagonal rates, so the argmax
    set is the product of per-coordinate atoms (points or flat
    intervals).  ``max_value`` is the global row maximum; ``flat`` is
    set when any coordinate carries an interval atom.  Ties are
    resolved per coordinate at ``tie_tol_abs``.
    """

    state: int
    max_value: float
    atoms: dict[int, tuple[MaximizerAtom, ...]]
    tie_tol_abs: float
    flat: bool

    def select_free(self) -> dict[int, float]:
        """Smallest lexicographic representative (per-coordinate lows)."""
        return {j: atoms[0].lo for j, atoms in sorted(self.atoms.items())}

    def representative_frees(self, cap: int = 64) -> list[dict[int, float]]:
        """Deterministic representatives of the argmax set: per
        coordinate the atom points, plus endpoints and midpoint of flat
        intervals, combined coordinate-wise up to ``cap`` rows."""
        per_coord: list[list[tuple[int, float]]] = []
        for j, atoms in sorted(self.atoms.items()):
            pts: list[float] = []
            for a in atoms:
                pts.extend(a.representatives())
            per_coord.append([(j, p) for p in _dedup(pts)])
        combos = itertools.islice(itertools.product(*per_coord), cap)
        return [dict(c) for c in combos]

    def is_singleton_at(self, free: dict[int, float], tol: float) -> bool:
        for j, atoms in self.atoms.items():
            if len(atoms) != 1 or atoms[0].is_interval:
                return False
            if abs(atoms[0].lo - free[j]) > tol * (1.0 + abs(free[j])):
                return False
        return True


def _dedup(xs: list[float], tol: float = 1e-12) -> list[float]:
    out: list[float] = []
    for x in sorted(xs):
        if not out or x - out[-1] > tol * (1.0 + abs(x)):
            out.append(x)
    return out


def maximize_gamma_row(
    model: ModelSpec,
    i: int,
    Fstar: np.ndarray,
    tie_tol: float = 1e-7,
) -> RowGammaProfile:
    """Global maximum of gamma over row i's box, with its argmax atoms.

    Each off-diagonal rate contributes the univariate piecewise
    polynomial ``p_ij(x) + (F*_j - F*_i) x``, maximized exactly per
    piece (derivative roots plus endpoints); the row answer is the
    coordinate-wise combination.
    """
    box = model.constraints[i]
    payoff = model.payoff[i]
    per_max: dict[int, float] = {}
    pieces: dict[int, tuple[PiecewisePolynomial, float]] = {}
    total = payoff.constant
    for j in box.targets:
        piece = payoff.terms.get(j, _ZERO_PIECE)
        tilt = float(Fstar[j] - Fstar[i])
        pieces[j] = (piece, tilt)
        vmax, _ = maximize_tilted(piece, box.lo[j], box.hi[j], tilt, 0.0)
        per_max[j] = vmax
        total += vmax
    tol_abs = tie_tol * (1.0 + abs(total))
    atoms: dict[int, tuple[MaximizerAtom, ...]] = {}
    flat = False
    for j in box.targets:
        piece, tilt = pieces[j]
        _, a = maximize_tilted(piece, box.lo[j], box.hi[j], tilt, tol_abs)
        atoms[j] = tuple(a)
        flat = flat or any(at.is_interval for at in a)
    return RowGammaProfile(i, total, atoms, tol_abs, flat)


# ---------------------------------------------------------------------------
# Weak check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KktEntry:
    """Directional-derivative diagnostics for one rate coordinate."""

    state: int
    target: int
    at_lower: bool
    at_upper: bool
    slope_up: float       # d/dq of gamma in the increasing direction
    slope_down: float     # one-sided derivative from the left
    satisfied: bool


@dataclass(frozen=True)
class WeakCheckResult:
    weak: bool
    gaps: np.ndarray                      # per state: max gamma - gamma(Q*_i)
    profiles: tuple[RowGammaProfile, ...]
    kkt: tuple[KktEntry, ...]
    gamma_star: np.ndarray

    def __bool__(self) -> bool:
        return self.weak


def _kkt_entries(
    model: ModelSpec, i: int, free: dict[int, float], Fstar: np.ndarray, tol: float
) -> list[KktEntry]:
    box = model.constraints[i]
    payoff = model.payoff[i]
    out = []
    for j in box.targets:
        piece = payoff.terms.get(j, _ZERO_PIECE)
        x = free[j]
        tilt = float(Fstar[j] - Fstar[i])
        up = piece.derivative_value(x, "right") + tilt
        down = piece.derivative_value(x, "left") + tilt
        at_lo = x <= box.lo[j] + 1e-9 * (1.0 + abs(x))
        at_hi = x >= box.hi[j] - 1e-9 * (1.0 + abs(x))
        ok = True
        if not at_hi and up > tol:        # room to increase, gain positive
            ok = False
        if not at_lo and down < -tol:     # room to decrease, gain positive
            ok = False
        out.append(KktEntry(i, j, at_lo, at_hi, up, down, ok))
    return out


def weak_check(
    model: ModelSpec,
    Qstar: GeneratorMatrix,
    options: ClassifyOptions = ClassifyOptions(),
) -> WeakCheckResult:
    """First-order test: is every row of Q* a gamma maximizer?

    Returns per-state optimality gaps and stationarity diagnostics (the
    directional-derivative conditions at interior and bound points) as
    supporting evidence.
    """
    base_F = payoff_vector(model, Qstar)
    profiles = []
    gaps = np.zeros(model.n_states)
    kkt: list[KktEntry] = []
    gamma_star = np.zeros(model.n_states)
    weak = True
    for i in range(model.n_states):
        free = Qstar.free(i)
        _require_feasible(model, i, free)
        prof = maximize_gamma_row(model, i, base_F, options.tie_tol)
        g_star = gamma_row(model, i, Qstar.row(i), base_F)
        gamma_star[i] = g_star
        gaps[i] = prof.max_value - g_star
        profiles.append(prof)
        kkt.extend(
            _kkt_entries(model, i, free, base_F, 1e-7 * (1.0 + abs(g_star)))
        )
        if gaps[i] > prof.tie_tol_abs:
            weak = False
    return WeakCheckResult(weak, gaps, tuple(profiles), tuple(kkt), gamma_star)


# ---------------------------------------------------------------------------
# Expansion probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionProbe:
    """Sampled payoff differences F(i,Q*) - F(i, Q then Q* after eps)
    over a decreasing window grid, with the fitted leading order and
    coefficient, against the analytic first/second-order values."""

    state: int
    eps: np.ndarray
    diffs: np.ndarray
    fitted_order: float
    fitted_coefficient: float
    order_residual: float
    analytic_l1: float
    analytic_l2: float
    sign_stable_tail: bool
    all_zero: bool
    noise_floor: float

    def to_dict(self) -> dict:
        return {
            "state": self.state,
            "eps": list(map(float, self.eps)),
            "diffs": list(map(float, self.diffs)),
            "fitted_order": self.fitted_order,
            "fitted_coefficient": self.fitted_coefficient,
            "order_residual": self.order_residual,
            "analytic_l1": self.analytic_l1,
            "analytic_l2": self.analytic_l2,
            "sign_stable_tail": self.sign_stable_tail,
            "all_zero": self.all_zero,
        }


def expansion_probe(
    model: ModelSpec,
    i: int,
    Q: GeneratorMatrix,
    Qstar: GeneratorMatrix,
    eps_grid=DEFAULT_SWEEP_GRID,
) -> ExpansionProbe:
    """Numerically expand the payoff difference of a brief deviation.

    Fits the leading order by log-log regression over the usable tail
    of the grid and extracts the coefficient by one step of Richardson
    extrapolation at the two smallest usable windows.
    """
    eps = np.asarray(list(eps_grid), dtype=float)
    if eps.ndim != 1 or eps.size < 2 or np.any(eps <= 0):
        raise ValueError("need a positive window grid")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("window grid must be strictly decreasing")
    base = Baseline.at(model, Qstar)
    F_i = float(base.F[i])
    diffs = np.array(
        [F_i - concat_payoff(model, i, Q, Qstar, float(e)) for e in eps]
    )
    l1 = float(base.gamma_star[i] - gamma_row(model, i, Q.row(i), base.F))
    l2 = 0.5 * (
        lambda_matrix(model, i, base.Q, base.F, base.G)
        - lambda_matrix(model, i, Q, base.F, base.G)
    )
    floor = 1e-12 * (1.0 + abs(F_i))
    usable = np.nonzero(np.abs(diffs) > floor)[0]
    if usable.size < 2:
        return ExpansionProbe(
            i, eps, diffs, float("nan"), 0.0, 0.0, l1, l2, True, True, floor
        )
    tail = usable[-min(6, usable.size):]
    x = np.log(eps[tail])
    y = np.log(np.abs(diffs[tail]))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((np.polyval([slope, intercept], x) - y) ** 2)))
    n_hat = int(round(slope)) if 0.5 <= slope <= 6.5 else max(int(round(slope)), 1)
    j_small, j_prev = tail[-1], tail[-2]
    c_small = diffs[j_small] / eps[j_small] ** n_hat
    c_prev = diffs[j_prev] / eps[j_prev] ** n_hat
    r = eps[j_prev] / eps[j_small]
    coef = float((r * c_small - c_prev) / (r - 1.0))
    tail_signs = np.sign(diffs[tail])
    return ExpansionProbe(
        i,
        eps,
        diffs,
        float(slope),
        coef,
        resid,
        l1,
        l2,
        bool(np.all(tail_signs == tail_signs[-1])),
        False,
        floor,
    )


# ---------------------------------------------------------------------------
# Strong check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TieWitness:
    state: int
    row_free: dict[int, float]
    lambda_candidate: float
    lambda_star: float


@dataclass(frozen=True)
class SweepWitness:
    state: int
    deviation_rows: dict[int, dict[int, float]]  # deviating rows by state
    probe: ExpansionProbe


@dataclass(frozen=True)
class EquilibriumReport:
    candidate: GeneratorMatrix
    verdict: Verdict
    gaps: np.ndarray
    tie_sets: dict[int, tuple[dict[int, float], ...]]
    witnesses: tuple[TieWitness, ...]
    sweep_witnesses: tuple[SweepWitness, ...]
    undecided: tuple[TieWitness, ...]
    numerically_supported: bool
    probes: tuple[SweepWitness, ...]
    weak_result: WeakCheckResult

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "candidate": self.candidate.matrix.tolist(),
            "gaps": list(map(float, self.gaps)),
            "tie_sets": {
                str(i): [
                    {str(j): v for j, v in rep.items()} for rep in reps
                ]
                for i, reps in self.tie_sets.items()
            },
            "witnesses": [
                {
                    "state": w.state,
                    "row": {str(j): v for j, v in w.row_free.items()},
                    "lambda_candidate": w.lambda_candidate,
                    "lambda_star": w.lambda_star,
                }
                for w in self.witnesses
            ],
            "undecided": [
                {
                    "state": w.state,
                    "row": {str(j): v for j, v in w.row_free.items()},
                    "lambda_candidate": w.lambda_candidate,
                    "lambda_star": w.lambda_star,
                }
                for w in self.undecided
            ],
            "numerically_supported": self.numerically_supported,
            "sweep_probes": [w.probe.to_dict() for w in self.probes],
        }


def _tie_representatives(
    model: ModelSpec,
    Qstar: GeneratorMatrix,
    weak: WeakCheckResult,
    options: ClassifyOptions,
) -> dict[int, list[dict[int, float]]]:
    """Per state, argmax representatives distinct from the candidate row."""
    ties: dict[int, list[dict[int, float]]] = {}
    for i, prof in enumerate(weak.profiles):
        q_free = Qstar.free(i)
        reps = []
        for rep in prof.representative_frees(cap=options.max_tie_reps * 4):
            dist = max(
                (abs(rep[j] - q_free[j]) for j in rep), default=0.0
            )
            if dist > 1e-9 * (1.0 + max(map(abs, q_free.values()), default=0.0)):
                reps.append(rep)
            if len(reps) >= options.max_tie_reps:
                break
        if reps:
            ties[i] = reps
    return ties


def _sweep(
    model: ModelSpec,
    Qstar: GeneratorMatrix,
    deviations: list[dict[int, dict[int, float]]],
    options: ClassifyOptions,
    F: np.ndarray,
) -> tuple[list[SweepWitness], list[SweepWitness]]:
    """Probe structured deviations; return (all probes, violations).

    A violation is a probe whose differences sit below -val_tol (scaled)
    at the three smallest windows: direct numerical evidence of a
    profitable brief deviation.
    """
    probes: list[SweepWitness] = []
    violations: list[SweepWitness] = []
    for rows in deviations:
        Qdev = Qstar
        for i, free in rows.items():
            Qdev = Qdev.with_row(i, free)
        for s in range(model.n_states):
            probe = expansion_probe(model, s, Qdev, Qstar, options.audit_grid)
            witness = SweepWitness(s, rows, probe)
            probes.append(witness)
            thr = -options.val_tol * (1.0 + abs(float(F[s])))
            tail = probe.diffs[-3:]
            if np.all(tail < thr):
                violations.append(witness)
    return probes, violations


def strong_check(
    model: ModelSpec,
    Qstar: GeneratorMatrix,
    options: ClassifyOptions = ClassifyOptions(),
) -> EquilibriumReport:
    """Classify a candidate as NOT_WEAK, WEAK_NOT_STRONG, STRONG, or
    WEAK_INCONCLUSIVE_STRONG.

    Singleton row argmaxes give STRONG outright (strict first-order
    dominance).  Otherwise each tie representative is compared by the
    second-order coefficient; a strictly larger value is a witness
    against strongness, strictly smaller values for every tie leave
    STRONG subject to a window-sweep audit of the structured deviations
    the coefficients do not cover (verdict flagged as numerically
    supported).  Anything else is reported inconclusive with the
    undecided pairs listed.
    """
    weak = weak_check(model, Qstar, options)
    base = Baseline.at(model, Qstar)
    if not weak.weak:
        return EquilibriumReport(
            Qstar,
            Verdict.NOT_WEAK,
            weak.gaps,
            {},
            (),
            (),
            (),
            False,
            (),
            weak,
        )

    ties = _tie_representatives(model, Qstar, weak, options)
    tie_sets = {i: tuple(reps) for i, reps in ties.items()}
    if not ties:
        return EquilibriumReport(
            Qstar, Verdict.STRONG, weak.gaps, {}, (), (), (), False, (), weak
        )

    lam_star = {
        i: lambda_bar_row(model, i, Qstar.row(i), base.G, base.gamma_star)
        for i in ties
    }
    witnesses: list[TieWitness] = []
    strictly_below: list[TieWitness] = []
    undecided: list[TieWitness] = []
    for i, reps in ties.items():
        for rep in reps:
            row = row_from_free(model.n_states, i, rep)
            lam = lambda_bar_row(model, i, row, base.G, base.gamma_star)
            entry = TieWitness(i, rep, lam, lam_star[i])
            if lam > lam_star[i] + options.val_tol:
                witnesses.append(entry)
            elif lam < lam_star[i] - options.val_tol:
                strictly_below.append(entry)
            else:
                undecided.append(entry)

    if witnesses:
        return EquilibriumReport(
            Qstar,
            Verdict.WEAK_NOT_STRONG,
            weak.gaps,
            tie_sets,
            tuple(witnesses),
            (),
            (),
            False,
            (),
            weak,
        )

    probes: list[SweepWitness] = []
    violations: list[SweepWitness] = []
    if options.audit:
        singles = [
            {i: rep} for i, reps in ties.items() for rep in reps
        ]
        pairs = []
        for (i1, r1), (i2, r2) in itertools.combinations(
            [(i, rep) for i, reps in ties.items() for rep in reps], 2
        ):
            if i1 != i2:
                pairs.append({i1: r1, i2: r2})
        deviations = (singles + pairs)[: 4 * options.max_tie_reps]
        probes, violations = _sweep(model, Qstar, deviations, options, base.F)

    if violations:
        return EquilibriumReport(
            Qstar,
            Verdict.WEAK_NOT_STRONG,
            weak.gaps,
            tie_sets,
            (),
            tuple(violations),
            (),
            False,
            tuple(probes),
            weak,
        )
    if not undecided:
        return EquilibriumReport(
            Qstar,
            Verdict.STRONG,
            weak.gaps,
            tie_sets,
            (),
            (),
            (),
            True,
            tuple(probes),
            weak,
        )
    return EquilibriumReport(
        Qstar,
        Verdict.WEAK_INCONCLUSIVE_STRONG,
        weak.gaps,
        tie_sets,
        (),
        (),
        tuple(undecided),
        False,
        tuple(probes),
        weak,
    )


# ---------------------------------------------------------------------------
# Best response and fixed-point search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BestResponse:
    """The set of row-wise gamma maximizers against F(Q)."""

    profiles: tuple[RowGammaProfile, ...]

    def select(self, n: int) -> GeneratorMatrix:
        rates = np.zeros((n, n))
        for prof in self.profiles:
            for j, v in prof.select_free().items():
                rates[prof.state, j] = v
        return GeneratorMatrix.from_rates(rates)

    @property
    def is_singleton(self) -> bool:
        return not any(
            len(atoms) != 1 or atoms[0].is_interval
            for prof in self.profiles
            for atoms in prof.atoms.values()
        )

    def generators(self, n: int, cap: int = 64) -> list[GeneratorMatrix]:
        per_row = [prof.representative_frees(cap) for prof in self.profiles]
        out = []
        for combo in itertools.islice(itertools.product(*per_row), cap):
            rates = np.zeros((n, n))
            for i, free in enumerate(combo):
                for j, v in free.items():
                    rates[i, j] = v
            out.append(GeneratorMatrix.from_rates(rates))
        return out


class NoMaximumBoxError(ModelError):
    def __init__(self, state: int):
        super().__init__(
            f"best response needs a bounded admissible box for state {state}"
        )
        self.state = state


def best_response(
    model: ModelSpec,
    Q: GeneratorMatrix,
    tie_tol: float = 1e-7,
) -> BestResponse:
    """Row-wise maximizers of gamma against F(Q); equilibria are exactly
    the fixed points of this map."""
    for box in model.constraints:
        if not box.is_bounded:
            raise NoMaximumBoxError(box.state)
    F = payoff_vector(model, Q)
    profiles = tuple(
        maximize_gamma_row(model, i, F, tie_tol) for i in range(model.n_states)
    )
    return BestResponse(profiles)


@dataclass(frozen=True)
class Candidate:
    generator: GeneratorMatrix
    weak: WeakCheckResult
    start_index: int
    iterations: int
    residual: float


@dataclass(frozen=True)
class FailedStart:
    start_index: int
    last_iterate: GeneratorMatrix
    residual: float


@dataclass(frozen=True)
class SolveResult:
    candidates: tuple[Candidate, ...]
    failures: tuple[FailedStart, ...]
    warnings: tuple[str, ...]


def _halton(index: int, base: int) -> float:
    f, r = 1.0, 0.0
    while index > 0:
        f /= base
        r += f * (index % base)
        index //= base
    return r


def _primes(count: int) -> list[int]:
    out, n = [], 2
    while len(out) < count:
        if all(n % p for p in out):
            out.append(n)
        n += 1
    return out


def default_starts(model: ModelSpec, n_starts: int) -> list[GeneratorMatrix]:
    """Deterministic quasi-random starts: a Halton point per free rate."""
    dims = []
    for i in range(model.n_states):
        for j in model.constraints[i].targets:
            dims.append((i, j))
    bases = _primes(max(len(dims), 1))
    starts = []
    for s in range(n_starts):
        rates = np.zeros((model.n_states, model.n_states))
        for d, (i, j) in enumerate(dims):
            lo = model.constraints[i].lo[j]
            hi = model.constraints[i].hi[j]
            u = _halton(s + 1, bases[d])
            rates[i, j] = lo + u * (hi - lo)
        starts.append(GeneratorMatrix.from_rates(rates))
    return starts


def fixed_point_solve(
    model: ModelSpec,
    options: SolveOptions = SolveOptions(),
    classify: ClassifyOptions = ClassifyOptions(),
    starts: list[GeneratorMatrix] | None = None,
    max_workers: int = 1,
) -> SolveResult:
    """Damped best-response iteration from quasi-random multi-starts.

    Iterates Q <- (1-theta) Q + theta select(Phi(Q)) until the row-wise
    best-response residual drops below tolerance; every distinct limit
    is re-verified with the first-order check, and starts that fail to
    converge are reported rather than dropped.
    """
    if not model.is_bounded():
        raise NoMaximumBoxError(
            next(b.state for b in model.constraints if not b.is_bounded)
        )
    if not 0.0 < options.damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    warnings = []
    lazy = [
        i
        for i in range(model.n_states)
        if not model.payoff[i].is_concave(model.constraints[i])
    ]
    if lazy:
        warnings.append(
            f"row payoffs for states {lazy} are not concave on their boxes; "
            "multi-start search may miss equilibria"
        )
    if starts is None:
        starts = default_starts(model, options.n_starts)

    def run_one(item):
        s, Q = item
        residual = math.inf
        for it in range(1, options.max_iter + 1):
            br = best_response(model, Q, classify.tie_tol).select(model.n_states)
            residual = float(np.abs(br.matrix - Q.matrix).max())
            if residual <= options.tol:
                return s, br, it, residual, True
            mixed = (1.0 - options.damping) * Q.matrix + options.damping * br.matrix
            Q = GeneratorMatrix.from_rates(mixed)
        return s, Q, options.max_iter, residual, False

    items = list(enumerate(starts))
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(run_one, items))
    else:
        outcomes = [run_one(it) for it in items]

    candidates: list[Candidate] = []
    failures: list[FailedStart] = []
    for s, Q, iters, residual, ok in outcomes:
        if not ok:
            failures.append(FailedStart(s, Q, residual))
            continue
        if any(
            np.abs(c.generator.matrix - Q.matrix).max() <= options.dedup_tol
            for c in candidates
        ):
            continue
        candidates.append(
            Candidate(Q, weak_check(model, Q, classify), s, iters, residual)
        )
    return SolveResult(tuple(candidates), tuple(failures), tuple(warnings))
