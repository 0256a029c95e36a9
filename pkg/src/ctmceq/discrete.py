"""Discrete-time counterpart: transition-matrix controls, equilibrium
check and solver, discretization of continuous models, and the
mesh-convergence experiment.

The per-step payoff is kappa(t, i, alpha) = d(t) * gh_i(alpha), where d
is a step discount sequence and gh_i a separable piecewise-polynomial
field over the off-diagonal transition probabilities.  An equilibrium
u* maximizes, row by row, alpha -> kappa(0, i, alpha) + H(u*) . alpha,
with H the one-step-deferred value vector.  Discretizing a continuous
model at mesh d maps generators to transition matrices by u = I + d*Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import (
    ClassifyOptions,
    EquilibriumReport,
    KktEntry,
    RowGammaProfile,
    SolveOptions,
    _halton,
    _primes,
    strong_check,
    weak_check,
)
from .model import (
    AdmissibleRowSet,
    GeneratorMatrix,
    InfeasibleRowError,
    MaximizerAtom,
    ModelError,
    ModelSpec,
    PiecewisePolynomial,
    RowPayoff,
    _as_readonly,
    maximize_tilted,
)
from .payoff import payoff_vector

_ZERO_PIECE = PiecewisePolynomial.from_coefficients([0.0], 0.0, math.inf)

TRANSITION_SUM_TOL = 1e-12


class MeshError(ModelError):
    """Mesh too coarse for the admissible boxes."""


class TruncationError(ModelError):
    """Requested series tolerance unreachable with the declared tail."""


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic control: entries in [0, 1], rows summing to one."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_readonly(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelError("transition matrix must be square")
        if not np.all(np.isfinite(m)):
            raise ModelError("transition entries must be finite")
        if m.min() < -TRANSITION_SUM_TOL or m.max() > 1.0 + TRANSITION_SUM_TOL:
            raise ModelError("transition entries must lie in [0, 1]")
        if np.abs(m.sum(axis=1) - 1.0).max() > TRANSITION_SUM_TOL:
            raise ModelError("transition rows must sum to one")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_off_diagonal(cls, rates: np.ndarray) -> "TransitionMatrix":
        m = np.array(rates, dtype=float)
        np.fill_diagonal(m, 0.0)
        np.fill_diagonal(m, 1.0 - m.sum(axis=1))
        return cls(m)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    def free(self, i: int) -> dict[int, float]:
        return {j: float(self.matrix[i, j]) for j in range(self.n_states) if j != i}

    def with_row(self, i: int, free: dict[int, float]) -> "TransitionMatrix":
        m = np.array(self.matrix)
        for j, v in free.items():
            m[i, j] = v
        m[i, i] = 0.0
        m[i, i] = 1.0 - m[i].sum()
        return TransitionMatrix(m)


def two_state_transition(alpha: float, beta: float) -> TransitionMatrix:
    return TransitionMatrix(
        np.array([[1.0 - alpha, alpha], [beta, 1.0 - beta]], dtype=float)
    )


@dataclass(frozen=True)
class StepDiscount:
    """Step discount d(t) = sum_k w_k x_k^t with factors x_k in (0, 1).

    Discretizing a mixture discount at mesh d gives x_k = exp(-r_k d).
    """

    weights: np.ndarray
    factors: np.ndarray

    def __post_init__(self):
        w = _as_readonly(self.weights)
        x = _as_readonly(self.factors)
        if w.shape != x.shape or w.ndim != 1 or w.size == 0:
            raise ModelError("weights and factors must be matching 1-d arrays")
        if np.any(w <= 0):
            raise ModelError("step-discount weights must be positive")
        if np.any(x <= 0) or np.any(x >= 1):
            raise ModelError("step-discount factors must lie in (0, 1)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "factors", x)

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.sum(self.weights * self.factors ** t[..., None], axis=-1)

    def tail_sum(self, t: int) -> float:
        """sum_{s >= t} d(s), in closed form."""
        return float(np.sum(self.weights * self.factors**t / (1.0 - self.factors)))

    def horizon_for_tail(self, bound: float) -> int:
        if bound <= 0:
            raise TruncationError("tail bound must be positive")
        t = 1
        while self.tail_sum(t) > bound:
            t *= 2
            if t > 10**9:
                raise TruncationError("truncation bound unsatisfiable")
        lo = t // 2
        while lo < t:
            mid = (lo + t) // 2
            if self.tail_sum(mid) > bound:
                lo = mid + 1
            else:
                t = mid
        return t


@dataclass(frozen=True)
class DiscreteModel:
    """Transition-matrix control problem with summable payoff.

    ``payoff[i]`` is the per-step payoff gh_i over row i's off-diagonal
    probabilities; the realized payoff at step t is d(t) * gh_i.
    ``mesh`` is set when the model came from discretizing a continuous
    one.  The admissible boxes must fit inside the simplex.
    """

    n_states: int
    discount: StepDiscount
    payoff: tuple[RowPayoff, ...]
    constraints: tuple[AdmissibleRowSet, ...]
    mesh: float | None = None

    def __post_init__(self):
        if self.n_states < 1:
            raise ModelError("need at least one state")
        payoff = tuple(self.payoff)
        constraints = tuple(self.constraints)
        if len(payoff) != self.n_states or len(constraints) != self.n_states:
            raise ModelError("payoff and constraints must have one entry per state")
        for i, (g, box) in enumerate(zip(payoff, constraints)):
            if g.state != i or box.state != i:
                raise ModelError(f"entry {i} labelled for state {g.state}/{box.state}")
            hi_sum = sum(box.hi[j] for j in box.targets)
            if hi_sum > 1.0 + 1e-9:
                raise MeshError(
                    f"row {i} box leaves the simplex (off-diagonal mass {hi_sum!r})"
                )
        object.__setattr__(self, "payoff", payoff)
        object.__setattr__(self, "constraints", constraints)

    def g_row(self, i: int, free: dict[int, float]) -> float:
        return self.payoff[i].value_free(free)

    def g_vector(self, u: TransitionMatrix) -> np.ndarray:
        return np.array([self.g_row(i, u.free(i)) for i in range(self.n_states)])

    def sup_abs_payoff(self) -> float:
        """Exact sup of |gh_i| over the boxes (piecewise-polynomial range)."""
        worst = 0.0
        for i in range(self.n_states):
            box = self.constraints[i]
            hi_v = self.payoff[i].constant
            lo_v = self.payoff[i].constant
            for j in box.targets:
                piece = self.payoff[i].terms.get(j, _ZERO_PIECE)
                vmax, _ = maximize_tilted(piece, box.lo[j], box.hi[j], 0.0, 0.0)
                neg = PiecewisePolynomial(
                    piece.breaks, tuple(-c for c in piece.coeffs)
                )
                vmin, _ = maximize_tilted(neg, box.lo[j], box.hi[j], 0.0, 0.0)
                hi_v += vmax
                lo_v += -vmin
            worst = max(worst, abs(hi_v), abs(lo_v))
        return worst


def _validate_u(dm: DiscreteModel, u: TransitionMatrix, check_box: bool = True):
    if u.n_states != dm.n_states:
        raise ModelError("transition matrix dimension mismatch")
    if check_box:
        for i in range(dm.n_states):
            if not dm.constraints[i].contains_free(u.free(i)):
                raise InfeasibleRowError(f"row {i} of u outside its admissible set")


def _mixture_value_terms(dm: DiscreteModel, u: TransitionMatrix) -> list[np.ndarray]:
    g = dm.g_vector(u)
    out = []
    for x in dm.discount.factors:
        A = np.eye(dm.n_states) - float(x) * u.matrix
        sol = np.linalg.solve(A, g)
        res = float(np.abs(A @ sol - g).max())
        if res > 1e-10 * max(1.0, float(np.abs(g).max())):
            raise ModelError(f"step resolvent residual {res!r} too large")
        out.append(sol)
    return out


def discrete_value_vector(dm: DiscreteModel, u: TransitionMatrix) -> np.ndarray:
    """V(u): expected total discounted payoff, geometric closed form."""
    _validate_u(dm, u)
    terms = _mixture_value_terms(dm, u)
    return np.asarray(sum(w * t for w, t in zip(dm.discount.weights, terms)))


def discrete_value(dm: DiscreteModel, i: int, u: TransitionMatrix) -> float:
    return float(discrete_value_vector(dm, u)[i])


def discrete_aux(dm: DiscreteModel, u: TransitionMatrix) -> np.ndarray:
    """H(u): value of the payoff stream shifted one step forward."""
    _validate_u(dm, u)
    terms = _mixture_value_terms(dm, u)
    return np.asarray(
        sum(
            w * float(x) * t
            for w, x, t in zip(dm.discount.weights, dm.discount.factors, terms)
        )
    )


def discrete_value_series(
    dm: DiscreteModel,
    u: TransitionMatrix,
    shift: int = 0,
    tol: float = 1e-12,
) -> np.ndarray:
    """Truncated-series oracle for V (shift=0) or H (shift=1)."""
    _validate_u(dm, u, check_box=False)
    scale = max(dm.sup_abs_payoff(), 1e-300)
    horizon = dm.discount.horizon_for_tail(tol / scale)
    g = dm.g_vector(u)
    out = np.zeros(dm.n_states)
    power = np.eye(dm.n_states)
    for t in range(horizon):
        out += float(dm.discount.value(t + shift)) * (power @ g)
        power = power @ u.matrix
    return out


# ---------------------------------------------------------------------------
# Equilibrium check and solve
# ---------------------------------------------------------------------------

def _maximize_discrete_row(
    dm: DiscreteModel, i: int, H: np.ndarray, tie_tol: float
) -> RowGammaProfile:
    box = dm.constraints[i]
    payoff = dm.payoff[i]
    total = payoff.constant
    pieces = {}
    for j in box.targets:
        piece = payoff.terms.get(j, _ZERO_PIECE)
        tilt = float(H[j] - H[i])
        pieces[j] = (piece, tilt)
        vmax, _ = maximize_tilted(piece, box.lo[j], box.hi[j], tilt, 0.0)
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


def _discrete_row_value(
    dm: DiscreteModel, i: int, free: dict[int, float], H: np.ndarray
) -> float:
    return dm.g_row(i, free) + sum(
        free[j] * float(H[j] - H[i]) for j in free
    )


@dataclass(frozen=True)
class DiscreteCheckResult:
    equilibrium: bool
    gaps: np.ndarray
    profiles: tuple[RowGammaProfile, ...]
    kkt: tuple[KktEntry, ...]
    aux: np.ndarray

    def __bool__(self) -> bool:
        return self.equilibrium


def discrete_equilibrium_check(
    dm: DiscreteModel,
    ustar: TransitionMatrix,
    options: ClassifyOptions = ClassifyOptions(),
) -> DiscreteCheckResult:
    """Is u* a one-step-deviation equilibrium?

    Reduces to per-row maximization of kappa(0, i, .) + H(u*) . alpha
    over the admissible set; u* passes iff each of its rows attains the
    row maximum within the tie tolerance.  Directional-derivative
    diagnostics at interior and bound points are attached.
    """
    _validate_u(dm, ustar)
    H = discrete_aux(dm, ustar)
    profiles = []
    gaps = np.zeros(dm.n_states)
    kkt: list[KktEntry] = []
    ok = True
    for i in range(dm.n_states):
        prof = _maximize_discrete_row(dm, i, H, options.tie_tol)
        mine = _discrete_row_value(dm, i, ustar.free(i), H)
        gaps[i] = prof.max_value - mine
        profiles.append(prof)
        box = dm.constraints[i]
        free = ustar.free(i)
        for j in box.targets:
            piece = dm.payoff[i].terms.get(j, _ZERO_PIECE)
            tilt = float(H[j] - H[i])
            up = piece.derivative_value(free[j], "right") + tilt
            down = piece.derivative_value(free[j], "left") + tilt
            at_lo = free[j] <= box.lo[j] + 1e-9 * (1.0 + abs(free[j]))
            at_hi = free[j] >= box.hi[j] - 1e-9 * (1.0 + abs(free[j]))
            tol = 1e-7 * (1.0 + abs(mine))
            satisfied = not (
                (not at_hi and up > tol) or (not at_lo and down < -tol)
            )
            kkt.append(KktEntry(i, j, at_lo, at_hi, up, down, satisfied))
        if gaps[i] > prof.tie_tol_abs:
            ok = False
    return DiscreteCheckResult(ok, gaps, tuple(profiles), tuple(kkt), H)


@dataclass(frozen=True)
class DiscreteCandidate:
    transition: TransitionMatrix
    check: DiscreteCheckResult
    start_index: int
    iterations: int
    residual: float


@dataclass(frozen=True)
class DiscreteSolveResult:
    candidates: tuple[DiscreteCandidate, ...]
    failures: tuple[tuple[int, float], ...]   # (start index, final residual)
    warnings: tuple[str, ...]


def _discrete_starts(dm: DiscreteModel, n_starts: int) -> list[TransitionMatrix]:
    dims = [
        (i, j) for i in range(dm.n_states) for j in dm.constraints[i].targets
    ]
    bases = _primes(max(len(dims), 1))
    starts = []
    for s in range(n_starts):
        rates = np.zeros((dm.n_states, dm.n_states))
        for d, (i, j) in enumerate(dims):
            lo, hi = dm.constraints[i].lo[j], dm.constraints[i].hi[j]
            rates[i, j] = lo + _halton(s + 1, bases[d]) * (hi - lo)
        starts.append(TransitionMatrix.from_off_diagonal(rates))
    return starts


def discrete_solve(
    dm: DiscreteModel,
    options: SolveOptions = SolveOptions(),
    classify: ClassifyOptions = ClassifyOptions(),
    starts: list[TransitionMatrix] | None = None,
) -> DiscreteSolveResult:
    """Damped best-response iteration on transition matrices; every
    distinct limit is re-verified by the equilibrium check."""
    warnings = []
    lazy = [
        i
        for i in range(dm.n_states)
        if not dm.payoff[i].is_concave(dm.constraints[i])
    ]
    if lazy:
        warnings.append(
            f"per-step payoffs for states {lazy} are not concave; "
            "multi-start search may miss equilibria"
        )
    if starts is None:
        starts = _discrete_starts(dm, options.n_starts)

    candidates: list[DiscreteCandidate] = []
    failures: list[tuple[int, float]] = []
    for s, u in enumerate(starts):
        residual = math.inf
        converged = False
        for it in range(1, options.max_iter + 1):
            H = discrete_aux(dm, u)
            rates = np.zeros((dm.n_states, dm.n_states))
            for i in range(dm.n_states):
                prof = _maximize_discrete_row(dm, i, H, classify.tie_tol)
                for j, v in prof.select_free().items():
                    rates[i, j] = v
            br = TransitionMatrix.from_off_diagonal(rates)
            residual = float(np.abs(br.matrix - u.matrix).max())
            if residual <= options.tol:
                u = br
                converged = True
                break
            mixed = (1.0 - options.damping) * u.matrix + options.damping * br.matrix
            u = TransitionMatrix.from_off_diagonal(mixed)
        if not converged:
            failures.append((s, residual))
            continue
        if any(
            np.abs(c.transition.matrix - u.matrix).max() <= options.dedup_tol
            for c in candidates
        ):
            continue
        candidates.append(
            DiscreteCandidate(
                u, discrete_equilibrium_check(dm, u, classify), s, it, residual
            )
        )
    return DiscreteSolveResult(tuple(candidates), tuple(failures), tuple(warnings))


# ---------------------------------------------------------------------------
# Discretization and convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Discretization:
    """A continuous model sampled at a time mesh, with the row maps
    u = I + mesh * Q between generators and transition matrices."""

    model: ModelSpec
    mesh: float
    discrete: DiscreteModel

    def to_transition(self, Q: GeneratorMatrix) -> TransitionMatrix:
        return TransitionMatrix(np.eye(self.model.n_states) + self.mesh * Q.matrix)

    def to_generator(self, u: TransitionMatrix) -> GeneratorMatrix:
        rates = np.array(u.matrix) / self.mesh
        return GeneratorMatrix.from_rates(rates)


def discretize(model: ModelSpec, mesh: float) -> Discretization:
    """Sample a continuous model at step ``mesh``.

    The per-step payoff is kappa(t, i, alpha) = delta(t*mesh) *
    g_i((alpha - e_i)/mesh) * mesh; admissible boxes map to [mesh*lo,
    mesh*hi].  Requires I + mesh*Q to have nonnegative rows for every
    box-feasible Q, i.e. mesh * sum_j hi_ij <= 1.
    """
    from .model import ExponentialMixture

    if mesh <= 0:
        raise MeshError("mesh must be positive")
    if not isinstance(model.discount, ExponentialMixture):
        raise ModelError("discretization needs a mixture discount")
    if not model.is_bounded():
        raise MeshError("discretization needs bounded admissible boxes")
    payoff = []
    constraints = []
    for i in range(model.n_states):
        box = model.constraints[i]
        hi_sum = sum(box.hi[j] for j in box.targets)
        if mesh * hi_sum > 1.0 + 1e-12:
            raise MeshError(
                f"mesh {mesh!r} too coarse for row {i} (rate mass {hi_sum!r})"
            )
        terms = {
            j: piece.scaled(mesh, mesh)
            for j, piece in model.payoff[i].terms.items()
        }
        payoff.append(RowPayoff(i, terms, mesh * model.payoff[i].constant))
        constraints.append(
            AdmissibleRowSet(
                i,
                {j: mesh * box.lo[j] for j in box.targets},
                {j: mesh * box.hi[j] for j in box.targets},
            )
        )
    discount = StepDiscount(
        np.array(model.discount.weights),
        np.exp(-np.array(model.discount.rates) * mesh),
    )
    dm = DiscreteModel(model.n_states, discount, tuple(payoff), tuple(constraints), mesh)
    return Discretization(model, mesh, dm)


@dataclass(frozen=True)
class MeshSequence:
    meshes: tuple[float, ...]

    def __post_init__(self):
        m = tuple(float(x) for x in self.meshes)
        if len(m) < 1 or any(x <= 0 for x in m):
            raise ModelError("meshes must be positive")
        if any(b >= a for a, b in zip(m, m[1:])):
            raise ModelError("meshes must be strictly decreasing")
        object.__setattr__(self, "meshes", m)


@dataclass(frozen=True)
class MeshStep:
    mesh: float
    transition: TransitionMatrix
    generator: GeneratorMatrix
    aux_gap: np.ndarray          # |H_i(u^n) - F_i(Q_limit)| per state
    check: DiscreteCheckResult


@dataclass(frozen=True)
class ConvergenceRun:
    steps: tuple[MeshStep, ...]
    cauchy: bool
    limit: GeneratorMatrix
    extrapolated: bool
    report: EquilibriumReport


CAUCHY_TOL = 1e-6


def convergence_run(
    model: ModelSpec,
    meshes: MeshSequence,
    options: SolveOptions = SolveOptions(),
    classify: ClassifyOptions = ClassifyOptions(),
) -> ConvergenceRun:
    """Solve the discretized problem at each mesh, map the equilibria to
    generators, and classify the mesh limit.

    The limit is Richardson-extrapolated from the two finest meshes
    (clipped into the boxes); a non-Cauchy tail is reported, not fatal.
    Per mesh the gap between the deferred-value vector H(u^n) and the
    continuous payoff F at the limit is recorded.
    """
    sols: list[tuple[float, Discretization, TransitionMatrix, DiscreteCheckResult]] = []
    prev_u: TransitionMatrix | None = None
    prev_mesh: float | None = None
    for mesh in meshes.meshes:
        disc = discretize(model, mesh)
        starts = _discrete_starts(disc.discrete, options.n_starts)
        if prev_u is not None:
            q_prev = np.array(prev_u.matrix) / prev_mesh
            np.fill_diagonal(q_prev, 0.0)
            starts = [TransitionMatrix.from_off_diagonal(mesh * q_prev)] + starts
        res = discrete_solve(disc.discrete, options, classify, starts)
        if not res.candidates:
            raise ModelError(f"no discrete equilibrium found at mesh {mesh!r}")
        pick = res.candidates[0]
        if prev_u is not None:
            prev_q = np.array(prev_u.matrix) / prev_mesh

            def dist(c):
                q = np.array(c.transition.matrix) / mesh
                np.fill_diagonal(q, 0.0)
                p = prev_q.copy()
                np.fill_diagonal(p, 0.0)
                return float(np.abs(q - p).max())

            pick = min(res.candidates, key=dist)
        sols.append((mesh, disc, pick.transition, pick.check))
        prev_u, prev_mesh = pick.transition, mesh

    gens = [disc.to_generator(u) for _, disc, u, _ in sols]
    cauchy = False
    if len(gens) >= 3:
        tail = [g.matrix for g in gens[-3:]]
        cauchy = all(
            float(np.abs(a - b).max()) <= CAUCHY_TOL
            for a, b in zip(tail, tail[1:])
        )

    extrapolated = False
    if len(gens) >= 2:
        (m1, g1), (m2, g2) = (
            (sols[-2][0], gens[-2].matrix),
            (sols[-1][0], gens[-1].matrix),
        )
        lim = (g2 * m1 - g1 * m2) / (m1 - m2)
        extrapolated = True
    else:
        lim = np.array(gens[-1].matrix)
    rates = np.array(lim)
    np.fill_diagonal(rates, 0.0)
    for i in range(model.n_states):
        box = model.constraints[i]
        for j in box.targets:
            rates[i, j] = min(max(rates[i, j], box.lo[j]), box.hi[j])
    limit = GeneratorMatrix.from_rates(rates)

    F_lim = payoff_vector(model, limit)
    steps = []
    for mesh, disc, u, check in sols:
        steps.append(
            MeshStep(
                mesh,
                u,
                disc.to_generator(u),
                np.abs(check.aux - F_lim),
                check,
            )
        )
    report = strong_check(model, limit, classify)
    return ConvergenceRun(tuple(steps), cauchy, limit, extrapolated, report)
