"""Expected-payoff evaluation for controlled chains.

With a mixture discount everything is in closed resolvent form:

    F(Q)  = sum_k w_k (r_k I - Q)^{-1} g(Q)
    F_e(Q)= sum_k w_k exp(-r_k e) (r_k I - Q)^{-1} g(Q)
    G(Q)  = -sum_k w_k r_k (r_k I - Q)^{-1} g(Q)

where g(Q) is the vector of per-state running payoffs at the rows of Q.
A generic discount routes through adaptive quadrature on [0, t_max].
All functions are pure; identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import expm

from .model import (
    ExponentialMixture,
    GenericDiscount,
    GeneratorMatrix,
    ModelSpec,
)

# Matrix exponential rows must be this close to stochastic.
TRANSITION_ROW_TOL = 1e-10
# Relative residual allowed on resolvent solves (diagonally dominant LU).
RESOLVENT_RESIDUAL_TOL = 1e-10
# Mixture quadrature truncates once the discount tail mass is below this.
MIXTURE_TAIL_TOL = 1e-12


class NumericalError(RuntimeError):
    """Internal numerical failure (overflow, unexpectedly bad residual)."""


class QuadratureTailError(RuntimeError):
    """Declared tail bound too loose for the requested tolerance."""


def transition_matrix(Q: GeneratorMatrix, t: float) -> np.ndarray:
    """P(t) = exp(Qt): the time-t transition probabilities.

    Rows are checked to sum to one within 1e-10 and entries are clamped
    to [0, 1] on output.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0.0:
        return np.eye(Q.n_states)
    P = expm(Q.matrix * t)
    if not np.all(np.isfinite(P)):
        raise NumericalError(f"exp(Qt) overflowed at t={t!r}")
    row_err = np.abs(P.sum(axis=1) - 1.0).max()
    if row_err > TRANSITION_ROW_TOL:
        raise NumericalError(f"exp(Qt) rows off stochastic by {row_err!r}")
    if P.min() < -1e-12 or P.max() > 1.0 + 1e-12:
        raise NumericalError("exp(Qt) entries escape [0, 1] beyond tolerance")
    return np.clip(P, 0.0, 1.0)


def _resolvent_solve(rate: float, Q: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (rate*I - Q) x = rhs; the matrix is strictly diagonally
    dominant for rate > 0, so dense LU is reliable, but the residual is
    still checked."""
    A = rate * np.eye(Q.shape[0]) - Q
    x = np.linalg.solve(A, rhs)
    denom = float(np.abs(rhs).max())
    res = float(np.abs(A @ x - rhs).max())
    if res > RESOLVENT_RESIDUAL_TOL * max(1.0, denom):
        raise NumericalError(f"resolvent residual {res!r} too large")
    return x


def _mixture_terms(model: ModelSpec, Q: GeneratorMatrix) -> list[np.ndarray]:
    """Per-component resolvent solves (r_k I - Q)^{-1} g(Q)."""
    mix = model.discount
    g = model.g_vector(Q)
    return [_resolvent_solve(float(r), Q.matrix, g) for r in mix.rates]


def payoff_vector(model: ModelSpec, Q: GeneratorMatrix) -> np.ndarray:
    """F(Q): expected total discounted payoff from each initial state."""
    if isinstance(model.discount, ExponentialMixture):
        mix = model.discount
        terms = _mixture_terms(model, Q)
        out = sum(w * t for w, t in zip(mix.weights, terms))
        return np.asarray(out)
    return payoff_vector_quadrature(model, Q)


def shifted_payoff_vector(model: ModelSpec, Q: GeneratorMatrix, eps: float) -> np.ndarray:
    """F_e(Q): payoff with the discount clock started at e >= 0."""
    if eps < 0:
        raise ValueError("shift must be nonnegative")
    if eps == 0.0:
        return payoff_vector(model, Q)
    if isinstance(model.discount, ExponentialMixture):
        mix = model.discount
        terms = _mixture_terms(model, Q)
        out = sum(
            w * math.exp(-float(r) * eps) * t
            for w, r, t in zip(mix.weights, mix.rates, terms)
        )
        return np.asarray(out)
    return _quadrature_vector(model, Q, shift=eps)


def derivative_payoff_vector(model: ModelSpec, Q: GeneratorMatrix) -> np.ndarray:
    """G(Q): expected total of the time-derivative payoff delta'(t) g."""
    if isinstance(model.discount, ExponentialMixture):
        mix = model.discount
        terms = _mixture_terms(model, Q)
        out = sum(
            -w * float(r) * t for w, r, t in zip(mix.weights, mix.rates, terms)
        )
        return np.asarray(out)
    return _quadrature_vector(model, Q, use_derivative=True)


def concat_payoff_vector(
    model: ModelSpec, Q: GeneratorMatrix, Qstar: GeneratorMatrix, eps: float
) -> np.ndarray:
    """Payoff of the control that follows Q on [0, eps] and Qstar after.

    Equals (int_0^eps exp(Qt) delta(t) g(Q) dt) + exp(Q eps) F_e(Qstar);
    the mixture running part uses the closed form
    sum_k w_k (r_k I - Q)^{-1} (I - exp((Q - r_k I) eps)) g(Q).
    """
    if eps < 0:
        raise ValueError("deviation window must be nonnegative")
    if eps == 0.0:
        return payoff_vector(model, Qstar)
    P_eps = transition_matrix(Q, eps)
    tail = P_eps @ shifted_payoff_vector(model, Qstar, eps)
    if isinstance(model.discount, ExponentialMixture):
        mix = model.discount
        g = model.g_vector(Q)
        running = np.zeros(model.n_states)
        for w, r in zip(mix.weights, mix.rates):
            decayed = math.exp(-float(r) * eps) * P_eps
            inner = g - decayed @ g
            running = running + w * _resolvent_solve(float(r), Q.matrix, inner)
        return running + tail
    running = quad_vec(
        lambda t: model.discount.value(t) * (expm(Q.matrix * t) @ model.g_vector(Q)),
        0.0,
        eps,
        epsabs=1e-12,
        epsrel=1e-12,
    )[0]
    return running + tail


def concat_payoff(
    model: ModelSpec,
    i: int,
    Q: GeneratorMatrix,
    Qstar: GeneratorMatrix,
    eps: float,
) -> float:
    """F(i, Q then Qstar after eps); eps = 0 returns F(i, Qstar) exactly."""
    return float(concat_payoff_vector(model, Q, Qstar, eps)[i])


# ---------------------------------------------------------------------------
# Quadrature oracle
# ---------------------------------------------------------------------------

def _quadrature_vector(
    model: ModelSpec,
    Q: GeneratorMatrix,
    shift: float = 0.0,
    use_derivative: bool = False,
    tol: float = 1e-11,
) -> np.ndarray:
    disc = model.discount
    if isinstance(disc, ExponentialMixture):
        g = model.g_vector(Q)
        scale = max(1.0, float(np.abs(g).max()))
        t_max = disc.horizon_for_tail(MIXTURE_TAIL_TOL / scale)
    else:
        scale = max(1.0, float(np.abs(model.g_vector(Q)).max()))
        if disc.tail_bound * scale > 1e-6:
            raise QuadratureTailError(
                f"declared tail bound {disc.tail_bound!r} too large for "
                f"payoff scale {scale!r}"
            )
        t_max = disc.t_max
    g = model.g_vector(Q)

    def integrand(t):
        w = disc.derivative(t + shift) if use_derivative else disc.value(t + shift)
        return float(w) * (expm(Q.matrix * t) @ g)

    val, _err = quad_vec(integrand, 0.0, t_max, epsabs=tol, epsrel=tol)
    return val


def payoff_vector_quadrature(
    model: ModelSpec, Q: GeneratorMatrix, tol: float = 1e-11
) -> np.ndarray:
    """Independent evaluation of F(Q) by adaptive quadrature of
    delta(t) exp(Qt) g(Q) on [0, t_max]; the oracle the resolvent path
    is tested against."""
    return _quadrature_vector(model, Q, tol=tol)


def shifted_payoff_vector_quadrature(
    model: ModelSpec, Q: GeneratorMatrix, eps: float, tol: float = 1e-11
) -> np.ndarray:
    return _quadrature_vector(model, Q, shift=eps, tol=tol)


def concat_payoff_quadrature(
    model: ModelSpec,
    i: int,
    Q: GeneratorMatrix,
    Qstar: GeneratorMatrix,
    eps: float,
    tol: float = 1e-11,
) -> float:
    """Quadrature-only evaluation of the concatenated payoff (oracle)."""
    if eps == 0.0:
        return float(payoff_vector_quadrature(model, Qstar, tol=tol)[i])
    g_q = model.g_vector(Q)
    disc = model.discount

    def head(t):
        return float(disc.value(t)) * (expm(Q.matrix * t) @ g_q)

    running = quad_vec(head, 0.0, eps, epsabs=tol, epsrel=tol)[0]
    tail = shifted_payoff_vector_quadrature(model, Qstar, eps, tol=tol)
    P_eps = transition_matrix(Q, eps)
    return float((running + P_eps @ tail)[i])
