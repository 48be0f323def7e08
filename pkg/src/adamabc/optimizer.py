"""Adam with time-varying second-moment averaging, plus an SGD baseline.

The update, per step tau = completed-steps + 1:

    v' = beta2_tau * v + (1 - beta2_tau) * g*g
    m' = beta1 * m + (1 - beta1) * g
    eta_v = eta_tau / (sqrt(v') + mu)        (componentwise)
    w' = w - eta_v * m'

No bias correction anywhere; mu sits outside the square root.  States are
immutable values: stepping never mutates its inputs, so replaying a step from
a saved state reproduces the original output bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionMismatch, HyperParams, ScheduleValue, beta2_at, eta_at, validate_hyperparams
from .problems import Problem, oracle_sample, rng_stream


class NonFiniteGradient(ValueError):
    """A gradient sample contained NaN or +/-inf; traces must be gap-free."""


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AdamState:
    """Snapshot after ``t`` completed steps: iterate w, moments m and v_vec."""

    t: int
    w: np.ndarray
    m: np.ndarray
    v_vec: np.ndarray


@dataclass(frozen=True)
class SgdState:
    t: int
    w: np.ndarray


def adam_init(w1, h: HyperParams) -> AdamState:
    """State at t = 0: m = 0 and v_vec = h.v * ones, iterate at w1."""
    w1 = np.asarray(w1, dtype=np.float64)
    if w1.shape != (h.dim,):
        raise DimensionMismatch(f"w1 shape {w1.shape} != ({h.dim},)")
    return AdamState(t=0, w=_ro(w1), m=_ro(np.zeros(h.dim)), v_vec=_ro(np.full(h.dim, h.v)))


def eta_v_of(v_vec: np.ndarray, t: int, h: HyperParams) -> np.ndarray:
    """Adaptive per-coordinate rate eta_t / (sqrt(v_t) + mu)."""
    return eta_at(t, h) / (np.sqrt(v_vec) + h.mu)


def adam_step(s: AdamState, g, h: HyperParams) -> AdamState:
    """One update; returns the new state, leaving ``s`` untouched."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != s.w.shape:
        raise DimensionMismatch(f"gradient shape {g.shape} != state shape {s.w.shape}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient(f"non-finite gradient component at t={s.t + 1}")
    tau = s.t + 1
    b2 = beta2_at(tau, h)
    v_new = b2 * s.v_vec + (1.0 - b2) * (g * g)
    m_new = h.beta1 * s.m + (1.0 - h.beta1) * g
    eta_v = eta_at(tau, h) / (np.sqrt(v_new) + h.mu)
    w_new = s.w - eta_v * m_new
    return AdamState(t=tau, w=_ro(w_new), m=_ro(m_new), v_vec=_ro(v_new))


def sgd_step(s: SgdState, g, eta_t: float) -> SgdState:
    if eta_t <= 0:
        raise ValueError(f"eta_t must be > 0, got {eta_t}")
    g = np.asarray(g, dtype=np.float64)
    if g.shape != s.w.shape:
        raise DimensionMismatch(f"gradient shape {g.shape} != state shape {s.w.shape}")
    return SgdState(t=s.t + 1, w=_ro(s.w - eta_t * g))


def run_trajectory(p: Problem, h: HyperParams, T: int, seed: int, hooks=None, w1=None):
    """Run T Adam steps on problem ``p`` and return the assembled TheoryTrace.

    The oracle stream is keyed by ("trajectory", seed, "oracle"), so identical
    inputs give bitwise-identical traces.  Each hook in ``hooks`` is called
    after every step with (previous state, gradient, new state, schedule
    values); hooks observe only — they cannot perturb the run.

    The trace stores w_1 .. w_{T+1}: the loop that performs T updates ends one
    iterate past the last gradient, and callers pick the convention they need.
    """
    validate_hyperparams(h)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if w1 is None:
        w1 = np.ones(h.dim)
    state = adam_init(w1, h)
    rng = rng_stream("trajectory", seed, "oracle")
    hooks = tuple(hooks) if hooks else ()

    W = np.empty((T + 1, h.dim))
    G = np.empty((T, h.dim))
    M = np.empty((T, h.dim))
    V = np.empty((T, h.dim))
    W[0] = state.w
    for k in range(T):
        tau = k + 1
        try:
            g = oracle_sample(p, state.w, rng)
            new_state = adam_step(state, g, h)
        except Exception as e:
            raise _with_step(e, tau) from e
        G[k] = g
        M[k] = new_state.m
        V[k] = new_state.v_vec
        W[k + 1] = new_state.w
        if hooks:
            sched = ScheduleValue(t=tau, beta2_t=beta2_at(tau, h), eta_t=eta_at(tau, h))
            for hook in hooks:
                hook(state, g, new_state, sched)
        state = new_state

    from .instrumentation import build_trace  # deferred: instrumentation imports optimizer

    return build_trace(p, h, W, G, M, V, seed=seed)


def _with_step(e: Exception, tau: int) -> Exception:
    try:
        out = type(e)(f"step {tau}: {e}")
    except Exception:
        return e
    return out
