"""Heterogeneous SAIS model: parameters, mean-field integration and the
spectral die-out test.

Node ``i`` is infected at rate ``beta[i]`` per infected neighbour while
susceptible and ``r[i] * beta[i]`` while alert, turns alert at rate
``kappa[i]`` per infected neighbour, and recovers at rate ``delta[i]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .graph import EIG_TOL, Graph, largest_eigenvalue

CLAMP_TOL = 1e-9


class DisconnectedGraphWarning(UserWarning):
    """Threshold results assume a connected contact graph."""


class IntegrationInstabilityError(RuntimeError):
    pass


def _vector(x, n: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SaisParams:
    """Per-node SAIS rates. Use :meth:`create` to broadcast scalars."""

    beta: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.beta).size
        for name in ("beta", "delta", "kappa", "r"):
            object.__setattr__(self, name, _vector(getattr(self, name), n, name))
        if not np.all(self.beta > 0):
            raise ValueError("beta must be strictly positive")
        if not np.all(self.delta > 0):
            raise ValueError("delta must be strictly positive")
        if not np.all(self.kappa >= 0):
            raise ValueError("kappa must be nonnegative")
        if not np.all((self.r > 0) & (self.r < 1)):
            raise ValueError("r must lie in the open interval (0, 1)")
        for name in ("beta", "delta", "kappa", "r"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def create(cls, n: int, beta, delta, kappa=0.0, r=0.5) -> "SaisParams":
        return cls(_vector(beta, n, "beta"), _vector(delta, n, "delta"),
                   _vector(kappa, n, "kappa"), _vector(r, n, "r"))

    @property
    def n(self) -> int:
        return self.beta.size

    @property
    def kappa_bar(self) -> np.ndarray:
        return self.kappa / self.beta

    def with_kappa(self, kappa) -> "SaisParams":
        return replace(self, kappa=_vector(kappa, self.n, "kappa"))

    def scaled(self, theta: float) -> "SaisParams":
        """Infection rates scaled by ``theta`` with ``kappa / beta`` held fixed."""
        return replace(self, beta=self.beta * theta, kappa=self.kappa * theta)

    def check_graph(self, g: Graph) -> None:
        if self.n != g.n:
            raise ValueError(f"parameters cover {self.n} nodes but graph has {g.n}")


@dataclass(frozen=True)
class StabilityReport:
    margin: float
    diag_threshold: np.ndarray
    die_out: bool
    eigvec: np.ndarray


def _gain_terms(params: SaisParams):
    kb = params.kappa_bar
    L = params.r * kb + params.r
    M = kb + params.r
    return L, M


def diag_threshold(params: SaisParams) -> np.ndarray:
    """Per-node diagonal y with ``A - diag(y) <= 0`` equivalent to die-out."""
    # (r delta + kappa delta / beta) / (r beta + r kappa), arranged so that
    # kappa = 0 gives delta / beta bit for bit
    kb, r = params.kappa_bar, params.r
    return params.delta / params.beta * ((r + kb) / (r + r * kb))


def build_stability_matrix(g: Graph, params: SaisParams) -> np.ndarray:
    """Dense ``L B A - M D``; not symmetric when the rates are heterogeneous."""
    params.check_graph(g)
    L, M = _gain_terms(params)
    return (L * params.beta)[:, None] * g.adjacency() - np.diag(M * params.delta)


def symmetric_stability_matrix(g: Graph, params: SaisParams):
    """``(LB)^1/2 A (LB)^1/2 - MD``, similar to :func:`build_stability_matrix`."""
    params.check_graph(g)
    L, M = _gain_terms(params)
    root = sp.diags(np.sqrt(L * params.beta))
    return (root @ g.to_scipy() @ root - sp.diags(M * params.delta)).tocsr()


def spectral_margin(g: Graph, params: SaisParams, tol: float = EIG_TOL) -> StabilityReport:
    """Largest eigenvalue of the stability matrix and the die-out verdict.

    A margin of exactly zero is reported as not dying out, since the die-out
    condition is a strict inequality.
    """
    sym = symmetric_stability_matrix(g, params)
    if g.n == 0:
        raise ValueError("empty graph")
    report = largest_eigenvalue(sym, tol)
    return StabilityReport(margin=report.lambda1, diag_threshold=diag_threshold(params),
                           die_out=report.lambda1 < 0, eigvec=report.eigvec)


@dataclass(frozen=True)
class ThetaThreshold:
    """Critical global infection scale. ``no_transmission`` flags graphs
    without edges, where ``theta_c`` is infinite."""

    theta_c: float
    lambda1: float
    connected: bool
    no_transmission: bool


def epidemic_threshold_theta(g: Graph, params: SaisParams, tol: float = EIG_TOL) -> ThetaThreshold:
    """Critical scale ``theta_c = 1 / lambda1(H A)`` for ``beta = theta * params.beta``.

    ``params.beta`` plays the role of the base rates and ``kappa / beta`` is
    held fixed as theta varies (see :meth:`SaisParams.scaled`), so the margin
    of ``params.scaled(theta)`` changes sign exactly at ``theta_c``.
    """
    params.check_graph(g)
    connected = g.is_connected()
    if not connected:
        warnings.warn("contact graph is disconnected; theta_c is computed but the "
                      "positive-equilibrium argument assumes connectivity",
                      DisconnectedGraphWarning, stacklevel=2)
    if g.m == 0:
        return ThetaThreshold(math.inf, 0.0, connected, True)
    kb = params.kappa_bar
    h = params.beta / params.delta * params.r * (kb + 1) / (kb + params.r)
    root = sp.diags(np.sqrt(h))
    lam = largest_eigenvalue((root @ g.to_scipy() @ root).tocsr(), tol).lambda1
    return ThetaThreshold(1.0 / lam, lam, connected, False)


@dataclass
class StateVector:
    p: np.ndarray
    q: np.ndarray
    t: float = 0.0

    def check(self, tol: float = 0.0) -> None:
        p, q = np.asarray(self.p), np.asarray(self.q)
        if p.shape != q.shape:
            raise ValueError("p and q must have the same length")
        if min(p.min(initial=0), q.min(initial=0), (1 - p - q).min(initial=0)) < -tol:
            raise ValueError("state must satisfy p, q >= 0 and p + q <= 1")


@dataclass
class Trajectory:
    t: np.ndarray  # (k,)
    p: np.ndarray  # (k, n)
    q: np.ndarray  # (k, n)

    @property
    def final(self) -> StateVector:
        return StateVector(self.p[-1].copy(), self.q[-1].copy(), float(self.t[-1]))

    def to_csv(self) -> str:
        n = self.p.shape[1]
        header = ["t"] + [f"p_{i}" for i in range(n)] + [f"q_{i}" for i in range(n)]
        rows = np.column_stack([self.t, self.p, self.q])
        lines = [",".join(header)]
        lines.extend(",".join(repr(float(x)) for x in row) for row in rows)
        return "\n".join(lines) + "\n"


def default_dt(g: Graph, params: SaisParams) -> float:
    dmax = float(g.degrees.max(initial=0))
    rho = float(np.max(params.beta * dmax + params.delta + params.kappa * dmax))
    return 0.01 / rho


def mean_field_rhs(adj, params: SaisParams, p: np.ndarray, q: np.ndarray):
    """Time derivatives ``(dp/dt, dq/dt)`` of the mean-field equations."""
    s = adj @ p
    free = 1.0 - p - q
    alert_hit = params.r * params.beta * q
    dp = (params.beta * free + alert_hit) * s - params.delta * p
    dq = (params.kappa * free - alert_hit) * s
    return dp, dq


def _clamp(p, q, dt):
    worst = min(p.min(initial=0.0), q.min(initial=0.0), (1.0 - p - q).min(initial=0.0))
    if worst >= 0.0:
        return p, q
    if worst < -CLAMP_TOL:
        raise IntegrationInstabilityError(
            f"state left the simplex by {-worst:.3e}; reduce dt (currently {dt:.3e})")
    np.clip(p, 0.0, 1.0, out=p)
    np.clip(q, 0.0, 1.0, out=q)
    total = p + q
    over = total > 1.0
    if over.any():
        p[over] /= total[over]
        q[over] /= total[over]
    return p, q


def integrate_mean_field(g: Graph, params: SaisParams, init: StateVector, t_end: float,
                         dt: Optional[float] = None, record_every: int = 1) -> Trajectory:
    """Fixed-step RK4 integration of the mean-field equations.

    The step is shrunk slightly so that ``t_end`` is hit exactly; states are
    recorded every ``record_every`` steps plus the terminal one. Roundoff
    excursions outside the simplex up to ``CLAMP_TOL`` are clamped, anything
    larger raises :class:`IntegrationInstabilityError`.
    """
    params.check_graph(g)
    init.check()
    if dt is None:
        dt = default_dt(g, params)
    if dt <= 0 or t_end < 0:
        raise ValueError("dt must be positive and t_end nonnegative")
    steps = max(1, math.ceil(t_end / dt - 1e-12)) if t_end > 0 else 0
    h = t_end / steps if steps else dt
    n = g.n
    adj = g.to_scipy() if n > 64 else g.adjacency()
    beta, delta, kappa = params.beta, params.delta, params.kappa
    rbeta = params.r * params.beta

    # state stacked as x = [p, q] to keep the per-step numpy call count low
    def rhs(x):
        p, q = x[:n], x[n:]
        s = adj @ p
        free = 1.0 - p - q
        hit = rbeta * q
        return np.concatenate(((beta * free + hit) * s - delta * p, (kappa * free - hit) * s))

    x = np.concatenate([np.asarray(init.p, dtype=float), np.asarray(init.q, dtype=float)])
    t0 = float(init.t)
    ts, xs = [t0], [x.copy()]
    half, sixth = 0.5 * h, h / 6.0
    for k in range(1, steps + 1):
        k1 = rhs(x)
        k2 = rhs(x + half * k1)
        k3 = rhs(x + half * k2)
        k4 = rhs(x + h * k3)
        x = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        if x.min(initial=0.0) < 0.0 or (x[:n] + x[n:]).max(initial=0.0) > 1.0:
            _clamp(x[:n], x[n:], h)
        if k % record_every == 0 or k == steps:
            ts.append(t0 + k * h)
            xs.append(x.copy())
    xs = np.array(xs).reshape(len(ts), 2 * n)
    return Trajectory(np.array(ts), xs[:, :n].copy(), xs[:, n:].copy())


def equilibrium_residual(g: Graph, params: SaisParams, p_star) -> np.ndarray:
    """Per-node residual of the fixed-point relation for infection levels.

    Zero at any mean-field equilibrium, including the healthy state.
    """
    params.check_graph(g)
    p = np.asarray(p_star, dtype=float)
    if np.any(p >= 1.0):
        raise ValueError("equilibrium relation is singular at p_i = 1")
    if np.any(p < 0.0):
        raise ValueError("infection probabilities must be nonnegative")
    kb = params.kappa_bar
    gain = params.beta / params.delta * params.r * (kb + 1) / (kb + params.r)
    return p / (1.0 - p) - gain * (g.to_scipy() @ p)
