"""Cost-optimal awareness allocation.

With the linear-fractional cost ``f_i(k) = (c_i + s_i k) / (r_i b_i + r_i k)``
the substitution ``u = k w``, ``w = 1 / (r b + r k)`` turns the spectral
die-out constraint into the linear matrix inequality

    A - diag(r_i d_i w_i + (d_i / b_i) u_i) <= 0

and the objective into ``sum c_i w_i + s_i u_i``. Two solvers are provided.
The default is a log-det barrier interior-point method whose iterates are
strictly feasible. The alternative is an outer approximation: every
eigenvector ``v`` with positive eigenvalue yields a linear cut
``v' (A - diag(y)) v <= 0`` and the relaxed LP is re-solved until the
largest eigenvalue drops below tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .dynamics import SaisParams, diag_threshold, spectral_margin
from .graph import Graph

FEAS_TOL = 1e-7
CERT_TOL = 1e-6
MAX_CUT_ITER = 500
LP_TOL = 1e-9
CUTS_PER_ITER = 8
GAP_TOL = 1e-10
NEWTON_TOL = 1e-9
BARRIER_MU = 20.0


class CostModelError(ValueError):
    pass


class InfeasibleTargetError(ValueError):
    """Requested diagonal value cannot be produced by any kappa >= 0."""

    def __init__(self, message, low, high):
        super().__init__(message)
        self.low = low
        self.high = high


class SingularTransformError(ValueError):
    pass


class AllocationConvergenceError(RuntimeError):
    def __init__(self, message, best: "AllocationResult"):
        super().__init__(message)
        self.best = best


# -- cost model ---------------------------------------------------------------

def fit_cost_params(C_bar, kappa_lower, kappa_upper, r, beta):
    """Numerator coefficients ``(c, s)`` with ``f(kappa_lower) = 0`` and
    ``f(kappa_upper) = C_bar``."""
    C_bar, kl, ku, r, beta = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (C_bar, kappa_lower, kappa_upper, r, beta)))
    if np.any(ku <= kl):
        raise CostModelError("degenerate awareness range: kappa_upper must exceed kappa_lower")
    if np.any(C_bar <= 0):
        raise CostModelError("C_bar must be positive")
    s = C_bar * r * (beta + ku) / (ku - kl)
    c = C_bar * r * (beta + ku) - s * ku
    if np.any(s < C_bar * r * (1 - 1e-12)):
        raise CostModelError("fitted cost would be decreasing")
    return c, s


@dataclass(frozen=True)
class CostModel:
    """Per-node linear-fractional cost. ``r`` and ``beta`` are the SAIS rates
    appearing in the denominator."""

    c: np.ndarray
    s: np.ndarray
    C_bar: np.ndarray
    kappa_lower: np.ndarray
    kappa_upper: np.ndarray
    r: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        arrays = np.broadcast_arrays(*(np.asarray(getattr(self, k), dtype=float)
                                       for k in self.__dataclass_fields__))
        for name, arr in zip(self.__dataclass_fields__, arrays):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.kappa_lower > self.kappa_upper):
            raise CostModelError("kappa_lower exceeds kappa_upper")
        if np.any(self.kappa_lower < 0):
            raise CostModelError("kappa_lower must be nonnegative")
        if np.any(self.C_bar <= 0):
            raise CostModelError("C_bar must be positive")
        # f'(k) has the sign of s*beta - c
        if np.any(self.s * self.beta < self.c - 1e-12 * np.abs(self.c)):
            raise CostModelError("cost must be nondecreasing (needs s * beta >= c)")

    @classmethod
    def fit(cls, C_bar, kappa_lower, kappa_upper, r, beta) -> "CostModel":
        c, s = fit_cost_params(C_bar, kappa_lower, kappa_upper, r, beta)
        return cls(c, s, C_bar, kappa_lower, kappa_upper, r, beta)

    @classmethod
    def for_params(cls, params: SaisParams, C_bar, kappa_lower, kappa_upper) -> "CostModel":
        return cls.fit(C_bar, kappa_lower, kappa_upper, params.r, params.beta)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def meets_half_cbar_rule(self) -> np.ndarray:
        """Nodes with ``s > C_bar / 2``, the sufficient condition quoted for r = 1/2."""
        return self.s > self.C_bar / 2

    def max_slope(self) -> float:
        """Largest derivative of any f_i on its range (attained at kappa_lower)."""
        rb = self.r * self.beta
        d = rb + self.r * self.kappa_lower
        return float(np.max((self.s * rb - self.r * self.c) / d ** 2))


def eval_cost(model: CostModel, kappa, tol: float = 1e-12) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    slack = tol * np.maximum(1.0, np.abs(model.kappa_upper))
    if np.any(kappa < model.kappa_lower - slack) or np.any(kappa > model.kappa_upper + slack):
        raise ValueError("kappa outside [kappa_lower, kappa_upper]")
    return (model.c + model.s * kappa) / (model.r * model.beta + model.r * kappa)


# -- variable transforms ------------------------------------------------------

def y_from_kappa(params: SaisParams, kappa) -> np.ndarray:
    return diag_threshold(params.with_kappa(kappa))


def y_range(params: SaisParams):
    """Attainable diagonal values ``[delta/beta, delta/(r beta))`` for kappa >= 0."""
    g = params.delta / params.beta
    return g, g / params.r


def kappa_from_y(params: SaisParams, y) -> np.ndarray:
    y = np.broadcast_to(np.asarray(y, dtype=float), params.beta.shape)
    lo, hi = y_range(params)
    bad = (y < lo * (1 - 1e-14)) | (y >= hi)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InfeasibleTargetError(
            f"y[{i}]={y[i]:g} is outside the attainable range [{lo[i]:g}, {hi[i]:g})",
            lo, hi)
    b, d, r = params.beta, params.delta, params.r
    return np.maximum((y * r * b - r * d) / (d / b - y * r), 0.0)


def charnes_cooper(params: SaisParams, kappa):
    denom = params.r * params.beta + params.r * np.asarray(kappa, dtype=float)
    if np.any(denom <= 0):
        raise SingularTransformError("r * beta + r * kappa must be positive")
    return kappa / denom, 1.0 / denom


def recover_kappa(u, w) -> np.ndarray:
    u, w = np.asarray(u, dtype=float), np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise SingularTransformError("w must be strictly positive")
    return u / w


# -- SDP instance -------------------------------------------------------------

@dataclass(frozen=True)
class SdpInstance:
    """Data of ``min c.w + s.u`` subject to ``A - diag(F w + G u) <= 0``,
    ``kappa_lower w <= u <= kappa_upper w``, ``w >= 0`` and
    ``r beta w + r u = 1``.

    Eliminating ``w`` through the equality gives the reduced diagonal
    ``G (1 + (1 - r) u)`` and objective ``sum c/(r beta) + (s - c/beta) u``
    over the box ``[u_lower, u_upper]``.
    """

    graph: Graph
    params: SaisParams
    cost: CostModel
    F: np.ndarray
    G: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.graph.adjacency()

    @property
    def n(self) -> int:
        return self.graph.n

    # reduced (u-only) form
    @property
    def u_bounds(self):
        lo = charnes_cooper(self.params, self.cost.kappa_lower)[0]
        hi = charnes_cooper(self.params, self.cost.kappa_upper)[0]
        return lo, hi

    @property
    def reduced_slope(self) -> np.ndarray:
        return self.G * (1.0 - self.params.r)

    @property
    def reduced_objective(self):
        c, s, b, r = self.cost.c, self.cost.s, self.params.beta, self.params.r
        return float(np.sum(c / (r * b))), s - c / b

    def w_from_u(self, u) -> np.ndarray:
        r, b = self.params.r, self.params.beta
        return (1.0 - r * u) / (r * b)

    def diagonal(self, u, w=None) -> np.ndarray:
        if w is None:
            return self.G * (1.0 + (1.0 - self.params.r) * u)
        return self.F * w + self.G * u


def assemble_sdp(g: Graph, params: SaisParams, cost: CostModel) -> SdpInstance:
    params.check_graph(g)
    if cost.n != g.n:
        raise ValueError("cost model size does not match the graph")
    if not (np.allclose(cost.r, params.r) and np.allclose(cost.beta, params.beta)):
        raise ValueError("cost model was fitted for different r / beta")
    F = params.r * params.delta
    G = params.delta / params.beta
    return SdpInstance(g, params, cost, F, G)


# -- solver -------------------------------------------------------------------

@dataclass
class Iterate:
    """One solver iterate over all nodes (fixed nodes at their lower bound)."""

    u: np.ndarray
    w: np.ndarray
    kappa: np.ndarray
    lambda1: float
    lower_bound: float


@dataclass
class AllocationResult:
    kappa_star: np.ndarray
    u_star: np.ndarray
    w_star: np.ndarray
    y_star: np.ndarray
    total_cost: float
    margin: float
    status: str  # optimal | marginal | infeasible
    lower_bound: float = float("nan")
    iterations: int = 0
    epsilon: float = 0.0
    method: str = ""
    history: list = field(default_factory=list, repr=False)
    attainable: Optional[dict] = None

    @property
    def solved(self) -> bool:
        return self.status in ("optimal", "marginal")

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "method": self.method,
            "total_cost": self.total_cost,
            "lower_bound": self.lower_bound,
            "margin": self.margin,
            "iterations": self.iterations,
            "epsilon": self.epsilon,
            "kappa_star": self.kappa_star.tolist(),
            "u_star": self.u_star.tolist(),
            "w_star": self.w_star.tolist(),
            "y_star": self.y_star.tolist(),
        }
        if self.attainable is not None:
            out["attainable"] = self.attainable
        return out


def certify(g: Graph, params: SaisParams, tol: float = CERT_TOL):
    """Independent spectral margin at the given awareness rates.

    Returns ``(margin, passed)`` with ``passed = margin <= tol``.
    """
    margin = spectral_margin(g, params).margin
    return margin, margin <= tol


class _Sub:
    """The instance restricted to the nodes that carry a decision."""

    def __init__(self, inst: SdpInstance, epsilon: float):
        u_lo, u_hi = inst.u_bounds
        # isolated nodes never constrain the LMI and sit at their cheapest level
        self.idx = np.flatnonzero((inst.graph.degrees > 0) & (u_hi > u_lo))
        fixed = np.setdiff1d(np.arange(inst.n), self.idx)
        A = inst.A + epsilon * np.eye(inst.n)
        self.A_fixed = A
        self.u_fixed = u_lo.copy()
        i = self.idx
        self.k = i.size
        self.A = A[np.ix_(i, i)]
        self.G, self.F = inst.G[i], inst.F[i]
        self.r, self.beta = inst.params.r[i], inst.params.beta[i]
        self.c, self.s = inst.cost.c[i], inst.cost.s[i]
        self.kl, self.ku = inst.cost.kappa_lower[i], inst.cost.kappa_upper[i]
        self.u_lo, self.u_hi = u_lo[i], u_hi[i]
        w_lo = inst.w_from_u(u_lo)
        self.const = float(np.sum(inst.cost.c[fixed] * w_lo[fixed] + inst.cost.s[fixed] * u_lo[fixed]))
        self.reduced_const = float(np.sum(self.c / (self.r * self.beta)))
        self.a = self.s - self.c / self.beta
        self.sigma = self.G * (1.0 - self.r)

    def w_from_u(self, u):
        return (1.0 - self.r * u) / (self.r * self.beta)

    def lambda1(self, y) -> float:
        return float(np.linalg.eigvalsh(self.A - np.diag(y))[-1])

    def embed(self, u_sub):
        u = self.u_fixed.copy()
        u[self.idx] = u_sub
        return u


def solve_allocation(inst: SdpInstance, tol: float = FEAS_TOL, *, method: str = "barrier",
                     form: str = "reduced", epsilon: float = 0.0,
                     max_iter: Optional[int] = None, gap_tol: float = GAP_TOL,
                     lp_tol: float = LP_TOL, cert_tol: float = CERT_TOL) -> AllocationResult:
    """Minimum-cost awareness rates subject to the spectral die-out constraint.

    Args:
        inst: assembled instance.
        tol: feasibility tolerance on ``lambda1(A - diag(y))``; also the
            threshold of the infeasibility pre-check at ``kappa_upper``.
        method: ``"barrier"`` (log-det interior point, every iterate strictly
            feasible) or ``"cutting_plane"`` (eigenvector cuts on an LP).
        form: ``"reduced"`` optimises over u alone after eliminating w with the
            normalisation equality; ``"full"`` keeps (u, w) and the equality.
        epsilon: backoff; the constraint becomes ``lambda1 <= -epsilon``.
        max_iter: Newton-step cap (barrier, default 500) or cut-round cap
            (cutting plane, default ``MAX_CUT_ITER``).
        gap_tol: duality-gap target of the barrier method.

    Returns:
        AllocationResult with status ``optimal`` (certified margin below
        ``-cert_tol``), ``marginal`` (constraint active within ``cert_tol``,
        the generic case without backoff) or ``infeasible``.

    Raises:
        AllocationConvergenceError: iteration cap reached; ``.best`` holds the
            last iterate and its certified margin.
    """
    if form not in ("reduced", "full"):
        raise ValueError(f"unknown form {form!r}")
    if method not in ("barrier", "cutting_plane"):
        raise ValueError(f"unknown method {method!r}")
    sub = _Sub(inst, epsilon)
    u_lo, u_hi = inst.u_bounds

    y_up = inst.diagonal(u_hi)
    lam_up = float(np.linalg.eigvalsh(sub.A_fixed - np.diag(y_up))[-1]) if inst.n else -np.inf
    if lam_up > tol:
        return _infeasible_result(inst, lam_up, epsilon)

    if sub.k == 0:
        return _finish(inst, u_lo, None, epsilon, float("nan"), 0, [], cert_tol, method)
    if method == "barrier":
        solve = _barrier_reduced if form == "reduced" else _barrier_full
        cap = 500 if max_iter is None else max_iter
        u, w, lower, iters, history, ok = solve(sub, gap_tol, cap)
    else:
        cap = MAX_CUT_ITER if max_iter is None else max_iter
        u, w, lower, iters, history, ok = _cutting_plane(sub, form, tol, lp_tol, cap)
        if ok:
            u = _restore(sub, u)
            w = None
    history = [Iterate(sub.embed(it.u), _embed_w(inst, sub, it.w), None, it.lambda1,
                       it.lower_bound) for it in history]
    for it in history:
        it.kappa = recover_kappa(it.u, it.w)
    result = _finish(inst, sub.embed(u), None if w is None else _embed_w(inst, sub, w),
                     epsilon, lower, iters, history, cert_tol, method)
    if not ok:
        raise AllocationConvergenceError(
            f"{method} did not converge within {cap} iterations", result)
    return result


def _embed_w(inst, sub, w_sub):
    w = inst.w_from_u(sub.u_fixed)
    w[sub.idx] = w_sub
    return w


def _infeasible_result(inst: SdpInstance, lam: float, epsilon: float) -> AllocationResult:
    nan = np.full(inst.n, np.nan)
    _, hi = y_range(inst.params)
    y_up = y_from_kappa(inst.params, inst.cost.kappa_upper)
    return AllocationResult(nan, nan, nan, nan, float("nan"), float(lam), "infeasible",
                            epsilon=epsilon,
                            attainable={"y_upper": y_up.tolist(),
                                        "y_supremum": hi.tolist(),
                                        "lambda1_at_kappa_upper": float(lam)})


def _finish(inst, u, w, epsilon, lower, iterations, history, cert_tol, method) -> AllocationResult:
    params, cost = inst.params, inst.cost
    if w is None:
        w = inst.w_from_u(u)
    kappa = np.clip(recover_kappa(u, w), cost.kappa_lower, cost.kappa_upper)
    u, w = charnes_cooper(params, kappa)
    total = float(np.sum(cost.c * w + cost.s * u))
    margin, _ = certify(inst.graph, params.with_kappa(kappa), cert_tol)
    if margin < -cert_tol:
        status = "optimal"
    elif margin <= cert_tol:
        status = "marginal"
    else:
        status = "uncertified"
    if np.isnan(lower):
        lower = total
    return AllocationResult(kappa, u, w, inst.diagonal(u), total, margin, status,
                            lower_bound=lower, iterations=iterations, epsilon=epsilon,
                            method=method, history=history)


# barrier method

def _interior_start(sub: _Sub):
    """A point of the box interior with ``diag(y) - A`` positive definite."""
    span = sub.u_hi - sub.u_lo
    for theta in 10.0 ** -np.arange(1, 13):
        u = sub.u_hi - theta * span
        try:
            np.linalg.cholesky(np.diag(sub.G * (1 + (1 - sub.r) * u)) - sub.A)
            return u
        except np.linalg.LinAlgError:
            continue
    return None


def _chol_logdet_inv(S):
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None, None
    Linv = np.linalg.inv(L)
    return 2.0 * np.sum(np.log(np.diag(L))), Linv.T @ Linv


def _newton_center(x, phi, grad_hess, Z, max_steps):
    """Damped Newton on ``phi``, restricted to steps ``dx = Z dz`` when a
    null-space basis ``Z`` of the equality constraints is given. Returns
    ``(x, steps, converged)``."""
    for step in range(1, max_steps + 1):
        g, H = grad_hess(x)
        if Z is not None:
            g_red, H_red = Z.T @ g, Z.T @ H @ Z
        else:
            g_red, H_red = g, H
        try:
            dz = -np.linalg.solve(H_red, g_red)
        except np.linalg.LinAlgError:
            dz = -np.linalg.lstsq(H_red, g_red, rcond=None)[0]
        dx = dz if Z is None else Z @ dz
        decrement = float(-g @ dx)
        if decrement / 2.0 <= NEWTON_TOL:
            return x, step, True
        f0 = phi(x)
        s = 1.0
        while s > 1e-14:
            x_new = x + s * dx
            f1 = phi(x_new)
            if f1 <= f0 - 0.25 * s * decrement:
                break
            s *= 0.5
        else:
            return x, step, True
        if f0 - f1 <= 1e-15 * max(1.0, abs(f0)):
            # stalled at working precision
            return x_new, step, True
        x = x_new
    return x, max_steps, False


def _barrier_reduced(sub: _Sub, gap_tol: float, cap: int):
    a, sig, lo, hi = sub.a, sub.sigma, sub.u_lo, sub.u_hi
    u = _interior_start(sub)
    if u is None:
        # the feasible set has empty interior; kappa_upper is the only candidate
        return sub.u_hi, None, float("nan"), 0, [], True
    nu = 3 * sub.k
    t = nu / max(float(np.sum(np.abs(a) * (hi - lo))), 1e-12)
    history, total_steps = [], 0

    def S_of(u):
        return np.diag(sub.G * (1.0 + (1.0 - sub.r) * u)) - sub.A

    def phi(u):
        if np.any(u <= lo) or np.any(u >= hi):
            return np.inf
        logdet, _ = _chol_logdet_inv(S_of(u))
        if logdet is None:
            return np.inf
        return t * a @ u - logdet - np.sum(np.log(u - lo)) - np.sum(np.log(hi - u))

    def grad_hess(u):
        _, Sinv = _chol_logdet_inv(S_of(u))
        b1, b2 = u - lo, hi - u
        g = t * a - sig * np.diag(Sinv) - 1.0 / b1 + 1.0 / b2
        H = np.outer(sig, sig) * Sinv ** 2 + np.diag(1.0 / b1 ** 2 + 1.0 / b2 ** 2)
        return g, H

    while True:
        u, steps, ok = _newton_center(u, phi, grad_hess, None, cap - total_steps)
        total_steps += steps
        w = sub.w_from_u(u)
        obj = sub.const + sub.reduced_const + float(a @ u)
        history.append(Iterate(u.copy(), w, recover_kappa(u, w),
                               sub.lambda1(sub.G * (1 + (1 - sub.r) * u)), obj - nu / t))
        if not ok:
            return u, None, obj - nu / t, total_steps, history, False
        if nu / t < gap_tol:
            return u, None, obj - nu / t, total_steps, history, True
        t *= BARRIER_MU


def _barrier_full(sub: _Sub, gap_tol: float, cap: int):
    k = sub.k
    kl, ku, F, G = sub.kl, sub.ku, sub.F, sub.G
    u0 = _interior_start(sub)
    if u0 is None:
        return sub.u_hi, None, float("nan"), 0, [], True
    x = np.concatenate([u0, sub.w_from_u(u0)])
    cost = np.concatenate([sub.s, sub.c])
    # steps (du, -du / beta) leave r beta w + r u unchanged
    Z = np.vstack([np.eye(k), -np.diag(1.0 / sub.beta)])
    nu = 4 * k
    t = nu / max(float(np.sum(np.abs(sub.a) * (sub.u_hi - sub.u_lo))), 1e-12)
    history, total_steps = [], 0

    def parts(x):
        u, w = x[:k], x[k:]
        return u, w, u - kl * w, ku * w - u, np.diag(F * w + G * u) - sub.A

    def phi(x):
        u, w, b1, b2, S = parts(x)
        if np.any(b1 <= 0) or np.any(b2 <= 0) or np.any(w <= 0):
            return np.inf
        logdet, _ = _chol_logdet_inv(S)
        if logdet is None:
            return np.inf
        return (t * cost @ x - logdet - np.sum(np.log(b1)) - np.sum(np.log(b2))
                - np.sum(np.log(w)))

    def grad_hess(x):
        u, w, b1, b2, S = parts(x)
        _, Sinv = _chol_logdet_inv(S)
        d = np.diag(Sinv)
        P = Sinv ** 2
        gu = t * sub.s - G * d - 1.0 / b1 + 1.0 / b2
        gw = t * sub.c - F * d + kl / b1 - ku / b2 - 1.0 / w
        i1, i2 = 1.0 / b1 ** 2, 1.0 / b2 ** 2
        Huu = np.outer(G, G) * P + np.diag(i1 + i2)
        Huw = np.outer(G, F) * P + np.diag(-kl * i1 - ku * i2)
        Hww = np.outer(F, F) * P + np.diag(kl ** 2 * i1 + ku ** 2 * i2 + 1.0 / w ** 2)
        H = np.block([[Huu, Huw], [Huw.T, Hww]])
        return np.concatenate([gu, gw]), H

    while True:
        x, steps, ok = _newton_center(x, phi, grad_hess, Z, cap - total_steps)
        total_steps += steps
        u, w = x[:k], x[k:]
        obj = sub.const + float(cost @ x)
        history.append(Iterate(u.copy(), w.copy(), recover_kappa(u, w),
                               sub.lambda1(F * w + G * u), obj - nu / t))
        if not ok:
            return u, w, obj - nu / t, total_steps, history, False
        if nu / t < gap_tol:
            return u, w, obj - nu / t, total_steps, history, True
        t *= BARRIER_MU


# cutting-plane method

def _cutting_plane(sub: _Sub, form: str, tol: float, lp_tol: float, cap: int):
    lp = _CutLP(sub, form, lp_tol)
    history = []
    u = sub.u_lo
    lower = float("nan")
    for it in range(1, cap + 1):
        u, w, lower = lp.solve()
        y = sub.G * (1 + (1 - sub.r) * u) if form == "reduced" else sub.F * w + sub.G * u
        vals, vecs = np.linalg.eigh(sub.A - np.diag(y))
        vals, vecs = vals[::-1][:CUTS_PER_ITER], vecs[:, ::-1][:, :CUTS_PER_ITER]
        history.append(Iterate(u.copy(), w.copy(), recover_kappa(u, w), float(vals[0]), lower))
        if vals[0] <= tol:
            return u, w, lower, it, history, True
        for lam, v in zip(vals, vecs.T):
            if lam > tol:
                lp.add_cut(v)
    return u, w, lower, cap, history, False


def _restore(sub: _Sub, u: np.ndarray) -> np.ndarray:
    """Push a slightly infeasible cutting-plane point inside by a uniform
    diagonal shift, mapped back to u."""
    for _ in range(5):
        y = sub.G * (1.0 + (1.0 - sub.r) * u)
        lam = sub.lambda1(y)
        if lam <= 0:
            break
        u = np.minimum(((y + lam) / sub.G - 1.0) / (1.0 - sub.r), sub.u_hi)
    return u


class _CutLP:
    """LP relaxation of the LMI, grown one eigenvector cut at a time."""

    def __init__(self, sub: _Sub, form: str, lp_tol: float):
        self.sub = sub
        self.form = form
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.options = {"primal_feasibility_tolerance": lp_tol,
                        "dual_feasibility_tolerance": lp_tol}
        k = sub.k
        if form == "reduced":
            self.c = sub.a
            self.const = sub.const + sub.reduced_const
            self.bounds = list(zip(sub.u_lo, sub.u_hi))
            self.A_eq = self.b_eq = self.box_rows = None
        else:
            self.c = np.concatenate([sub.s, sub.c])
            self.const = sub.const
            eye = np.eye(k)
            # kappa_lower w - u <= 0 and u - kappa_upper w <= 0
            self.box_rows = np.vstack([np.hstack([-eye, np.diag(sub.kl)]),
                                       np.hstack([eye, -np.diag(sub.ku)])])
            self.A_eq = np.hstack([np.diag(sub.r), np.diag(sub.r * sub.beta)])
            self.b_eq = np.ones(k)
            self.bounds = [(None, None)] * k + [(0, None)] * k

    def add_cut(self, v: np.ndarray) -> None:
        sub = self.sub
        v2 = v * v
        vav = float(v @ sub.A @ v)
        if self.form == "reduced":
            # v'Av - sum v_i^2 G_i (1 + (1 - r_i) u_i) <= 0
            self.rows.append(-v2 * sub.sigma)
            self.rhs.append(float(np.sum(v2 * sub.G)) - vav)
        else:
            self.rows.append(np.concatenate([-v2 * sub.G, -v2 * sub.F]))
            self.rhs.append(-vav)

    def solve(self):
        A_ub = np.array(self.rows) if self.rows else None
        b_ub = np.array(self.rhs) if self.rows else None
        if self.box_rows is not None:
            box_rhs = np.zeros(self.box_rows.shape[0])
            A_ub = self.box_rows if A_ub is None else np.vstack([A_ub, self.box_rows])
            b_ub = box_rhs if b_ub is None else np.concatenate([b_ub, box_rhs])
        res = linprog(self.c, A_ub=A_ub, b_ub=b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=self.bounds, method="highs", options=self.options)
        if res.status != 0:
            raise RuntimeError(f"LP relaxation failed: {res.message}")
        k = self.sub.k
        if self.form == "reduced":
            u = res.x
            w = self.sub.w_from_u(u)
        else:
            u, w = res.x[:k], res.x[k:]
        return u, w, float(res.fun) + self.const


# brute-force oracle

ORACLE_MAX_N = 4


def oracle_grid_solve(g: Graph, params: SaisParams, cost: CostModel, grid_points: int = 201,
                      tol: float = 1e-9, cert_tol: float = CERT_TOL) -> AllocationResult:
    """Cheapest point of a uniform kappa grid satisfying ``A - diag(y) <= 0``.

    Every combination of grid values for the first ``n - 1`` nodes is
    enumerated. For each one the smallest feasible grid value of the last node
    follows from the Schur complement: with ``P = Y' - A'`` positive definite
    (checked by batched eigenvalues) feasibility is ``y_n >= a' P^-1 a``. The
    winning point is re-checked with a dense eigenvalue computation.
    """
    n = g.n
    if n > ORACLE_MAX_N:
        raise ValueError(f"grid oracle is limited to n <= {ORACLE_MAX_N}, got {n}")
    params.check_graph(g)
    grids = np.linspace(cost.kappa_lower, cost.kappa_upper, grid_points).T  # (n, k)
    b, d, r = (x[:, None] for x in (params.beta, params.delta, params.r))
    ys = (r * d + grids * d / b) / (r * b + r * grids)
    fs = np.array([eval_cost(_node_cost(cost, i), grids[i]) for i in range(n)])
    A = g.adjacency()

    best_cost, best_idx = np.inf, None
    if n == 1:
        best_idx = (0,) if A[0, 0] - ys[0, 0] <= tol else None
        best_cost = fs[0, 0] if best_idx else np.inf
    else:
        head = n - 1
        a = A[:head, head]
        A_head = A[:head, :head]
        # iterate over the first coordinate, vectorise the remaining prefix
        rest = np.array(list(np.ndindex(*([grid_points] * (head - 1))))) if head > 1 \
            else np.zeros((1, 0), dtype=int)
        for i0 in range(grid_points):
            idx = np.column_stack([np.full(len(rest), i0), rest]).astype(int)
            y_head = ys[np.arange(head), idx]  # (m, head)
            P = y_head[:, :, None] * np.eye(head) - A_head
            pd = np.linalg.eigvalsh(P)[:, 0] > tol
            if not pd.any():
                continue
            bound = np.einsum("i,mi->m", a, np.linalg.solve(P[pd], np.broadcast_to(a, (pd.sum(), head))[..., None])[..., 0])
            last = np.searchsorted(ys[head], bound - tol * (1 + np.abs(bound)), side="left")
            ok = last < grid_points
            if not ok.any():
                continue
            cand = idx[pd][ok]
            total = fs[np.arange(head), cand].sum(axis=1) + fs[head, last[ok]]
            j = int(np.argmin(total))
            if total[j] < best_cost:
                best_cost = float(total[j])
                best_idx = tuple(cand[j]) + (int(last[ok][j]),)

    if best_idx is None:
        nan = np.full(n, np.nan)
        return AllocationResult(nan, nan, nan, nan, float("nan"), float("nan"), "infeasible",
                                method="grid")
    kappa = grids[np.arange(n), list(best_idx)]
    lam = float(np.linalg.eigvalsh(A - np.diag(y_from_kappa(params, kappa)))[-1])
    if lam > 10 * tol:
        raise AssertionError(f"grid oracle picked an infeasible point (lambda1={lam:g})")
    u, w = charnes_cooper(params, kappa)
    margin, _ = certify(g, params.with_kappa(kappa), cert_tol)
    status = "optimal" if margin < -cert_tol else "marginal"
    return AllocationResult(kappa, u, w, y_from_kappa(params, kappa),
                            float(np.sum(eval_cost(cost, kappa))), margin, status,
                            method="grid")


def _node_cost(cost: CostModel, i: int) -> CostModel:
    return CostModel(*(getattr(cost, f)[i:i + 1] for f in cost.__dataclass_fields__))
