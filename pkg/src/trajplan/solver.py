"""In-house NLP solver: augmented-Lagrangian outer loop, projected L-BFGS inner loop.

Inequalities g(z) >= 0 are folded into the augmented Lagrangian through
max(0, eta - mu g) terms (no slack variables); equality multipliers follow the
classic method-of-multipliers update.  The inner minimizer respects box
bounds by projection and uses backtracking Armijo line search, so the whole
solve is deterministic given (problem, z0, options).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .ocp import NlpProblem


@dataclass(frozen=True)
class SolveOptions:
    outer_iters: int = 50
    inner_iters: int = 300
    tol_feas: float = 1e-4  # equality feasibility
    tol_ineq: float = 1e-6  # allowed inequality undershoot
    tol_grad: float = 1e-4
    mu0: float = 10.0
    penalty_growth: float = 5.0
    target_shrink: float = 0.2  # per-outer tightening of the feasibility target
    history: int = 10
    armijo_c: float = 1e-4
    ls_max_trials: int = 40
    multiplier_cap: float = 1e8
    mu_cap: float = 1e12
    # a feasible iterate whose inner solve cannot improve the augmented
    # Lagrangian by this relative amount counts as stationary
    plateau_rtol: float = 1e-9
    # inequalities are tightened by this shift inside the solve, so the raw
    # rows come out strictly satisfied without grinding mu upward
    ineq_shift: float = 1e-4
    # "acceptable" termination: this many consecutive feasible outers whose
    # relative objective progress stays below plateau_window_rtol
    plateau_window: int = 2
    plateau_window_rtol: float = 1e-3

    def __post_init__(self):
        if min(self.outer_iters, self.inner_iters, self.history) < 1:
            raise ConfigError("iteration counts must be positive")
        for t in (self.tol_feas, self.tol_grad, self.tol_ineq):
            if not 0 < t < 1:
                raise ConfigError("tolerances must lie in (0, 1)")
        if self.mu0 <= 0 or self.penalty_growth <= 1:
            raise ConfigError("penalty parameters out of range")


@dataclass
class SolveReport:
    status: str  # converged | max_iters | diverged
    outer_iters: int
    inner_iters: int
    feasibility: float  # max violation across eq and ineq
    objective: float
    wall_time: float
    eq_violation: float = 0.0
    ineq_violation: float = 0.0
    stationarity: float = float("inf")  # projected AL gradient at exit

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class _Evaluator:
    """Caches one (z -> everything) evaluation; the AL value and gradient share it."""

    def __init__(self, problem: NlpProblem):
        self.problem = problem
        self.evals = 0

    def __call__(self, z: np.ndarray):
        self.evals += 1
        f, grad = self.problem.objective(z)
        if self.problem.eq is not None:
            c, jc = self.problem.eq(z)
        else:
            c, jc = np.zeros(0), None
        if self.problem.ineq is not None:
            g, jg = self.problem.ineq(z)
        else:
            g, jg = np.zeros(0), None
        return f, grad, c, jc, g, jg


def _al_value_grad(ev_out, lam, eta, mu, shift=0.0):
    f, grad, c, jc, g, jg = ev_out
    val = f
    gr = grad.copy()
    if len(c):
        val += float(-lam @ c + 0.5 * mu * (c @ c))
        gr += jc.T @ (mu * c - lam)
    if len(g):
        t = np.maximum(0.0, eta - mu * (g - shift))
        val += float(np.sum(t * t - eta * eta)) / (2.0 * mu)
        gr -= jg.T @ t
    return val, gr


def _project(z, lo, hi):
    return np.minimum(np.maximum(z, lo), hi)


def _violations(c: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    eq_v = float(np.max(np.abs(c))) if len(c) else 0.0
    in_v = float(max(0.0, -np.min(g))) if len(g) else 0.0
    return eq_v, in_v


def _inner_minimize(ev, z, lam, eta, mu, lo, hi, opts: SolveOptions, gtol: float,
                    shift: float, accepted_values: list | None):
    """Projected L-BFGS with Armijo backtracking.

    Returns (z, last_eval, iters, stationarity, al_decrease).  Stops on the
    projected-gradient tolerance, the iteration cap, or when the line search
    cannot make progress.
    """
    out = ev(z)
    val, grad = _al_value_grad(out, lam, eta, mu, shift)
    val0 = val
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    iters = 0
    if accepted_values is not None:
        accepted_values.append(val)

    def stationarity(zz, gg):
        return float(np.max(np.abs(zz - _project(zz - gg, lo, hi))))

    while iters < opts.inner_iters:
        st = stationarity(z, grad)
        if st <= gtol:
            break
        d = _lbfgs_direction(grad, s_hist, y_hist)
        if float(d @ grad) >= 0.0:
            s_hist.clear()
            y_hist.clear()
            d = -grad

        step = 1.0
        accepted = False
        for _ in range(opts.ls_max_trials):
            z_new = _project(z + step * d, lo, hi)
            dz = z_new - z
            slope = float(grad @ dz)
            if slope >= 0.0 or not np.any(dz):
                step *= 0.5
                continue
            out_new = ev(z_new)
            val_new, grad_new = _al_value_grad(out_new, lam, eta, mu, shift)
            if math.isfinite(val_new) and val_new <= val + opts.armijo_c * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if s_hist:
                # quasi-Newton direction failed; retry from steepest descent
                s_hist.clear()
                y_hist.clear()
                iters += 1
                continue
            break

        s = z_new - z
        y = grad_new - grad
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > opts.history:
                s_hist.pop(0)
                y_hist.pop(0)
        z, val, grad, out = z_new, val_new, grad_new, out_new
        if accepted_values is not None:
            accepted_values.append(val)
        iters += 1

    return z, out, iters, stationarity(z, grad), val0 - val


def _lbfgs_direction(grad: np.ndarray, s_hist, y_hist) -> np.ndarray:
    q = grad.copy()
    if not s_hist:
        return -q
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s_last, y_last = s_hist[-1], y_hist[-1]
    q *= float(s_last @ y_last) / float(y_last @ y_last)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def solve(
    problem: NlpProblem,
    z0: np.ndarray,
    opts: SolveOptions = SolveOptions(),
    inner_al_values: list | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Minimize the problem from z0; never raises on numerical failure.

    Safeguarded method of multipliers: each outer iteration minimizes the
    augmented Lagrangian to a progressively tighter inner tolerance; when the
    feasibility target is met the multipliers update and the target shrinks,
    otherwise the penalty grows.  Status is `converged` only when equalities
    are within tol_feas, inequalities above -tol_ineq, and the iterate is
    stationary (projected AL gradient within tol_grad, or the inner solve can
    no longer improve the AL by more than a plateau_rtol fraction).
    """
    t0 = time.perf_counter()
    lo = problem.lo if problem.lo is not None else np.full(problem.n, -np.inf)
    hi = problem.hi if problem.hi is not None else np.full(problem.n, np.inf)
    z = _project(np.asarray(z0, dtype=float).copy(), lo, hi)

    ev = _Evaluator(problem)
    out = ev(z)
    lam = np.zeros(len(out[2]))
    eta = np.zeros(len(out[4]))
    mu = opts.mu0

    status = "max_iters"
    total_inner = 0
    outer_done = 0
    st = math.inf
    feas_target = 0.1
    gtol = max(opts.tol_grad, 0.1)
    shift = opts.ineq_shift
    calm_streak = 0  # consecutive feasible, low-progress outers

    for outer in range(opts.outer_iters):
        outer_done = outer + 1
        if inner_al_values is not None and inner_al_values:
            inner_al_values.append(None)  # separator between inner runs
        z, out, inner, st, al_drop = _inner_minimize(
            ev, z, lam, eta, mu, lo, hi, opts, gtol, shift, inner_al_values
        )
        total_inner += inner
        f, _, c, _, g, _ = out
        eq_v, in_v = _violations(c, g)  # raw violations gate convergence

        if not math.isfinite(f) or not math.isfinite(eq_v) or not math.isfinite(in_v):
            status = "diverged"
            break
        feasible = eq_v <= opts.tol_feas and in_v <= opts.tol_ineq
        rel_drop = al_drop / max(1.0, abs(f))
        calm_streak = calm_streak + 1 if (feasible and rel_drop <= opts.plateau_window_rtol) else 0
        if feasible and (
            st <= opts.tol_grad
            or rel_drop <= opts.plateau_rtol
            or calm_streak >= opts.plateau_window
        ):
            status = "converged"
            break

        # the schedule works on the shifted inequalities
        in_shifted = float(max(0.0, shift - np.min(g))) if len(g) else 0.0
        viol = max(eq_v, in_shifted)
        if viol <= max(feas_target, 0.5 * opts.tol_feas):
            # on-schedule: update multipliers, tighten targets
            lam = lam - mu * c
            if len(g):
                eta = np.maximum(0.0, eta - mu * (g - shift))
                if float(np.max(eta, initial=0.0)) > opts.multiplier_cap:
                    status = "diverged"
                    break
            feas_target = max(feas_target * opts.target_shrink, 0.25 * opts.tol_feas)
            gtol = max(gtol * opts.target_shrink, opts.tol_grad)
        else:
            # behind schedule: raise the penalty
            mu *= opts.penalty_growth
            if mu > opts.mu_cap:
                status = "diverged"
                break

    f, _, c, _, g, _ = out
    eq_v, in_v = _violations(c, g)
    report = SolveReport(
        status=status,
        outer_iters=outer_done,
        inner_iters=total_inner,
        feasibility=max(eq_v, in_v),
        objective=float(f),
        wall_time=time.perf_counter() - t0,
        eq_violation=eq_v,
        ineq_violation=in_v,
        stationarity=st,
    )
    return z, report


def warm_start_metrics(
    problem: NlpProblem,
    candidates: list[tuple[str, np.ndarray]],
    opts: SolveOptions = SolveOptions(),
) -> dict[str, tuple[np.ndarray, SolveReport]]:
    """Solve the same problem from several initial vectors under identical options.

    Returns {name: (z_star, report)}; per-candidate failures are recorded in
    the reports rather than raised.
    """
    if not candidates:
        raise ValueError("warm_start_metrics needs at least one candidate")
    results: dict[str, tuple[np.ndarray, SolveReport]] = {}
    for name, z0 in candidates:
        results[name] = solve(problem, z0, opts)
    return results
