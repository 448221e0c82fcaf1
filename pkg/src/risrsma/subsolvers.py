"""Convex block subproblems: power allocation, transmissive coefficients and
common-rate allocation, solved by a self-contained primal log-barrier interior
point method with certified KKT residuals.

All subproblems are convex QCQPs of the form

    minimize    0.5 x^T Q0 x + g0^T x + d0
    subject to  0.5 x^T Qi x + gi^T x + di <= 0,   i = 1..m

with every Qi positive semidefinite.  Complex variables are lifted to paired
reals; Hermitian forms become symmetric forms.  The power block substitutes
q_j = sqrt(p_j), which turns the objective and the rate constraints into exact
convex quadratics in q with the ball constraint sum q^2 <= P_t.

The solver certifies optimality with the maximum KKT residual: the barrier
multipliers lambda_i = 1/(t * (-f_i(x))) give a stationarity residual
||grad f0 + sum lambda_i grad f_i||_inf and a duality-gap estimate m/t, both of
which are driven below the tolerance.  Infeasible instances are detected with a
phase-1 slack-minimization pass and reported with the residual slack magnitude.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import Design
from .scenario import SystemConfig
from .wmmse import LN2, WmmseState

FEAS_TOL = 1e-8  # constraint-satisfaction tolerance for accepted points
_STRICT_MARGIN = 1e-9  # minimum interior margin before skipping phase 1


class Quadratic:
    """0.5 * sum_b x[idx_b]^T Q_b x[idx_b] + g^T x + d with index-block structure.

    Blocks may overlap; each Q_b must be symmetric.  Dense problems use a single
    block covering all variables.
    """

    def __init__(self, n, blocks=(), g=None, d=0.0):
        self.n = n
        self.blocks = [
            (np.asarray(idx, dtype=int), np.asarray(q, dtype=float)) for idx, q in blocks
        ]
        self.g = np.zeros(n) if g is None else np.asarray(g, dtype=float)
        self.d = float(d)

    def value(self, x) -> float:
        total = self.g @ x + self.d
        for idx, q in self.blocks:
            xb = x[idx]
            total += 0.5 * (xb @ q @ xb)
        return float(total)

    def grad(self, x) -> np.ndarray:
        out = self.g.copy()
        for idx, q in self.blocks:
            out[idx] += q @ x[idx]
        return out

    def add_hessian(self, h, w=1.0):
        for idx, q in self.blocks:
            h[np.ix_(idx, idx)] += w * q

    def lifted(self, slack_index: int) -> "Quadratic":
        """The phase-1 form f(x) - s <= 0 over the extended variable vector."""
        g = np.zeros(self.n + 1)
        g[: self.n] = self.g
        g[slack_index] = -1.0
        out = Quadratic(self.n + 1, g=g, d=self.d)
        out.blocks = self.blocks  # indices unchanged; slack has no curvature
        return out


@dataclass
class SolverReport:
    """Certificate for one block solve."""

    objective: float
    x: np.ndarray
    kkt_residual: float
    iterations: int
    status: str  # "optimal" | "infeasible" | "max-iterations"
    phase1_slack: float = 0.0


def _constraint_values(constraints, x):
    return np.array([c.value(x) for c in constraints])


def _newton_center(objective, constraints, x, t, max_steps, grad_target, early_exit=None):
    """Damped Newton on the barrier t*f0(x) - sum log(-f_i(x)).

    Returns (x, steps, grad_inf) with x strictly feasible throughout.  The
    optional early_exit(x) callback aborts centering as soon as it holds
    (used by the phase-1 pass).
    """
    n = x.shape[0]
    h0 = np.zeros((n, n))
    objective.add_hessian(h0)
    steps = 0
    best_grad = np.inf
    since_best = 0
    while True:
        vals = _constraint_values(constraints, x)
        grads = np.stack([c.grad(x) for c in constraints])
        phi = t * objective.value(x) - np.sum(np.log(-vals))
        inv = -1.0 / vals  # positive
        phi_grad = t * objective.grad(x) + grads.T @ inv
        grad_inf = float(np.abs(phi_grad).max())
        if grad_inf <= grad_target or steps >= max_steps:
            return x, steps, grad_inf
        if grad_inf < 0.9 * best_grad:
            best_grad, since_best = grad_inf, 0
        else:
            since_best += 1
            if since_best >= 8:
                return x, steps, grad_inf  # floating-point floor reached
        h = t * h0 + (grads * (inv**2)[:, None]).T @ grads
        for c, s in zip(constraints, inv):
            c.add_hessian(h, s)
        dx = _solve_spd(h, -phi_grad)
        gdx = float(phi_grad @ dx)
        if gdx > 0:  # not a descent direction (numerical); fall back to gradient
            dx = -phi_grad
            gdx = -float(phi_grad @ phi_grad)
        lam2 = -gdx
        if lam2 <= 0.0625:
            # quadratic phase (Newton decrement <= 1/4): full step, no Armijo --
            # near the barrier walls the phi decrease is below float resolution
            # while the gradient still contracts quadratically.  Guard against
            # numerically bad directions by rejecting measurable phi increases.
            alpha = 1.0
            while alpha > 1e-14:
                xt = x + alpha * dx
                vt = _constraint_values(constraints, xt)
                if vt.max() < 0:
                    phit = t * objective.value(xt) - np.sum(np.log(-vt))
                    if phit <= phi + 1e-8 * (1.0 + abs(phi)):
                        break
                alpha *= 0.5
            if alpha <= 1e-14:
                return x, steps, grad_inf
        else:
            if 0.5 * lam2 <= 1e-17 * (1.0 + abs(phi)):
                return x, steps, grad_inf  # progress below floating-point resolution
            alpha = 1.0
            while alpha > 1e-14:
                xt = x + alpha * dx
                vt = _constraint_values(constraints, xt)
                if vt.max() < 0:
                    phit = t * objective.value(xt) - np.sum(np.log(-vt))
                    if phit <= phi + 1e-4 * alpha * gdx:
                        break
                alpha *= 0.5
            else:
                return x, steps, grad_inf  # stalled on the feasibility boundary
        if alpha * np.abs(dx).max() <= 1e-16 * (1.0 + np.abs(x).max()):
            return x, steps, grad_inf
        x = x + alpha * dx
        steps += 1
        if early_exit is not None and early_exit(x):
            return x, steps, grad_inf


def _solve_spd(h, rhs):
    ridge = 0.0
    base = np.trace(h) / h.shape[0]
    for _ in range(8):
        try:
            ch = np.linalg.cholesky(h + ridge * np.eye(h.shape[0]))
            y = np.linalg.solve(ch, rhs)
            return np.linalg.solve(ch.T, y)
        except np.linalg.LinAlgError:
            ridge = max(ridge * 100.0, 1e-12 * max(base, 1.0))
    return np.linalg.lstsq(h, rhs, rcond=None)[0]


def _phase1(constraints, x0, max_steps):
    """Find a strictly feasible point, or certify infeasibility.

    Minimizes the common slack s over (x, s) with f_i(x) <= s, exiting as soon
    as the x-part is strictly feasible with margin.  Returns (x, feasible, slack).
    """
    n = x0.shape[0]
    margin = 1e-7
    vals = _constraint_values(constraints, x0)
    if vals.max() <= -margin:
        return x0, True, 0.0

    def strictly_inside(y):
        return _constraint_values(constraints, y[:n]).max() <= -margin

    lifted = [c.lifted(n) for c in constraints]
    objective = Quadratic(n + 1, g=np.concatenate([np.zeros(n), [1.0]]))
    y = np.concatenate([x0, [vals.max() + 1.0]])
    t = 1.0
    used = 0
    m = len(lifted)
    while used < 4 * max_steps:
        y, steps, _ = _newton_center(
            objective, lifted, y, t, max_steps, 0.0, early_exit=strictly_inside
        )
        used += max(steps, 1)
        if strictly_inside(y):
            return y[:n], True, 0.0
        if m / t <= 1e-9:
            break
        t *= 20.0
    slack = float(max(_constraint_values(constraints, y[:n]).max(), y[n]))
    if slack <= FEAS_TOL:
        # degenerate boundary case: feasible but no strict interior found
        return y[:n], True, max(slack, 0.0)
    return y[:n], False, slack


def solve_qcqp(objective, constraints, x0, tol=1e-6, max_newton=200, barrier_mu=20.0):
    """Minimize a convex quadratic subject to convex quadratic constraints.

    Returns (x, SolverReport).  status == "optimal" certifies a KKT residual
    below tol; "infeasible" carries the phase-1 slack magnitude.
    """
    m = len(constraints)
    x = np.asarray(x0, dtype=float).copy()
    iterations = 0
    vals = _constraint_values(constraints, x)
    if vals.max() > -_STRICT_MARGIN:
        x, feasible, slack = _phase1(constraints, x, max_newton)
        if not feasible:
            return np.asarray(x0, dtype=float), SolverReport(
                objective=objective.value(np.asarray(x0, dtype=float)),
                x=np.asarray(x0, dtype=float),
                kkt_residual=np.inf,
                iterations=iterations,
                status="infeasible",
                phase1_slack=slack,
            )
        if _constraint_values(constraints, x).max() >= 0:
            # boundary-locked: no strict interior to center in
            return x, SolverReport(
                objective=objective.value(x),
                x=x,
                kkt_residual=np.inf,
                iterations=iterations,
                status="max-iterations",
            )
    t = 1.0
    status = "max-iterations"
    kkt = np.inf
    gap_stages = 0
    for _ in range(64):
        # rough centering while the gap still dominates, tight once it is small
        grad_target = 0.3 * tol * t if m / t <= tol else 1e-4 * (1.0 + t)
        x, steps, grad_inf = _newton_center(objective, constraints, x, t, max_newton, grad_target)
        iterations += steps
        kkt = max(grad_inf / t, m / t)
        if kkt <= tol:
            status = "optimal"
            break
        if m / t <= tol:
            # gap certified; a couple more stages for stationarity, then stop
            # rather than push t into floating-point breakdown
            gap_stages += 1
            if gap_stages >= 3:
                break
        t *= barrier_mu
    report = SolverReport(
        objective=objective.value(x),
        x=x,
        kkt_residual=float(kkt),
        iterations=iterations,
        status=status,
    )
    return x, report


def lift_hermitian(psi) -> np.ndarray:
    """Real symmetric lift of a Hermitian form: f^H Psi f = [Re f; Im f]^T S [Re f; Im f]."""
    p, q = psi.real, psi.imag
    return np.block([[p, -q], [q, p]])


def lift_row(theta) -> np.ndarray:
    """Real lift of Re{theta f} as a linear form over [Re f; Im f]."""
    return np.concatenate([theta.real, -theta.imag])


@dataclass
class SubproblemData:
    """Averaged coefficients plus constraint constants, ready to assemble the
    quadratic interference terms and linear signal terms of the blocks.

    Arrays are indexed [stream kind (0=common, 1=private), user].  v_bar and
    every assembled WMSE value use the natural-log convention, in which the
    stored weights are exact minimizers and 1 - xi is the surrogate rate in
    nats; common rates and the QoS threshold (bits/s/Hz) therefore enter the
    constraints scaled by ln 2.
    """

    t_bar: np.ndarray  # (2, K)
    psi_bar: np.ndarray  # (2, K, N, N)
    theta_bar: np.ndarray  # (2, K, N)
    v_bar: np.ndarray  # (2, K), natural-log convention
    weights: np.ndarray  # (K,)
    total_power: float
    qos_threshold: float  # bits/s/Hz
    noise_var: float
    common_enabled: bool = True

    @classmethod
    def from_state(
        cls,
        state: WmmseState,
        config: SystemConfig,
        qos_threshold: float | None = None,
        common_enabled: bool = True,
    ) -> "SubproblemData":
        return cls(
            t_bar=state.t_bar,
            psi_bar=state.psi_bar,
            theta_bar=state.theta_bar,
            v_bar=state.v_bar_nat,
            weights=config.weights,
            total_power=config.max_power,
            qos_threshold=config.qos_threshold if qos_threshold is None else qos_threshold,
            noise_var=config.noise_variance,
            common_enabled=common_enabled,
        )

    @property
    def num_users(self):
        return self.t_bar.shape[1]

    def quad_terms(self, f) -> np.ndarray:
        """A[i, k, j] = f_j^H Psi_bar[i, k] f_j, shape (2, K, K+1); always >= 0."""
        return np.einsum("nj,iknq,qj->ikj", np.conj(f), self.psi_bar, f).real

    def lambda_terms(self, power, f) -> np.ndarray:
        """Quadratic interference terms: sum over private streams of p_j f_j^H Psi f_j."""
        a = self.quad_terms(f)
        return a[:, :, 1:] @ power[1:]

    def mu_terms(self, power, f) -> np.ndarray:
        """Signal terms sqrt(p_i) Re{theta_bar f_i} per stream kind and user."""
        k = self.num_users
        mu = np.zeros((2, k))
        mu[0] = np.sqrt(power[0]) * (self.theta_bar[0] @ f[:, 0]).real
        own = np.einsum("kn,nk->k", self.theta_bar[1], f[:, 1:]).real
        mu[1] = np.sqrt(power[1:]) * own
        return mu

    def xi_bar(self, power, f) -> np.ndarray:
        """Assembled sample-average WMSE values (2, K) at fixed equalizers and
        weights, natural-log convention."""
        a = self.quad_terms(f)
        lam = a[:, :, 1:] @ power[1:]
        mu = self.mu_terms(power, f)
        xi = lam + self.t_bar * self.noise_var - 2.0 * mu + self.v_bar
        xi[0] += power[0] * a[0, :, 0]
        return xi

    def xi_bar_bits(self, power, f) -> np.ndarray:
        """xi values mapped so that 1 - xi is the surrogate rate in bits/s/Hz
        (the convention the common-rate LP operates in)."""
        return 1.0 - (1.0 - self.xi_bar(power, f)) / LN2

    def p4_objective(self, design: Design) -> float:
        """sum_k u_k (xi_bar_private_k - ln2 * C_k); equals sum(u) minus ln2
        times the surrogate WASR bound, so descent here is WASR ascent."""
        xi = self.xi_bar(design.power, design.transmissive)
        return float(self.weights @ (xi[1] - LN2 * design.common_rates))

    def constraint_residuals(self, design: Design):
        """(common budget, QoS) residuals; <= 0 means satisfied."""
        xi = self.xi_bar(design.power, design.transmissive)
        budget = xi[0] + LN2 * design.common_rates.sum() - 1.0 if self.common_enabled else None
        qos = xi[1] - LN2 * design.common_rates - 1.0 + LN2 * self.qos_threshold
        return budget, qos

    def dump_json(self, path):
        """Dump the averaged coefficient matrices for offline oracle comparison."""

        def c2pair(arr):
            return np.stack([arr.real, arr.imag], axis=-1).tolist()

        payload = {
            "t_bar": self.t_bar.tolist(),
            "psi_bar": c2pair(self.psi_bar),
            "theta_bar": c2pair(self.theta_bar),
            "v_bar": self.v_bar.tolist(),
            "weights": self.weights.tolist(),
            "total_power": self.total_power,
            "qos_threshold": self.qos_threshold,
            "noise_var": self.noise_var,
            "common_enabled": self.common_enabled,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)


def _best_of(objective, constraints, x_solved, x_incumbent):
    """Return whichever point is better, preferring feasible descent.

    Guarantees the block never returns an objective above the incumbent's when
    the incumbent is itself feasible.
    """
    inc_ok = _constraint_values(constraints, x_incumbent).max() <= FEAS_TOL
    if inc_ok and objective.value(x_incumbent) < objective.value(x_solved):
        return x_incumbent
    return x_solved


def _power_block(data: SubproblemData, design: Design):
    """Build the q-space QCQP for the power block (q_j = sqrt(p_j))."""
    k = data.num_users
    cols = np.arange(0 if data.common_enabled else 1, k + 1)
    n = cols.shape[0]
    a = data.quad_terms(design.transmissive)  # (2, K, K+1)
    b_c = (data.theta_bar[0] @ design.transmissive[:, 0]).real  # (K,)
    b_p = np.einsum("kn,nk->k", data.theta_bar[1], design.transmissive[:, 1:]).real
    const = data.t_bar * data.noise_var + data.v_bar  # (2, K)
    c_sum = LN2 * design.common_rates.sum()
    u = data.weights
    priv = cols >= 1  # mask of private columns within the variable vector

    def diag_quad(coeffs, g=None, d=0.0):
        return Quadratic(n, blocks=[(np.arange(n), 2.0 * np.diag(coeffs))], g=g, d=d)

    obj_diag = np.zeros(n)
    obj_diag[priv] = u @ a[1, :, 1:]
    obj_g = np.zeros(n)
    obj_g[priv] = -2.0 * u * b_p
    obj_d = float(u @ (const[1] - LN2 * design.common_rates))
    objective = diag_quad(obj_diag, obj_g, obj_d)

    constraints = []
    if data.common_enabled:
        for i in range(k):
            coeffs = a[0, i, cols]
            g = np.zeros(n)
            g[0] = -2.0 * b_c[i]
            constraints.append(diag_quad(coeffs, g, const[0, i] + c_sum - 1.0))
    for i in range(k):
        coeffs = np.zeros(n)
        coeffs[priv] = a[1, i, 1:]
        g = np.zeros(n)
        g[np.searchsorted(cols, i + 1)] = -2.0 * b_p[i]
        constraints.append(
            diag_quad(
                coeffs, g,
                const[1, i] - LN2 * design.common_rates[i] - 1.0 + LN2 * data.qos_threshold,
            )
        )
    constraints.append(
        Quadratic(n, blocks=[(np.arange(n), 2.0 * np.eye(n))], d=-data.total_power)
    )
    for j in range(n):
        g = np.zeros(n)
        g[j] = -1.0
        constraints.append(Quadratic(n, g=g))
    return objective, constraints, cols


def solve_power(data: SubproblemData, design: Design, tol=1e-6, max_newton=200):
    """Optimize the power split with F and c fixed.

    Returns (power, SolverReport); the returned objective never exceeds the
    incoming design's value when the incumbent is feasible.
    """
    objective, constraints, cols = _power_block(data, design)
    x0 = np.sqrt(np.maximum(design.power[cols], 0.0))
    x, report = solve_qcqp(objective, constraints, x0, tol=tol, max_newton=max_newton)
    if report.status == "infeasible":
        return design.power.copy(), report
    x = _snap_small(objective, constraints, x)
    x = _best_of(objective, constraints, x, x0)
    power = design.power.copy()
    power[cols] = x**2
    report.objective = objective.value(x)
    report.x = x
    return power, report


def _transmissive_block(data: SubproblemData, design: Design):
    """Build the real-lifted QCQP over the active transmissive columns."""
    k = data.num_users
    nn = design.transmissive.shape[0]
    cols = np.arange(0 if data.common_enabled else 1, k + 1)
    n = 2 * nn * cols.shape[0]
    p = design.power
    u = data.weights
    const = data.t_bar * data.noise_var + data.v_bar
    c_sum = LN2 * design.common_rates.sum()

    def slot(j):
        pos = int(np.searchsorted(cols, j))
        return np.arange(2 * nn * pos, 2 * nn * (pos + 1))

    psi_obj = np.einsum("k,knq->nq", u, data.psi_bar[1])
    obj_blocks = [(slot(j), 2.0 * p[j] * lift_hermitian(psi_obj)) for j in cols if j >= 1]
    obj_g = np.zeros(n)
    for i in range(k):
        obj_g[slot(i + 1)] += -2.0 * u[i] * np.sqrt(p[i + 1]) * lift_row(data.theta_bar[1, i])
    obj_d = float(u @ (const[1] - LN2 * design.common_rates))
    objective = Quadratic(n, blocks=obj_blocks, g=obj_g, d=obj_d)

    constraints = []
    if data.common_enabled:
        for i in range(k):
            lifted = lift_hermitian(data.psi_bar[0, i])
            blocks = [(slot(j), 2.0 * p[j] * lifted) for j in cols]
            g = np.zeros(n)
            g[slot(0)] = -2.0 * np.sqrt(p[0]) * lift_row(data.theta_bar[0, i])
            constraints.append(Quadratic(n, blocks=blocks, g=g, d=const[0, i] + c_sum - 1.0))
    for i in range(k):
        lifted = lift_hermitian(data.psi_bar[1, i])
        blocks = [(slot(j), 2.0 * p[j] * lifted) for j in cols if j >= 1]
        g = np.zeros(n)
        g[slot(i + 1)] = -2.0 * np.sqrt(p[i + 1]) * lift_row(data.theta_bar[1, i])
        constraints.append(
            Quadratic(
                n, blocks=blocks, g=g,
                d=const[1, i] - LN2 * design.common_rates[i] - 1.0 + LN2 * data.qos_threshold,
            )
        )
    eye2 = 2.0 * np.eye(2)
    for pos in range(cols.shape[0]):
        base = 2 * nn * pos
        for row in range(nn):
            idx = np.array([base + row, base + nn + row])
            constraints.append(Quadratic(n, blocks=[(idx, eye2)], d=-1.0))
    return objective, constraints, cols, nn


def _pack_f(f, cols, nn):
    parts = []
    for j in cols:
        parts.append(f[:, j].real)
        parts.append(f[:, j].imag)
    return np.concatenate(parts)


def _unpack_f(x, f_template, cols, nn):
    f = f_template.copy()
    for pos, j in enumerate(cols):
        base = 2 * nn * pos
        f[:, j] = x[base : base + nn] + 1j * x[base + nn : base + 2 * nn]
    return f


def solve_transmissive(data: SubproblemData, design: Design, tol=1e-6, max_newton=200):
    """Optimize the transmissive matrix with p and c fixed.

    Per-entry disk constraints |F[n, j]| <= 1 plus the rate constraints; the
    complex columns are lifted to paired reals.
    """
    objective, constraints, cols, nn = _transmissive_block(data, design)
    x0 = _pack_f(design.transmissive, cols, nn)
    x, report = solve_qcqp(objective, constraints, x0, tol=tol, max_newton=max_newton)
    if report.status == "infeasible":
        return design.transmissive.copy(), report
    x = _best_of(objective, constraints, x, x0)
    report.objective = objective.value(x)
    report.x = x
    return _unpack_f(x, design.transmissive, cols, nn), report


def _snap_small(objective, constraints, x, threshold=1e-6):
    """Round near-zero coordinates to exact zero when that keeps feasibility
    and does not worsen the objective (interior-point iterates never sit
    exactly on the nonnegativity boundary)."""
    snapped = np.where(np.abs(x) < threshold, 0.0, x)
    if np.array_equal(snapped, x):
        return x
    if _constraint_values(constraints, snapped).max() <= FEAS_TOL and objective.value(
        snapped
    ) <= objective.value(x) + 1e-15:
        return snapped
    return x


def solve_common_rate(data: SubproblemData, xi_c_bar, xi_p_bar, tol=1e-9):
    """Exact greedy solution of the common-rate LP.

    Maximize sum u_k C_k subject to sum C_k <= min_k (1 - xi_c_bar_k) and
    C_k >= max(0, xi_p_bar_k - 1 + R_th): meet every lower bound, then hand the
    whole remaining budget to the highest-weight user (ties to the lowest
    index).  Infeasible lower bounds are reported, not raised.

    The xi inputs are in the bits convention (1 - xi = rate in bits/s/Hz);
    callers holding natural-log values convert with ``xi_bar_bits``.
    """
    xi_c_bar = np.asarray(xi_c_bar, dtype=float)
    xi_p_bar = np.asarray(xi_p_bar, dtype=float)
    budget = float((1.0 - xi_c_bar).min())
    lower = np.maximum(0.0, xi_p_bar - 1.0 + data.qos_threshold)
    slack = lower.sum() - budget
    if slack > tol:
        return None, SolverReport(
            objective=np.nan,
            x=lower,
            kkt_residual=np.inf,
            iterations=0,
            status="infeasible",
            phase1_slack=float(slack),
        )
    c = lower.copy()
    remaining = max(budget - lower.sum(), 0.0)
    c[int(np.argmax(data.weights))] += remaining
    objective = float(data.weights @ (xi_p_bar - c))
    return c, SolverReport(
        objective=objective, x=c, kkt_residual=0.0, iterations=0, status="optimal"
    )
