"""Yang-Mills-Higgs gradient flow and the Hermitian-metric heat flow.

Both flows are integrated with the fourth-order exponential time
differencing scheme of Cox and Matthews (ETDRK4): the flat part of the
leading linear operator (``-d*d`` on the connection, the Laplacian on the
metric) is handled exactly in Fourier space and the remainder explicitly.
The nonlinear remainder is dealiased with the 2/3 rule.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .bundle import (
    Connection,
    HiggsField,
    comm,
    covariant_derivative,
    curvature,
    dagger,
    holomorphicity_residual,
    l2_norm,
    nabla,
    nabla_antihol,
    nabla_hol,
    theta_bracket,
    wedge_residual,
)
from .functionals import einstein_constant, energy_density, he_residual
from .geometry import TorusGeometry

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """Raised when a step cannot be accepted after the allowed halvings."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


@dataclass(frozen=True)
class HiggsState:
    A: Connection
    theta: HiggsField
    t: float = 0.0

    @property
    def geometry(self) -> TorusGeometry:
        return self.A.geometry


@dataclass
class DiagnosticsRecord:
    t: float
    ymh: float
    theta_sup_residual: float
    theta_l2_residual: float
    dbar_drift: float
    wedge_drift: float
    theta_l2: float
    nabla_theta_l2: float
    lambda_est: float | None
    dt: float
    accepted: bool

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def diagnostics(state: HiggsState, dt: float = 0.0, accepted: bool = True,
                lambda_est: float | None = None) -> DiagnosticsRecord:
    A, th = state.A, state.theta
    geom = state.geometry
    _, sup, l2 = he_residual(A, th)
    nab = covariant_derivative(A, th.comps, "nabla", "10")
    return DiagnosticsRecord(
        t=float(state.t),
        ymh=float(np.real(geom.integrate(energy_density(A, th)))),
        theta_sup_residual=sup,
        theta_l2_residual=l2,
        dbar_drift=holomorphicity_residual(A, th),
        wedge_drift=wedge_residual(th),
        theta_l2=th.l2(),
        nabla_theta_l2=l2_norm(nab, "10", geom),
        lambda_est=lambda_est,
        dt=float(dt),
        accepted=bool(accepted),
    )


# -- flow vector field -------------------------------------------------------

def _del_minus_delbar(A: Connection, psi: np.ndarray) -> np.ndarray:
    """Real-basis components of ``(del_A - delbar_A) psi`` for a 0-form ``psi``."""
    n = A.geometry.complex_dim
    out = np.empty((2 * n, *psi.shape), dtype=complex)
    for k in range(n):
        out[2 * k] = -1j * nabla(A, psi, 2 * k + 1)
        out[2 * k + 1] = 1j * nabla(A, psi, 2 * k)
    return out


def _covariant_codifferential(A: Connection, F: np.ndarray) -> np.ndarray:
    """``(d_A^* F)_b = -sum_a nabla_a F_ab``."""
    d = A.geometry.dim
    return np.stack([-sum(nabla(A, F[a, b], a) for a in range(d)) for b in range(d)])


def ymh_gradient(state: HiggsState) -> tuple[np.ndarray, np.ndarray]:
    """Descent direction of the YMH flow.

    ``dA/dt = -d_A^* F_A - (del_A - delbar_A) sqrt(-1) Lambda [theta, theta^*]``,
    ``dtheta/dt = [theta, Theta]``.
    """
    A, th = state.A, state.theta
    geom = state.geometry
    F = curvature(A)
    psi = geom.lambda_contract(theta_bracket(th))
    dA = -_covariant_codifferential(A, F) - _del_minus_delbar(A, psi)
    Theta, _, _ = he_residual(A, th, F)
    dth = comm(th.comps, Theta[None])
    return dA, dth


def dissipation(state: HiggsState) -> float:
    """``-(d/dt) YMH`` predicted along the flow: ``2||nabla_A Theta||^2 + 4||[theta, Theta]||^2``."""
    A, th = state.A, state.theta
    geom = state.geometry
    Theta, _, _ = he_residual(A, th)
    gT = covariant_derivative(A, Theta, "nabla", "0")
    br = comm(th.comps, Theta[None])
    return 2 * l2_norm(gT, "1", geom) ** 2 + 4 * l2_norm(br, "10", geom) ** 2


@lru_cache(maxsize=64)
def _etd_coefficients(k2_key: tuple, k2_bytes: bytes, dt: float, m: int = 32):
    """Cox-Matthews ETDRK4 weights for the scalar symbol ``z = -dt k^2``.

    Evaluated with the contour average of Kassam and Trefethen so that the
    ``z -> 0`` limit is free of cancellation.  Returns ``(E, E2, Q, f1, f2, f3)``
    with the ``dt`` factors already folded into ``Q`` and ``f_i``.
    """
    k2 = np.frombuffer(k2_bytes).reshape(k2_key)
    z = -dt * k2
    roots = np.exp(1j * np.pi * (np.arange(1, m + 1) - 0.5) / m)
    lr = z[..., None] + roots
    ez, ez2 = np.exp(lr), np.exp(lr / 2)
    Q = dt * np.mean((ez2 - 1) / lr, axis=-1).real
    f1 = dt * np.mean((-4 - lr + ez * (4 - 3 * lr + lr**2)) / lr**3, axis=-1).real
    f2 = dt * np.mean((2 + lr + ez * (lr - 2)) / lr**3, axis=-1).real
    f3 = dt * np.mean((-4 - 3 * lr - lr**2 + ez * (4 - lr)) / lr**3, axis=-1).real
    return np.exp(z), np.exp(z / 2), Q, f1, f2, f3


def _zero_symbol_weights(dt: float):
    # the same weights at z = 0 (used for the kernel of the linear part)
    return 1.0, 1.0, dt / 2, dt / 6, dt / 6, dt / 6


def _etdrk4(u, nonlinear, apply):
    """One ETDRK4 step for ``u' = L u + N(u)``.

    ``apply(x, i)`` multiplies ``x`` by the i-th weight function of ``L``
    (0: ``E``, 1: ``E2``, 2: ``Q``, 3-5: ``f1, f2, f3``).  The scheme is exact
    for constant ``N``, so steady states of the full equation stay fixed.
    """
    Nu = nonlinear(u)
    E2u = apply(u, 1)
    a = E2u + apply(Nu, 2)
    Na = nonlinear(a)
    b = E2u + apply(Na, 2)
    Nb = nonlinear(b)
    c = apply(a, 1) + apply(2 * Nb - Nu, 2)
    Nc = nonlinear(c)
    return apply(u, 0) + apply(Nu, 3) + apply(2 * (Na + Nb), 4) + apply(Nc, 5)


def _symbol_weights(geom: TorusGeometry, dt: float):
    k2 = np.ascontiguousarray(geom.k_squared, dtype=float)
    return _etd_coefficients(k2.shape, k2.tobytes(), float(dt))


def _one_form_apply(geom: TorusGeometry, dt: float):
    """Weight functions of ``L = -d*d`` on real 1-forms, per Fourier mode.

    ``-d*d`` acts as ``-|k|^2`` on the transverse part and as 0 on the
    longitudinal part ``k (k . a) / |k|^2``.
    """
    weights = _symbol_weights(geom, dt)
    zero = _zero_symbol_weights(dt)
    ks = geom.wavenumbers
    k2 = geom.k_squared
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)

    def apply(a: np.ndarray, i: int) -> np.ndarray:
        ex = (Ellipsis,) + (None,) * (a.ndim - 1 - geom.dim)
        ah = geom.fft(a)
        w = weights[i][ex]
        long_ = sum(k[ex] * ah[j] for j, k in enumerate(ks)) * inv[ex]
        out = np.stack([w * ah[j] + (zero[i] - w) * k[ex] * long_ for j, k in enumerate(ks)])
        return geom.ifft(out)

    return apply


def _flat_codiff(geom: TorusGeometry, a: np.ndarray) -> np.ndarray:
    """``d*d`` of a 1-form with the flat metric."""
    return geom.codifferential(geom.exterior_derivative(a, 1), 2)


def rk4_step(state: HiggsState, dt: float, dealias: bool = True) -> HiggsState:
    """One exponential RK4 step of the YMH flow (no acceptance test)."""
    geom = state.geometry
    nA = geom.dim
    apply_A = _one_form_apply(geom, dt)
    zero = _zero_symbol_weights(dt)

    def apply(u, i):
        return np.concatenate([apply_A(u[:nA], i), zero[i] * u[nA:]])

    def nonlinear(u):
        s = HiggsState(Connection(geom, u[:nA]), HiggsField(geom, u[nA:]))
        dA, dth = ymh_gradient(s)
        dA = dA + _flat_codiff(geom, u[:nA])
        if dealias:
            dA, dth = geom.dealias(dA), geom.dealias(dth)
        return np.concatenate([dA, dth])

    u = _etdrk4(np.concatenate([state.A.coeffs, state.theta.comps]), nonlinear, apply)
    a, th = u[:nA], u[nA:]
    a = 0.5 * (a - dagger(a))  # remove round-off from anti-Hermiticity
    return HiggsState(Connection(geom, a), HiggsField(geom, th), state.t + dt)


def euler_step(state: HiggsState, dt: float) -> HiggsState:
    """Plain explicit Euler step, used as an independent reference."""
    dA, dth = ymh_gradient(state)
    geom = state.geometry
    return HiggsState(Connection(geom, state.A.coeffs + dt * dA),
                      HiggsField(geom, state.theta.comps + dt * dth), state.t + dt)


# -- adaptive driver ---------------------------------------------------------

@dataclass
class FlowOptions:
    dt0: float = 1e-3
    t_max: float = 1.0
    target_residual: float = 0.0     # stop when sup|Theta| drops below
    descent_rtol: float = 1e-12
    drift_budget: float = 1e-10      # allowed growth of constraint residuals per step
    max_halvings: int = 20
    dt_max: float = 0.05
    growth: float = 1.25
    energy_step: float = 0.5         # max |Delta ymh| per step, relative to the current ymh
    adaptive: bool = True
    dealias: bool = True
    store_every: int = 1             # keep every k-th accepted state (0 keeps none)
    init_tol: float = 1e-6


def _constraint_level(state: HiggsState) -> float:
    return holomorphicity_residual(state.A, state.theta) + wedge_residual(state.theta)


def flow_step(state: HiggsState, dt: float, opts: FlowOptions | None = None,
              ymh_now: float | None = None, level_now: float | None = None):
    """Attempt a step; halve ``dt`` on rejection.

    Returns ``(new_state, accepted, dt_used, ymh_new)``.  A step is accepted
    when YMH does not increase (up to ``descent_rtol``), the change of YMH is
    within ``energy_step * ymh`` and the constraint residuals grow by
    less than ``drift_budget``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    opts = opts or FlowOptions()
    geom = state.geometry
    ymh_now = float(np.real(geom.integrate(energy_density(state.A, state.theta)))) if ymh_now is None else ymh_now
    level_now = _constraint_level(state) if level_now is None else level_now
    for attempt in range(opts.max_halvings + 1):
        new = rk4_step(state, dt, opts.dealias)
        if not (np.all(np.isfinite(new.A.coeffs)) and np.all(np.isfinite(new.theta.comps))):
            ok = False
            ymh_new = np.nan
        else:
            ymh_new = float(np.real(geom.integrate(energy_density(new.A, new.theta))))
            descent = ymh_new <= ymh_now + opts.descent_rtol * abs(ymh_now)
            small = abs(ymh_now - ymh_new) <= opts.energy_step * abs(ymh_now)
            drift = _constraint_level(new) - level_now < opts.drift_budget
            ok = descent and (small or not opts.adaptive) and drift
        if ok:
            return new, attempt == 0, dt, ymh_new
        if not opts.adaptive and attempt == 0 and np.isfinite(ymh_new):
            # fixed-step mode: report the failed acceptance test
            raise StepFailure(f"fixed step of size {dt} rejected at t={state.t}")
        dt *= 0.5
    raise StepFailure(f"step rejected after {opts.max_halvings} halvings at t={state.t}")


@dataclass
class FlowResult:
    final: HiggsState
    records: list[DiagnosticsRecord]
    states: list[HiggsState] = field(default_factory=list)
    converged: bool = False


def run_flow(A: Connection, theta: HiggsField, opts: FlowOptions | None = None,
             emit: Callable[[DiagnosticsRecord], None] | None = None,
             t0: float = 0.0, check_initial: bool = True,
             on_step: Callable[[HiggsState, int], None] | None = None) -> FlowResult:
    """Integrate the YMH flow until ``t_max`` or ``sup|Theta| < target_residual``.

    ``emit`` receives every diagnostics record (the initial one included);
    ``on_step`` receives each accepted state with its step count.
    """
    from .bundle import is_higgs_pair

    opts = opts or FlowOptions()
    if check_initial:
        rep = is_higgs_pair(A, theta, opts.init_tol)
        if not rep.passed:
            raise ValueError(f"initial data is not a Higgs pair: {rep.as_dict()}")
    state = HiggsState(A, theta, t0)
    rec = diagnostics(state, dt=0.0)
    records = [rec]
    states = [state] if opts.store_every else []
    if emit:
        emit(rec)
    # an exactly vanishing residual is an equilibrium whatever the target
    converged = rec.theta_sup_residual < opts.target_residual or rec.theta_sup_residual == 0.0
    dt = opts.dt0
    n_acc = 0
    while not converged and state.t < opts.t_max - 1e-14:
        step = min(dt, opts.t_max - state.t)
        try:
            state, first_try, used, _ = flow_step(state, step, opts, rec.ymh,
                                                  rec.dbar_drift + rec.wedge_drift)
        except StepFailure as exc:
            exc.records = records
            raise
        n_acc += 1
        rec = diagnostics(state, dt=used)
        records.append(rec)
        if emit:
            emit(rec)
        if on_step:
            on_step(state, n_acc)
        if opts.store_every and n_acc % opts.store_every == 0:
            states.append(state)
        converged = rec.theta_sup_residual < opts.target_residual or rec.theta_sup_residual == 0.0
        if opts.adaptive:
            dt = min(used * opts.growth, opts.dt_max) if first_try else used
        else:
            dt = opts.dt0
    if opts.store_every and states[-1] is not state:
        states.append(state)
    log.debug("flow stopped at t=%g after %d steps (converged=%s)", state.t, n_acc, converged)
    return FlowResult(state, records, states, converged)


# -- metric heat flow ----------------------------------------------------------

@dataclass(frozen=True)
class MetricState:
    h: np.ndarray          # (*grid, r, r) Hermitian positive definite
    A0: Connection
    theta0: HiggsField
    t: float = 0.0

    @classmethod
    def identity(cls, A0: Connection, theta0: HiggsField) -> "MetricState":
        geom = A0.geometry
        h = np.broadcast_to(np.eye(A0.rank, dtype=complex), (*geom.grid, A0.rank, A0.rank)).copy()
        return cls(h, A0, theta0, 0.0)


def metric_residual(ms: MetricState, h: np.ndarray | None = None) -> np.ndarray:
    """``Theta_h = sqrt(-1) Lambda(F_A0 + delbar_A0(h^-1 del_A0 h) + [theta0, h^-1 theta0^* h]) - lambda``."""
    h = ms.h if h is None else h
    A0, th0 = ms.A0, ms.theta0
    geom = A0.geometry
    hinv = np.linalg.inv(h)
    F0 = curvature(A0)
    out = geom.lambda_contract(F0)
    for k in range(geom.complex_dim):
        beta = hinv @ nabla_hol(A0, h, k)
        out = out - 2.0 * nabla_antihol(A0, beta, k)
        tk = th0.comps[k]
        out = out + 2.0 * comm(tk, hinv @ dagger(tk) @ h)
    return out - einstein_constant(A0, F0) * np.eye(A0.rank)


def metric_residual_norm(ms: MetricState) -> np.ndarray:
    """Pointwise ``|Theta_h|_h = sqrt(tr(Theta_h h^-1 Theta_h^* h))``."""
    T = metric_residual(ms)
    val = np.trace(T @ np.linalg.inv(ms.h) @ dagger(T) @ ms.h, axis1=-2, axis2=-1)
    return np.sqrt(np.maximum(np.real(val), 0.0))


def metric_rhs(ms: MetricState, h: np.ndarray | None = None) -> np.ndarray:
    """``dh/dt = -2 h Theta_h``."""
    h = ms.h if h is None else h
    return -2.0 * h @ metric_residual(ms, h)


def metric_flow_step(ms: MetricState, dt: float, dealias: bool = True,
                     det_bounds: tuple[float, float] = (1e-12, 1e12)) -> MetricState:
    """Exponential RK4 step of the metric flow; ``h`` is re-symmetrised.

    Raises :class:`StepFailure` if ``h`` loses positivity or ``det h`` leaves
    ``det_bounds``.
    """
    geom = ms.A0.geometry
    weights = _symbol_weights(geom, dt)

    def apply(h, i):
        return geom.ifft(geom.multiplier(h, weights[i]) * geom.fft(h))

    def nonlinear(h):
        out = metric_rhs(ms, h) - geom.laplacian(h)
        return geom.dealias(out) if dealias else out

    try:
        h = _etdrk4(ms.h, nonlinear, apply)
    except np.linalg.LinAlgError:
        raise StepFailure(f"metric became singular inside the step at t={ms.t}") from None
    h = 0.5 * (h + dagger(h))
    lo = np.linalg.eigvalsh(h).min()
    if not np.isfinite(lo) or lo <= 0:
        raise StepFailure(f"metric lost positivity at t={ms.t + dt} (min eigenvalue {lo:.3g})")
    det = np.real(np.linalg.det(h))
    if det.min() < det_bounds[0] or det.max() > det_bounds[1]:
        raise StepFailure(f"det h left [{det_bounds[0]:.1e}, {det_bounds[1]:.1e}] at t={ms.t + dt} "
                          f"(range {det.min():.3g} to {det.max():.3g})")
    return replace(ms, h=h, t=ms.t + dt)


def metric_euler_step(ms: MetricState, dt: float) -> MetricState:
    h = ms.h + dt * metric_rhs(ms)
    return replace(ms, h=0.5 * (h + dagger(h)), t=ms.t + dt)


def run_metric_flow(A0: Connection, theta0: HiggsField, t_end: float, dt: float) -> MetricState:
    ms = MetricState.identity(A0, theta0)
    nsteps = int(round(t_end / dt))
    for _ in range(nsteps):
        ms = metric_flow_step(ms, dt)
    return ms


@dataclass(frozen=True)
class GapReport:
    t: float
    l2_gap: float
    sup_gap: float
    connection_l2: float
    metric_l2: float

    def as_dict(self) -> dict:
        return asdict(self)


def cross_check_residuals(state: HiggsState, ms: MetricState, t_tol: float = 1e-12) -> GapReport:
    """Compare ``|Theta(A(t), theta(t))|_{H0}`` with ``|Theta_h(t)|_{h(t)}`` pointwise."""
    if abs(state.t - ms.t) > t_tol:
        raise ValueError(f"flows are at different times: {state.t} vs {ms.t}")
    geom = state.geometry
    Theta, _, _ = he_residual(state.A, state.theta)
    a = np.sqrt(np.sum(np.abs(Theta) ** 2, axis=(-2, -1)))
    b = metric_residual_norm(ms)
    diff = a - b
    return GapReport(
        t=float(state.t),
        l2_gap=float(np.sqrt(geom.integrate(diff**2))),
        sup_gap=float(np.abs(diff).max()),
        connection_l2=float(np.sqrt(geom.integrate(a**2))),
        metric_l2=float(np.sqrt(geom.integrate(b**2))),
    )
