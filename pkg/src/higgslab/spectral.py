"""Least eigenvalue of the rough Laplacian on abelian (1,0)-forms and related checks.

The admissible set for the least eigenvalue is the cone of End(E)-valued
(1,0)-forms with ``v ^ v = 0``.  The constraint is imposed by a quadratic
penalty with geometric continuation; for ``n = 1`` it is vacuous.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.integrate
import scipy.optimize

from .bundle import (
    Connection,
    HiggsField,
    comm,
    dagger,
    holomorphicity_residual,
    l2_norm,
    nabla,
    pointwise_norm2,
    random_band_limited,
    theta_bracket,
    wedge_residual,
    wedge_square,
)
from .functionals import he_residual
from .geometry import TorusGeometry


# -- rough Laplacian ----------------------------------------------------------

def rough_laplacian_apply(A: Connection, v: np.ndarray) -> np.ndarray:
    """``(nabla_A^* nabla_A v)_k = -sum_a nabla_a nabla_a v_k`` on (1,0)-form components."""
    d = A.geometry.dim
    return np.stack([-sum(nabla(A, nabla(A, vk, a), a) for a in range(d)) for vk in v])


def _dot(geom: TorusGeometry, a: np.ndarray, b: np.ndarray) -> float:
    # real L2 pairing with Frobenius inner product on matrices
    return float(np.real(np.vdot(b, a)) * geom.cell_volume)


def rayleigh_quotient(A: Connection, v: np.ndarray) -> float:
    """``<nabla^* nabla v, v> / ||v||^2``; the (1,0) form weights cancel."""
    geom = A.geometry
    return _dot(geom, rough_laplacian_apply(A, v), v) / _dot(geom, v, v)


def dense_rough_laplacian(A: Connection) -> np.ndarray:
    """Dense matrix of ``nabla^* nabla`` on the flattened (1,0)-form components.

    Only intended for tiny grids; it is the brute-force oracle for
    :func:`least_eigenvalue`.
    """
    geom = A.geometry
    shape = (geom.complex_dim, *geom.grid, A.rank, A.rank)
    m = int(np.prod(shape))
    cols = np.empty((m, m), dtype=complex)
    e = np.zeros(m, dtype=complex)
    for j in range(m):
        e[j] = 1.0
        cols[:, j] = rough_laplacian_apply(A, e.reshape(shape)).ravel()
        e[j] = 0.0
    return 0.5 * (cols + cols.conj().T)


def admissible_projection(v: np.ndarray, geom: TorusGeometry, traceless: bool = True,
                          mean_zero: bool = False) -> np.ndarray:
    """Orthogonal projection onto resolved, trace-free and/or mean-zero (1,0)-forms.

    Nyquist modes are always removed: their spectral derivative vanishes,
    so they would otherwise form a spurious kernel of the rough Laplacian.
    """
    v = geom.ifft(geom.multiplier(v, geom.resolved_mask) * geom.fft(v))
    if traceless:
        r = v.shape[-1]
        tr = np.trace(v, axis1=-2, axis2=-1)[..., None, None]
        v = v - tr * np.eye(r) / r
    if mean_zero:
        axes = tuple(range(v.ndim - 2 - geom.dim, v.ndim - 2))
        v = v - v.mean(axis=axes, keepdims=True)
    return v


def dense_least_eigenvalue(A: Connection, traceless: bool = True,
                           exclude_constants: bool = False) -> float:
    """Brute-force least eigenvalue on the admissible subspace (no wedge constraint)."""
    L = dense_rough_laplacian(A)
    if traceless or exclude_constants:
        geom = A.geometry
        shape = (geom.complex_dim, *geom.grid, A.rank, A.rank)
        m = L.shape[0]
        B = admissible_projection(np.eye(m).reshape(m, *shape), geom, traceless, exclude_constants)
        # orthonormal basis of the range of the projection
        U, sv, _ = np.linalg.svd(B.reshape(m, m).T)
        Q = U[:, sv > 0.5]
        L = Q.conj().T @ L @ Q
    return float(np.linalg.eigvalsh(L)[0])


# -- penalised Rayleigh minimisation ------------------------------------------

@dataclass
class EigenOptions:
    penalties: tuple[float, ...] = (1.0, 10.0, 100.0, 1e3, 1e4)
    max_iter: int = 3000
    gtol: float = 1e-11
    seed: int = 0
    exclude_constants: bool = False   # diagnostic mode: mean-zero complement
    traceless: bool = True            # restrict to the trace-free part of End(E)
    preconditioned: bool = True


@dataclass
class EigenResult:
    lambda_hat: float
    v: np.ndarray = field(repr=False)
    wedge_feasibility: float
    penalty_trace: list[tuple[float, float]]
    converged: bool = True
    iterations: int = 0

    def as_dict(self, include_field: bool = False) -> dict:
        out = {
            "lambda_hat": self.lambda_hat,
            "v": None,
            "wedge_feasibility": self.wedge_feasibility,
            "penalty_trace": [list(p) for p in self.penalty_trace],
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if include_field:
            out["v"] = {"shape": list(self.v.shape), "re": self.v.real.ravel().tolist(),
                        "im": self.v.imag.ravel().tolist()}
        return out

    def to_json(self, include_field: bool = False) -> str:
        return json.dumps(self.as_dict(include_field))


def _wedge_penalty(geom, v):
    """``S = ||[v_1, v_2]||^2`` (Frobenius, unweighted) and its gradient."""
    n = v.shape[0]
    S = 0.0
    grad = np.zeros_like(v)
    for k in range(n):
        for l in range(k + 1, n):
            W = comm(v[k], v[l])
            S += geom.cell_volume * float(np.sum(np.abs(W) ** 2))
            grad[k] += 2 * geom.cell_volume * comm(W, dagger(v[l]))
            grad[l] += 2 * geom.cell_volume * comm(dagger(v[k]), W)
    return S, grad


def _penalised_objective(A: Connection, mu: float, to_v, from_v_grad):
    geom = A.geometry

    def fun(x):
        v = to_v(x)
        Lv = rough_laplacian_apply(A, v)
        Q = _dot(geom, v, v)
        R = _dot(geom, Lv, v) / Q
        g = 2 * geom.cell_volume * (Lv - R * v) / Q
        f = R
        if mu:
            S, gS = _wedge_penalty(geom, v)
            f += mu * S / Q**2
            g = g + mu * (gS / Q**2 - 4 * S / Q**3 * geom.cell_volume * v)
        return f, from_v_grad(g)

    return fun


def _unit(geom, v):
    # unit norm with the (1,0) weight |dz|^2 = 2
    return v / np.sqrt(2 * _dot(geom, v, v))


def least_eigenvalue(A: Connection, options: EigenOptions | None = None,
                     v0: np.ndarray | None = None) -> EigenResult:
    """Upper estimate of ``inf <nabla^* nabla v, v>/||v||^2`` over ``v ^ v = 0``.

    The penalised quotient ``R(v) + mu ||[v_1, v_2]||^2/||v||^4`` is minimised
    by L-BFGS in preconditioned variables ``v = (1 + Delta)^{-1/2} w`` for
    each ``mu`` of the continuation, warm-starting from the previous minimiser.
    """
    opts = options or EigenOptions()
    geom = A.geometry
    n, r = geom.complex_dim, A.rank
    shape = (n, *geom.grid, r, r)
    pre = 1.0 / np.sqrt(1.0 + geom.k_squared) if opts.preconditioned else np.ones(geom.grid)

    def project(w):
        return admissible_projection(w, geom, opts.traceless, opts.exclude_constants)

    def apply_pre(w):
        if not opts.preconditioned:
            return w
        return geom.ifft(geom.multiplier(w, pre) * geom.fft(w))

    def to_v(x):
        w = x.view(complex).reshape(shape)
        return apply_pre(project(w))

    def from_v_grad(g):
        return np.ascontiguousarray(project(apply_pre(g))).view(float).ravel()

    if v0 is None:
        rng = np.random.default_rng(opts.seed)
        v0 = np.stack([random_band_limited(geom, rng, (r, r), 2) for _ in range(n)])
    # initial w: invert the preconditioner on the starting vector
    w = geom.ifft(geom.multiplier(v0, 1.0 / pre) * geom.fft(np.asarray(v0, dtype=complex)))
    x = np.ascontiguousarray(project(w)).ravel().view(float).copy()

    mus = opts.penalties if n > 1 else (0.0,)
    trace, converged, iters = [], True, 0
    for mu in mus:
        fun = _penalised_objective(A, mu, to_v, from_v_grad)
        res = scipy.optimize.minimize(fun, x, jac=True, method="L-BFGS-B",
                                      options={"maxiter": opts.max_iter, "gtol": opts.gtol,
                                               "ftol": 1e-16, "maxcor": 20})
        x = res.x / np.linalg.norm(res.x)
        iters += res.nit
        # "ABNORMAL" line-search exits at machine precision are not failures
        if not res.success and res.nit >= opts.max_iter:
            converged = False
        trace.append((float(mu), float(res.fun)))
    if n == 1:
        trace = [(float(mu), trace[0][1]) for mu in opts.penalties]
    v = _unit(geom, to_v(x))
    lam = rayleigh_quotient(A, v)
    feas = l2_norm(wedge_square(HiggsField(geom, v)), "20", geom)
    return EigenResult(max(lam, 0.0), v, feas, trace, converged, iters)


# -- continuity lemma ---------------------------------------------------------

def lp_norm_one_form(a: np.ndarray, geom: TorusGeometry, p: float | None = None) -> float:
    """``||a||_{L^p}`` of a matrix-valued 1-form; ``p`` defaults to the real dimension."""
    p = geom.dim if p is None else p
    mag = np.sqrt(pointwise_norm2(a, "1", geom))
    return float(geom.integrate(mag**p) ** (1.0 / p))


def minimal_continuity_constant(lam0: float, lam1: float, eps: float) -> float:
    """Smallest ``c`` for which both continuity inequalities hold at ``||a|| = eps``."""
    if eps == 0:
        return 0.0
    upper = (lam1 - lam0) / (eps * (1 + lam1))
    lower = (lam0 - lam1) / (eps * (1 + lam0))
    return max(0.0, upper, lower)


@dataclass
class ContinuityReport:
    lambda0: float
    lambda1: float
    a_norm: float
    c: float
    lower_bound: float
    upper_bound: float
    lower_ok: bool
    upper_ok: bool
    c_min: float

    @property
    def passed(self) -> bool:
        return self.lower_ok and self.upper_ok

    def as_dict(self) -> dict:
        return asdict(self)


def eigen_continuity_check(A0: Connection, a: np.ndarray, c: float,
                           options: EigenOptions | None = None,
                           lambda0: float | None = None) -> ContinuityReport:
    """Compare ``lambda(A0)`` and ``lambda(A0 + a)`` against the two-sided bound.

    ``c`` is a calibrated constant (see :func:`calibrate_continuity_constant`);
    ``c ||a||_{L^n} > 1/2`` is outside the lemma's smallness regime and rejected.
    """
    geom = A0.geometry
    eps = lp_norm_one_form(a, geom)
    if c * eps > 0.5:
        raise ValueError(f"perturbation too large: c*||a|| = {c * eps:.3g} > 1/2")
    if lambda0 is None:
        lambda0 = least_eigenvalue(A0, options).lambda_hat
    lam1 = least_eigenvalue(Connection(geom, A0.coeffs + a), options).lambda_hat
    lo = (1 - c * eps) * lambda0 - c * eps
    hi = (lambda0 + c * eps) / (1 - c * eps)
    slack = 1e-12
    return ContinuityReport(lambda0, lam1, eps, c, lo, hi, lo <= lam1 + slack, lam1 <= hi + slack,
                            minimal_continuity_constant(lambda0, lam1, eps))


def random_perturbation(geom: TorusGeometry, seed: int, rank: int, norm: float,
                        roughness: int = 1) -> np.ndarray:
    """Anti-Hermitian band-limited 1-form scaled to ``||a||_{L^n} = norm``."""
    rng = np.random.default_rng(seed)
    a = np.stack([random_band_limited(geom, rng, (rank, rank), roughness) for _ in range(geom.dim)])
    a = 0.5 * (a - dagger(a))
    return a * (norm / lp_norm_one_form(a, geom))


def calibrate_continuity_constant(A0: Connection, perturbations, safety: float = 2.0,
                                  options: EigenOptions | None = None) -> float:
    """``safety`` times the largest constant needed over a calibration sweep."""
    lam0 = least_eigenvalue(A0, options).lambda_hat
    geom = A0.geometry
    need = 0.0
    for a in perturbations:
        lam1 = least_eigenvalue(Connection(geom, A0.coeffs + a), options).lambda_hat
        need = max(need, minimal_continuity_constant(lam0, lam1, lp_norm_one_form(a, geom)))
    return safety * need


# -- logarithmic cutoff -------------------------------------------------------

def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


def _psi(s):
    return 1.0 - _smoothstep(s)


def _dpsi(s):
    inside = (s > 0) & (s < 1)
    return np.where(inside, -30 * s**2 * (1 - s) ** 2, 0.0)


def _d2psi(s):
    inside = (s > 0) & (s < 1)
    return np.where(inside, -60 * s * (1 - s) * (1 - 2 * s), 0.0)


def _cutoff_profile(N: float, R: float, rho):
    """``beta(rho) = psi(log(N rho / R) / log N)``."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        s = np.log(np.maximum(N * rho / R, 1e-300)) / np.log(N)
    return _psi(s)


def log_cutoff(geom: TorusGeometry, N: float, R: float, center=None) -> np.ndarray:
    """Radial logarithmic cutoff: 1 on ``|x| <= R/N``, 0 on ``|x| >= R``."""
    if N < 2:
        raise ValueError("N must be at least 2")
    if not 0 < R < 0.5 * min(geom.sides):
        raise ValueError("R must be positive and below half the shortest period")
    if R / N < max(geom.spacing):
        raise ValueError(f"inner radius R/N = {R / N:.3g} is below the grid spacing")
    center = tuple(0.5 * L for L in geom.sides) if center is None else center
    return _cutoff_profile(N, R, geom.periodic_distance(center))


def cutoff_norms(N: float, R: float, dim: int = 4) -> tuple[float, float]:
    """``(||grad beta||_{L^4}, ||Hess beta||_{L^2})`` by radial quadrature in ``R^dim``.

    The radial derivatives are in closed form; the integrals are taken in
    the logarithmic variable ``s`` where the profile is supported on [0, 1].
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if R <= 0:
        raise ValueError("R must be positive")
    lg = np.log(N)
    area = 2 * np.pi ** (dim / 2) / math.gamma(dim / 2)

    def radius(s):
        return R / N * N**s

    def d1(s):
        return _dpsi(s) / (radius(s) * lg)

    def d2(s):
        return (_d2psi(s) / lg**2 - _dpsi(s) / lg) / radius(s) ** 2

    # dr = r log N ds
    def l4_integrand(s):
        r = radius(s)
        return d1(s) ** 4 * area * r ** (dim - 1) * r * lg

    def hess_integrand(s):
        r = radius(s)
        hess2 = d2(s) ** 2 + (dim - 1) * (d1(s) / r) ** 2
        return hess2 * area * r ** (dim - 1) * r * lg

    opts = dict(limit=200, epsabs=0.0, epsrel=1e-12)
    l4 = scipy.integrate.quad(l4_integrand, 0.0, 1.0, **opts)[0] ** 0.25
    h2 = scipy.integrate.quad(hess_integrand, 0.0, 1.0, **opts)[0] ** 0.5
    return float(l4), float(h2)


# -- Weitzenbock identity and vanishing certificate -----------------------------

@dataclass(frozen=True)
class WeitzenbockReport:
    grad_term: float
    ricci_term: float
    bracket_term: float
    rhs_term: float
    residual: float

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def weitzenbock_check(A: Connection, theta: HiggsField, tol: float = 1e-6) -> WeitzenbockReport:
    """Both sides of ``|nabla theta|^2 + <Ric theta, theta> + |[theta, theta^*]|^2 = Re<[Theta', theta], theta>``.

    ``Theta' = sqrt(-1) Lambda (F_A + [theta, theta^*])``; the Ricci term
    vanishes on a flat torus.
    """
    geom = A.geometry
    hol, wed = holomorphicity_residual(A, theta), wedge_residual(theta)
    if hol > tol or wed > tol:
        warnings.warn(f"not a Higgs pair at tol {tol}: holomorphicity {hol:.3g}, wedge {wed:.3g}",
                      RuntimeWarning, stacklevel=2)
    nab = np.stack([np.stack([nabla(A, tk, a) for tk in theta.comps]) for a in range(geom.dim)])
    grad = l2_norm(nab, "10", geom) ** 2
    bracket = l2_norm(theta_bracket(theta), "2", geom) ** 2
    Theta, _, _ = he_residual(A, theta)  # the lambda Id shift commutes with theta
    br = comm(Theta[None], theta.comps)
    rhs = float(np.real(geom.integrate(
        2.0 * np.sum(np.sum(br * np.conj(theta.comps), axis=(-2, -1)), axis=0))))
    ricci = 0.0
    lhs = grad + ricci + bracket
    return WeitzenbockReport(grad, ricci, bracket, rhs, abs(lhs - rhs))


@dataclass(frozen=True)
class VanishingDecision:
    fires: bool
    reason: str
    coefficient: float | None = None
    threshold: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


PARALLEL_MESSAGE = "parallel commuting Higgs field: vanishing requires full holonomy, not verifiable on torus"


def vanishing_certificate(report: WeitzenbockReport, ricci_lower: float, sup_residual: float,
                          atol: float = 1e-10) -> VanishingDecision:
    """Replay the closing inequality chain.

    With ``Ric >= rho`` and ``sup|Theta| <= rho/4`` the identity gives
    ``0 >= (rho - 2 sup|Theta|) ||theta||^2 >= (rho/2) ||theta||^2``, forcing
    ``theta = 0``.  For ``rho = 0`` it only yields a parallel commuting field.
    """
    rho = float(ricci_lower)
    if rho < 0:
        raise ValueError("ricci_lower must be nonnegative")
    if rho == 0:
        if report.grad_term <= atol and report.bracket_term <= atol:
            return VanishingDecision(False, PARALLEL_MESSAGE)
        return VanishingDecision(False, "no positive Ricci lower bound; the chain gives no conclusion")
    if sup_residual > rho / 4:
        return VanishingDecision(False, "hypothesis max|Theta| <= rho/4 violated",
                                 rho - 2 * sup_residual, rho / 2)
    coeff = rho - 2 * sup_residual
    if coeff >= rho / 2:
        return VanishingDecision(True, "coefficient check passes: theta must vanish", coeff, rho / 2)
    return VanishingDecision(False, "coefficient check fails", coeff, rho / 2)
