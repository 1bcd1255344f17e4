"""Newton solvers, coupling continuation, and the adjoint kernel certificate.

The alpha = 0 stage is the scalar vortex equation

    rho0 + lap(psi) + ((S0 e^{-psi} - tau)/2) e = 0,

whose linearization lap - (S/2) e is invertible (maximum principle), followed
by a Poisson solve for psi2 and the algebraic elimination of phiK.

For alpha > 0 the corrector solves R1 = R2 = 0 with phiK slaved to
(psi, psi2) through eliminate_phiK, so R3 vanishes identically.  The mean
parts of (R1, R2) encode the scalar constraint with an exact dependency
integrate(R1 + R2) = 0, and the constant psi2 direction is null, so the
square Newton matrix is the true Jacobian plus the rank-one border
sigma * ones * mean(psi2_dot); the bordered solution solves the original
consistent system and pins mean(psi2_dot) = 0.

Linear solves are dense LU for n <= 32 and preconditioned LGMRES above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, lgmres

from .cym import (FOUR_PI2, CymConfig, CymState, constraint_integral, eliminate_phiK,
                  ellipticity_determinant, omega_recovery_defect, residuals,
                  satisfaction_value)
from .errors import (InfeasibleDegree, NoConvergence, NotConverged, NotElliptic,
                     PositivityLost, ValidationError)
from .grids import ScalarField, TorusGrid
from .theta import SectionData, weitzenbock_defect

_BORDER_SIGMA = 8.0


@dataclass
class NewtonOptions:
    max_iter: int = 40
    tol_res: float | None = None      # sup-norm target; default cfg.tol.newton
    damping: float = 0.5
    min_step: float = 1e-6
    linear_solver: str = "auto"       # auto | dense | krylov
    krylov_tol: float = 1e-12
    krylov_maxiter: int = 800

    def mode(self, n: int) -> str:
        if self.linear_solver == "auto":
            return "dense" if n <= 32 else "krylov"
        if self.linear_solver not in ("dense", "krylov"):
            raise ValidationError(f"unknown linear solver {self.linear_solver!r}")
        return self.linear_solver


def _krylov(matvec, b: np.ndarray, precond, rtol: float, maxiter: int) -> np.ndarray:
    n = b.size
    A = LinearOperator((n, n), matvec=matvec)
    M = LinearOperator((n, n), matvec=precond) if precond is not None else None
    try:
        x, info = lgmres(A, b, M=M, rtol=rtol, atol=0.0, maxiter=maxiter)
    except TypeError:  # older scipy spelling
        x, info = lgmres(A, b, M=M, tol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise NoConvergence(f"inner linear solve did not converge (info={info})")
    return x


# -- vortex stage -------------------------------------------------------------


def vortex_residual(psi: ScalarField, cfg: CymConfig, sec: SectionData) -> ScalarField:
    g = psi.grid
    S = sec.S0.values * np.exp(-psi.values)
    e = cfg.eta_values(g)
    r = sec.rho0.values + g.lap_values(psi.values) + 0.5 * (S - cfg.tau) * e
    return ScalarField(g, r)


def _scalar_elliptic_solve(g: TorusGrid, c: np.ndarray, rhs: np.ndarray,
                           opts: NewtonOptions) -> np.ndarray:
    """Solve (lap - diag(c)) x = rhs with c >= 0 somewhere positive."""
    if opts.mode(g.n) == "dense":
        A = g.dense_laplacian - np.diag(c.ravel())
        return np.linalg.solve(A, rhs.ravel()).reshape(g.shape)

    def matvec(x):
        xf = x.reshape(g.shape)
        return (g.lap_values(xf) - c * xf).ravel()

    cbar = float(np.mean(c))
    sym = g.lap_mult - cbar

    def precond(x):
        return np.real(np.fft.ifft2(np.fft.fft2(x.reshape(g.shape)) / sym)).ravel()

    return _krylov(matvec, rhs.ravel(), precond, opts.krylov_tol, opts.krylov_maxiter).reshape(g.shape)


def solve_vortex(sec: SectionData, cfg: CymConfig, opts: NewtonOptions | None = None,
                 psi0: ScalarField | None = None) -> ScalarField:
    """Damped Newton for the vortex equation; unique solution, any smooth start."""
    opts = opts or NewtonOptions()
    g = sec.grid
    if not cfg.feasible:
        raise InfeasibleDegree(
            f"need 0 < 4 pi d < tau vol, got 4 pi d = {4 * np.pi * cfg.d:.6g}, "
            f"tau vol = {cfg.tau * cfg.vol:.6g}")
    if np.max(sec.S0.values) <= 0.0:
        raise InfeasibleDegree("section norm vanishes identically; equation has no solution")
    e = cfg.eta_values(g)
    psi = np.zeros(g.shape) if psi0 is None else np.array(psi0.values, dtype=float)
    # drive below the target so downstream stages keep their own tolerance budget
    tol = 0.1 * (opts.tol_res if opts.tol_res is not None else cfg.tol.newton)

    def resid(p):
        return sec.rho0.values + g.lap_values(p) + 0.5 * (sec.S0.values * np.exp(-p) - cfg.tau) * e

    r = resid(psi)
    rn = np.max(np.abs(r))
    for _ in range(opts.max_iter):
        if rn <= tol:
            break
        S = sec.S0.values * np.exp(-psi)
        delta = _scalar_elliptic_solve(g, 0.5 * S * e, -r, opts)
        t = 1.0
        while True:
            r_new = resid(psi + t * delta)
            rn_new = np.max(np.abs(r_new))
            if rn_new <= (1.0 - 0.5 * t) * rn:
                psi = psi + t * delta
                r, rn = r_new, rn_new
                break
            t *= opts.damping
            if t < opts.min_step:
                raise NoConvergence(f"vortex line search stalled at residual {rn:.3e}")
    else:
        raise NoConvergence(f"vortex Newton exhausted {opts.max_iter} iterations at {rn:.3e}")

    S = sec.S0.values * np.exp(-psi)
    smax = float(np.max(S))
    if smax > cfg.tau * (1.0 + cfg.tol.ineq):
        raise NoConvergence(f"max principle post-check failed: max S = {smax:.12g} > tau")
    return ScalarField(g, psi)


def solve_psi2(psi: ScalarField, cfg: CymConfig, sec: SectionData) -> ScalarField:
    """Zero-mean psi2 from the second equation at alpha = 0 (w_sigma = eta density).

    The source has zero mean exactly when psi solves the vortex equation;
    invert_laplacian raises NonZeroMean otherwise.
    """
    g = psi.grid
    S = sec.S0.values * np.exp(-psi.values)
    src = -(cfg.tau / 2.0 - S / 4.0 - 2.0 * cfg.lam) * cfg.eta_values(g)
    return ScalarField(g, g.invert_values(src, cfg.tol.mean_tol(cfg.vol)))


# -- full-system corrector ----------------------------------------------------


def apply_DT(state: CymState, cfg: CymConfig, sec: SectionData, dots):
    """Directional derivative (S1, S2, S3) of the residuals at state along dots.

    dots = (psi_dot, psi2_dot, phi_dot); S = S0 e^{-psi} so S_dot = -S psi_dot.
    """
    psid, psi2d, phid = dots
    g = state.grid
    lam = cfg.lam
    S = state.S_values(sec)
    w = state.w_sigma_values()
    lpd = g.lap_values(psid.values)
    lp2d = g.lap_values(psi2d.values)
    lphid = g.lap_values(phid.values)
    s1 = lpd + lp2d - (S / 4.0) * psid.values * w + (S / 4.0 - 2.0 * lam) * lphid
    s2 = lp2d + (S / 4.0) * psid.values * w + (cfg.tau / 2.0 - S / 4.0 - 2.0 * lam) * lphid
    s3 = (8.0 * lphid
          + (cfg.alpha / FOUR_PI2) * (g.lap_values(S * psid.values) + 2.0 * cfg.tau * lp2d))
    return (ScalarField(g, s1), ScalarField(g, s2), ScalarField(g, s3))


def _slaved_jacobian_matvec(g: TorusGrid, cfg: CymConfig, S: np.ndarray, w: np.ndarray,
                            x: np.ndarray) -> np.ndarray:
    """Jacobian of (R1, R2) in (psi, psi2) with phiK slaved, plus the border."""
    n2 = S.size
    pd = x[:n2].reshape(g.shape)
    p2d = x[n2:].reshape(g.shape)
    lam = cfg.lam
    ca = cfg.alpha / (8.0 * FOUR_PI2)
    phid = ca * (-S * pd - 2.0 * cfg.tau * p2d)
    lphid = g.lap_values(phid)
    lpd = g.lap_values(pd)
    lp2d = g.lap_values(p2d)
    s1 = lpd + lp2d - (S / 4.0) * pd * w + (S / 4.0 - 2.0 * lam) * lphid
    s2 = lp2d + (S / 4.0) * pd * w + (cfg.tau / 2.0 - S / 4.0 - 2.0 * lam) * lphid
    # psi2 enters only through Laplacians, so its mean and Nyquist content are
    # pure gauge; border both to keep the system nonsingular.
    s2 = s2 + _BORDER_SIGMA * g.nyquist_part(p2d)
    out = np.concatenate([s1.ravel(), s2.ravel()])
    out += _BORDER_SIGMA * float(np.mean(p2d))
    return out


def _slaved_jacobian_dense(g: TorusGrid, cfg: CymConfig, S: np.ndarray,
                           w: np.ndarray) -> np.ndarray:
    D = g.dense_laplacian
    n2 = D.shape[0]
    Sf = S.ravel()
    wf = w.ravel()
    lam = cfg.lam
    ca = cfg.alpha / (8.0 * FOUR_PI2)
    k1 = (Sf / 4.0 - 2.0 * lam)[:, None]
    k2 = (cfg.tau / 2.0 - Sf / 4.0 - 2.0 * lam)[:, None]
    DS = D * Sf[None, :]
    diag_sw = np.diag(Sf * wf / 4.0)
    J11 = D - diag_sw - ca * (k1 * DS)
    J12 = D - (2.0 * cfg.tau * ca) * (k1 * D)
    J21 = diag_sw - ca * (k2 * DS)
    J22 = D - (2.0 * cfg.tau * ca) * (k2 * D)
    M = np.block([[J11, J12], [J21, J22]])
    M[:, n2:] += _BORDER_SIGMA / n2
    M[n2:, n2:] += _BORDER_SIGMA * g.dense_nyquist_projector
    return M


def _frozen_coefficient_precond(g: TorusGrid, cfg: CymConfig, S: np.ndarray, w: np.ndarray):
    """Per-mode 2x2 solve of the corrector Jacobian with spatially averaged
    coefficients; exact for constant data.  Modes annihilated by the Laplacian
    symbol (the mean and the Nyquist lines) fall back to the zeroth-order block
    with the border, which is invertible since mean(S w) > 0."""
    lam = cfg.lam
    ca = cfg.alpha / (8.0 * FOUR_PI2)
    sbar = float(np.mean(S))
    swq = float(np.mean(S * w)) / 4.0
    k1b = sbar / 4.0 - 2.0 * lam
    k2b = cfg.tau / 2.0 - sbar / 4.0 - 2.0 * lam
    m = g.lap_mult
    a11 = m * (1.0 - ca * sbar * k1b) - swq
    a12 = m * (1.0 - 2.0 * cfg.tau * ca * k1b)
    a21 = -m * ca * sbar * k2b + swq
    a22 = m * (1.0 - 2.0 * cfg.tau * ca * k2b)
    det = a11 * a22 - a12 * a21
    nyq = g._nyquist_mask
    sing = m == 0.0
    safe = np.where(sing, 1.0, det)

    def precond(x, n2=S.size):
        b1 = np.fft.fft2(x[:n2].reshape(g.shape))
        b2 = np.fft.fft2(x[n2:].reshape(g.shape))
        y1 = (a22 * b1 - a12 * b2) / safe
        y2 = (a11 * b2 - a21 * b1) / safe
        # Nyquist block [[-swq, 0], [swq, sigma]]; mean block [[-swq, s], [swq, s]]
        y1[nyq] = (-b1 / swq)[nyq]
        y2[nyq] = ((b2 + b1) / _BORDER_SIGMA)[nyq]
        y1[0, 0] = (b2[0, 0] - b1[0, 0]) / (2.0 * swq)
        y2[0, 0] = (b1[0, 0] + b2[0, 0]) / (2.0 * _BORDER_SIGMA)
        return np.concatenate([np.real(np.fft.ifft2(y1)).ravel(),
                               np.real(np.fft.ifft2(y2)).ravel()])

    return precond


def _corrector_residual(g, cfg, sec, psi, psi2):
    phiK = eliminate_phiK(ScalarField(g, psi), ScalarField(g, psi2), cfg, sec)
    state = CymState(ScalarField(g, psi), ScalarField(g, psi2), phiK)
    r1, r2, _ = residuals(state, cfg, sec)
    merit = max(np.max(np.abs(r1.values)), np.max(np.abs(r2.values)))
    return state, r1.values, r2.values, merit


def _newton_correct_impl(state: CymState, cfg: CymConfig, sec: SectionData,
                         opts: NewtonOptions):
    g = state.grid
    tol = opts.tol_res if opts.tol_res is not None else cfg.tol.newton
    if satisfaction_value(cfg) <= 0.0:
        raise NotElliptic(f"satisfaction gate closed: {satisfaction_value(cfg):.6g} <= 0")
    psi = np.array(state.psi.values, dtype=float)
    psi2 = g.project_resolved(np.array(state.psi2.values, dtype=float))
    cur, r1, r2, merit = _corrector_residual(g, cfg, sec, psi, psi2)
    iters = 0
    for _ in range(opts.max_iter):
        det_min = float(np.min(ellipticity_determinant(cur, cfg, sec).values))
        if det_min <= 0.0:
            raise NotElliptic(f"pointwise ellipticity determinant hit {det_min:.6g}")
        if merit <= tol:
            break
        S = cur.S_values(sec)
        w = cur.w_sigma_values()
        rhs = -np.concatenate([r1.ravel(), r2.ravel()])
        if opts.mode(g.n) == "dense":
            step = lu_solve(lu_factor(_slaved_jacobian_dense(g, cfg, S, w)), rhs)
        else:
            precond = _frozen_coefficient_precond(g, cfg, S, w)
            step = _krylov(lambda x: _slaved_jacobian_matvec(g, cfg, S, w, x), rhs,
                           precond, opts.krylov_tol, opts.krylov_maxiter)
        n2 = S.size
        dpsi = step[:n2].reshape(g.shape)
        dpsi2 = step[n2:].reshape(g.shape)
        t = 1.0
        while True:
            trial = _corrector_residual(g, cfg, sec, psi + t * dpsi, psi2 + t * dpsi2)
            if trial[3] <= (1.0 - 0.5 * t) * merit:
                psi = psi + t * dpsi
                psi2 = g.project_resolved(psi2 + t * dpsi2)
                cur, r1, r2, merit = trial
                break
            t *= opts.damping
            if t < opts.min_step:
                raise NoConvergence(f"corrector line search stalled at residual {merit:.3e}")
        iters += 1
    else:
        raise NoConvergence(f"corrector exhausted {opts.max_iter} iterations at {merit:.3e}")

    w_min = float(np.min(cur.w_sigma_values()))
    if w_min <= 0.0:
        raise PositivityLost(f"base form density lost positivity: min w_sigma = {w_min:.6g}")
    smax = float(np.max(cur.S_values(sec)))
    if smax > cfg.tau * (1.0 + cfg.tol.ineq):
        raise NoConvergence(f"max principle post-check failed: max S = {smax:.12g} > tau")
    return cur, iters, merit


def newton_correct(state: CymState, cfg: CymConfig, sec: SectionData,
                   opts: NewtonOptions | None = None) -> CymState:
    """Correct a predictor state to a solution of the coupled system at cfg.alpha."""
    out, _, _ = _newton_correct_impl(state, cfg, sec, opts or NewtonOptions())
    return out


# -- diagnostics and continuation ---------------------------------------------


def state_diagnostics(state: CymState, cfg: CymConfig, sec: SectionData,
                      with_certificate: bool = True, newton_iters: int = 0) -> dict:
    """Scalar diagnostics reproducible from the stored state fields alone."""
    r1, r2, r3 = residuals(state, cfg, sec)
    lhs, rhs = constraint_integral(state, cfg, sec)
    det = ellipticity_determinant(state, cfg, sec)
    out = {
        "alpha": float(cfg.alpha),
        "newton_iters": int(newton_iters),
        "residual_sup": float(max(np.max(np.abs(r1.values)), np.max(np.abs(r2.values)),
                                  np.max(np.abs(r3.values)))),
        "constraint_lhs": float(lhs),
        "constraint_rhs": float(rhs),
        "constraint_gap_rel": float(abs(lhs - rhs) / abs(rhs)),
        "min_w_sigma": float(np.min(state.w_sigma_values())),
        "max_S_minus_tau": float(np.max(state.S_values(sec)) - cfg.tau),
        "min_ellipticity": float(np.min(det.values)),
        "satisfaction": float(satisfaction_value(cfg)),
        "omega_defect_sup": float(np.max(np.abs(omega_recovery_defect(state, cfg, sec).values))),
        "min_weitzenbock": float(np.min(weitzenbock_defect(sec, state.psi).values)),
    }
    if with_certificate and state.grid.n <= 64:
        out["sigma_min"] = adjoint_min_singular_value(state, cfg, sec)
    return out


@dataclass
class ContinuationRecord:
    alpha: float
    state: CymState
    diagnostics: dict = field(default_factory=dict)
    note: str = ""


def continue_in_alpha(cfg: CymConfig, sec: SectionData, alphas,
                      opts: NewtonOptions | None = None,
                      with_certificate: bool = True) -> list[ContinuationRecord]:
    """Zeroth-order continuation from alpha = 0 up the given increasing list.

    Stops without raising at the first closed gate (satisfaction, ellipticity,
    positivity, max principle) or Newton failure; the last record's note says
    why.  alphas must start at exactly 0.
    """
    opts = opts or NewtonOptions()
    alphas = list(map(float, alphas))
    if not alphas or alphas[0] != 0.0:
        raise ValidationError("continuation must start at alpha = 0")
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValidationError("alphas must be strictly increasing")

    cfg0 = cfg.with_alpha(0.0)
    psi = solve_vortex(sec, cfg0, opts)
    psi2 = solve_psi2(psi, cfg0, sec)
    phiK = eliminate_phiK(psi, psi2, cfg0, sec)
    state = CymState(psi, psi2, phiK)
    records = [ContinuationRecord(0.0, state,
                                  state_diagnostics(state, cfg0, sec, with_certificate))]
    note = "completed"
    for a in alphas[1:]:
        cfga = cfg.with_alpha(a)
        if satisfaction_value(cfga) <= 0.0:
            note = (f"stopped before alpha={a:.6g}: satisfaction gate "
                    f"{satisfaction_value(cfga):.6g} <= 0")
            break
        try:
            state, iters, _ = _newton_correct_impl(state, cfga, sec, opts)
        except (NotElliptic, NoConvergence, PositivityLost) as err:
            note = f"stopped before alpha={a:.6g}: {type(err).__name__}: {err}"
            break
        records.append(ContinuationRecord(a, state,
                                          state_diagnostics(state, cfga, sec,
                                                            with_certificate, iters)))
    records[-1].note = note
    return records


# -- adjoint kernel certificate -----------------------------------------------


def adjoint_min_singular_value(state: CymState, cfg: CymConfig, sec: SectionData,
                               tol: float | None = None) -> float:
    """Smallest singular value of the reduced adjoint-kernel operator on zero-mean q.

    Eliminating the w unknown of the adjoint pair through its algebraic
    relation (with the unknown constant fixed by the zero-average gauge)
    leaves

        L q = (1/2) lap(q) - (S/4) w_sigma q
              - (alpha/(4 K (2 pi)^2)) (S - tau) lap((S - tau) q),

    K = 8 + d alpha tau/(2 pi vol).  A positive value certifies that the
    discrete linearized operator is surjective at this state.
    """
    g = state.grid
    if g.n > 64:
        raise ValidationError("adjoint certificate is a desk-scale tool; need n <= 64")
    tol = tol if tol is not None else cfg.tol.newton
    _, _, _, merit = _corrector_residual(g, cfg, sec, state.psi.values, state.psi2.values)
    if merit > tol:
        raise NotConverged(f"certificate needs a solved state: residual {merit:.3e} > {tol:.1e}")
    S = state.S_values(sec).ravel()
    w = state.w_sigma_values().ravel()
    K = 8.0 + cfg.d * cfg.alpha * cfg.tau / (2.0 * np.pi * cfg.vol)
    D = g.dense_laplacian
    sm = S - cfg.tau
    L = (0.5 * D - np.diag(S * w / 4.0)
         - (cfg.alpha / (4.0 * K * FOUR_PI2)) * (sm[:, None] * D * sm[None, :]))
    n2 = L.shape[0]
    M = L - np.outer(L.sum(axis=1), np.full(n2, 1.0 / n2))   # restrict to zero-mean input
    N = M.T @ M
    lift = float(np.sum(M * M))                              # >= largest eigenvalue of N
    N += lift / n2                                            # push the constant direction up
    lam_min = eigh(N, eigvals_only=True, subset_by_index=[0, 0])[0]
    return float(np.sqrt(max(lam_min, 0.0)))


def adjoint_sigma_min_symbol(cfg: CymConfig, grid: TorusGrid, s0: float) -> float:
    """Fourier-symbol value of the certificate for constant data S = s0, w = 1."""
    K = 8.0 + cfg.d * cfg.alpha * cfg.tau / (2.0 * np.pi * cfg.vol)
    a = 0.5 - cfg.alpha * (s0 - cfg.tau) ** 2 / (4.0 * K * FOUR_PI2)
    sym = np.abs(a * grid.lap_mult - s0 / 4.0)
    sym = np.delete(sym.ravel(), 0)   # drop the constant mode
    return float(np.min(sym))
