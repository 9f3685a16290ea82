"""Convex tonic/phasic decomposition of electrodermal activity (cvxEDA).

The observed signal ``y`` is modelled as

    y = phasic + tonic + residual
    phasic = M q,  driver = A q >= 0     (Bateman response as a 2nd-order ARMA)
    tonic  = B l + C d                   (cubic B-spline plus offset and slope)

and the decomposition minimises

    0.5 * ||residual||^2 + alpha * sum(driver) + 0.5 * gamma * ||l||^2

subject to ``driver >= 0``. The quadratic program is solved with a
primal-dual interior-point method (Mehrotra predictor-corrector) whose Newton
systems are sparse and factored with SuperLU.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid
from scipy.signal import lfilter

from .dsp import Segment
from .errors import SolverDiverged, TooShort

log = logging.getLogger(__name__)

MIN_DURATION_S = 4.0


@dataclass(frozen=True)
class EdaParams:
    alpha: float = 8e-4
    gamma: float = 1e-2
    delta_knot_s: float = 10.0
    tau0_s: float = 2.0
    tau1_s: float = 0.7
    max_iter: int = 2000
    tol: float = 1e-8


@dataclass(frozen=True)
class SolverStats:
    iterations: int
    objective: float
    status: str
    kkt_residual: float


@dataclass(frozen=True, eq=False)
class EdaDecomposition:
    tonic: np.ndarray
    phasic: np.ndarray
    driver: np.ndarray
    residual: np.ndarray
    spline_coeffs: np.ndarray
    drift: np.ndarray
    solver_stats: SolverStats
    rate_hz: float = 4.0

    def __len__(self):
        return len(self.tonic)

    def slice(self, lo: int, hi: int) -> "EdaDecomposition":
        return EdaDecomposition(self.tonic[lo:hi], self.phasic[lo:hi], self.driver[lo:hi],
                                self.residual[lo:hi], self.spline_coeffs, self.drift,
                                self.solver_stats, self.rate_hz)


def bateman_arma(rate_hz: float, tau0_s: float = 2.0, tau1_s: float = 0.7) -> np.ndarray:
    """Autoregressive coefficients of the discretised Bateman response.

    The moving-average part is always ``[1, 2, 1]``.
    """
    delta = 1.0 / rate_hz
    a1 = 1.0 / min(tau0_s, tau1_s)
    a0 = 1.0 / max(tau0_s, tau1_s)
    return np.array([(a1 * delta + 2.0) * (a0 * delta + 2.0),
                     2.0 * a1 * a0 * delta ** 2 - 8.0,
                     (a1 * delta - 2.0) * (a0 * delta - 2.0)]) / ((a1 - a0) * delta ** 2)


_MA = np.array([1.0, 2.0, 1.0])


def phasic_from_driver(driver, rate_hz: float, tau0_s: float = 2.0, tau1_s: float = 0.7):
    """Forward model: phasic response of a driver sequence (zero initial state)."""
    return lfilter(_MA, bateman_arma(rate_hz, tau0_s, tau1_s), np.asarray(driver, dtype=float))


def scr_response(n: int, rate_hz: float, onset: int, amplitude: float,
                 tau0_s: float = 2.0, tau1_s: float = 0.7) -> np.ndarray:
    """A single skin conductance response of peak ``amplitude`` starting at ``onset``.

    Built from an impulse of the driver through the same forward model the
    decomposition inverts.
    """
    p = np.zeros(n)
    if not 0 <= onset < n:
        return p
    p[onset] = amplitude / scr_impulse_gain(rate_hz, tau0_s, tau1_s)
    return phasic_from_driver(p, rate_hz, tau0_s, tau1_s)


def scr_impulse_gain(rate_hz: float, tau0_s: float = 2.0, tau1_s: float = 0.7) -> float:
    """Peak phasic amplitude produced by a unit driver impulse."""
    probe = phasic_from_driver(np.r_[1.0, np.zeros(int(10 * max(tau0_s, tau1_s) * rate_hz))],
                               rate_hz, tau0_s, tau1_s)
    return float(probe.max())


@dataclass(frozen=True, eq=False)
class _Problem:
    P: sp.csc_matrix
    f: np.ndarray
    E: sp.csr_matrix
    y: np.ndarray
    n: int
    n_spline: int
    M: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix

    def objective(self, x) -> float:
        return float(0.5 * x @ (self.P @ x) + self.f @ x + 0.5 * self.y @ self.y)


def _spline_basis(n: int, knot: int) -> sp.csr_matrix:
    if n < knot:
        return sp.csr_matrix((n, 0))
    spl = np.r_[np.arange(1.0, knot), np.arange(knot, 0.0, -1.0)]
    spl = np.convolve(spl, spl, "full")
    spl /= spl.max()
    rows = np.c_[np.arange(-(len(spl) // 2), (len(spl) + 1) // 2)] + np.r_[np.arange(0, n, knot)]
    nb = rows.shape[1]
    cols = np.tile(np.arange(nb), (len(spl), 1))
    vals = np.tile(spl, (nb, 1)).T
    ok = (rows >= 0) & (rows < n)
    return sp.csr_matrix((vals[ok], (rows[ok], cols[ok])), shape=(n, nb))


def build_problem(y, rate_hz: float, params: EdaParams = EdaParams()) -> _Problem:
    """Assemble the quadratic program for signal ``y``.

    Variables are stacked as ``x = [q (n), d (2), l (n_spline)]``; the
    constraint is ``E x >= 0`` with ``E x`` the driver at samples 2..n-1.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    ar = bateman_arma(rate_hz, params.tau0_s, params.tau1_s)
    i = np.arange(2, n)
    cols = np.c_[i, i - 1, i - 2].ravel()
    A = sp.csr_matrix((np.tile(ar, n - 2), (np.repeat(i - 2, 3), cols)), shape=(n - 2, n))
    M = sp.csr_matrix((np.tile(_MA, n - 2), (np.repeat(i, 3), cols)), shape=(n, n))
    B = _spline_basis(n, int(round(params.delta_knot_s * rate_hz)))
    C = sp.csr_matrix(np.c_[np.ones(n), np.arange(1.0, n + 1.0) / n])
    nb = B.shape[1]
    G = sp.hstack([M, C, B]).tocsc()
    P = (G.T @ G + sp.diags(np.r_[np.zeros(n + 2), params.gamma * np.ones(nb)])).tocsc()
    f = np.r_[params.alpha * np.asarray(A.sum(axis=0)).ravel(), np.zeros(2 + nb)] - G.T @ y
    E = sp.hstack([A, sp.csr_matrix((n - 2, 2 + nb))]).tocsr()
    return _Problem(P, f, E, y, n, nb, M, B, C)


def _max_step(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def solve_qp(P, f, E, tol: float = 1e-8, max_iter: int = 2000):
    """Minimise ``0.5 x'Px + f'x`` subject to ``E x >= 0``.

    Primal-dual interior point with Mehrotra's predictor-corrector. ``P`` must
    be positive semidefinite with ``P + E' W E`` positive definite for every
    positive diagonal ``W``.

    Returns
    -------
    x, multipliers, iterations, kkt_residual
    """
    P = sp.csc_matrix(P)
    E = sp.csr_matrix(E)
    Et = E.T.tocsr()
    N, m = P.shape[0], E.shape[0]
    x = np.zeros(N)
    s = np.ones(m)
    lam = np.ones(m)
    scale = 1.0 + float(np.abs(f).max(initial=0.0))
    # refine past ``tol`` so that small multipliers do not leave loose slacks;
    # stop once progress stalls below ``tol``
    target = 1e-2 * tol
    kkt = prev = np.inf
    stalled = 0
    for it in range(max_iter + 1):
        rd = P @ x + f - Et @ lam
        rp = E @ x - s
        mu = float(s @ lam) / m if m else 0.0
        kkt = max(np.abs(rd).max(initial=0.0) / scale, np.abs(rp).max(initial=0.0),
                  np.abs(s * lam).max(initial=0.0))
        if not np.isfinite(kkt):
            raise SolverDiverged("non-finite iterate", status="diverged")
        stalled = stalled + 1 if kkt <= tol and kkt > 0.5 * prev else 0
        if kkt <= target or stalled >= 3 or it == max_iter:
            break
        prev = kkt
        K = (P + Et @ sp.diags(lam / s) @ E).tocsc()
        try:
            lu = spla.splu(K, permc_spec="COLAMD", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise SolverDiverged(f"singular Newton system: {exc}", status="singular") from exc

        def newton(rc):
            dx = lu.solve(-rd - Et @ ((rc + lam * rp) / s))
            ds = E @ dx + rp
            return dx, ds, -(rc + lam * ds) / s

        dx, ds, dl = newton(s * lam)
        a = min(_max_step(s, ds), _max_step(lam, dl))
        mu_aff = float((s + a * ds) @ (lam + a * dl)) / m
        sigma = (mu_aff / mu) ** 3
        dx, ds, dl = newton(s * lam + ds * dl - sigma * mu)
        a = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(lam, dl)))
        x += a * dx
        s += a * ds
        lam += a * dl
    # report feasibility of the driver itself, not of the slack
    rd = P @ x + f - Et @ lam
    g = E @ x
    kkt = max(np.abs(rd).max(initial=0.0) / scale, max(0.0, -g.min(initial=0.0)),
              np.abs(g * lam).max(initial=0.0))
    return x, lam, it, float(kkt)


def cvxeda_decompose(seg, params: EdaParams | None = None, rate_hz: float | None = None,
                     kkt_tol: float = 1e-6) -> EdaDecomposition:
    """Decompose an EDA segment into tonic, phasic, driver and residual.

    Parameters
    ----------
    seg : Segment or array_like
        Skin conductance samples; arrays need ``rate_hz``.
    params : EdaParams, optional
        Model weights and time constants; defaults reproduce the usual cvxEDA
        settings (alpha 8e-4, gamma 1e-2, tau 2 s / 0.7 s, knots every 10 s).
    kkt_tol : float
        A solution whose KKT residual exceeds this raises ``SolverDiverged``.
    """
    params = params or EdaParams()
    if isinstance(seg, Segment):
        y, rate = seg.samples, seg.sample_rate_hz
    else:
        y, rate = np.asarray(seg, dtype=float), rate_hz
    if rate is None:
        raise ValueError("rate_hz is required for array input")
    if len(y) / rate < MIN_DURATION_S:
        raise TooShort(f"cvxEDA needs at least {MIN_DURATION_S} s, got {len(y) / rate:.2f} s")
    if not np.all(np.isfinite(y)):
        raise SolverDiverged("input contains non-finite values", status="bad_input")

    prob = build_problem(y, rate, params)
    x, _, iters, kkt = solve_qp(prob.P, prob.f, prob.E, params.tol, params.max_iter)
    status = "optimal" if kkt <= params.tol else "inaccurate"
    if kkt > kkt_tol:
        raise SolverDiverged(f"KKT residual {kkt:.3g} after {iters} iterations", status=status)

    n, nb = prob.n, prob.n_spline
    q, d, l = x[:n], x[n:n + 2], x[n + 2:]
    phasic = prob.M @ q
    tonic = prob.B @ l + prob.C @ d
    driver = np.r_[0.0, 0.0, prob.E @ x]
    residual = y - phasic - tonic
    stats = SolverStats(iters, prob.objective(x), status, kkt)
    log.debug("cvxEDA n=%d iterations=%d kkt=%.2e", n, iters, kkt)
    return EdaDecomposition(tonic, phasic, driver, residual, l, d, stats, float(rate))


def phasic_auc(d: EdaDecomposition, rate_hz: float | None = None) -> float:
    """Trapezoidal area of the positive part of the phasic component, in units x seconds."""
    rate = rate_hz or d.rate_hz
    ph = np.maximum(np.asarray(d.phasic), 0.0)
    if len(ph) < 2:
        return 0.0
    return float(trapezoid(ph, dx=1.0 / rate))


def driver_bursts(driver, rate_hz: float, threshold: float | None = None,
                  merge_s: float = 1.0) -> list[tuple[int, int]]:
    """Index ranges ``[start, stop)`` of driver activity.

    Samples above ``threshold`` (default: 5% of the driver maximum, but never
    below 1e-6) form runs; runs closer than ``merge_s`` are merged.
    """
    p = np.asarray(driver, dtype=float)
    if len(p) == 0 or p.max() <= 0:
        return []
    thr = max(0.05 * p.max(), 1e-6) if threshold is None else threshold
    on = np.flatnonzero(p > thr)
    if len(on) == 0:
        return []
    gap = max(1, int(round(merge_s * rate_hz)))
    bursts = []
    start = prev = on[0]
    for i in on[1:]:
        if i - prev > gap:
            bursts.append((int(start), int(prev) + 1))
            start = i
        prev = i
    bursts.append((int(start), int(prev) + 1))
    return bursts
