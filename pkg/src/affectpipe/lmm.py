"""Random-intercept linear mixed model of perceived progress.

The model is ``progress = X beta + u_subject + e`` with
``u ~ N(0, sigma_u^2)`` and ``e ~ N(0, sigma_e^2)``. Writing
``theta = sigma_u^2 / sigma_e^2``, every subject block of the covariance is
``sigma_e^2 (I + theta J)``, whose inverse and determinant are closed-form, so
``beta`` and ``sigma_e^2`` are profiled out and only ``theta`` is searched.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import InsufficientData, NotConverged, RankDeficient
from .model import SessionRecord

log = logging.getLogger(__name__)

TERMS = ("intercept", "valence", "arousal", "time", "valence:time", "arousal:time")
SEQUENTIAL_ORDER = TERMS[1:]
TIME_CENTER = 3.5
THETA_MAX = 1e4
THETA_TOL = 1e-8
MAX_ITER = 500


@dataclass(frozen=True)
class RawScore:
    subject_id: str
    time_idx: int
    valence: float
    arousal: float
    progress: float


@dataclass(frozen=True)
class LmmObservation:
    subject_id: str
    time_idx: int
    valence_z: float
    arousal_z: float
    progress: float
    flags: frozenset = field(default_factory=frozenset)


def scores_from_sessions(sessions: Iterable[SessionRecord]) -> list[RawScore]:
    """One raw score per interruption; time is the 1-based interruption index."""
    return [RawScore(s.subject_id, i + 1, r.valence, r.arousal, r.progress)
            for s in sessions for i, r in enumerate(s.interruptions)]


def standardize_scores(raw: Sequence[RawScore]) -> list[LmmObservation]:
    """Z-score valence and arousal within each subject.

    A column that is constant for a subject maps to 0 and the observation is
    flagged ``"<column>_constant"``.
    """
    by_subject: dict[str, list[int]] = {}
    for i, r in enumerate(raw):
        by_subject.setdefault(r.subject_id, []).append(i)
    z = {"valence": np.zeros(len(raw)), "arousal": np.zeros(len(raw))}
    flags = [set() for _ in raw]
    for rows in by_subject.values():
        for col in z:
            v = np.array([getattr(raw[i], col) for i in rows], dtype=float)
            sd = v.std()
            if sd < 1e-12:
                for i in rows:
                    flags[i].add(f"{col}_constant")
            else:
                z[col][rows] = (v - v.mean()) / sd
    return [LmmObservation(r.subject_id, int(r.time_idx), float(z["valence"][i]),
                           float(z["arousal"][i]), float(r.progress), frozenset(flags[i]))
            for i, r in enumerate(raw)]


def design(obs: Sequence[LmmObservation]) -> np.ndarray:
    v = np.array([o.valence_z for o in obs])
    a = np.array([o.arousal_z for o in obs])
    t = np.array([o.time_idx for o in obs], dtype=float) - TIME_CENTER
    return np.column_stack([np.ones(len(obs)), v, a, t, v * t, a * t])


class _Profile:
    """Sufficient statistics for the profiled likelihood of one design."""

    def __init__(self, X, y, groups):
        self.n, self.p = X.shape
        _, inv = np.unique(groups, return_inverse=True)
        m = inv.max() + 1
        self.sizes = np.bincount(inv, minlength=m).astype(float)
        self.S = np.zeros((m, self.p))
        np.add.at(self.S, inv, X)
        self.sy = np.bincount(inv, weights=y, minlength=m)
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)

    def gls(self, theta):
        c = theta / (1.0 + self.sizes * theta)
        XVX = self.XtX - (self.S.T * c) @ self.S
        XVy = self.Xty - (self.S.T * c) @ self.sy
        yVy = self.yty - float(np.sum(c * self.sy ** 2))
        beta = np.linalg.solve(XVX, XVy)
        rss = max(yVy - float(beta @ XVy), 0.0)
        logdet = float(np.sum(np.log1p(self.sizes * theta)))
        return beta, XVX, rss, logdet

    def neg2ll(self, theta, reml):
        beta, XVX, rss, logdet = self.gls(theta)
        if reml:
            k = self.n - self.p
            s2 = rss / k
            return k * math.log(2 * math.pi * s2) + logdet + np.linalg.slogdet(XVX)[1] + k
        s2 = rss / self.n
        return self.n * math.log(2 * math.pi * s2) + logdet + self.n


@dataclass(frozen=True)
class _RawFit:
    theta: float
    beta: np.ndarray
    cov: np.ndarray
    sigma2_e: float
    neg2ll: float
    iterations: int
    at_bound: bool


def _optimize(X, y, groups, reml: bool, theta=None) -> _RawFit:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficient(f"design matrix has rank {np.linalg.matrix_rank(X)} < {X.shape[1]}")
    prof = _Profile(X, y, groups)
    if prof.n <= prof.p:
        raise InsufficientData("not more observations than fixed effects")
    it = 0
    if theta is None:
        if np.all(prof.sizes == 1):
            log.warning("one observation per subject: random-intercept variance is not "
                        "identifiable, theta fixed at 0")
            theta = 0.0
        else:
            res = optimize.minimize_scalar(lambda t: prof.neg2ll(t, reml), bounds=(0.0, THETA_MAX),
                                           method="bounded",
                                           options={"xatol": THETA_TOL, "maxiter": MAX_ITER})
            it = int(res.nfev)
            if not res.success:
                raise NotConverged(f"theta search failed: {res.message}")
            theta = float(res.x)
            # bounded Brent never evaluates the end points, so compare them explicitly
            for edge in (0.0, THETA_MAX):
                if prof.neg2ll(edge, reml) <= prof.neg2ll(theta, reml):
                    theta = edge
    beta, XVX, rss, _ = prof.gls(theta)
    s2 = rss / (prof.n - prof.p if reml else prof.n)
    cov = s2 * np.linalg.inv(XVX)
    at_bound = theta <= THETA_TOL or theta >= THETA_MAX - 1.0
    return _RawFit(theta, beta, cov, s2, prof.neg2ll(theta, reml), it, at_bound)


def _arrays(obs: Sequence[LmmObservation]):
    if not obs:
        raise InsufficientData("no observations")
    groups = np.array([o.subject_id for o in obs], dtype=object)
    if len(set(groups)) < 2:
        raise InsufficientData("at least two subjects are required")
    y = np.array([o.progress for o in obs], dtype=float)
    return design(obs), y, groups


@dataclass
class LmmFit:
    method: str
    terms: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    sigma2_u: float
    sigma2_e: float
    theta: float
    reml_loglik: float
    ml_loglik: float
    n_obs: int
    n_subjects: int
    iterations: int
    dof: tuple[int, int]
    p_values: tuple[np.ndarray, np.ndarray]
    deviance_explained: dict = field(default_factory=dict)
    lr: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def t_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.beta / self.se

    def coef(self, term: str) -> float:
        return float(self.beta[self.terms.index(term)])

    def to_dict(self) -> dict:
        return {"method": self.method, "n_obs": self.n_obs, "n_subjects": self.n_subjects,
                "sigma2_u": self.sigma2_u, "sigma2_e": self.sigma2_e, "theta": self.theta,
                "reml_loglik": self.reml_loglik, "ml_loglik": self.ml_loglik,
                "iterations": self.iterations, "dof": list(self.dof),
                "fixed_effects": [{"term": t, "estimate": float(b), "std_error": float(s),
                                   "t": float(b / s) if s > 0 else None,
                                   "p_upper": float(p1), "p_lower": float(p2),
                                   "deviance_explained": self.deviance_explained.get(t)}
                                  for t, b, s, p1, p2 in zip(self.terms, self.beta, self.se,
                                                             *self.p_values)],
                "lr_test": self.lr, "warnings": list(self.warnings)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _cols(terms):
    return [TERMS.index(t) for t in terms]


def _ml_neg2ll(X, y, groups, terms) -> float:
    return _optimize(X[:, _cols(terms)], y, groups, reml=False).neg2ll


def fit_lmm(obs: Sequence[LmmObservation], method: str = "REML", theta: float | None = None,
            analyses: bool = True) -> LmmFit:
    """Fit the six-term random-intercept model.

    Parameters
    ----------
    method : {"REML", "ML"}
    theta : float, optional
        Fix ``sigma_u^2 / sigma_e^2`` instead of estimating it; ``theta=0``
        gives ordinary least squares.
    analyses : bool
        Also run the likelihood-ratio test against the null model and the
        sequential deviance decomposition (both need extra ML fits).
    """
    method = method.upper()
    if method not in ("REML", "ML"):
        raise ValueError("method must be REML or ML")
    X, y, groups = _arrays(obs)
    warnings = []
    fit = _optimize(X, y, groups, method == "REML", theta)
    if theta is None and fit.at_bound:
        warnings.append(f"theta at bound ({fit.theta:g})")
    reml = fit if method == "REML" else _optimize(X, y, groups, True, theta)
    ml = fit if method == "ML" else _optimize(X, y, groups, False, theta)
    n, p = X.shape
    m = len(set(groups))
    dof = (n - p, n - p - (m - 1))
    se = np.sqrt(np.clip(np.diag(fit.cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, fit.beta / se, 0.0)
    pv = tuple(2 * stats.t.sf(np.abs(t), df) if df > 0 else np.full(p, np.nan) for df in dof)
    out = LmmFit(method, TERMS, fit.beta, se, fit.theta * fit.sigma2_e, fit.sigma2_e, fit.theta,
                 -0.5 * reml.neg2ll, -0.5 * ml.neg2ll, n, m, fit.iterations, dof, pv,
                 warnings=warnings)
    if analyses:
        out.lr = lr_test_vs_null(out, obs)
        out.deviance_explained = deviance_explained(obs)
    return out


def lr_test_vs_null(full: LmmFit, data: Sequence[LmmObservation]) -> dict:
    """Likelihood-ratio test of the full model against intercept plus random intercept.

    Both models are compared on their ML log-likelihoods.
    """
    X, y, groups = _arrays(data)
    null = -0.5 * _ml_neg2ll(X, y, groups, ("intercept",))
    chi2 = max(2.0 * (full.ml_loglik - null), 0.0)
    dof = len(TERMS) - 1
    return {"chi2": chi2, "dof": dof, "p": float(stats.chi2.sf(chi2, dof)),
            "ml_loglik_full": full.ml_loglik, "ml_loglik_null": null}


def deviance_explained(data: Sequence[LmmObservation]) -> dict:
    """Sequential share of the null deviance removed by each term, in percent.

    Terms enter in the order valence, arousal, time, valence:time,
    arousal:time; deviance is -2 times the maximised ML log-likelihood.
    """
    X, y, groups = _arrays(data)
    terms = ["intercept"]
    dev = [_ml_neg2ll(X, y, groups, terms)]
    for t in SEQUENTIAL_ORDER:
        terms.append(t)
        dev.append(_ml_neg2ll(X, y, groups, terms))
    null = dev[0]
    shares = {t: 100.0 * (dev[i] - dev[i + 1]) / null for i, t in enumerate(SEQUENTIAL_ORDER)}
    shares["total"] = 100.0 * (dev[0] - dev[-1]) / null
    return shares


# --- synthetic data for recovery checks --------------------------------------

REFERENCE_BETA = (3.0, 0.17, -0.05, -0.02, 0.03, 0.02)


def simulate(beta: Sequence[float] = REFERENCE_BETA, sigma_u: float = 0.5, sigma_e: float = 0.8,
             n_subjects: int = 23, n_times: int = 6, seed: int = 0,
             discrete: bool = False) -> list[LmmObservation]:
    """Draw observations from the model itself.

    Standardized valence/arousal are generated directly (per subject zero mean,
    unit variance). With ``discrete`` progress is rounded and clipped to 1..5
    as a rating would be.
    """
    rng = np.random.default_rng(seed)
    out = []
    for s in range(n_subjects):
        va = rng.normal(size=(n_times, 2))
        va = (va - va.mean(axis=0)) / va.std(axis=0)
        u = rng.normal(0.0, sigma_u)
        for i in range(n_times):
            tc = i + 1 - TIME_CENTER
            x = np.array([1.0, va[i, 0], va[i, 1], tc, va[i, 0] * tc, va[i, 1] * tc])
            y = float(x @ np.asarray(beta)) + u + rng.normal(0.0, sigma_e)
            if discrete:
                y = float(np.clip(np.rint(y), 1, 5))
            out.append(LmmObservation(f"s{s:02d}", i + 1, float(va[i, 0]), float(va[i, 1]), y))
    return out


def render_table(fit: LmmFit) -> str:
    """Fixed-effect table: estimate, error, t, two p-values and deviance share."""
    d1, d2 = fit.dof
    header = ["term", "estimate", "std_error", "t", f"p ({d1} d.f.)", f"p ({d2} d.f.)",
              "dev_explained_%"]
    rows = []
    for i, t in enumerate(fit.terms):
        dev = fit.deviance_explained.get(t)
        rows.append([t, f"{fit.beta[i]:.3f}", f"{fit.se[i]:.3f}", f"{fit.t_values[i]:.2f}",
                     _fmt_p(fit.p_values[0][i]), _fmt_p(fit.p_values[1][i]),
                     "" if dev is None else f"{dev:.1f}"])
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(x.ljust(w) for x, w in zip(r, widths)).rstrip() for r in [header] + rows]
    lines.append(f"random intercept variance {fit.sigma2_u:.4f}, residual variance "
                 f"{fit.sigma2_e:.4f}, {fit.method} log-likelihood "
                 f"{fit.reml_loglik if fit.method == 'REML' else fit.ml_loglik:.2f}")
    if fit.lr:
        lines.append(f"vs null: chi2({fit.lr['dof']}) = {fit.lr['chi2']:.2f}, "
                     f"p = {_fmt_p(fit.lr['p'])}")
    return "\n".join(lines) + "\n"


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"
