"""Lack-of-fit measures Q_M and their minimizers Q-hat.

Supported measures:

* ``ml_fay_herriot`` -- profiled Gaussian likelihood of the unit-variance
  area-level model, with the closed-form minimum
  (m/2) * (1 + log(2*pi) + log(RSS/m)).
* ``least_squares``  -- residual sum of squares under ordinary least squares.
* ``mvc``            -- mean/covariance measure |(T'V^-1 T)^-1 T'V^-1 (y - X beta)|^2
  over a parametric covariance family.
* ``glmm_sse``       -- sum of squared deviations of responses from marginal
  means of an extended GLMM with up to two nested random-effect levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .errors import (
    DegenerateResidual,
    DimensionMismatch,
    MissingSamplingVariances,
    NonPositiveDefinite,
    OptimizerFailure,
    RankDeficient,
    UnsupportedFamily,
    UnsupportedRandomStructure,
    ValidationError,
)
from .model_space import CandidateModel, Dataset
from .numerics import QuadratureRule, RngStream, gauss_hermite_rule, solve_least_squares

_DEGENERATE_RSS = 1e-12
_PSI_FLOOR = 1e-8

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class FitResult:
    """Minimized measure value with the minimizing parameters.

    ``qhat`` is certified for the closed-form measures and best-found for the
    iterative ones; variance components in ``theta_hat`` are nonnegative.
    """

    model_id: str
    qhat: float
    theta_hat: dict[str, float]


@dataclass(frozen=True)
class MeasureKind:
    """Which Q_M to use, plus measure-specific options.

    Options by tag:
      mvc:       ``T`` (full-rank matrix, default identity), ``covariance_family``
                 ("identity", "scaled_identity" or "exchangeable").
      glmm_sse:  ``link`` ("logit" or "identity"), ``quadrature_order``,
                 ``restarts``, ``maxiter``.
    """

    tag: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in {"ml_fay_herriot", "least_squares", "mvc", "glmm_sse"}:
            raise ValidationError(f"unknown measure tag {self.tag!r}")

    def opt(self, key, default):
        return self.options.get(key, default)


# ---------------------------------------------------------------------------
# Area-level model utilities
# ---------------------------------------------------------------------------


def transform_unit_variance(dataset: Dataset, rng: RngStream) -> Dataset:
    """Reduce known heteroscedastic sampling variances to the unit case.

    With D = 1 + max_i D_i, adds independent u_i ~ N(0, D - D_i) to the
    responses and rescales responses and covariates by 1/sqrt(D); the
    transformed data follow the same area-level model with unit sampling
    variance (regression coefficients unchanged, level variance A/D).
    """
    if dataset.sampling_variances is None:
        raise MissingSamplingVariances("transform requires known sampling variances")
    d = dataset.sampling_variances
    D = 1.0 + float(d.max())
    g = rng.substream(purpose=rng.purpose + "/unit_variance").generator()
    u = g.normal(0.0, np.sqrt(D - d))
    scale = 1.0 / np.sqrt(D)
    return Dataset(
        y=(dataset.y + u) * scale,
        candidates={name: col * scale for name, col in dataset.candidates.items()},
        cluster=dataset.cluster,
        community=dataset.community,
        family=dataset.family,
        sampling_variances=np.ones(dataset.n),
    )


def _design(dataset: Dataset, model: CandidateModel) -> np.ndarray:
    return dataset.design_matrix(model.fixed_effects)


def _ols(dataset: Dataset, model: CandidateModel) -> tuple[dict[str, float], float]:
    """OLS coefficients (empty model allowed) and residual sum of squares."""
    if not model.fixed_effects:
        return {}, float(dataset.y @ dataset.y)
    X = _design(dataset, model)
    coef, rss = solve_least_squares(X, dataset.y)
    return dict(zip(model.fixed_effects, coef.tolist())), rss


def fit_ml_fay_herriot(dataset: Dataset, model: CandidateModel) -> FitResult:
    """Profiled negative log-likelihood minimum of the unit-variance model.

    Q-hat = (m/2) * (1 + log(2*pi) + log(RSS/m)) where RSS is the squared
    orthogonal-projection residual of the model's design. The coefficient
    estimate is the (generalized = ordinary, under a common level variance)
    least-squares solution and ``A`` the profiled level variance clamped at 0.
    """
    if dataset.sampling_variances is None:
        raise MissingSamplingVariances("area-level measure requires sampling variances")
    if not np.allclose(dataset.sampling_variances, 1.0, atol=1e-8):
        raise ValidationError(
            "area-level measure requires unit sampling variances; apply transform_unit_variance"
        )
    m = dataset.n
    theta, rss = _ols(dataset, model)
    if rss <= _DEGENERATE_RSS:
        raise DegenerateResidual(
            f"residual sum of squares {rss:.3e} leaves log(RSS/m) undefined"
        )
    qhat = (m / 2.0) * (1.0 + LOG_2PI + np.log(rss / m))
    theta["A"] = max(rss / m - 1.0, 0.0)
    return FitResult(model_id=model.id, qhat=float(qhat), theta_hat=theta)


def fit_least_squares(dataset: Dataset, model: CandidateModel) -> FitResult:
    """Ordinary least squares; Q-hat is the residual sum of squares."""
    theta, rss = _ols(dataset, model)
    return FitResult(model_id=model.id, qhat=rss, theta_hat=theta)


# ---------------------------------------------------------------------------
# Mean/variance-covariance measure
# ---------------------------------------------------------------------------


def _mvc_weight(T: np.ndarray, Vinv: np.ndarray) -> np.ndarray:
    """(T' V^-1 T)^-1 T' V^-1, the t x n contrast map of the measure."""
    TtVinv = T.T @ Vinv
    gram = TtVinv @ T
    try:
        return np.linalg.solve(gram, TtVinv)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("T' V^-1 T is singular; T must have full column rank") from exc


def _build_cov_inverse(dataset: Dataset, family: str, params: np.ndarray) -> np.ndarray:
    n = dataset.n
    if family == "identity":
        return np.eye(n)
    if family == "scaled_identity":
        v = float(params[0])
        if v <= 0:
            raise NonPositiveDefinite(f"scaled identity variance must be positive, got {v}")
        return np.eye(n) / v
    if family == "exchangeable":
        if dataset.cluster is None:
            raise ValidationError("exchangeable covariance family requires cluster ids")
        a, b = float(params[0]), float(params[1])
        Vinv = np.zeros((n, n))
        for cid in np.unique(dataset.cluster):
            idx = np.flatnonzero(dataset.cluster == cid)
            k = idx.size
            if a <= 0 or a + k * b <= 0:
                raise NonPositiveDefinite(
                    f"exchangeable block a*I + b*J not positive definite (a={a}, b={b}, k={k})"
                )
            # (a I + b J)^-1 = I/a - b J / (a (a + k b))
            block = np.eye(k) / a - (b / (a * (a + k * b))) * np.ones((k, k))
            Vinv[np.ix_(idx, idx)] = block
        return Vinv
    raise UnsupportedFamily(f"unknown covariance family {family!r}")


def mvc_value(
    dataset: Dataset,
    model: CandidateModel,
    beta: np.ndarray,
    T: np.ndarray,
    Vinv: np.ndarray,
) -> float:
    """Evaluate the MVC measure at given coefficients and covariance inverse."""
    X = _design(dataset, model)
    resid = dataset.y - X @ np.asarray(beta, dtype=float)
    z = _mvc_weight(T, Vinv) @ resid
    return float(z @ z)


def fit_mvc(
    dataset: Dataset,
    model: CandidateModel,
    T: np.ndarray | None = None,
    covariance_family: str = "identity",
    *,
    restarts: int = 3,
) -> FitResult:
    """Minimize the MVC measure over coefficients and covariance parameters.

    For a fixed covariance the coefficient minimizer is the least-squares
    solution of the weighted system; covariance parameters (none for
    "identity", log-variance for "scaled_identity", within-cluster (a, b)
    for "exchangeable") are searched by Nelder-Mead restarts. Best-found
    semantics: ``qhat`` is the smallest value encountered.
    """
    X = _design(dataset, model)
    if X.shape[1] == 0:
        raise ValidationError("mvc requires at least one covariate")
    n = dataset.n
    T = np.eye(n) if T is None else np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != n:
        raise DimensionMismatch(f"T must have {n} rows, got shape {T.shape}")
    svals = np.linalg.svd(T, compute_uv=False)
    if svals[-1] <= 1e-10 * svals[0]:
        raise RankDeficient("T is numerically rank deficient")

    def profile(params: np.ndarray) -> tuple[float, np.ndarray]:
        Vinv = _build_cov_inverse(dataset, covariance_family, params)
        W = _mvc_weight(T, Vinv)
        WX, Wy = W @ X, W @ dataset.y
        beta, _, rank, _ = np.linalg.lstsq(WX, Wy, rcond=None)
        if rank < X.shape[1]:
            raise RankDeficient("weighted design W X lost column rank")
        z = Wy - WX @ beta
        return float(z @ z), beta

    if covariance_family == "identity":
        q, beta = profile(np.empty(0))
        theta = dict(zip(model.fixed_effects, beta.tolist()))
        return FitResult(model_id=model.id, qhat=q, theta_hat=theta)

    if covariance_family == "scaled_identity":
        start_sets = [np.array([0.0])]
        unpack = lambda t: np.array([np.exp(t[0])])
        names = ["v"]
    elif covariance_family == "exchangeable":
        marg = float(np.var(dataset.y))
        start_sets = [np.array([np.log(max(marg, 1e-2)), 0.0])]
        # t = (log a, atanh-free b share); keep b inside (-a/k_max, inf) via softplus shift
        kmax = max(np.bincount(np.unique(dataset.cluster, return_inverse=True)[1]).max(), 2)

        def unpack(t):
            a = np.exp(t[0])
            b = (np.exp(t[1]) - 1.0 / kmax) * a  # b > -a/kmax keeps blocks PD
            return np.array([a, b])

        names = ["a", "b"]
    else:
        raise UnsupportedFamily(f"unknown covariance family {covariance_family!r}")

    best = None
    g = np.random.Generator(np.random.Philox(12345))
    starts = list(start_sets)
    while len(starts) < restarts:
        starts.append(starts[0] + g.normal(0, 0.5, size=starts[0].shape))

    def objective(t):
        try:
            return profile(unpack(t))[0]
        except (NonPositiveDefinite, RankDeficient):
            return np.inf

    for s in starts:
        res = optimize.minimize(objective, s, method="Nelder-Mead", options={"maxiter": 400})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise OptimizerFailure("no improving step found from any restart")
    q, beta = profile(unpack(best.x))
    theta = dict(zip(model.fixed_effects, beta.tolist()))
    theta.update(dict(zip(names, unpack(best.x).tolist())))
    return FitResult(model_id=model.id, qhat=q, theta_hat=theta)


# ---------------------------------------------------------------------------
# Extended-GLMM sum-of-squares measure
# ---------------------------------------------------------------------------


def _link_fn(link: str):
    if link == "logit":
        return lambda eta: 1.0 / (1.0 + np.exp(-eta))
    if link == "identity":
        return lambda eta: eta
    raise ValidationError(f"unsupported link {link!r}")


def marginal_mean(
    eta: np.ndarray,
    sds: tuple[float, ...],
    rule: QuadratureRule,
    link: str = "logit",
) -> np.ndarray:
    """E[h(eta + sum_k sd_k * Z_k)] with independent standard normal Z_k.

    Quadrature runs over at most two nested random-effect levels; ``eta`` may
    be a vector, in which case the expectation is computed elementwise.
    """
    sds = tuple(float(s) for s in sds if s > 0.0)
    if len(sds) > 2:
        raise UnsupportedRandomStructure(
            f"effective random-effect dimension {len(sds)} > 2 is not supported"
        )
    h = _link_fn(link)
    eta = np.asarray(eta, dtype=float)
    if not sds:
        return h(eta)
    if link == "identity":
        return eta.copy()  # zero-mean effects drop out of a linear h
    nodes, weights = rule.nodes, rule.weights
    if len(sds) == 1:
        shift = sds[0] * nodes  # (q,)
        vals = h(eta[..., None] + shift)
        return vals @ weights
    a = sds[0] * nodes[:, None] + sds[1] * nodes[None, :]  # (q, q)
    w2 = weights[:, None] * weights[None, :]
    vals = h(eta[..., None, None] + a)
    return np.tensordot(vals, w2, axes=([-2, -1], [0, 1]))


def glmm_mean_g(
    model: CandidateModel,
    beta: np.ndarray,
    psi: np.ndarray,
    x_i: np.ndarray,
    z_i: np.ndarray,
    rule: QuadratureRule,
    link: str = "logit",
) -> float:
    """Marginal mean of one observation under the extended GLMM.

    ``beta`` aligns with ``model.fixed_effects``, ``psi`` (variances, >= 0)
    and the 0/1 loadings ``z_i`` with ``model.random_effects``. The
    expectation over the random effects is a one- or two-dimensional Gaussian
    integral evaluated with the supplied quadrature rule.
    """
    beta = np.asarray(beta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    z_i = np.asarray(z_i, dtype=float)
    if beta.shape[0] != len(model.fixed_effects):
        raise DimensionMismatch("beta length does not match the model's covariates")
    if psi.shape[0] != len(model.random_effects) or z_i.shape[0] != psi.shape[0]:
        raise DimensionMismatch("psi/z_i length does not match the model's random structures")
    if np.any(psi < 0):
        raise ValidationError("variance components must be nonnegative")
    eta = float(np.dot(np.asarray(x_i, dtype=float), beta))
    sds = tuple(np.sqrt(psi) * np.abs(z_i))
    return float(marginal_mean(np.array([eta]), sds, rule, link)[0])


def _glmm_qvalue(
    dataset: Dataset,
    model: CandidateModel,
    beta: np.ndarray,
    psi: np.ndarray,
    rule: QuadratureRule,
    link: str,
) -> float:
    X = _design(dataset, model)
    eta = X @ beta if X.shape[1] else np.zeros(dataset.n)
    g = marginal_mean(eta, tuple(np.sqrt(np.maximum(psi, 0.0))), rule, link)
    resid = dataset.y - g
    return float(resid @ resid)


def _glmm_start(dataset: Dataset, model: CandidateModel, link: str) -> np.ndarray:
    """Moment-based start: plain GLM coefficients, ignoring random effects."""
    X = _design(dataset, model)
    p = X.shape[1]
    if p == 0:
        return np.empty(0)
    if link == "identity":
        coef, _ = solve_least_squares(X, dataset.y)
        return coef
    y = dataset.y

    def nll(b):
        eta = np.clip(X @ b, -30, 30)
        return float(np.sum(np.log1p(np.exp(eta)) - y * eta))

    def grad(b):
        eta = np.clip(X @ b, -30, 30)
        return X.T @ (1.0 / (1.0 + np.exp(-eta)) - y)

    res = optimize.minimize(nll, np.zeros(p), jac=grad, method="BFGS", options={"maxiter": 200})
    return res.x


def fit_glmm_sse(
    dataset: Dataset,
    model: CandidateModel,
    rule: QuadratureRule | None = None,
    optimizer_config: dict | None = None,
    *,
    link: str = "logit",
) -> FitResult:
    """Minimize sum_i (y_i - g_i(beta, psi))^2 over coefficients and variances.

    Derivative-free simplex search with restarts from perturbed moment-based
    starts; variance components ride a log scale floored at 1e-8 so the
    optimizer cannot wander into negative territory. Best-found semantics.
    """
    if len(model.random_effects) > 2:
        raise UnsupportedRandomStructure(
            f"{len(model.random_effects)} random-effect levels exceed the supported two"
        )
    cfg = dict(optimizer_config or {})
    restarts = int(cfg.get("restarts", 5))
    maxiter = int(cfg.get("maxiter", 2000))
    seed = int(cfg.get("seed", 202) & 0xFFFFFFFF)
    rule = rule or gauss_hermite_rule(15)
    p = len(model.fixed_effects)
    r = len(model.random_effects)

    if r == 0 and link == "identity":
        return fit_least_squares(dataset, model)

    beta0 = _glmm_start(dataset, model, link)
    t0 = np.concatenate([beta0, np.full(r, np.log(0.25))])

    def objective(t):
        beta = t[:p]
        psi = np.exp(np.clip(t[p:], np.log(_PSI_FLOOR), 10.0)) if r else np.empty(0)
        return _glmm_qvalue(dataset, model, beta, psi, rule, link)

    g = np.random.Generator(np.random.Philox(seed))
    best = None
    for k in range(max(restarts, 1)):
        start = t0 if k == 0 else t0 + g.normal(0, 0.3, size=t0.shape)
        res = optimize.minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-10},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise OptimizerFailure("no improving step found from any restart")
    beta = best.x[:p]
    psi = np.exp(np.clip(best.x[p:], np.log(_PSI_FLOOR), 10.0)) if r else np.empty(0)
    theta = dict(zip(model.fixed_effects, beta.tolist()))
    theta.update({f"var({name})": float(v) for name, v in zip(model.random_effects, psi)})
    return FitResult(model_id=model.id, qhat=float(best.fun), theta_hat=theta)


# ---------------------------------------------------------------------------
# Dispatch and per-cluster decomposition
# ---------------------------------------------------------------------------


def fit_model(dataset: Dataset, model: CandidateModel, measure: MeasureKind) -> FitResult:
    """Fit one candidate under the chosen measure."""
    if measure.tag == "ml_fay_herriot":
        return fit_ml_fay_herriot(dataset, model)
    if measure.tag == "least_squares":
        return fit_least_squares(dataset, model)
    if measure.tag == "mvc":
        return fit_mvc(
            dataset,
            model,
            T=measure.opt("T", None),
            covariance_family=measure.opt("covariance_family", "identity"),
        )
    if measure.tag == "glmm_sse":
        order = int(measure.opt("quadrature_order", 15))
        cfg = {
            "restarts": measure.opt("restarts", 5),
            "maxiter": measure.opt("maxiter", 2000),
        }
        return fit_glmm_sse(
            dataset,
            model,
            rule=gauss_hermite_rule(order),
            optimizer_config=cfg,
            link=measure.opt("link", "logit"),
        )
    raise UnsupportedFamily(f"no fitter for measure {measure.tag!r}")


def fit_table(dataset: Dataset, space, measure: MeasureKind) -> dict[str, FitResult]:
    """Fit every model in the space; keyed by model id."""
    return {m.id: fit_model(dataset, m, measure) for m in space.models}


def measure_value(
    dataset: Dataset,
    model: CandidateModel,
    measure: MeasureKind,
    theta: dict[str, float],
) -> float:
    """Evaluate Q_M at explicit parameters (no minimization).

    For the area-level measure ``theta`` must contain the level variance "A";
    for glmm_sse, "var(<structure>)" entries give the variance components.
    """
    beta = np.array([theta[name] for name in model.fixed_effects], dtype=float)
    X = _design(dataset, model)
    if measure.tag == "least_squares":
        r = dataset.y - (X @ beta if beta.size else 0.0)
        return float(r @ r)
    if measure.tag == "ml_fay_herriot":
        A = float(theta["A"])
        total = A + 1.0
        r = dataset.y - (X @ beta if beta.size else 0.0)
        m = dataset.n
        return float((m / 2.0) * np.log(2.0 * np.pi * total) + (r @ r) / (2.0 * total))
    if measure.tag == "glmm_sse":
        psi = np.array([theta[f"var({nm})"] for nm in model.random_effects], dtype=float)
        rule = gauss_hermite_rule(int(measure.opt("quadrature_order", 15)))
        return _glmm_qvalue(dataset, model, beta, psi, rule, measure.opt("link", "logit"))
    if measure.tag == "mvc":
        family = measure.opt("covariance_family", "identity")
        pnames = {"identity": [], "scaled_identity": ["v"], "exchangeable": ["a", "b"]}[family]
        params = np.array([theta[nm] for nm in pnames], dtype=float)
        Vinv = _build_cov_inverse(dataset, family, params)
        T = measure.opt("T", None)
        T = np.eye(dataset.n) if T is None else np.asarray(T, dtype=float)
        return mvc_value(dataset, model, beta, T, Vinv)
    raise UnsupportedFamily(f"no evaluator for measure {measure.tag!r}")


def cluster_ids(dataset: Dataset) -> np.ndarray:
    """Independent-unit labels: clusters if present, else communities."""
    if dataset.cluster is not None:
        return dataset.cluster
    if dataset.community is not None:
        return dataset.community
    raise ValidationError("dataset has no grouping structure")


def per_cluster_qhat(
    dataset: Dataset, model: CandidateModel, fit: FitResult, measure: MeasureKind
) -> np.ndarray:
    """Per-cluster terms Q_{M,i} of a measure that decomposes as a sum.

    Supported for ``least_squares`` and ``glmm_sse`` (squared residuals summed
    within each independent unit, at the fitted parameters).
    """
    ids = cluster_ids(dataset)
    beta = np.array([fit.theta_hat[name] for name in model.fixed_effects], dtype=float)
    X = _design(dataset, model)
    eta = X @ beta if beta.size else np.zeros(dataset.n)
    if measure.tag == "least_squares":
        resid = dataset.y - eta
    elif measure.tag == "glmm_sse":
        psi = np.array(
            [fit.theta_hat[f"var({nm})"] for nm in model.random_effects], dtype=float
        )
        rule = gauss_hermite_rule(int(measure.opt("quadrature_order", 15)))
        g = marginal_mean(eta, tuple(np.sqrt(psi)), rule, measure.opt("link", "logit"))
        resid = dataset.y - g
    else:
        raise ValidationError(
            f"measure {measure.tag!r} has no per-cluster decomposition Q_M = sum_i Q_M,i"
        )
    labels, inverse = np.unique(ids, return_inverse=True)
    return np.bincount(inverse, weights=resid**2, minlength=labels.size)
