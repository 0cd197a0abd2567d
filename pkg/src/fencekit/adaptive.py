"""Bootstrap calibration of the fence tuning constant.

The adaptive procedure draws model-based bootstrap samples under the full
model's fit, traces the frequency p*(c) with which the fence selects its most
popular model over a grid of tuning constants, and places c* at the plateau
or peak of that curve. Screen tests (full-model and minimum-model) or the
baseline-adjustment/threshold-checking pair guard the two extreme cases in
which the optimal model is the full or the minimum model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NoInteriorPeak,
    UnsupportedFamily,
    ValidationError,
    ZeroSigma,
)
from .fence import FenceConfig, fence_select, sigma_table
from .measures import FitResult, MeasureKind, fit_model, fit_table
from .model_space import CandidateModel, Dataset, ModelSpace, model_id
from .numerics import RngStream, f_distribution_mean_of_gap
from .sigma import SigmaKind


@dataclass(frozen=True)
class AdaptiveConfig:
    """Bootstrap size, grid resolution, guarding strategy and test rates.

    ``rates`` are the (a_n, b_n, g_n, h_n) scales of the screen tests; when
    omitted they default to (u, 1, u, 1) with u the number of independent
    units, the natural scale of the measure-gap expectations. For the
    area-level likelihood measure the small-order scales b_n and h_n are
    instead taken as the exactly known expected deviance gaps of true
    candidates, which the closed-form gap law provides without any tuning
    constant. ``peak_tolerance`` widens the peak comparison: peaks within
    this distance of the highest count as tied and the smallest median wins;
    the default (None) uses 1/sqrt(bootstrap_B), the sampling resolution of
    the bootstrap frequencies.
    """

    bootstrap_B: int = 100
    grid_points: int = 101
    strategy: str = "screen_tests"
    two_step: bool = False
    rates: tuple[float, float, float, float] | None = None
    baseline_distribution: str = "normal"
    peak_tolerance: float | None = None

    def __post_init__(self):
        if self.bootstrap_B < 2:
            raise ValidationError("bootstrap_B must be at least 2")
        if self.grid_points < 3:
            raise ValidationError("grid_points must be at least 3")
        if self.strategy not in {"screen_tests", "baseline_threshold", "none"}:
            raise ValidationError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class PStarCurve:
    """p*(c) over the grid, with the modal model at each grid point."""

    c_values: np.ndarray
    pstar: np.ndarray
    per_c_modal_model: tuple[str | None, ...]


@dataclass(frozen=True)
class AdaptiveReport:
    """Everything the adaptive run decided and why."""

    curve: PStarCurve
    c_star: float
    selected: CandidateModel
    q_star: float | None = None
    r_star: float | None = None
    d_star: float | None = None
    baseline_adjusted: bool = False
    bootstrap_B: int = 0
    details: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Model-based bootstrap generators
# ---------------------------------------------------------------------------


def _model_columns(fitted: FitResult) -> list[str]:
    variance_keys = {"A", "v", "a", "b"}
    return [
        k for k in fitted.theta_hat if k not in variance_keys and not k.startswith("var(")
    ]


def bootstrap_datasets(
    dataset: Dataset,
    fitted_full: FitResult,
    measure: MeasureKind,
    B: int,
    rng: RngStream,
) -> list[Dataset]:
    """B datasets drawn from the fitted parametric family.

    Covariates and grouping are copied from ``dataset``; only responses are
    redrawn. Families: the unit-variance area-level model (responses
    N(X beta, A + 1)), the clustered linear model under least squares
    (Gaussian clusters with the pooled empirical covariance of the full-model
    cluster residuals), and the two-level logistic model.
    """
    names = _model_columns(fitted_full)
    beta = np.array([fitted_full.theta_hat[k] for k in names], dtype=float)
    X = dataset.design_matrix(names)
    mu = X @ beta if beta.size else np.zeros(dataset.n)
    base = rng.substream(purpose=rng.purpose + "/bootstrap")

    def clone(y: np.ndarray) -> Dataset:
        return Dataset(
            y=y,
            candidates=dataset.candidates,
            cluster=dataset.cluster,
            community=dataset.community,
            family=dataset.family,
            sampling_variances=dataset.sampling_variances,
        )

    out = []
    if measure.tag == "ml_fay_herriot":
        total_sd = float(np.sqrt(fitted_full.theta_hat["A"] + 1.0))
        for b in range(B):
            g = base.substream(stream_id=b).generator()
            out.append(clone(mu + g.normal(0.0, total_sd, size=dataset.n)))
        return out

    if measure.tag in {"least_squares", "mvc"}:
        resid = dataset.y - mu
        if dataset.cluster is None:
            s = float(np.sqrt(resid @ resid / dataset.n))
            for b in range(B):
                g = base.substream(stream_id=b).generator()
                out.append(clone(mu + g.normal(0.0, s, size=dataset.n)))
            return out
        labels, inverse = np.unique(dataset.cluster, return_inverse=True)
        sizes = np.bincount(inverse)
        if not np.all(sizes == sizes[0]):
            raise UnsupportedFamily(
                "clustered bootstrap requires equal cluster sizes for the pooled covariance"
            )
        k = int(sizes[0])
        order = np.argsort(inverse, kind="stable")
        E = resid[order].reshape(labels.size, k)
        cov = E.T @ E / labels.size
        chol = np.linalg.cholesky(cov + 1e-12 * np.eye(k))
        for b in range(B):
            g = base.substream(stream_id=b).generator()
            noise = g.standard_normal((labels.size, k)) @ chol.T
            y = mu.copy()
            y[order] += noise.ravel()
            out.append(clone(y))
        return out

    if measure.tag == "glmm_sse":
        if measure.opt("link", "logit") != "logit":
            raise UnsupportedFamily("glmm bootstrap is defined for the logit link")
        if dataset.community is None:
            raise UnsupportedFamily("glmm bootstrap requires two-level grouping")
        var_names = [k for k in fitted_full.theta_hat if k.startswith("var(")]
        sds = {k[4:-1]: float(np.sqrt(fitted_full.theta_hat[k])) for k in var_names}
        com_labels, com_inv = np.unique(dataset.community, return_inverse=True)
        fam_labels, fam_inv = np.unique(dataset.family, return_inverse=True)
        for b in range(B):
            g = base.substream(stream_id=b).generator()
            eta = mu.copy()
            if "community" in sds:
                eta = eta + g.normal(0.0, sds["community"], com_labels.size)[com_inv]
            if "family" in sds:
                eta = eta + g.normal(0.0, sds["family"], fam_labels.size)[fam_inv]
            p = 1.0 / (1.0 + np.exp(-eta))
            out.append(clone((g.random(dataset.n) < p).astype(float)))
        return out

    raise UnsupportedFamily(f"no bootstrap generator for measure {measure.tag!r}")


# ---------------------------------------------------------------------------
# Curve machinery
# ---------------------------------------------------------------------------


@dataclass
class _BootTables:
    """Per-bootstrap measure values and widths against a common reference."""

    model_ids: list[str]
    dims: np.ndarray
    id_ranks: np.ndarray
    qhat: np.ndarray   # (B, n_models)
    sigma: np.ndarray  # (B, n_models)
    ref_q: np.ndarray  # (B,)


def _build_tables(
    space: ModelSpace,
    datasets: list[Dataset],
    measure: MeasureKind,
    sigma_kind: SigmaKind,
    reference: CandidateModel,
    reference_in_space: bool,
) -> _BootTables:
    models = list(space.models)
    ids = [m.id for m in models]
    dims = np.array([m.dimension for m in models])
    id_ranks = np.argsort(np.argsort(np.array(ids)))
    B = len(datasets)
    qhat = np.empty((B, len(models)))
    sig = np.empty((B, len(models)))
    ref_q = np.empty(B)
    for b, ds in enumerate(datasets):
        fits = {m.id: fit_model(ds, m, measure) for m in models}
        ref_fit = fits[reference.id] if reference_in_space else fit_model(ds, reference, measure)
        ref_q[b] = ref_fit.qhat
        table = sigma_table(
            models,
            fits,
            reference,
            sigma_kind,
            dataset=ds,
            measure=measure,
            reference_fit=ref_fit,
        )
        qhat[b] = [fits[i].qhat for i in ids]
        sig[b] = [table[i] for i in ids]
    return _BootTables(
        model_ids=ids, dims=dims, id_ranks=id_ranks, qhat=qhat, sigma=sig, ref_q=ref_q
    )


def _ratios(tables: _BootTables) -> np.ndarray:
    """Standardized excesses r = (q - ref)/sigma; +-inf where sigma is zero."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (tables.qhat - tables.ref_q[:, None]) / tables.sigma
    zero = tables.sigma <= 0.0
    inside = tables.qhat <= tables.ref_q[:, None]
    r[zero & inside] = -np.inf
    r[zero & ~inside] = np.inf
    return r


def _selection_grid(tables: _BootTables, c_values: np.ndarray) -> np.ndarray:
    """Selected model index per (bootstrap, grid point); -1 for an empty fence."""
    B, nm = tables.qhat.shape
    r = _ratios(tables)
    sel = np.empty((B, c_values.size), dtype=np.int64)
    for b in range(B):
        order = np.lexsort((tables.id_ranks, tables.qhat[b], tables.dims))
        r_ord = r[b][order]
        mask = r_ord[None, :] <= c_values[:, None]
        any_in = mask.any(axis=1)
        first = np.argmax(mask, axis=1)
        sel[b] = np.where(any_in, order[first], -1)
    return sel


def _curve_from_selections(
    tables: _BootTables, sel: np.ndarray, c_values: np.ndarray
) -> PStarCurve:
    B = sel.shape[0]
    pstar = np.zeros(c_values.size)
    modal: list[str | None] = []
    for j in range(c_values.size):
        col = sel[:, j]
        col = col[col >= 0]
        if col.size == 0:
            modal.append(None)
            continue
        counts = np.bincount(col, minlength=len(tables.model_ids))
        top = counts.max()
        pstar[j] = top / B
        winners = np.flatnonzero(counts == top)
        best = winners[np.argmin(tables.id_ranks[winners])]
        modal.append(tables.model_ids[best])
    return PStarCurve(c_values=c_values, pstar=pstar, per_c_modal_model=tuple(modal))


def upper_bound_B(qhat_min_model: float, qhat_full: float, sigma_min_full: float) -> float:
    """floor(B) + 1 with B = (Qhat_min - Qhat_full)/sigma; the c grid's right end."""
    if sigma_min_full <= 0:
        raise ZeroSigma("sigma between the minimum and full model must be positive")
    B = max((qhat_min_model - qhat_full) / sigma_min_full, 0.0)
    return float(np.floor(B) + 1.0)


def _grid_upper_bound(
    obs_gap_ratio: float, tables: _BootTables, min_index: int
) -> float:
    """Stretch the grid so every bootstrap replicate's fence closes at the end.

    Uses the largest standardized gap of the minimum model across the
    observed data and all bootstrap replicates; this keeps p*(B*) exactly at
    one when the minimum model is unique, instead of only approximately.
    """
    r = _ratios(tables)[:, min_index]
    finite = r[np.isfinite(r)]
    biggest = max([obs_gap_ratio, *finite.tolist()], default=obs_gap_ratio)
    return float(np.floor(max(biggest, 0.0)) + 1.0)


def pstar_curve(
    space: ModelSpace,
    dataset: Dataset,
    measure: MeasureKind,
    sigma_kind: SigmaKind,
    config: AdaptiveConfig,
    rng: RngStream,
) -> PStarCurve:
    """Bootstrap selection-frequency curve against the full-model reference."""
    fits = fit_table(dataset, space, measure)
    full = space.full_model
    boots = bootstrap_datasets(dataset, fits[full.id], measure, config.bootstrap_B, rng)
    tables = _build_tables(space, boots, measure, sigma_kind, full, True)
    obs_sigma = sigma_table(
        space.models, fits, full, sigma_kind, dataset=dataset, measure=measure
    )
    min_model = min(space.minimal_models, key=lambda m: (fits[m.id].qhat, m.id))
    if obs_sigma[min_model.id] <= 0:
        raise ZeroSigma("sigma between the minimum and full model must be positive")
    obs_ratio = (fits[min_model.id].qhat - fits[full.id].qhat) / obs_sigma[min_model.id]
    bstar = _grid_upper_bound(obs_ratio, tables, tables.model_ids.index(min_model.id))
    c_values = np.linspace(0.0, bstar, config.grid_points)
    sel = _selection_grid(tables, c_values)
    return _curve_from_selections(tables, sel, c_values)


def pick_c_star(
    curve: PStarCurve,
    *,
    exclude_left: bool = True,
    exclude_right: bool = True,
    tolerance: float = 0.0,
) -> float:
    """Conservative peak rule over the interior local maxima of p*.

    Runs where p* sticks at one touching c = 0 or c = B* are degenerate
    artifacts (the fence always returns the full model at c = 0 and the
    minimum model for large c) and are excluded when the corresponding flag
    is set. A plateau qualifies as a peak only when the curve is strictly
    lower on both sides; this also disqualifies the ramp climbing into an
    excluded boundary plateau, which belongs to the same artifact. A plateau
    may lean on a grid end only when that side's exclusion is off (the gate
    admitted the tail). Among qualifying plateaus the highest p* wins --
    peaks within ``tolerance`` of the highest count as tied -- and the
    smallest plateau median among the winners is returned (the conservative
    choice: smaller c guards against losing a relevant term).
    """
    p = np.asarray(curve.pstar, dtype=float)
    n = p.size
    if n == 0:
        raise NoInteriorPeak("empty curve")
    excluded = np.zeros(n, dtype=bool)
    if exclude_left and p[0] == 1.0:
        j = 0
        while j < n and p[j] == 1.0:
            excluded[j] = True
            j += 1
    if exclude_right and p[-1] == 1.0:
        j = n - 1
        while j >= 0 and p[j] == 1.0:
            excluded[j] = True
            j -= 1
    peaks = []  # (value, median) of qualifying plateaus
    j = 0
    while j < n:
        k = j
        while k + 1 < n and p[k + 1] == p[j]:
            k += 1
        run_ok = not (excluded[j : k + 1].any())
        left_ok = (j == 0 and not exclude_left) or (j > 0 and p[j - 1] < p[j])
        right_ok = (k == n - 1 and not exclude_right) or (k < n - 1 and p[k + 1] < p[j])
        if run_ok and left_ok and right_ok:
            peaks.append((p[j], (curve.c_values[j] + curve.c_values[k]) / 2.0))
        j = k + 1
    if not peaks:
        raise NoInteriorPeak("no interior local maximum of p*")
    vmax = max(v for v, _ in peaks)
    return float(min(med for v, med in peaks if v >= vmax - tolerance))


# ---------------------------------------------------------------------------
# Screen tests, baseline adjustment, threshold checking
# ---------------------------------------------------------------------------


def full_model_test(bootstrap_gap_minimum: float, a_n: float, b_n: float) -> tuple[float, bool]:
    """q* = gap^2/(a_n b_n); the test passes (full model not optimal) iff q* < 1."""
    q_star = bootstrap_gap_minimum**2 / (a_n * b_n)
    return float(q_star), bool(q_star < 1.0)


def minimum_model_test(bootstrap_gap: float, g_n: float, h_n: float) -> tuple[float, bool]:
    """r* = gap^2/(g_n h_n); the test passes (minimum model not optimal) iff r* > 1."""
    r_star = bootstrap_gap**2 / (g_n * h_n)
    return float(r_star), bool(r_star > 1.0)


def baseline_adjust(
    dataset: Dataset, rng: RngStream, distribution: str = "normal"
) -> tuple[Dataset, str]:
    """Append an irrelevant synthetic covariate and name the adjusted full model.

    The returned dataset has one extra column; the adjusted full model (all
    columns including the synthetic one) replaces the full model in the fence
    inequality but is never itself a candidate.
    """
    g = rng.substream(purpose=rng.purpose + "/baseline").generator()
    if distribution == "normal":
        col = g.standard_normal(dataset.n)
    elif distribution == "uniform":
        col = g.random(dataset.n)
    else:
        raise ValidationError(f"unsupported baseline distribution {distribution!r}")
    name = "baseline"
    while name in dataset.candidates:
        name += "_"
    candidates = dict(dataset.candidates)
    candidates[name] = col
    adjusted = Dataset(
        y=dataset.y,
        candidates=candidates,
        cluster=dataset.cluster,
        community=dataset.community,
        family=dataset.family,
        sampling_variances=dataset.sampling_variances,
    )
    return adjusted, model_id(candidates.keys())


def threshold_check(
    dataset: Dataset,
    space: ModelSpace,
    measure: MeasureKind,
    sigma_kind: SigmaKind,
    fitted_min: FitResult,
    B: int,
    rng: RngStream,
    adjusted_full: CandidateModel | None = None,
) -> tuple[float, bool]:
    """Bootstrap-under-the-minimum-model gate for the right tail of p*.

    d* is the largest bootstrap gap between the minimum model and the
    (baseline-adjusted) full model. An observed gap exceeding d* is evidence
    against the minimum model being true, so the right-tail plateau of the
    curve should not be trusted.
    """
    full = space.full_model
    comparator = adjusted_full if adjusted_full is not None else full
    min_model = space.by_id(fitted_min.model_id)
    q_full = fit_model(dataset, full, measure).qhat
    observed_gap = fitted_min.qhat - q_full
    boots = bootstrap_datasets(
        dataset, fitted_min, measure, B, rng.substream(purpose=rng.purpose + "/threshold")
    )
    gaps = np.empty(B)
    for b, ds in enumerate(boots):
        q_min_b = fit_model(ds, min_model, measure).qhat
        q_comp_b = fit_model(ds, comparator, measure).qhat
        gaps[b] = q_min_b - q_comp_b
    d_star = float(gaps.max())
    return d_star, bool(observed_gap <= d_star)


# ---------------------------------------------------------------------------
# The adaptive procedure
# ---------------------------------------------------------------------------


def _default_units(dataset: Dataset) -> int:
    if dataset.cluster is not None:
        return int(np.unique(dataset.cluster).size)
    if dataset.community is not None:
        return int(np.unique(dataset.community).size)
    return dataset.n


def _default_rates(
    dataset: Dataset,
    measure: MeasureKind,
    full: CandidateModel,
    min_model: CandidateModel,
) -> tuple[float, float, float, float]:
    """(a_n, b_n, g_n, h_n) chosen naturally, without tuning constants.

    The large-order scales a_n and g_n are the number of independent units.
    The small-order scales b_n and h_n are 1 in general; for the area-level
    likelihood the expected deviance gap of a true candidate is exactly
    known, so its value replaces the generic unit scale.
    """
    units = _default_units(dataset)
    b_n = h_n = 1.0
    if measure.tag == "ml_fay_herriot":
        K = len(full.fixed_effects) - 1
        m = dataset.n
        b_n = max(f_distribution_mean_of_gap(m, K, K - 1), 1e-12)
        h_n = max(
            f_distribution_mean_of_gap(m, K, len(min_model.fixed_effects) - 1), 1e-12
        )
    return float(units), b_n, float(units), h_n


def adaptive_select(
    space: ModelSpace,
    dataset: Dataset,
    measure: MeasureKind,
    sigma_kind: SigmaKind,
    config: AdaptiveConfig,
    rng: RngStream,
) -> AdaptiveReport:
    """Full adaptive fence: calibrate c*, then run the fence at c*.

    Strategy "screen_tests" assigns c* = 0 when the full-model test fails and
    c* = B* when the minimum-model test fails, otherwise takes the curve's
    conservative peak (falling back to c* = 1 when no interior peak exists).
    Strategy "baseline_threshold" computes the curve against a baseline-
    adjusted full model and admits the right-tail plateau only when threshold
    checking allows it. The final selection always runs against the
    unadjusted full model.
    """
    fits = fit_table(dataset, space, measure)
    full = space.full_model
    min_model = min(space.minimal_models, key=lambda m: (fits[m.id].qhat, m.id))
    if min_model.id == full.id:
        raise ValidationError("adaptive fence needs a space with more than one tier")

    source = full
    pre_selected = None
    if config.two_step:
        sig0 = sigma_table(
            space.models, fits, full, sigma_kind, dataset=dataset, measure=measure
        )
        pre = fence_select(space, fits, sig0, FenceConfig(c=1.0, sigma_kind=sigma_kind))
        source = pre.selected
        pre_selected = source.id

    boots = bootstrap_datasets(
        dataset,
        fits[source.id],
        measure,
        config.bootstrap_B,
        rng.substream(purpose=rng.purpose + "/curve"),
    )

    if config.rates is not None:
        a_n, b_n, g_n, h_n = config.rates
    else:
        a_n, b_n, g_n, h_n = _default_rates(dataset, measure, full, min_model)
    tol = (
        config.peak_tolerance
        if config.peak_tolerance is not None
        else 1.0 / np.sqrt(config.bootstrap_B)
    )

    baseline_adjusted = config.strategy == "baseline_threshold"
    if baseline_adjusted:
        adj_dataset, adj_id = baseline_adjust(
            dataset, rng.substream(purpose=rng.purpose + "/adjust"), config.baseline_distribution
        )
        reference = CandidateModel(
            fixed_effects=tuple(adj_dataset.candidates.keys()),
            random_effects=full.random_effects,
        )
        boots = [
            Dataset(
                y=ds.y,
                candidates=adj_dataset.candidates,
                cluster=ds.cluster,
                community=ds.community,
                family=ds.family,
                sampling_variances=ds.sampling_variances,
            )
            for ds in boots
        ]
        tables = _build_tables(space, boots, measure, sigma_kind, reference, False)
        obs_ref_fit = fit_model(adj_dataset, reference, measure)
        obs_sigma = sigma_table(
            space.models,
            fits,
            reference,
            sigma_kind,
            dataset=adj_dataset,
            measure=measure,
            reference_fit=obs_ref_fit,
        )
        obs_ref_q = obs_ref_fit.qhat
    else:
        reference = full
        tables = _build_tables(space, boots, measure, sigma_kind, reference, True)
        obs_sigma = sigma_table(
            space.models, fits, reference, sigma_kind, dataset=dataset, measure=measure
        )
        obs_ref_q = fits[full.id].qhat

    if obs_sigma[min_model.id] <= 0:
        raise ZeroSigma("sigma between the minimum and full model must be positive")
    obs_ratio = (fits[min_model.id].qhat - obs_ref_q) / obs_sigma[min_model.id]
    min_index = tables.model_ids.index(min_model.id)
    bstar = _grid_upper_bound(obs_ratio, tables, min_index)
    c_values = np.linspace(0.0, bstar, config.grid_points)
    sel = _selection_grid(tables, c_values)
    curve = _curve_from_selections(tables, sel, c_values)

    q_star = r_star = d_star = None
    full_index = tables.model_ids.index(full.id)
    details: dict = {"bstar": bstar, "reference": reference.id, "source": source.id}
    if pre_selected is not None:
        details["two_step_source"] = pre_selected

    if config.strategy == "screen_tests":
        one_less = [m for m in space.models if m.dimension == full.dimension - 1]
        if one_less:
            idx = [tables.model_ids.index(m.id) for m in one_less]
            gaps = tables.qhat[:, idx] - tables.qhat[:, [full_index]]
            q_star, full_passes = full_model_test(float(gaps.min(axis=1).mean()), a_n, b_n)
        else:
            full_passes = True
        if not full_passes:
            c_star = 0.0
        else:
            gap_min = float((tables.qhat[:, min_index] - tables.qhat[:, full_index]).mean())
            r_star, min_passes = minimum_model_test(gap_min, g_n, h_n)
            if not min_passes:
                c_star = bstar
            else:
                try:
                    c_star = pick_c_star(
                        curve, exclude_left=True, exclude_right=True, tolerance=tol
                    )
                except NoInteriorPeak:
                    c_star = 1.0
                    details["fallback"] = "no interior peak"
    elif config.strategy == "baseline_threshold":
        d_star, consider_right = threshold_check(
            adj_dataset,
            space,
            measure,
            sigma_kind,
            fits[min_model.id],
            config.bootstrap_B,
            rng,
            adjusted_full=reference,
        )
        details["consider_right_tail"] = consider_right
        try:
            c_star = pick_c_star(
                curve,
                exclude_left=False,
                exclude_right=not consider_right,
                tolerance=tol,
            )
        except NoInteriorPeak:
            c_star = 1.0
            details["fallback"] = "no interior peak"
    else:
        try:
            c_star = pick_c_star(curve, exclude_left=True, exclude_right=True, tolerance=tol)
        except NoInteriorPeak:
            c_star = 1.0
            details["fallback"] = "no interior peak"

    final_sigma = sigma_table(
        space.models, fits, full, sigma_kind, dataset=dataset, measure=measure
    )
    outcome = fence_select(
        space, fits, final_sigma, FenceConfig(c=c_star, sigma_kind=sigma_kind)
    )
    return AdaptiveReport(
        curve=curve,
        c_star=float(c_star),
        selected=outcome.selected,
        q_star=q_star,
        r_star=r_star,
        d_star=d_star,
        baseline_adjusted=baseline_adjusted,
        bootstrap_B=config.bootstrap_B,
        details=details,
    )
