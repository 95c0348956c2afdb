"""Replicated coverage experiments for the break model.

A cell is one data-generating process run under one protocol.  Every
replication draws its data from the stream ``(seed, cell_id, rep)``, where
``cell_id`` hashes the DGP (not the protocol), so different protocols see
the same datasets.
"""

from __future__ import annotations

import csv
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from breakbayes import bayes, frequentist
from breakbayes.errors import BreakbayesError, CellAbortedError, DomainError, IncompleteReportError
from breakbayes.model import BreakGrid, Dataset, strict_floor

ERROR_FAMILIES = ("normal", "mixture_normal")
REGRESSOR_MODELS = ("constant_only", "iid_gaussian")
TAU_HANDLING = ("full", "fix_at_ls", "fix_at_true")
ESTIMATORS = ("LS", "Bayes", "ILR")
MAX_FAIL_FRACTION = 0.01
WORKERS_ENV = "BREAKBAYES_WORKERS"


def _tuple(a) -> tuple:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(a, dtype=np.float64)).ravel())


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating process ``y_t = x_t'beta0 + z_t'delta0 1(t > k0) + eps_t``.

    With ``regressor_model='constant_only'`` the design is a column of ones
    and ``R = I_1``.  ``iid_gaussian`` draws ``x_t ~ N(0, sigma_x)``.  The
    mixture error law is ``0.5 N(-1/sqrt 2, 1/2) + 0.5 N(1/sqrt 2, 1/2)``.
    """

    T: int
    tau0: float
    delta0: tuple = (1.0,)
    beta0: tuple = (0.0,)
    error_family: str = "normal"
    sigma2: float = 1.0
    R: tuple | None = None
    regressor_model: str = "constant_only"
    sigma_x: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.T) < 20:
            raise DomainError("T must be at least 20")
        if not 0.0 < self.tau0 < 1.0:
            raise DomainError("tau0 must lie in (0, 1)")
        if self.error_family not in ERROR_FAMILIES:
            raise DomainError(f"error_family must be one of {ERROR_FAMILIES}")
        if self.regressor_model not in REGRESSOR_MODELS:
            raise DomainError(f"regressor_model must be one of {REGRESSOR_MODELS}")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "delta0", _tuple(self.delta0))
        object.__setattr__(self, "beta0", _tuple(self.beta0))
        if self.R is not None:
            object.__setattr__(self, "R", tuple(_tuple(r) for r in np.atleast_2d(self.R)))
        if self.sigma_x is not None:
            object.__setattr__(self, "sigma_x", tuple(_tuple(r) for r in np.atleast_2d(self.sigma_x)))
        if self.regressor_model == "constant_only":
            if len(self.beta0) != 1 or len(self.delta0) != 1:
                raise DomainError("constant-only regressors need scalar beta0 and delta0")
        elif self.sigma_x is None:
            raise DomainError("iid_gaussian regressors need sigma_x")
        if self.R_matrix.shape != (self.dx, len(self.delta0)):
            raise DomainError("R must be d_x x d_z, matching beta0 and delta0")

    @property
    def dx(self) -> int:
        return len(self.beta0)

    @property
    def R_matrix(self) -> np.ndarray:
        return np.eye(self.dx) if self.R is None else np.array(self.R, dtype=np.float64)

    @property
    def break_index(self) -> int:
        return strict_floor(self.tau0 * self.T)

    @property
    def cell_id(self) -> int:
        key = asdict(self)
        key.pop("seed")
        return zlib.crc32(repr(sorted(key.items())).encode())


def _errors(dgp: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    T = dgp.T
    if dgp.error_family == "normal":
        return math.sqrt(dgp.sigma2) * rng.standard_normal(T)
    sign = np.where(rng.random(T) < 0.5, -1.0, 1.0)
    return sign / math.sqrt(2.0) + math.sqrt(0.5) * rng.standard_normal(T)


def generate(dgp: DgpSpec, rep_index: int) -> Dataset:
    """Dataset of replication ``rep_index``; regressors are drawn before errors."""
    rng = np.random.default_rng(
        np.random.SeedSequence(dgp.seed, spawn_key=(dgp.cell_id, int(rep_index), 0))
    )
    T = dgp.T
    if dgp.regressor_model == "constant_only":
        X = np.ones((T, 1))
    else:
        L = np.linalg.cholesky(np.array(dgp.sigma_x))
        X = rng.standard_normal((T, dgp.dx)) @ L.T
    eps = _errors(dgp, rng)
    R = dgp.R_matrix
    post = (np.arange(1, T + 1) > dgp.break_index).astype(np.float64)
    y = X @ np.array(dgp.beta0) + post * (X @ R @ np.array(dgp.delta0)) + eps
    return Dataset(y, X, R)


def _rep_seed(dgp: DgpSpec, rep: int, stream: int) -> int:
    ss = np.random.SeedSequence(dgp.seed, spawn_key=(dgp.cell_id, int(rep), stream))
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class ProtocolSpec:
    """How each replication is analysed.

    ``component`` is the slope whose interval is scored; by default the
    first jump coefficient.  Break-fraction statistics are scored only under
    ``tau_handling='full'``; ``break_ci`` toggles the simulated-limit LS
    interval for the break.
    """

    tau_handling: str = "full"
    level_gamma: float = 0.95
    level_tau: float = 0.95
    n_reps: int = 500
    estimators: tuple = ("LS", "Bayes")
    trim: float = 0.05
    break_ci: bool = False
    n_wstar: int = 2000
    n_boot: int = 199
    component: int | None = None
    prior_H0_scale: float = 0.1
    prior_a0: float = 1.0
    prior_b0: float = 1.0

    def __post_init__(self):
        if self.tau_handling not in TAU_HANDLING:
            raise DomainError(f"tau_handling must be one of {TAU_HANDLING}")
        for lv in (self.level_gamma, self.level_tau):
            if not 0.0 < lv < 1.0:
                raise DomainError("levels must lie in (0, 1)")
        if self.n_reps < 1:
            raise DomainError("n_reps must be >= 1")
        est = tuple(e for e in ESTIMATORS if e in set(self.estimators))
        if not est or set(self.estimators) - set(ESTIMATORS):
            raise DomainError(f"estimators must be a non-empty subset of {ESTIMATORS}")
        object.__setattr__(self, "estimators", est)

    def prior(self, p: int) -> bayes.ConjugatePrior:
        return bayes.ConjugatePrior(np.zeros(p), self.prior_H0_scale * np.eye(p),
                                    self.prior_a0, self.prior_b0)


@dataclass
class CellRecord:
    T: int
    delta0: float
    tau0: float
    estimator: str
    protocol: str
    error_family: str
    n_reps: int
    n_effective: int
    n_failed: int
    coverage_gamma: float | None = None
    mean_length_gamma: float | None = None
    mse_delta: float | None = None
    bias_delta: float | None = None
    var_delta: float | None = None
    mc_se_coverage: float | None = None
    coverage_tau: float | None = None
    mean_length_tau: float | None = None
    mae_tau: float | None = None
    mc_se_coverage_tau: float | None = None
    samples: dict = field(default_factory=dict, repr=False)

    @property
    def key(self) -> tuple:
        return (self.T, self.delta0, self.tau0, self.estimator, self.protocol, self.error_family)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("samples")
        return d


CSV_FIELDS = [f for f in CellRecord.__dataclass_fields__ if f != "samples"]


def _one_rep(dgp: DgpSpec, proto: ProtocolSpec, rep: int) -> dict:
    """Per-estimator scores of one replication."""
    ds = generate(dgp, rep)
    T, k0 = ds.T, dgp.break_index
    j = ds.dx if proto.component is None else int(proto.component)
    target = float(np.concatenate([dgp.beta0, dgp.delta0])[j])
    grid = BreakGrid.trimmed(T, proto.trim)
    out: dict = {}
    full = proto.tau_handling == "full"

    ls = None
    if "LS" in proto.estimators or "ILR" in proto.estimators or proto.tau_handling == "fix_at_ls":
        ls = frequentist.ls_fit(ds, grid)
    if "LS" in proto.estimators:
        ls_use = frequentist.ls_at_break(ds, k0) if proto.tau_handling == "fix_at_true" else ls
        ci = frequentist.slope_ci(ls_use, proto.level_gamma, j)
        r = {"cover_g": ci.contains(target), "len_g": ci.length, "est": ci.point}
        if full:
            r["tau_err"] = ls.break_index - k0
            if proto.break_ci:
                bci = frequentist.break_ci_wstar(ls, ds, proto.level_tau, proto.n_wstar,
                                                 seed=_rep_seed(dgp, rep, 1))
                r["cover_t"] = bci.contains(k0 / T)
                r["len_t"] = bci.length
        out["LS"] = r
    if "Bayes" in proto.estimators:
        prior = proto.prior(ds.p)
        if proto.tau_handling == "full":
            g = grid
        elif proto.tau_handling == "fix_at_ls":
            g = BreakGrid.single(T, grid.nearest(ls.break_index))
        else:
            g = BreakGrid.single(T, k0)
        tp = bayes.tau_posterior(prior, ds, g)
        ci = bayes.credible_interval_gamma(prior, ds, g, j, proto.level_gamma, tp=tp)
        r = {"cover_g": ci.contains(target), "len_g": ci.length, "est": ci.point}
        if full:
            hpd = bayes.hpd_set_tau(tp, proto.level_tau)
            r["tau_err"] = tp.mode_index - k0
            r["cover_t"] = hpd.contains_index(k0)
            r["len_t"] = hpd.length
        out["Bayes"] = r
    if "ILR" in proto.estimators and full:
        s = frequentist.ilr_set(ds, grid, ls, proto.level_tau, proto.n_boot,
                                seed=_rep_seed(dgp, rep, 2))
        out["ILR"] = {"cover_t": s.contains_index(k0), "len_t": s.length,
                      "tau_err": ls.break_index - k0}
    return out


def _safe_rep(args) -> tuple[int, dict | None, str | None]:
    dgp, proto, rep = args
    try:
        return rep, _one_rep(dgp, proto, rep), None
    except BreakbayesError as exc:
        return rep, None, f"{type(exc).__name__}: {exc}"


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _mc_se(p: float, n: int) -> float | None:
    return math.sqrt(p * (1.0 - p) / n) if n >= 2 else None


def _aggregate(dgp: DgpSpec, proto: ProtocolSpec, name: str, reps: list[dict], n_failed: int,
               target: float) -> CellRecord:
    rec = CellRecord(dgp.T, float(dgp.delta0[0]), float(dgp.tau0), name, proto.tau_handling,
                     dgp.error_family, proto.n_reps, len(reps), n_failed)
    n = len(reps)
    if n == 0:
        return rec
    if "cover_g" in reps[0]:
        cov = _mean([float(r["cover_g"]) for r in reps])
        est = np.array([r["est"] for r in reps])
        m = _mean(est)
        rec.coverage_gamma = cov
        rec.mean_length_gamma = _mean([r["len_g"] for r in reps])
        rec.mse_delta = _mean((est - target) ** 2)
        rec.bias_delta = m - target
        rec.var_delta = _mean((est - m) ** 2)
        rec.mc_se_coverage = _mc_se(cov, n)
        rec.samples["est"] = est
    if "tau_err" in reps[0]:
        err = np.array([r["tau_err"] for r in reps], dtype=np.int64)
        rec.mae_tau = _mean(np.abs(err) / dgp.T)
        rec.samples["tau_err"] = err
    if "cover_t" in reps[0]:
        ct = _mean([float(r["cover_t"]) for r in reps])
        rec.coverage_tau = ct
        rec.mean_length_tau = _mean([r["len_t"] for r in reps])
        rec.mc_se_coverage_tau = _mc_se(ct, n)
    return rec


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(workers))


def run_cell(dgp: DgpSpec, protocol: ProtocolSpec, workers: int | None = None) -> list[CellRecord]:
    """Run all replications of one cell; one record per enabled estimator.

    Raises ``CellAbortedError`` when more than 1% of replications fail.
    """
    workers = resolve_workers(workers)
    tasks = [(dgp, protocol, r) for r in range(protocol.n_reps)]
    if workers == 1:
        results = [_safe_rep(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_rep, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    results.sort(key=lambda t: t[0])
    good = [res for _, res, err in results if res is not None]
    failures = [err for _, res, err in results if res is None]
    if len(failures) > MAX_FAIL_FRACTION * protocol.n_reps:
        raise CellAbortedError(
            f"{len(failures)} of {protocol.n_reps} replications failed "
            f"(T={dgp.T}, delta0={dgp.delta0}, tau0={dgp.tau0}); first: {failures[0]}"
        )
    j = dgp.dx if protocol.component is None else int(protocol.component)
    target = float(np.concatenate([dgp.beta0, dgp.delta0])[j])
    records = []
    for name in protocol.estimators:
        reps = [g[name] for g in good if name in g]
        if not reps:
            continue
        records.append(_aggregate(dgp, protocol, name, reps, len(failures), target))
    return records


@dataclass
class ExperimentReport:
    records: list[CellRecord] = field(default_factory=list)

    def extend(self, recs: Iterable[CellRecord]) -> None:
        self.records.extend(recs)

    def get(self, T, delta0, tau0, estimator, protocol, error_family="normal") -> CellRecord:
        key = (int(T), float(delta0), float(tau0), estimator, protocol, error_family)
        for r in self.records:
            if r.key == key:
                return r
        raise IncompleteReportError(f"no cell {key}")

    def select(self, **filters) -> list[CellRecord]:
        return [r for r in self.records if all(getattr(r, k) == v for k, v in filters.items())]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for r in self.records:
                w.writerow({k: ("" if v is None else v) for k, v in r.row().items()})

    def render_panel(self, tau0: float, protocol: str, blocks: Sequence[tuple[str, str]] | None = None,
                     estimators: Sequence[str] | None = None, error_family: str = "normal",
                     digits: int = 2) -> str:
        """Aligned text panel: rows are T, column groups are estimator x delta0."""
        recs = self.select(tau0=float(tau0), protocol=protocol, error_family=error_family)
        if not recs:
            raise IncompleteReportError(f"no cells for tau0={tau0}, protocol={protocol}")
        Ts = sorted({r.T for r in recs})
        ds = sorted({r.delta0 for r in recs})
        ests = [e for e in (estimators or ESTIMATORS) if any(r.estimator == e for r in recs)]
        if blocks is None:
            blocks = [("Coverage", "coverage_gamma"), ("Length", "mean_length_gamma"),
                      ("MSE", "mse_delta")]
        index = {(r.T, r.delta0, r.estimator): r for r in recs}
        head = ["T"] + [f"{e} d={d:g}" for e in ests for d in ds]
        lines = [f"tau0 = {tau0:g}, protocol = {protocol}, errors = {error_family}"]
        for title, attr in blocks:
            rows = [head]
            for T in Ts:
                row = [str(T)]
                for e in ests:
                    for d in ds:
                        r = index.get((T, d, e))
                        v = None if r is None else getattr(r, attr)
                        row.append("-" if v is None else f"{v:.{digits}f}")
                rows.append(row)
            width = [max(len(r[c]) for r in rows) for c in range(len(head))]
            lines.append("")
            lines.append(title)
            lines += ["  ".join(cell.rjust(w) for cell, w in zip(r, width)) for r in rows]
        return "\n".join(lines) + "\n"


def run_grid(Ts: Sequence[int], deltas: Sequence[float], taus: Sequence[float],
             protocols: Sequence[ProtocolSpec], seed: int = 0, error_family: str = "normal",
             workers: int | None = None, base: DgpSpec | None = None) -> ExperimentReport:
    """Every (T, delta0, tau0) cell under every protocol."""
    rep = ExperimentReport()
    for tau0 in taus:
        for d in deltas:
            for T in Ts:
                if base is None:
                    dgp = DgpSpec(T, tau0, (d,), error_family=error_family, seed=seed)
                else:
                    dgp = replace(base, T=T, tau0=tau0, delta0=(d,), seed=seed)
                for proto in protocols:
                    rep.extend(run_cell(dgp, proto, workers))
    return rep


def length_ratio_summary(report: ExperimentReport, estimator: str = "Bayes") -> float:
    """Mean of ``full / fix_at_ls - 1`` interval lengths over matched cells."""
    full = {r.key[:3] + r.key[5:]: r for r in report.select(estimator=estimator, protocol="full")}
    fixed = {r.key[:3] + r.key[5:]: r for r in report.select(estimator=estimator, protocol="fix_at_ls")}
    if not full:
        raise IncompleteReportError("report has no full-protocol cells")
    missing = sorted(set(full) ^ set(fixed))
    if missing:
        raise IncompleteReportError(f"unmatched cells: {missing[:3]}")
    ratios = [full[k].mean_length_gamma / fixed[k].mean_length_gamma - 1.0 for k in sorted(full)]
    return math.fsum(ratios) / len(ratios)


def dump_dataset(ds: Dataset, path) -> None:
    """Write a dataset in the CLI CSV layout (``y`` then regressors)."""
    from breakbayes.io import write_dataset_csv

    write_dataset_csv(ds, path)
