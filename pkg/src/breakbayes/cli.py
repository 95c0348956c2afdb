"""Command-line interface.

Every command reads an optional JSON config (``--config``) whose keys match
the long options; explicit options override the file.  Exit codes: 0 on
success, 2 for configuration errors, 3 for data errors and 4 for numerical
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from breakbayes import asymptotic, bayes, frequentist, simulation
from breakbayes import io as bio
from breakbayes.errors import (
    CellAbortedError,
    ConfigError,
    DegeneratePosteriorError,
    DivergingArgmaxError,
    DomainError,
    SchemaError,
    SingularDesignError,
)
from breakbayes.model import BreakGrid

log = logging.getLogger("breakbayes")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

PRIOR_DEFAULTS = {"H0_scale": 0.1, "a0": 1.0, "b0": 1.0, "improper": False}

DEFAULTS: dict[str, dict[str, Any]] = {
    "fit": {
        "input": None, "sidecar": None, "out": "out", "trim": 0.05,
        "level_gamma": 0.95, "level_tau": 0.95, "seed": 0, "n_wstar": 2000,
        "n_boot": 199, "methods": ["ls", "wstar", "ilr", "bayes"], "prior": PRIOR_DEFAULTS,
    },
    "simulate": {
        "out": "out", "T": [100], "delta0": [1.0], "tau0": [0.5],
        "error_family": "normal", "protocols": ["full"], "n_reps": 500,
        "estimators": ["LS", "Bayes"], "break_ci": False, "level_gamma": 0.95,
        "level_tau": 0.95, "n_wstar": 2000, "n_boot": 199, "trim": 0.05, "seed": 0,
        "dump_datasets": 0, "prior": PRIOR_DEFAULTS,
    },
    "posterior": {
        "input": None, "sidecar": None, "out": "out", "trim": 0.05,
        "prior": PRIOR_DEFAULTS, "truth": None,
    },
    "wstar": {
        "out": "out", "delta": [1.0], "sigma_z": None, "sigma2": 1.0, "n_paths": 10000,
        "m_range": None, "seed": 0, "quantiles": [0.025, 0.05, 0.5, 0.95, 0.975],
    },
}


def _merge(command: str, file_cfg: dict, overrides: dict) -> dict:
    defaults = DEFAULTS[command]
    unknown = set(file_cfg) - set(defaults) - {"command"}
    if unknown:
        raise ConfigError(f"unknown config keys for '{command}': {sorted(unknown)}")
    if file_cfg.get("command", command) != command:
        raise ConfigError(f"config is for '{file_cfg['command']}', not '{command}'")
    cfg = {k: v for k, v in defaults.items()}
    cfg.update({k: v for k, v in file_cfg.items() if k != "command"})
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if isinstance(cfg.get("prior"), dict):
        extra = set(cfg["prior"]) - set(PRIOR_DEFAULTS)
        if extra:
            raise ConfigError(f"unknown prior keys {sorted(extra)}")
        cfg["prior"] = {**PRIOR_DEFAULTS, **cfg["prior"]}
    return cfg


def _level(cfg: dict, key: str) -> float:
    v = cfg[key]
    if not isinstance(v, (int, float)) or not 0.0 < v < 1.0:
        raise ConfigError(f"{key} must lie in (0, 1), got {v!r}")
    return float(v)


def _int(cfg: dict, key: str, lo: int = 1) -> int:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{key} must be an integer >= {lo}, got {v!r}")
    return v


def _trim(cfg: dict) -> float:
    v = cfg["trim"]
    if not isinstance(v, (int, float)) or not 0.0 < v < 0.5:
        raise ConfigError(f"trim must lie in (0, 0.5), got {v!r}")
    return float(v)


def _prior(cfg: dict, p: int) -> bayes.ConjugatePrior:
    pc = cfg["prior"]
    if pc["improper"]:
        return bayes.ConjugatePrior.flat(p)
    try:
        return bayes.ConjugatePrior(np.zeros(p), float(pc["H0_scale"]) * np.eye(p),
                                    float(pc["a0"]), float(pc["b0"]))
    except DomainError as exc:
        raise ConfigError(f"invalid prior: {exc}") from None


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _label(ds, k: int) -> str | None:
    return ds.labels[k - 1] if ds.labels and 1 <= k <= ds.T else None


def _dated(ds, iv: dict) -> dict:
    """Attach observation labels to fraction endpoints."""
    if ds.labels:
        iv["interval_labels"] = [
            [_label(ds, max(1, round(lo * ds.T))), _label(ds, max(1, round(hi * ds.T)))]
            for lo, hi in iv["intervals"]
        ]
    return iv


def fit_command(cfg: dict) -> list[Path]:
    if not cfg["input"]:
        raise ConfigError("fit needs an input CSV")
    methods = set(cfg["methods"])
    if methods - {"ls", "wstar", "ilr", "bayes"}:
        raise ConfigError(f"unknown methods {sorted(methods - {'ls', 'wstar', 'ilr', 'bayes'})}")
    lg, lt, trim = _level(cfg, "level_gamma"), _level(cfg, "level_tau"), _trim(cfg)
    seed = _int(cfg, "seed", 0)
    data = bio.read_dataset_csv(cfg["input"], cfg["sidecar"])
    ds = data.dataset
    names = list(data.names) + [f"delta[{n}]" for n in (data.shift_names or
                                                        [str(i) for i in range(ds.dz)])]
    grid = BreakGrid.trimmed(ds.T, trim)
    out = _out_dir(cfg)
    summary: dict[str, Any] = {"T": ds.T, "d_x": ds.dx, "d_z": ds.dz, "coefficients": names,
                               "grid": [int(grid.indices[0]), int(grid.indices[-1])]}
    files: list[Path] = []
    text_rows = []

    ls = frequentist.ls_fit(ds, grid)
    ls_cis = frequentist.slope_ci(ls, lg)
    if "ls" in methods or "wstar" in methods or "ilr" in methods:
        lsd: dict[str, Any] = {
            "break_index": ls.break_index, "tau_hat": ls.tau_hat,
            "break_label": _label(ds, ls.break_index), "ssr": ls.ssr,
            "sigma2_hat": ls.sigma2_hat, "gamma_hat": ls.gamma_hat,
            "slope_ci": [ci.as_dict() for ci in ls_cis],
        }
        if "wstar" in methods:
            lsd["break_ci"] = _dated(ds, frequentist.break_ci_wstar(
                ls, ds, lt, cfg["n_wstar"], seed=seed).as_dict())
        if "ilr" in methods:
            lsd["ilr_set"] = _dated(ds, frequentist.ilr_set(
                ds, grid, ls, lt, cfg["n_boot"], seed=seed + 1).as_dict())
        summary["least_squares"] = lsd

    tp = None
    if "bayes" in methods:
        prior = _prior(cfg, ds.p)
        tp = bayes.tau_posterior(prior, ds, grid)
        cred = [bayes.credible_interval_gamma(prior, ds, grid, j, lg, tp=tp) for j in range(ds.p)]
        hpd = bayes.hpd_set_tau(tp, lt)
        summary["bayes"] = {
            "mode_index": tp.mode_index, "tau_mode": tp.mode_fraction,
            "mode_label": _label(ds, tp.mode_index), "entropy": tp.entropy,
            "posterior_mean": tp.mean(), "credible": [c.as_dict() for c in cred],
            "hpd_set": _dated(ds, hpd.as_dict()),
        }
        rows = [(int(k), k / ds.T, _label(ds, int(k)) or "", float(m))
                for k, m in zip(grid.indices, tp.probs)]
        files.append(bio.write_rows(out / "tau_posterior.csv",
                                    ["break_index", "fraction", "label", "mass"], rows))

    for j, n in enumerate(names):
        r = [n, f"{ls.gamma_hat[j]:.4f}", f"[{ls_cis[j].lower:.4f}, {ls_cis[j].upper:.4f}]"]
        if "bayes" in summary:
            c = summary["bayes"]["credible"][j]
            r += [f"{c['point']:.4f}", f"[{c['intervals'][0][0]:.4f}, {c['intervals'][0][1]:.4f}]"]
        text_rows.append(r)
    header = ["coefficient", "LS", f"{lg:.0%} CI"]
    if "bayes" in summary:
        header += ["Bayes mean", f"{lg:.0%} credible"]
    text = bio.aligned_table(header, text_rows)
    tau_lines = [f"tau LS:    {ls.tau_hat:.3f} ({_label(ds, ls.break_index) or ls.break_index})"]
    if tp is not None:
        tau_lines.append(f"tau Bayes: {tp.mode_fraction:.3f} "
                         f"({_label(ds, tp.mode_index) or tp.mode_index})")
    for key, title in (("break_ci", "W* CI"), ("ilr_set", "ILR set")):
        iv = summary.get("least_squares", {}).get(key)
        if iv:
            tau_lines.append(f"{title:<10} " + " U ".join(f"[{a:.3f}, {b:.3f}]" for a, b in iv["intervals"]))
    if tp is not None:
        tau_lines.append("HPD set    " + " U ".join(
            f"[{a:.3f}, {b:.3f}]" for a, b in summary["bayes"]["hpd_set"]["intervals"]))
    txt = out / "summary.txt"
    txt.write_text(text + "\n" + "\n".join(tau_lines) + "\n")
    files.insert(0, bio.write_json(summary, out / "summary.json"))
    files.append(txt)
    bio.write_manifest(out, "fit", cfg, seed, files)
    return files


def simulate_command(cfg: dict) -> list[Path]:
    seed = _int(cfg, "seed", 0)
    n_reps = _int(cfg, "n_reps", 1)
    lg, lt, trim = _level(cfg, "level_gamma"), _level(cfg, "level_tau"), _trim(cfg)
    pc = cfg["prior"]
    try:
        protocols = [
            simulation.ProtocolSpec(
                tau_handling=p, level_gamma=lg, level_tau=lt, n_reps=n_reps,
                estimators=tuple(cfg["estimators"]), trim=trim, break_ci=bool(cfg["break_ci"]),
                n_wstar=cfg["n_wstar"], n_boot=cfg["n_boot"],
                prior_H0_scale=pc["H0_scale"], prior_a0=pc["a0"], prior_b0=pc["b0"],
            )
            for p in cfg["protocols"]
        ]
        dgps = [simulation.DgpSpec(int(T), float(t0), (float(d),),
                                   error_family=cfg["error_family"], seed=seed)
                for t0 in cfg["tau0"] for d in cfg["delta0"] for T in cfg["T"]]
    except (DomainError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(cfg)
    files: list[Path] = []
    report = simulation.ExperimentReport()
    n_dump = _int(cfg, "dump_datasets", 0)
    if n_dump:
        (out / "datasets").mkdir(exist_ok=True)
    for dgp in dgps:
        log.info("cell T=%d delta0=%g tau0=%g", dgp.T, dgp.delta0[0], dgp.tau0)
        for proto in protocols:
            report.extend(simulation.run_cell(dgp, proto))
        for r in range(min(n_dump, n_reps)):
            p = out / "datasets" / f"T{dgp.T}_d{dgp.delta0[0]:g}_t{dgp.tau0:g}_r{r}.csv"
            bio.write_dataset_csv(simulation.generate(dgp, r), p)
            files += [p, bio.sidecar_path(p)]
    cells = out / "cells.csv"
    report.to_csv(cells)
    files.insert(0, cells)
    panels = []
    for t0 in cfg["tau0"]:
        for p in cfg["protocols"]:
            panels.append(report.render_panel(t0, p, error_family=cfg["error_family"]))
            if p == "full" and any(r.coverage_tau is not None for r in report.records):
                panels.append(report.render_panel(
                    t0, p, blocks=[("Coverage (tau)", "coverage_tau"),
                                   ("Length (tau)", "mean_length_tau"), ("MAE (tau)", "mae_tau")],
                    error_family=cfg["error_family"], digits=3))
    if {"full", "fix_at_ls"} <= set(cfg["protocols"]) and "Bayes" in cfg["estimators"]:
        ratio = simulation.length_ratio_summary(report)
        panels.append(f"Bayes length ratio (full / fixed at LS) - 1: {ratio:.4f}\n")
    tables = out / "tables.txt"
    tables.write_text("\n\n".join(panels))
    files.insert(1, tables)
    bio.write_manifest(out, "simulate", cfg, seed, files)
    return files


def posterior_command(cfg: dict) -> list[Path]:
    if not cfg["input"]:
        raise ConfigError("posterior needs an input CSV")
    trim = _trim(cfg)
    data = bio.read_dataset_csv(cfg["input"], cfg["sidecar"])
    ds = data.dataset
    grid = BreakGrid.trimmed(ds.T, trim)
    prior = _prior(cfg, ds.p)
    tp = bayes.tau_posterior(prior, ds, grid)
    out = _out_dir(cfg)
    rows = [(int(k), k / ds.T, _label(ds, int(k)) or "", float(m))
            for k, m in zip(grid.indices, tp.probs)]
    files = [bio.write_rows(out / "tau_posterior.csv",
                            ["break_index", "fraction", "label", "mass"], rows)]
    truth = cfg["truth"]
    if truth is not None:
        try:
            qc = asymptotic.QLimitConfig(
                float(truth["tau0"]), truth["delta0"], truth.get("sigma_x", np.eye(ds.dx)),
                truth.get("R", ds.R), float(truth["sigma2_0"]))
        except (KeyError, TypeError, DomainError) as exc:
            raise ConfigError(f"invalid truth block: {exc}") from None
        from breakbayes.model import ssr_profile

        prof = ssr_profile(ds, grid, on_singular="skip")
        q = asymptotic.q_limit(qc, grid.fractions)
        files.append(bio.write_rows(out / "ssr_limit.csv", ["tau", "ssr_over_T", "q_limit"],
                                    zip(grid.fractions, prof.values / ds.T, q)))
    bio.write_manifest(out, "posterior", cfg, None, files)
    return files


def wstar_command(cfg: dict) -> list[Path]:
    seed = _int(cfg, "seed", 0)
    n_paths = _int(cfg, "n_paths", 1)
    delta = np.atleast_1d(np.asarray(cfg["delta"], dtype=np.float64))
    sigma_z = np.eye(delta.size) if cfg["sigma_z"] is None else np.asarray(cfg["sigma_z"], float)
    qs = [float(q) for q in cfg["quantiles"]]
    if any(not 0.0 <= q <= 1.0 for q in qs):
        raise ConfigError("quantiles must lie in [0, 1]")
    try:
        if cfg["m_range"] is None:
            sample = asymptotic.simulate_wstar_adaptive(delta, sigma_z, float(cfg["sigma2"]),
                                                        n_paths, seed=seed)
        else:
            wc = asymptotic.WstarConfig(delta, sigma_z, float(cfg["sigma2"]),
                                        int(cfg["m_range"]), n_paths, seed)
            sample = asymptotic.simulate_wstar(wc)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(cfg)
    values, counts = sample.histogram()
    files = [
        bio.write_rows(out / "argmax_histogram.csv", ["m", "count", "frequency"],
                       [(int(v), int(c), c / n_paths) for v, c in zip(values, counts)]),
        bio.write_json({"quantiles": dict(zip(map(str, qs), sample.quantiles(qs).tolist())),
                        "m_range": sample.m_range,
                        "boundary_fraction": sample.boundary_fraction,
                        "n_paths": n_paths}, out / "quantiles.json"),
    ]
    bio.write_manifest(out, "wstar", cfg, seed, files)
    return files


COMMANDS: dict[str, Callable[[dict], list[Path]]] = {
    "fit": fit_command,
    "simulate": simulate_command,
    "posterior": posterior_command,
    "wstar": wstar_command,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="breakbayes", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("-o", "--out", help="output directory")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("fit", help="estimate the break and all intervals for one dataset")
    common(p)
    p.add_argument("input", nargs="?")
    p.add_argument("--sidecar")
    p.add_argument("--trim", type=float)
    p.add_argument("--level-gamma", type=float)
    p.add_argument("--level-tau", type=float)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--n-wstar", type=int)

    p = sub.add_parser("simulate", help="run coverage experiments")
    common(p)
    p.add_argument("--n-reps", type=int)
    p.add_argument("--dump-datasets", type=int)

    p = sub.add_parser("posterior", help="emit the break posterior (and SSR limit data)")
    common(p)
    p.add_argument("input", nargs="?")
    p.add_argument("--sidecar")
    p.add_argument("--trim", type=float)

    p = sub.add_parser("wstar", help="simulate the argmax of the W* limit process")
    common(p)
    p.add_argument("--n-paths", type=int)
    p.add_argument("--sigma2", type=float)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    opts = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_cfg = bio.load_config(args.config) if args.config else {}
        cfg = _merge(args.command, file_cfg, opts)
        files = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SingularDesignError as exc:
        print(f"numerical failure: {exc} (break index {exc.break_index})", file=sys.stderr)
        return EXIT_NUMERIC
    except DivergingArgmaxError as exc:
        print(f"numerical failure: {exc}. Drop the W* interval (methods without 'wstar') "
              "or use the ILR set when the jump is small.", file=sys.stderr)
        return EXIT_NUMERIC
    except (DegeneratePosteriorError, CellAbortedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
