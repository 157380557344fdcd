"""Command line interface: simulate, fit, assess, variogram, predict-surface.

Configuration is a flat key=value file with dotted namespaces (see the
bundled FORMATS.md for every key and every output column).  Unknown keys
are hard errors.  Exit codes: 0 success, 2 config error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import assess as assess_mod
from . import gibbs as gibbs_mod
from .covariance import empirical_variogram, fit_exponential_variogram, \
    matern_correlation, pairwise_distances
from .population import FinitePopulation, SampleIndex
from .sim import MaternSpec, SimConfig, generate_population, two_stage_sample

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# every accepted config key with (parser, default); None default = optional
_KEY_SCHEMA = {
    "seed": (int, 0),
    "out": (str, "."),
    # simulation
    "sim.n_side": (int, 10),
    "sim.T": (int, 2500),
    "sim.mu": (float, 2.0),
    "sim.tau2": (float, 9.0),
    "sim.sigma2": (float, 4.0),
    "sim.phi": (float, 10.0),
    "sim.eta": (float, 0.5),
    "sim.n_sampled_regions": (int, 25),
    "sim.frac_min": (float, 0.2),
    "sim.frac_max": (float, 0.9),
    # data input
    "data.population": (str, None),
    "data.sample": (str, None),
    "data.wells": (str, None),
    "data.min_region_size": (int, 10),
    "data.dedup_seed": (int, 0),
    # model
    "model.kind": (str, "two_stage_spatial"),
    "model.nu_prior": (str, "flat"),
    "model.eta": (float, 0.5),
    "priors.sigma2.shape": (float, 2.0),
    "priors.sigma2.scale": (float, 10.0),
    "priors.tau2.shape": (float, 2.0),
    "priors.tau2.scale": (float, 10.0),
    "priors.delta2.shape": (float, 2.0),
    "priors.delta2.scale": (float, 10.0),
    "priors.gamma2.shape": (float, 2.0),
    "priors.gamma2.scale": (float, 10.0),
    "priors.phi.lo": (float, 5.0),
    "priors.phi.hi": (float, 15.0),
    "fixed.gamma2": (float, None),
    "fixed.delta2": (float, None),
    "fixed.tau2": (float, None),
    "fixed.phi": (float, None),
    "fixed.sigma2_unsampled": (float, None),
    "fixed.tau2_unsampled": (float, None),
    "fixed.phi_unsampled": (float, None),
    # mcmc
    "mcmc.iters": (int, 5000),
    "mcmc.burnin": (int, 1000),
    "mcmc.chains": (int, 1),
    # assess
    "assess.models": (str, "two_stage,spatial,two_stage_spatial,regional_spatial"),
    # variogram
    "variogram.n_bins": (int, 15),
    "variogram.max_dist": (float, None),
    # surface
    "surface.resolution": (int, 50),
    "surface.threshold": (float, 45.0),
    "surface.max_draws": (int, 200),
}


def parse_config(path):
    """Parse a flat key=value config file against the key schema."""
    cfg = {k: v[1] for k, v in _KEY_SCHEMA.items()}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        caster = _KEY_SCHEMA[key][0]
        try:
            cfg[key] = caster(value)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: value {value!r} invalid for {key}"
                f" (expected {caster.__name__})")
    return cfg


def _threads_cap():
    raw = os.environ.get("GEOSTAT_FPS_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GEOSTAT_FPS_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("GEOSTAT_FPS_THREADS must be >= 1")
    return n


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return format(float(x), ".10g")


# ---------------------------------------------------------------------------
# data ingestion

def ingest_csv(path, min_region_size=10, dedup_seed=0, log=print):
    """Read a well CSV (id,x,y,region,value,sampled) into population objects.

    Cleaning rules, applied in order: duplicate-coordinate removal keeping
    one record at random (seeded), dropping regions smaller than
    ``min_region_size``, then dense region re-indexing.  Counts removed by
    each rule are logged.
    """
    required = ["id", "x", "y", "region", "value", "sampled"]
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                [c.strip() for c in reader.fieldnames] != required:
            raise DataError(
                f"{path}: header must be {','.join(required)}")
        rows = []
        for lineno, rec in enumerate(reader, 2):
            try:
                x, y = float(rec["x"]), float(rec["y"])
                sampled = int(rec["sampled"])
                if sampled not in (0, 1):
                    raise ValueError("sampled must be 0 or 1")
                raw_val = (rec["value"] or "").strip()
                value = float(raw_val) if raw_val else np.nan
                if sampled and not np.isfinite(value):
                    raise ValueError("sampled well without a value")
                if not (np.isfinite(x) and np.isfinite(y)):
                    raise ValueError("non-finite coordinates")
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}")
            rows.append((rec["id"], x, y, rec["region"], value, sampled))
    if not rows:
        raise DataError(f"{path}: no data rows")

    # rule 1: duplicate coordinates -> keep one at random
    rng = np.random.default_rng(dedup_seed)
    by_coord = {}
    for idx, r in enumerate(rows):
        by_coord.setdefault((r[1], r[2]), []).append(idx)
    keep = np.zeros(len(rows), dtype=bool)
    n_dup = 0
    for idxs in by_coord.values():
        keep[idxs[int(rng.integers(len(idxs)))]] = True
        n_dup += len(idxs) - 1
    rows = [r for i, r in enumerate(rows) if keep[i]]

    # rule 2: drop small regions
    counts = {}
    for r in rows:
        counts[r[3]] = counts.get(r[3], 0) + 1
    small = {lab for lab, c in counts.items() if c < min_region_size}
    n_small = sum(1 for r in rows if r[3] in small)
    rows = [r for r in rows if r[3] not in small]
    if not rows:
        raise DataError(f"{path}: no wells left after region-size filter")

    log(f"ingest: removed {n_dup} duplicate-coordinate wells, "
        f"{n_small} wells in {len(small)} regions below size {min_region_size}")

    pop = FinitePopulation(
        x=[r[1] for r in rows], y=[r[2] for r in rows],
        regions=[r[3] for r in rows], values=[r[4] for r in rows],
        ids=np.array([r[0] for r in rows]),
    )
    mask = np.array([bool(r[5]) for r in rows])
    if not mask.any():
        raise DataError(f"{path}: no sampled wells after cleaning")
    return pop, SampleIndex(pop, mask)


def load_population(pop_path, sample_path):
    """Read simulate-format population.csv + sample.csv back into objects."""
    try:
        fh = open(pop_path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {pop_path}: {exc}")
    with fh:
        reader = csv.DictReader(fh)
        required = ["id", "x", "y", "region", "value"]
        if reader.fieldnames is None or \
                [c.strip() for c in reader.fieldnames] != required:
            raise DataError(f"{pop_path}: header must be {','.join(required)}")
        ids, xs, ys, regs, vals = [], [], [], [], []
        for lineno, rec in enumerate(reader, 2):
            try:
                ids.append(rec["id"])
                xs.append(float(rec["x"]))
                ys.append(float(rec["y"]))
                regs.append(rec["region"])
                raw = (rec["value"] or "").strip()
                vals.append(float(raw) if raw else np.nan)
            except (TypeError, ValueError) as exc:
                raise DataError(f"{pop_path}:{lineno}: {exc}")
    if not ids:
        raise DataError(f"{pop_path}: no data rows")
    pop = FinitePopulation(x=xs, y=ys, regions=regs, values=vals,
                           ids=np.array(ids))
    try:
        fh = open(sample_path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {sample_path}: {exc}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["id"]:
            raise DataError(f"{sample_path}: header must be 'id'")
        sampled_ids = {row[0] for row in reader if row}
    id_list = [str(i) for i in pop.ids]
    unknown = sampled_ids - set(id_list)
    if unknown:
        raise DataError(f"{sample_path}: unknown ids {sorted(unknown)[:5]}")
    mask = np.array([i in sampled_ids for i in id_list])
    if not mask.any():
        raise DataError(f"{sample_path}: no sampled units")
    return pop, SampleIndex(pop, mask)


def _load_data(cfg):
    if cfg["data.wells"] is not None:
        return ingest_csv(cfg["data.wells"],
                          min_region_size=cfg["data.min_region_size"],
                          dedup_seed=cfg["data.dedup_seed"])
    if cfg["data.population"] is None or cfg["data.sample"] is None:
        raise ConfigError(
            "provide data.wells, or data.population and data.sample")
    return load_population(cfg["data.population"], cfg["data.sample"])


# ---------------------------------------------------------------------------
# model construction

def _model_spec(cfg, kind=None):
    fixed = {key.split(".", 1)[1]: cfg[key]
             for key in cfg if key.startswith("fixed.") and cfg[key] is not None}
    try:
        return gibbs_mod.ModelSpec(
            kind=kind or cfg["model.kind"],
            sigma2_prior=gibbs_mod.IGPrior(cfg["priors.sigma2.shape"],
                                           cfg["priors.sigma2.scale"]),
            tau2_prior=gibbs_mod.IGPrior(cfg["priors.tau2.shape"],
                                         cfg["priors.tau2.scale"]),
            delta2_prior=gibbs_mod.IGPrior(cfg["priors.delta2.shape"],
                                           cfg["priors.delta2.scale"]),
            gamma2_prior=gibbs_mod.IGPrior(cfg["priors.gamma2.shape"],
                                           cfg["priors.gamma2.scale"]),
            phi_prior=gibbs_mod.UniformPrior(cfg["priors.phi.lo"],
                                             cfg["priors.phi.hi"]),
            nu_prior=cfg["model.nu_prior"],
            eta=cfg["model.eta"],
            fixed=fixed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _fit_chains(cfg, data, spec):
    if cfg["mcmc.iters"] <= cfg["mcmc.burnin"]:
        raise ConfigError("mcmc.iters must exceed mcmc.burnin")
    alpha = np.full(data.T, 1.0 / data.T)
    seeds = [cfg["seed"] + c for c in range(cfg["mcmc.chains"])]
    chains = [gibbs_mod.run_chain(spec, data, alpha, iters=cfg["mcmc.iters"],
                                  burnin=cfg["mcmc.burnin"], seed=s)
              for s in seeds]
    return chains


def _scalar_params(draws, data):
    """Named scalar parameter series for persistence/summaries."""
    out = {"fp": draws.fp, "nu": draws.nu, "delta2": draws.delta2}
    labels = data.layout.region_labels
    if draws.kind == "spatial":
        out["mu"] = draws.mu[:, 0]
        out["sigma2"] = draws.sigma2[:, 0]
    else:
        for i in range(data.N):
            out[f"mu_{labels[i]}"] = draws.mu[:, i]
        for i in range(data.n):
            out[f"sigma2_{labels[i]}"] = draws.sigma2[:, i]
        if np.isfinite(draws.gamma2).all() and np.ptp(draws.gamma2) > 0:
            out["gamma2"] = draws.gamma2
    if draws.tau2 is not None:
        if draws.tau2.shape[1] == 1:
            out["tau2"] = draws.tau2[:, 0]
            out["phi"] = draws.phi[:, 0]
        else:
            for i in range(data.n):
                out[f"tau2_{labels[i]}"] = draws.tau2[:, i]
                out[f"phi_{labels[i]}"] = draws.phi[:, i]
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg):
    try:
        sim_cfg = SimConfig(
            n_side=cfg["sim.n_side"], T=cfg["sim.T"], mu=cfg["sim.mu"],
            spec=MaternSpec(tau2=cfg["sim.tau2"], sigma2=cfg["sim.sigma2"],
                            phi=cfg["sim.phi"], eta=cfg["sim.eta"]),
            n_sampled_regions=cfg["sim.n_sampled_regions"],
            frac_min=cfg["sim.frac_min"], frac_max=cfg["sim.frac_max"],
            seed=cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc))
    pop = generate_population(sim_cfg)
    rng = np.random.default_rng(cfg["seed"] + 1)
    sample = two_stage_sample(pop, sim_cfg.n_sampled_regions,
                              sim_cfg.frac_min, sim_cfg.frac_max, rng)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "population.csv"),
               ["id", "x", "y", "region", "value"],
               [(pop.ids[i], _fmt(pop.x[i]), _fmt(pop.y[i]),
                 pop.region_labels[pop.region_index[i]], _fmt(pop.values[i]))
                for i in range(pop.total)])
    _write_csv(os.path.join(out, "sample.csv"), ["id"],
               [(pop.ids[i],) for i in np.flatnonzero(sample.mask)])
    print(f"simulate: wrote {pop.total} units "
          f"({sample.k} sampled) to {out}")
    return EXIT_OK


def cmd_fit(cfg):
    pop, sample = _load_data(cfg)
    data = gibbs_mod.SurveyData(pop, sample)
    spec = _model_spec(cfg)
    chains = _fit_chains(cfg, data, spec)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)

    rows = []
    for c, draws in enumerate(chains):
        params = _scalar_params(draws, data)
        for name, series in params.items():
            for it, v in enumerate(series):
                rows.append((it, c, name, _fmt(v)))
    _write_csv(os.path.join(out, "draws.csv"),
               ["iter", "chain", "param", "value"], rows)

    pooled = {}
    for draws in chains:
        for name, series in _scalar_params(draws, data).items():
            pooled.setdefault(name, []).append(series)
    srows = []
    for name, parts in pooled.items():
        v = np.concatenate(parts)
        srows.append((name, _fmt(v.mean()), _fmt(v.std(ddof=1)),
                      _fmt(np.quantile(v, 0.025)), _fmt(np.quantile(v, 0.5)),
                      _fmt(np.quantile(v, 0.975))))
    _write_csv(os.path.join(out, "summary.csv"),
               ["param", "mean", "sd", "q2.5", "q50", "q97.5"], srows)
    fp = np.concatenate([d.fp for d in chains])
    print(f"fit: {spec.kind}, fp mean {fp.mean():.4f} "
          f"[{np.quantile(fp, 0.025):.4f}, {np.quantile(fp, 0.975):.4f}]")
    return EXIT_OK


def cmd_assess(cfg):
    pop, sample = _load_data(cfg)
    data = gibbs_mod.SurveyData(pop, sample)
    kinds = [k.strip() for k in cfg["assess.models"].split(",") if k.strip()]
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    rows = []
    for kind in kinds:
        spec = _model_spec(cfg, kind=kind)
        chains = _fit_chains(cfg, data, spec)
        ll = np.concatenate(
            [gibbs_mod.pointwise_loglik(d, data) for d in chains], axis=1)
        rep = np.concatenate(
            [gibbs_mod.replicate_draws(d, data, seed=cfg["seed"] + 77 + i)
             for i, d in enumerate(chains)], axis=1)
        w = assess_mod.waic(ll)
        dsc = assess_mod.d_score(rep, data.y_s)
        rows.append((kind, _fmt(w.waic), _fmt(w.se), _fmt(w.p_waic),
                     _fmt(dsc.D), _fmt(dsc.G), _fmt(dsc.P)))
        print(f"assess: {kind}: WAIC {w.waic:.2f} (SE {w.se:.2f}), "
              f"D {dsc.D:.2f}")
    _write_csv(os.path.join(out, "assess.csv"),
               ["model", "waic", "waic_se", "p_waic", "D", "G", "P"], rows)
    return EXIT_OK


def cmd_variogram(cfg):
    pop, sample = _load_data(cfg)
    # fit to the observed (sampled) values; a census uses every unit
    mask = sample.mask
    coords = pop.coords()[mask]
    values = pop.values[mask]
    try:
        centers, gamma, counts = empirical_variogram(
            coords, values, n_bins=cfg["variogram.n_bins"],
            max_dist=cfg["variogram.max_dist"])
        fit = fit_exponential_variogram(centers, gamma, counts)
    except ValueError as exc:
        raise DataError(str(exc))
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "variogram.csv"),
               ["distance", "gamma", "pairs"],
               [(_fmt(c), "" if np.isnan(g) else _fmt(g), int(p))
                for c, g, p in zip(centers, gamma, counts)])
    _write_csv(os.path.join(out, "variogram_fit.csv"),
               ["nugget", "partial_sill", "range", "phi", "identified"],
               [(_fmt(fit.nugget), _fmt(fit.partial_sill), _fmt(fit.range),
                 _fmt(fit.phi), int(fit.identified))])
    print(f"variogram: nugget {fit.nugget:.3f}, partial sill "
          f"{fit.partial_sill:.3f}, range {fit.range:.3f}")
    return EXIT_OK


def cmd_predict_surface(cfg):
    if cfg["surface.resolution"] < 2:
        raise ConfigError("surface.resolution must be >= 2")
    if cfg["surface.threshold"] <= 0:
        raise ConfigError("surface.threshold must be positive")
    pop, sample = _load_data(cfg)
    data = gibbs_mod.SurveyData(pop, sample)
    spec = _model_spec(cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    thr = cfg["surface.threshold"]

    if spec.kind == "two_stage":
        chains = _fit_chains(cfg, data, spec)
        mu = np.concatenate([d.mu for d in chains], axis=0)
        s2 = np.concatenate([d.sigma2 for d in chains], axis=0)
        from scipy.stats import norm
        rows = []
        labels = data.layout.region_labels
        for i in range(data.N):
            m, v = mu[:, i], s2[:, i]
            p = float(np.mean(norm.sf(thr, loc=m, scale=np.sqrt(v))))
            mean = float(np.mean(m))
            sd = float(np.sqrt(np.mean(v + m ** 2) - mean ** 2))
            rows.append((labels[i], _fmt(mean), _fmt(sd), _fmt(p)))
        _write_csv(os.path.join(out, "surface.csv"),
                   ["region", "mean", "sd", "p_exceed"], rows)
        print(f"predict-surface: wrote {data.N} region rows (choropleth)")
        return EXIT_OK

    if spec.kind != "spatial":
        raise ConfigError(
            "predict-surface supports model.kind spatial (point surface) "
            "or two_stage (regional choropleth)")

    chains = _fit_chains(cfg, data, spec)
    mu = np.concatenate([d.mu[:, 0] for d in chains])
    tau2 = np.concatenate([d.tau2[:, 0] for d in chains])
    phi = np.concatenate([d.phi[:, 0] for d in chains])
    s2 = np.concatenate([d.sigma2[:, 0] for d in chains])
    L = mu.size
    step = max(1, L // cfg["surface.max_draws"])
    use = np.arange(0, L, step)

    res = cfg["surface.resolution"]
    xs = pop.x
    gx = np.linspace(xs.min(), xs.max(), res)
    gy = np.linspace(pop.y.min(), pop.y.max(), res)
    GX, GY = np.meshgrid(gx, gy)
    grid = np.column_stack([GX.ravel(), GY.ravel()])
    obs = data.coords[: data.k]
    y_s = data.y_s

    from scipy.spatial.distance import cdist
    from scipy.stats import norm
    D_ss = pairwise_distances(obs)
    D_gs = cdist(grid, obs)
    G = grid.shape[0]
    m_acc = np.zeros(G)
    m2_acc = np.zeros(G)
    v_acc = np.zeros(G)
    p_acc = np.zeros(G)
    for j in use:
        C_ss = tau2[j] * matern_correlation(D_ss, phi[j], spec.eta)
        C_ss[np.diag_indices(data.k)] += s2[j]
        c_gs = tau2[j] * matern_correlation(D_gs, phi[j], spec.eta)
        try:
            sol = np.linalg.solve(C_ss, np.column_stack([y_s - mu[j], c_gs.T]))
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"surface conditioning failed: {exc}")
        mean_g = mu[j] + c_gs @ sol[:, 0]
        var_g = tau2[j] + s2[j] - np.einsum("ij,ji->i", c_gs, sol[:, 1:])
        var_g = np.maximum(var_g, 1e-12)
        m_acc += mean_g
        m2_acc += mean_g ** 2
        v_acc += var_g
        p_acc += norm.sf(thr, loc=mean_g, scale=np.sqrt(var_g))
    nd = use.size
    mean = m_acc / nd
    sd = np.sqrt(np.maximum(v_acc / nd + m2_acc / nd - mean ** 2, 0.0))
    p_exc = p_acc / nd
    _write_csv(os.path.join(out, "surface.csv"),
               ["x", "y", "mean", "sd", "p_exceed"],
               [(_fmt(grid[i, 0]), _fmt(grid[i, 1]), _fmt(mean[i]),
                 _fmt(sd[i]), _fmt(p_exc[i])) for i in range(G)])
    print(f"predict-surface: wrote {G} grid rows")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "assess": cmd_assess,
    "variogram": cmd_variogram,
    "predict-surface": cmd_predict_surface,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="geostat-fps",
        description="Model-based finite population inference for "
                    "spatial two-stage survey data.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="key=value config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default=None,
                        help="override the config output directory")
    args = parser.parse_args(argv)
    try:
        _threads_cap()
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, gibbs_mod.ChainDiverged,
            FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
