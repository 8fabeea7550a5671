"""Experiment configuration, pipeline execution and artifact emission."""
from __future__ import annotations

import hashlib
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bounds import BOUNDS, RANK2_ONLY, S, BoundReport, bound_terms, rate_classifier, rate_fit
from .covariance import CovarianceModel
from .diagrams import dump_diagrams, enumerate_diagrams, product_moment
from .estimators import resolve_series
from .exceptions import BMLabError, BudgetExceeded, ConfigError, DegeneratePoints
from .functionals import FUNCTIONAL_NEEDS, ITERATED_BUDGET, estimate_from_vectors, functional_vectors
from .hermite import HermiteSeries, sigma_sq
from .metrics import cumulants, dist_kolmogorov, dist_tv, dist_wasserstein
from .paths import _block, _sampler, export_statistics_csv, statistic_F, substream_key, variance_F_exact
from .svg import loglog_svg

SUBCOMMANDS = ("project", "simulate", "functionals", "distances", "bounds",
               "diagrams", "rate-study", "verify")
NEEDS_SIMULATION = {"simulate", "functionals", "distances", "rate-study"}
NEEDS_GRID = NEEDS_SIMULATION | {"bounds"}
DISTANCES = ("wasserstein", "tv", "kolmogorov", "cumulants")
MIN_SAMPLES = {"tv": 1000, "cumulants": 1000}
THEOREM_BOUNDS = {
    "thm1": None,  # resolved by rank: tv_d2 or tv_dge3
    "thm2": ["w_d2"],
    "thm3": ["tv_optimal_d2"],
    "hermite": ["hermite_optimal"],
    "npy": ["npy"],
}
DEFAULT_MAX_PATH_BYTES = 2 * 2 ** 30
CHUNK_TARGET = 2 ** 21

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["function", "model", "seed"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "function": {
            "oneOf": [
                {"type": "string", "pattern": r"^(H[0-9]+|square|abs_centered|sign_power:[0-9.]+)$"},
                {"type": "array", "items": {"type": "number"}, "minItems": 2},
            ]
        },
        "truncation": {"type": "integer", "minimum": 1, "maximum": 64},
        "model": {
            "type": "object",
            "required": ["family"],
            "properties": {
                "family": {"enum": ["iid", "ar1", "fgn_increment", "power_tail", "custom"]},
                "r": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
                "H": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "table_cutoff": {"type": ["integer", "null"], "minimum": 0},
                "table": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "n": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "R": {"type": "integer", "minimum": 100},
        "seed": {"type": "integer", "minimum": 0},
        "theorem": {"enum": ["thm1", "thm2", "thm3", "hermite", "npy", "none"]},
        "bounds": {"type": "array", "items": {"enum": sorted(BOUNDS)}, "uniqueItems": True},
        "functionals": {"type": "array", "items": {"enum": sorted(FUNCTIONAL_NEEDS)},
                        "uniqueItems": True},
        "distances": {"type": "array", "items": {"enum": list(DISTANCES)}, "uniqueItems": True},
        "chunk_size": {"type": "integer", "minimum": 1},
        "paths_dir": {"type": "string"},
        "save_paths": {"type": "boolean"},
        "max_path_bytes": {"type": "integer", "minimum": 1},
        "log_correction": {"type": "boolean"},
        "output_dir": {"type": "string"},
        "diagrams": {
            "type": "object",
            "required": ["q"],
            "additionalProperties": False,
            "properties": {
                "q": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "corr": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "max_count": {"type": "integer", "minimum": 1},
            },
        },
    },
}


@dataclass
class ExperimentConfig:
    """Validated experiment configuration."""

    raw: dict
    series: HermiteSeries
    model: CovarianceModel
    n: list = field(default_factory=list)
    R: int | None = None
    seed: int = 0
    bounds: list = field(default_factory=list)
    functionals: list = field(default_factory=list)
    distances: list = field(default_factory=lambda: list(DISTANCES))

    @property
    def rank(self):
        return self.series.rank

    def echo(self):
        out = dict(self.raw)
        out.pop("output_dir", None)
        out.pop("paths_dir", None)
        out["resolved"] = {"rank": self.rank, "bounds": self.bounds,
                           "functionals": self.functionals, "distances": self.distances}
        return out

    def digest(self):
        text = json.dumps(self.echo(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _raise_schema_error(err):
    path = "/".join(str(p) for p in err.absolute_path) or "<root>"
    raise ConfigError(err.message, field=path) from None


def load_config_text(text, source="<config>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          field=source) from None
    return data


def parse_config(data, subcommand="rate-study"):
    """Validate a config dict for ``subcommand`` and resolve its parts.

    Raises :class:`ConfigError` (schema, field or rank problems) and
    :class:`BudgetExceeded` (requested work beyond the functional budgets).
    """
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        _raise_schema_error(errors[0])
    try:
        model = CovarianceModel.from_dict(data["model"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), field="model") from None
    try:
        series = resolve_series(data["function"], data.get("truncation", 40))
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc), field="function") from None
    if series.coeffs[0] != 0:
        # F_n is defined for centred g; the constant term is dropped
        c = series.coeffs.copy()
        c[0] = 0.0
        series = HermiteSeries(c)
    if "truncation" in data:
        series = series.truncate(data["truncation"])
    if series.is_zero:
        raise ConfigError("function has no nonconstant Hermite component", field="function")
    d = series.rank

    ns = list(data.get("n", []))
    if subcommand in NEEDS_GRID:
        if not ns:
            raise ConfigError(f"'{subcommand}' needs an n grid", field="n")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n grid must be strictly increasing", field="n")
    if subcommand in NEEDS_SIMULATION and "R" not in data:
        raise ConfigError(f"'{subcommand}' needs R", field="R")

    theorem = data.get("theorem", "none")
    if theorem != "none" and d < 2:
        raise ConfigError(f"theorem {theorem} requires Hermite rank d >= 2 (got d = {d})",
                          field="function")
    bounds = list(data.get("bounds", []))
    if not bounds and theorem != "none":
        bounds = THEOREM_BOUNDS[theorem] or (["tv_d2"] if d == 2 else ["tv_dge3"])
    for b in bounds:
        if b in RANK2_ONLY and d != 2:
            raise ConfigError(f"bound {b} applies to Hermite rank 2 only (got d = {d})",
                              field="bounds")
        if b == "tv_dge3" and d < 3:
            raise ConfigError(f"bound tv_dge3 requires Hermite rank >= 3 (got d = {d})",
                              field="bounds")
        if b == "hermite_optimal" and d < 2:
            raise ConfigError("bound hermite_optimal requires Hermite rank >= 2", field="bounds")

    funcs = list(data.get("functionals", []))
    for f in funcs:
        if f in ("prop_tv_iterated", "prop_w") and d < 2:
            raise ConfigError(f"functional {f} requires Hermite rank >= 2", field="functionals")
    if "prop_tv_iterated" in funcs and ns and max(ns) > ITERATED_BUDGET[3]:
        raise BudgetExceeded(
            f"prop_tv_iterated needs D_u^3 F, budgeted for n <= {ITERATED_BUDGET[3]}; "
            f"largest n in the grid is {max(ns)}")
    if data.get("save_paths") and ns:
        need = 8 * data["R"] * sum(ns)
        cap = data.get("max_path_bytes", DEFAULT_MAX_PATH_BYTES)
        if need > cap:
            raise BudgetExceeded(f"saving paths needs {need} bytes > max_path_bytes={cap}")
    distances = list(data.get("distances", DISTANCES))
    small = [d for d in distances if d in MIN_SAMPLES and data.get("R", math.inf) < MIN_SAMPLES[d]]
    if subcommand in ("distances", "rate-study") and small:
        raise ConfigError(f"distance(s) {', '.join(small)} need R >= "
                          f"{max(MIN_SAMPLES[d] for d in small)}", field="distances")
    if subcommand == "diagrams" and "diagrams" not in data:
        raise ConfigError("'diagrams' needs a diagrams block with q", field="diagrams")
    return ExperimentConfig(
        raw=data, series=series, model=model, n=ns, R=data.get("R"),
        seed=data["seed"], bounds=bounds, functionals=funcs,
        distances=distances,
    )


def load_config(path, subcommand="rate-study"):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), field=str(path)) from None
    return parse_config(load_config_text(text, str(path)), subcommand)


# --------------------------------------------------------------------------
# simulation stage

def _chunk_bounds(R, width, chunk_size=None):
    size = chunk_size or max(1, min(R, CHUNK_TARGET // max(width, 1)))
    return [(s, min(R, s + size)) for s in range(0, R, size)]


def _load_paths(cfg, n):
    from .paths import PathEnsemble

    ens = PathEnsemble.load(Path(cfg.raw["paths_dir"]) / f"paths_n{n}")
    if ens.n != n or ens.R != cfg.R or ens.seed != cfg.seed or ens.model != cfg.model:
        raise ConfigError(f"persisted paths for n={n} do not match the config",
                          field="paths_dir")
    return ens


def stream_replicates(cfg, n, functionals=(), threads=1, path_sink=None):
    """Per-replicate vectors for one ``n``: ``F``, lag-1 products and the
    raw functional vectors.

    Results depend only on ``(config, n)``: chunk boundaries are fixed by
    the config and chunks are reassembled in replicate order.
    """
    s, model = cfg.series, cfg.model
    if cfg.raw.get("paths_dir"):
        ens = _load_paths(cfg, n)
        sources = [(0, cfg.R, ens.data)]
        meta = ens.meta
    else:
        sampler = _sampler(model, n)
        key = substream_key(cfg.seed, "paths")
        sources = [(a, b, None) for a, b in _chunk_bounds(cfg.R, sampler.width,
                                                          cfg.raw.get("chunk_size"))]
        meta = sampler.metadata()

    def work(src):
        a, b, data = src
        x = data if data is not None else _block(sampler, key, a, b)
        out = {"F": statistic_F(x, s)}
        out["lag1"] = (np.mean(x[:, 1:] * x[:, :-1], axis=1) if n > 1
                       else np.full(x.shape[0], np.nan))
        if functionals:
            out.update(functional_vectors(x, s, model, functionals))
        if path_sink is not None:
            path_sink[a:b] = x
        return out

    if threads > 1 and len(sources) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, sources))
    else:
        parts = [work(src) for src in sources]
    keys = parts[0].keys()
    return {k: np.concatenate([p[k] for p in parts]) for k in keys}, meta


# --------------------------------------------------------------------------
# row builders

def _sp_columns(model, n, d):
    cols = {}
    for label, p in (("S_1", 1.0), ("S_4/3", 4 / 3), ("S_3/2", 1.5), ("S_2", 2.0),
                     ("S_d-1", max(d - 1, 1)), ("S_3d/4", max(0.75 * d, 1.0))):
        cols[label] = S(model, p, n)
    return cols


def _distance_columns(Y, which):
    row = {}
    if "wasserstein" in which:
        w = dist_wasserstein(Y)
        row.update({"d_W": w["value"], "d_W_se": w["se"]})
    if "kolmogorov" in which:
        k = dist_kolmogorov(Y)
        row.update({"d_K": k["value"], "d_K_se": k["se"]})
    if "tv" in which:
        t = dist_tv(Y)
        row.update({"d_TV_lb": t["lower_bound_value"], "d_TV_lb_se": t["se"],
                    "d_TV_kde": t["kde_value"], "d_TV_kde_se": t["kde_se"],
                    "d_TV_kde_half_bw": t["kde_half"], "d_TV_kde_double_bw": t["kde_double"],
                    "d_TV_grid_resolution": t["resolution"]})
    if "cumulants" in which:
        c = cumulants(Y)
        row.update({"k3": c["k3"], "k3_se": c["k3_se"], "k4": c["k4"], "k4_se": c["k4_se"]})
    return row


def _functional_columns(vecs, which, varF, n, seed):
    row = {}
    for w in which:
        est = estimate_from_vectors(vecs, w, varF, n, seed)
        for name, (v, e) in est.terms.items():
            row[f"{w}[{name}]"] = v
            row[f"{w}[{name}]_se"] = e
        for name, (v, e) in est.extra_terms.items():
            row[f"{w}.extra[{name}]"] = v
            row[f"{w}.extra[{name}]_se"] = e
        row[f"{w}.total"] = est.total
        row[f"{w}.total_se"] = est.total_se
    return row


FIT_COLUMNS = ("d_W", "d_K", "d_TV_lb", "d_TV_kde")


def _fit_columns(rows, log_correction=False):
    fits = {}
    if len(rows) < 4:
        return fits
    names = [c for c in rows[0] if c in FIT_COLUMNS or c.endswith(".total")
             or (c.count(".") == 1 and c.split(".")[1].startswith("term"))]
    for c in names:
        pts = [(r["n"], r.get(c)) for r in rows]
        try:
            fits[c] = rate_fit(pts, log_correction=log_correction).to_dict()
        except DegeneratePoints as exc:
            fits[c] = {"error": str(exc)}
    return fits


def _expected_rates(cfg):
    m = cfg.model
    if cfg.rank != 2:
        return {}
    if m.family == "power_tail" and m.params.get("table_cutoff") is None:
        a = m.params["alpha"]
        if a <= 0.5:
            return {}
        return {"tv": rate_classifier(a, 2, "tv"), "w": rate_classifier(a, 2, "w")}
    if m.family == "fgn_increment":
        a = 2 - 2 * m.params["H"]
        if a <= 0.5:
            return {}
        return {"tv": rate_classifier(a, 2, "tv"), "w": rate_classifier(a, 2, "w")}
    return {"tv": {"exponent": -0.5, "log_factor": False},
            "w": {"exponent": -0.5, "log_factor": False}}


# --------------------------------------------------------------------------
# stages

class _Timer:
    def __init__(self):
        self.timings = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = timer.timings.get(name, 0.0) + time.perf_counter() - self.t0
                return False

        return _Ctx()


def _run_project(cfg, timer):
    s = cfg.series
    rows = [{"q": q, "c_q": float(s.coeffs[q]),
             "q!c_q^2": float(math.factorial(q) * s.coeffs[q] ** 2)}
            for q in range(1, s.q_max + 1)]
    summary = {"rank": s.rank, "norm": s.norm(), "series": s.to_dict()}
    with timer("sigma_sq"):
        try:
            sig = sigma_sq(s, cfg.model)
            summary["sigma_sq"] = {"value": sig.value, "tail_estimate": sig.tail_estimate,
                                   "lag_cutoff": sig.lag_cutoff, "summable": sig.summable}
        except BMLabError as exc:
            summary["sigma_sq"] = {"error": str(exc)}
    return rows, summary


def _run_diagrams(cfg, timer):
    block = cfg.raw["diagrams"]
    q = tuple(block["q"])
    with timer("enumerate"):
        diagrams = enumerate_diagrams(q, max_count=block.get("max_count", 200000))
    rows = []
    for i, dg in enumerate(diagrams):
        d = dg.to_dict()
        rows.append({"index": i, "beta": json.dumps(d["beta"]),
                     "C": f"{d['C_num']}/{d['C_den']}"})
    summary = {"q": list(q), "count": len(diagrams), "diagrams": dump_diagrams(diagrams)}
    if "corr" in block:
        from fractions import Fraction

        corr = [[Fraction(str(v)) for v in row] for row in block["corr"]]
        val = product_moment(q, corr, exact=True)
        summary["product_moment"] = {"exact": f"{val.numerator}/{val.denominator}",
                                     "value": float(val)}
    return rows, summary


def _run_grid(cfg, subcommand, timer, threads):
    rows = []
    sim_meta = {}
    d = cfg.rank
    funcs = cfg.functionals if subcommand in ("functionals", "rate-study") else []
    if subcommand == "functionals" and not funcs:
        funcs = ["prop_tv"] + (["prop_w"] if d >= 2 else [])
    for n in cfg.n:
        row = {"n": n}
        if subcommand in ("bounds", "rate-study"):
            with timer("bounds"):
                row.update(_sp_columns(cfg.model, n, d))
                row.update(bound_terms(cfg.bounds, cfg.model, n, d))
        if subcommand == "bounds":
            rows.append(row)
            continue
        with timer("exact_variance"):
            varF = variance_F_exact(cfg.series, cfg.model, n)
        row["var_F_exact"] = varF
        sink = None
        if subcommand == "simulate" and cfg.raw.get("save_paths"):
            out = Path(cfg.raw["_out"]) / "paths"
            out.mkdir(parents=True, exist_ok=True)
            sink = np.lib.format.open_memmap(out / f"paths_n{n}.npy", mode="w+",
                                             shape=(cfg.R, n), dtype=float)
        with timer("simulate+functionals"):
            vecs, meta = stream_replicates(cfg, n, funcs, threads, sink)
        sim_meta[str(n)] = meta
        F = vecs["F"]
        lag1 = vecs.pop("lag1")
        Y = F / math.sqrt(varF)
        if subcommand == "simulate":
            row.update({"R": cfg.R, "method": meta.get("method"),
                        "embedding_size": meta.get("embedding_size"),
                        "F_mean": float(F.mean()), "var_F_sample": float(F.var(ddof=1)),
                        "lag1_corr": float(np.nanmean(lag1)),
                        "lag1_corr_se": float(np.nanstd(lag1, ddof=1) / math.sqrt(cfg.R))
                        if n > 1 else None,
                        "rho_1": float(cfg.model.rho(1))})
            if sink is not None:
                sink.flush()
                del sink
                side = {"family": cfg.model.family, "params": {k: v for k, v in
                        cfg.model.to_dict().items() if k != "family"},
                        "n": n, "R": cfg.R, "seed": cfg.seed, **meta}
                (Path(cfg.raw["_out"]) / "paths" / f"paths_n{n}.json").write_text(
                    json.dumps(side, indent=2))
                export_statistics_csv(Path(cfg.raw["_out"]) / "paths" / f"stats_n{n}.csv",
                                      {"F": F, "Y": Y})
        if funcs:
            with timer("estimates"):
                row.update(_functional_columns(vecs, funcs, varF, n, cfg.seed))
                if "dfu" in vecs:
                    row["mean<DF,u>"] = float(vecs["dfu"].mean())
                    row["var<DF,u>"] = float(vecs["dfu"].var(ddof=1))
                if "d2v" in vecs:
                    row["mean<D2F,v>"] = float(vecs["d2v"].mean())
                    row["var<D2F,v>"] = float(vecs["d2v"].var(ddof=1))
        if subcommand in ("distances", "rate-study"):
            with timer("distances"):
                row.update(_distance_columns(Y, cfg.distances))
        rows.append(row)
    return rows, {"sampler": sim_meta}


def _plot_rows(rows, title):
    cols = [c for c in rows[0] if c in FIT_COLUMNS or c.endswith(".total")
            or (c.count(".") == 1 and c.split(".")[1].startswith("term"))]
    ns = [r["n"] for r in rows]
    series = [(c, ns, [r.get(c) for r in rows]) for c in cols]
    return loglog_svg(series, title=title, xlabel="n", ylabel="distance / bound term")


def _versions():
    import scipy
    import sklearn

    return {"bmlab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "jsonschema": _jsonschema_version()}


def _jsonschema_version():
    from importlib.metadata import version

    return version("jsonschema")


def run_experiment(cfg, subcommand="rate-study", out_dir=None, threads=1):
    """Run ``subcommand`` for a parsed config and write the artifacts.

    Writes ``report.csv``, ``report.json``, ``manifest.json`` and, for grid
    subcommands, ``plots/*.svg`` into ``out_dir``.  Returns the
    :class:`BoundReport`.
    """
    if subcommand not in SUBCOMMANDS or subcommand == "verify":
        raise ConfigError(f"unknown experiment subcommand {subcommand!r}", field="subcommand")
    out = Path(out_dir or cfg.raw.get("output_dir") or "bmlab_out")
    out.mkdir(parents=True, exist_ok=True)
    cfg.raw["_out"] = str(out)
    timer = _Timer()
    t0 = time.perf_counter()
    try:
        if subcommand == "project":
            rows, summary = _run_project(cfg, timer)
        elif subcommand == "diagrams":
            rows, summary = _run_diagrams(cfg, timer)
        else:
            rows, summary = _run_grid(cfg, subcommand, timer, max(1, int(threads)))
    finally:
        cfg.raw.pop("_out", None)
    report = BoundReport(rows=rows, config=cfg.echo())
    if subcommand in NEEDS_GRID:
        report.fits = _fit_columns(rows, cfg.raw.get("log_correction", False))
        report.expected = _expected_rates(cfg)
    sampler_meta = summary.pop("sampler", None)
    payload = report.to_dict()
    payload["subcommand"] = subcommand
    payload["summary"] = summary
    from .bounds import _json_safe

    (out / "report.json").write_text(
        json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")
    with open(out / "report.csv", "w", newline="") as fh:
        fh.write(report.to_csv())
    if subcommand in NEEDS_GRID and len(rows) >= 2:
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        (plots / f"{subcommand}.svg").write_text(
            _plot_rows(rows, f"{subcommand}: {cfg.raw['function']} / {cfg.model.family}"))
    elif subcommand == "project":
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        (plots / "coefficients.svg").write_text(loglog_svg(
            [("|c_q|", [r["q"] for r in rows], [abs(r["c_q"]) for r in rows])],
            title="Hermite coefficients", xlabel="q", ylabel="|c_q|"))
    manifest = {
        "subcommand": subcommand,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "substreams": {"paths": substream_key(cfg.seed, "paths")},
        "threads": int(threads),
        "versions": _versions(),
        "timings_s": {k: round(v, 6) for k, v in timer.timings.items()},
        "wall_clock_s": round(time.perf_counter() - t0, 6),
        "sampler": sampler_meta,
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    (out / "manifest.json").write_text(json.dumps(_json_safe(manifest), indent=2, sort_keys=True) + "\n")
    report.summary = summary
    return report
