"""Batch experiment runner.

For every ``n`` of the grid the runner resolves ``a_n``, ``d_n`` and the
limiting variance, then runs the diagnostic and goodness-of-fit stages and
writes their results below the output directory:

``summary.json``
    per-``n`` results and the outcome of every preset assertion;
``manifest.json``
    config echo, resolved constants, package versions and stream ids;
``<stage>.csv``
    stage detail tables (schema line ``# rvclt-schema v1``);
``timing.log``
    wall-clock seconds per stage (kept apart so the other files are
    byte-reproducible);
``FAILED``
    present iff an assertion failed or a stage raised.

Each stage draws from the stream ``(master_seed, stage, n)``.
"""

from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .config import ExperimentConfig, is_symmetric
from .diagnostics import (
    choose_block_scheme,
    dependence_window,
    ld_ratio_scan,
    mixing_cf_check,
    petrov_conditions,
    stationary_empirical_tail,
)
from .errors import ConfigurationError, StageError
from .gof import ks_test, multiplier_check, normalized_sums, qq_export, studentized_sums, write_qq_csv
from .models import SRE_KINDS, centering_constant
from .normalizer import closed_form_a_n, empirical_a_n_stderr, residual, solve_a_n
from .streams import Streams
from .tails import AsymptoticTail
from .variance import gg_constants, kg_constants, sigma2_linear, sigma2_sv

STAGES = ("normalizer", "petrov", "mixing", "ld_scan", "normalized_sums", "studentized_sums", "multiplier")


@dataclass
class RunManifest:
    config: dict
    resolved: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    streams: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    failed_stage: str | None = None
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.failed_stage is None and all(a["passed"] for a in self.assertions)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self):
        # wall-clock times live in timing.log only
        return {
            "config": self.config,
            "resolved": self.resolved,
            "versions": self.versions,
            "streams": self.streams,
            "outputs": sorted(self.outputs),
            "timing_file": "timing.log",
            "failed_stage": self.failed_stage,
        }


def package_versions() -> dict:
    import numba
    import scipy

    return {
        "rvclt": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def _convention(normalization: str) -> str:
    return "NoiseAnZ" if normalization == "NoiseAnZ" else "PaperAn"


def variance_target(model, normalization: str) -> float:
    """Limiting variance of ``(S_n - d_n)/a_n`` under the chosen normalization."""
    conv = _convention(normalization)
    kind = model.kind
    if kind == "IID":
        return 1.0
    if kind == "FiniteMA":
        return sigma2_linear(model.coefficients)[conv].sigma2
    if kind == "LinearProcess":
        return sigma2_linear(model.coefficients)[conv].sigma2
    if kind == "StochVol":
        return sigma2_sv(model.coefficients)[conv].sigma2
    if kind == "SREKestenGoldie":
        return kg_constants(model.A, model.B).c0
    if kind == "SREGrey":
        g = gg_constants(model.A)
        return g.c0 * g.tail_equiv if conv == "NoiseAnZ" else g.c0
    raise ConfigurationError(f"no variance target for {kind!r}")


def vn2_target(model, normalization: str) -> float:
    """Limit of ``V_n^2 / a_n^2`` for the m-dependent families."""
    if _convention(normalization) == "PaperAn" or model.kind == "IID":
        return 1.0
    if model.kind in ("FiniteMA", "LinearProcess"):
        return float(np.sum(np.asarray(model.coefficients) ** 2))
    if model.kind == "StochVol":
        return model.volatility_second_moment
    raise ConfigurationError(f"no V_n^2 target for {model.kind!r}")


def ld_target(model):
    """``(c0, tail)`` for the large-deviation scan, or ``None`` without a target."""
    if model.kind == "SREKestenGoldie":
        c = kg_constants(model.A, model.B)
        return c.c0, AsymptoticTail(c.c_infinity)
    if model.kind == "SREGrey":
        g = gg_constants(model.A)
        return g.c0, AsymptoticTail(g.tail_equiv, model.B)
    return None


class _Runner:
    def __init__(self, config: ExperimentConfig, out: Path, threads):
        self.config = config
        self.out = out
        self.threads = threads
        self.model = config.build_model()
        self.root = Streams(config.master_seed)
        # the output location is left out so that relocated runs stay byte-identical
        echo = {k: v for k, v in config.to_dict().items() if k != "outputs"}
        self.manifest = RunManifest(config=echo, versions=package_versions())
        self.summary = {"preset": config.preset, "model": self.model.to_dict(), "normalization": config.normalization, "per_n": {}}
        self.tables = {s: [] for s in ("normalizer", "petrov", "mixing", "ld_scan", "gof")}
        self._marginal = None

    def stream(self, stage: str, n: int) -> Streams:
        s = self.root.child(stage, n)
        self.manifest.streams.setdefault(stage, {})[str(n)] = s.stream_id
        return s

    def stage(self, name, fn, *args):
        t0 = time.perf_counter()
        try:
            return fn(*args)
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.manifest.timing[name] = self.manifest.timing.get(name, 0.0) + time.perf_counter() - t0

    def check(self, name, n, value, threshold, passed):
        self.manifest.assertions.append(
            {"name": name, "n": n, "value": float(value), "threshold": threshold, "passed": bool(passed)}
        )

    def write(self, name):
        self.manifest.outputs.append(name)
        return self.out / name

    def marginal_tail(self):
        if self._marginal is None:
            s = self.root.child("marginal")
            self.manifest.streams["marginal"] = s.stream_id
            self._marginal = stationary_empirical_tail(self.model, self.config.diagnostics["marginal_draws"], s, self.threads)
        return self._marginal

    # -- stages ----------------------------------------------------------

    def resolve(self, n):
        model, norm = self.model, self.config.normalization
        stderr = 0.0
        if norm == "ClosedForm":
            a, source, res = closed_form_a_n(model, n), "ClosedForm", float("nan")
        elif norm == "NoiseAnZ" or model.kind == "IID":
            tail = model.B if model.kind == "SREGrey" else model.noise
            a, source = solve_a_n(tail, n), "Eq3Exact"
            res = residual(tail, n, a)
        elif model.kind == "StochVol":
            a, source, res = closed_form_a_n(model, n), "ClosedFormSV", float("nan")
        else:
            tail = self.marginal_tail()
            a, source = solve_a_n(tail, n), "EmpiricalK"
            res = residual(tail, n, a)
            stderr = empirical_a_n_stderr(tail, n, a)
        d = centering_constant(model, n)
        sigma2 = variance_target(model, norm)
        out = {"a_n": a, "d_n": d, "sigma2": sigma2, "source": source, "residual": res, "a_n_stderr": stderr}
        if model.kind != "SREKestenGoldie":
            out["sigma2_by_convention"] = {c: variance_target(model, c) for c in ("PaperAn", "NoiseAnZ")}
        return out

    def run_n(self, n):
        cfg, model, diag = self.config, self.model, self.config.diagnostics
        res = self.stage("normalizer", self.resolve, n)
        a_n, sigma2 = res["a_n"], res["sigma2"]
        self.manifest.resolved[str(n)] = {"a_n": a_n, "d_n": res["d_n"], "sigma2": sigma2}
        self.tables["normalizer"].append(
            [n, a_n, a_n / math.sqrt(n), res["residual"], res["source"], res["d_n"], sigma2, res["a_n_stderr"]]
        )
        entry = {"resolved": res}
        symmetric = is_symmetric(model)

        params = dict(cfg.block_rule)
        params.setdefault("m", dependence_window(model))
        scheme = self.stage("petrov", choose_block_scheme, model.kind, n, params)
        entry["block_scheme"] = scheme.to_dict()

        petrov = self.stage(
            "petrov",
            lambda: petrov_conditions(
                model,
                scheme,
                a_n,
                eps_grid=diag["eps_grid"],
                replicates=diag["petrov_replicates"],
                rng_stream=self.stream("petrov", n),
                bootstrap=diag["bootstrap"],
                threads=self.threads,
            ),
        )
        entry["petrov"] = petrov.to_dict()
        entry["petrov"]["cond_b_pairwise_z"] = {f"{e1}-{e2}": z for (e1, e2), z in petrov.cond_b_pairwise_z().items()}
        self.tables["petrov"].append([n, scheme.r_n, scheme.k_n, "cond_a", "", petrov.cond_a, petrov.cond_a_stderr])
        for eps in petrov.cond_b:
            self.tables["petrov"].append([n, scheme.r_n, scheme.k_n, "cond_b", eps, petrov.cond_b[eps], petrov.cond_b_stderr[eps]])
        self.tables["petrov"].append([n, scheme.r_n, scheme.k_n, "cond_c", "", petrov.cond_c, petrov.cond_c_stderr])
        if "cond_c_z_max" in cfg.assertions and symmetric:
            z = abs(petrov.cond_c) / petrov.cond_c_stderr if petrov.cond_c_stderr > 0 else 0.0
            self.check("cond_c_z", n, z, cfg.assertions["cond_c_z_max"], z <= cfg.assertions["cond_c_z_max"])

        mixing = self.stage(
            "mixing",
            lambda: mixing_cf_check(
                model,
                n,
                scheme,
                a_n,
                diag["u_grid"],
                replicates=diag["mixing_replicates"],
                rng_stream=self.stream("mixing", n),
                threads=self.threads,
            ),
        )
        entry["mixing"] = mixing.to_dict()
        for u, dval, se in zip(mixing.u, mixing.discrepancy, mixing.stderr):
            self.tables["mixing"].append([n, u, dval, se])

        target = ld_target(model)
        if target is not None:
            c0, tail = target
            ld = self.stage(
                "ld_scan",
                lambda: ld_ratio_scan(
                    model,
                    scheme.r_n,
                    None,
                    tail,
                    c0,
                    centering_constant(model, scheme.r_n),
                    replicates=diag["ld_replicates"],
                    rng_stream=self.stream("ld_scan", n),
                    quantile_levels=diag["ld_quantile_levels"],
                    threads=self.threads,
                ),
            )
            entry["ld_scan"] = ld.to_dict()
            for row in ld.rows():
                self.tables["ld_scan"].append([n, scheme.r_n, row["y"], row["ratio"], row["stderr"], row["hits"], row["in_paper_region"]])
            if "ld_band" in cfg.assertions:
                lo, hi = cfg.assertions["ld_band"]
                rel = ld.ratio / c0
                worst = float(rel[np.argmax(np.abs(rel - 1.0))])
                self.check("ld_ratio_over_c0", n, worst, [lo, hi], bool(np.all((rel >= lo) & (rel <= hi))))

        sums = self.stage(
            "normalized_sums",
            lambda: normalized_sums(model, n, a_n, res["d_n"], cfg.replicates, self.stream("normalized_sums", n), self.threads),
        )
        gof = ks_test(sums, sigma2)
        var = sums.variance()
        entry["normalized_sums"] = {**gof.to_dict(), "sample_variance": var}
        sums.to_csv(self.write(f"normalized_sums_n{n}.csv"))
        write_qq_csv(qq_export(sums, sigma2), self.write(f"normalized_qq_n{n}.csv"), {**sums.header(), "target_sigma2": f"{sigma2:.17g}"})
        self.tables["gof"].append([n, "NormalizedSum", sigma2, gof.ks_statistic, gof.ks_pvalue, gof.ad_statistic, var, sums.size])
        if "ks_max" in cfg.assertions:
            self.check("normalized_ks", n, gof.ks_statistic, cfg.assertions["ks_max"], gof.ks_statistic <= cfg.assertions["ks_max"])
        if "variance_rel_tol" in cfg.assertions and n == cfg.n_grid[-1]:
            rel = abs(var / sigma2 - 1.0)
            self.check("normalized_variance_rel", n, rel, cfg.assertions["variance_rel_tol"], rel <= cfg.assertions["variance_rel_tol"])

        if symmetric:
            s2 = variance_target(model, "PaperAn")
            stud = self.stage(
                "studentized_sums",
                lambda: studentized_sums(model, n, cfg.replicates, self.stream("studentized_sums", n), self.threads),
            )
            g = ks_test(stud, s2)
            entry["studentized_sums"] = {**g.to_dict(), "excluded": stud.excluded}
            stud.to_csv(self.write(f"studentized_sums_n{n}.csv"))
            self.tables["gof"].append([n, "StudentizedSum", s2, g.ks_statistic, g.ks_pvalue, g.ad_statistic, stud.variance(), stud.size])
            if "studentized_ks_max" in cfg.assertions:
                lim = cfg.assertions["studentized_ks_max"]
                self.check("studentized_ks", n, g.ks_statistic, lim, g.ks_statistic <= lim)

        if model.kind not in SRE_KINDS:
            t = vn2_target(model, cfg.normalization)
            mc = self.stage(
                "multiplier",
                lambda: multiplier_check(model, n, a_n, cfg.replicates, self.stream("multiplier", n), self.threads),
            )
            vn2, mult = mc["vn2_sample"], mc["multiplier_sample"]
            g = ks_test(mult, t)
            vmean = float(vn2.values.mean())
            entry["multiplier"] = {
                "vn2_target": t,
                "vn2_mean": vmean,
                "vn2_median": float(np.median(vn2.values)),
                "multiplier": g.to_dict(),
            }
            io.write_csv(
                self.write(f"multiplier_n{n}.csv"),
                ["replicate", "vn2", "multiplier"],
                ([i, a, b] for i, (a, b) in enumerate(zip(vn2.values, mult.values))),
                {**mult.header(), "statistic_kind": "QuadraticVn2+MultiplierSum"},
            )
            self.tables["gof"].append([n, "MultiplierSum", t, g.ks_statistic, g.ks_pvalue, g.ad_statistic, mult.variance(), mult.size])
            if "multiplier_ks_max" in cfg.assertions:
                lim = cfg.assertions["multiplier_ks_max"]
                self.check("multiplier_ks", n, g.ks_statistic, lim, g.ks_statistic <= lim)
            if "vn2_rel_tol" in cfg.assertions:
                rel = abs(vmean / t - 1.0)
                self.check("vn2_mean_rel", n, rel, cfg.assertions["vn2_rel_tol"], rel <= cfg.assertions["vn2_rel_tol"])

        self.summary["per_n"][str(n)] = entry

    def flush_tables(self):
        heads = {
            "normalizer": ["n", "a_n", "ell_n", "residual", "source", "d_n", "sigma2", "a_n_stderr"],
            "petrov": ["n", "r_n", "k_n", "quantity", "eps", "estimate", "stderr"],
            "mixing": ["n", "u", "discrepancy", "stderr"],
            "ld_scan": ["n", "r_n", "y", "ratio", "stderr", "hits", "in_paper_region"],
            "gof": ["n", "statistic_kind", "target_sigma2", "ks_statistic", "ks_pvalue", "ad_statistic", "sample_variance", "size"],
        }
        meta = {"preset": self.config.preset, "seed": self.config.master_seed}
        for name, rows in self.tables.items():
            if rows:
                io.write_csv(self.write(f"{name}.csv"), heads[name], rows, meta)


def resolve_constants(config: ExperimentConfig, n: int, threads=None) -> dict:
    """``a_n``, ``d_n`` and ``sigma2`` exactly as :func:`run_experiment` resolves them for ``n``."""
    return _Runner(config, Path(config.outputs), threads).resolve(int(n))


def run_experiment(config: ExperimentConfig, out=None, threads=None) -> RunManifest:
    """Run every stage for every ``n`` and persist the reports.

    A failing stage stops the run; outputs written so far are kept, the
    error is recorded with the stage name and a ``FAILED`` marker is
    written.  ``manifest.exit_code`` is 0 iff every assertion passed.
    """
    out = Path(out if out is not None else config.outputs)
    out.mkdir(parents=True, exist_ok=True)
    failed = out / "FAILED"
    if failed.exists():
        failed.unlink()
    runner = _Runner(config, out, threads)
    try:
        for n in config.n_grid:
            runner.run_n(int(n))
    except StageError as exc:
        runner.manifest.failed_stage = exc.stage
        runner.manifest.error = str(exc)
    runner.flush_tables()
    m = runner.manifest
    runner.summary["assertions"] = m.assertions
    runner.summary["passed"] = m.passed
    if m.failed_stage:
        runner.summary["error"] = {"stage": m.failed_stage, "message": m.error}
    io.write_json(runner.summary, runner.write("summary.json"))
    m.outputs.append("manifest.json")
    io.write_json(m, out / "manifest.json")
    with open(out / "timing.log", "w", encoding="utf-8") as fh:
        for stage, secs in m.timing.items():
            fh.write(f"{stage}\t{secs:.3f}\n")
    if not m.passed:
        lines = [f"stage {m.failed_stage}: {m.error}"] if m.failed_stage else []
        lines += [f"assertion {a['name']} n={a['n']} value={a['value']:.6g} threshold={a['threshold']}" for a in m.assertions if not a["passed"]]
        failed.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return m
