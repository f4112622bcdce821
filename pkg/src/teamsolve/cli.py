"""Batch front end: parse a problem config, run the full pipeline
(partition, moments, cutting-plane solve, equilibrium assembly), and write
machine-readable artifacts.

Subcommands::

    teamsolve run    --config F --out DIR [--seed S] [--threads T]
    teamsolve verify --config F

Set ``TEAMSOLVE_LOG`` to ``error``, ``info`` or ``debug`` to control
logging.  Outputs in the run directory: ``result.json``,
``iterations.csv``, ``nu_hat.csv``, ``coupling_samples_{i}.csv``,
``transfer_{i}.csv``, ``nu_tilde_hist.csv``.  Given the same config and
seed the result is deterministic up to the timing fields.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import subprocess
import sys
import time

import numpy as np

from . import cutting_plane, equilibrium
from .geometry import (FiniteSpace, HatBasis, IndicatorBasis,
                       build_box_partition)
from .measures import (DiscreteMeasure, measure_from_json, moment_vector,
                       moments_all_vertices, random_cpwa, uniform_points)
from .oracle import make_oracle
from .problems import (barycenter_cost, business_location_cost,
                       capped_affine_cost, tabulated_cpwa_cost)

log = logging.getLogger("teamsolve.cli")


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__("%s: %s" % (path, message))
        self.path = path


def _need(doc, key, path):
    if key not in doc:
        raise ConfigError("%s.%s" % (path, key), "missing required field")
    return doc[key]


def _build_space(doc, path):
    kind = _need(doc, "type", path)
    if kind == "box":
        box = _need(doc, "box", path)
        counts = _need(doc, "counts", path)
        try:
            return build_box_partition(box, counts)
        except Exception as e:
            raise ConfigError(path, str(e)) from e
    if kind == "finite":
        try:
            return FiniteSpace(_need(doc, "points", path))
        except Exception as e:
            raise ConfigError(path, str(e)) from e
    raise ConfigError(path + ".type", "unknown space type %r" % kind)


def _build_measure(doc, space, seed, path):
    kind = _need(doc, "type", path)
    try:
        if kind == "random_cpwa":
            rng = np.random.default_rng(doc.get("seed", seed))
            return random_cpwa(space, rng)
        if kind in ("discrete", "cpwa"):
            return measure_from_json(doc, complex=space)
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(path, str(e)) from e
    raise ConfigError(path + ".type", "unknown measure type %r" % kind)


class ProblemSetup:
    """Everything the pipeline needs, assembled from a config dict."""

    def __init__(self, config):
        cats = _need(config, "categories", "$")
        if not isinstance(cats, list) or not cats:
            raise ConfigError("$.categories", "need a non-empty list")
        self.N = len(cats)
        seed = int(config.get("seed", 0))
        self.seed = seed
        self.x_spaces = []
        self.measures = []
        for i, cat in enumerate(cats):
            base = "$.categories[%d]" % i
            sp = _build_space(_need(cat, "space", base), base + ".space")
            self.x_spaces.append(sp)
            mu = _build_measure(_need(cat, "measure", base), sp,
                                seed + 1000 + i, base + ".measure")
            if mu.dim != sp.dim:
                raise ConfigError(base + ".measure",
                                  "measure dimension %d does not match the "
                                  "space dimension %d" % (mu.dim, sp.dim))
            self.measures.append(mu)
        qdoc = _need(config, "quality", "$")
        self.z_space = _build_space(_need(qdoc, "space", "$.quality"),
                                    "$.quality.space")
        self.x_bases = [
            IndicatorBasis(sp) if isinstance(sp, FiniteSpace) else HatBasis(sp)
            for sp in self.x_spaces]
        self.z_basis = (IndicatorBasis(self.z_space)
                        if isinstance(self.z_space, FiniteSpace)
                        else HatBasis(self.z_space))
        self.model = self._build_model(_need(config, "problem", "$"))
        if self.model.N != self.N:
            raise ConfigError("$.problem",
                              "cost model has %d categories, config has %d"
                              % (self.model.N, self.N))
        self.eps_lsip = float(_need(config, "eps_lsip", "$"))
        if self.eps_lsip <= 0:
            raise ConfigError("$.eps_lsip", "must be positive")
        self.tau = config.get("tau")
        if self.tau is not None:
            self.tau = float(self.tau)
            if not 0 <= self.tau < self.eps_lsip / self.N:
                raise ConfigError("$.tau", "need 0 <= tau < eps_lsip / N")
        mc = config.get("mc", {})
        self.mc_n = int(mc.get("n", 100000))
        self.mc_repetitions = int(mc.get("repetitions", 20))
        self.i_hat = config.get("i_hat", "auto")
        if self.i_hat != "auto":
            self.i_hat = int(self.i_hat)
            if not 0 <= self.i_hat < self.N:
                raise ConfigError("$.i_hat", "index out of range")
        self.max_iterations = int(config.get("max_iterations", 10000))
        self.threads = int(config.get("threads", 1))
        self.config = config

    def _build_model(self, doc):
        fam = _need(doc, "family", "$.problem")
        try:
            if fam == "barycenter":
                w = doc.get("weights", [1.0 / self.N] * self.N)
                return barycenter_cost(
                    w, self.x_spaces, self.z_space, self.measures,
                    shift_accounting=doc.get("shift_accounting", True))
            if fam == "business_location":
                return business_location_cost(
                    _need(doc, "stations", "$.problem"),
                    doc.get("c_walk", 0.15), doc.get("c_train", 0.015),
                    doc.get("c_restock", 0.4), n_categories=self.N)
            if fam == "capped_affine":
                return capped_affine_cost(
                    _need(doc, "s", "$.problem"),
                    _need(doc, "kappa1", "$.problem"),
                    _need(doc, "kappa2", "$.problem"))
            if fam == "tabulated":
                return tabulated_cpwa_cost(
                    self.x_spaces, self.z_space,
                    [np.asarray(T, dtype=float)
                     for T in _need(doc, "tables", "$.problem")])
        except ConfigError:
            raise
        except Exception as e:
            raise ConfigError("$.problem", str(e)) from e
        raise ConfigError("$.problem.family", "unknown family %r" % fam)

    def moments(self):
        return [moment_vector(self.measures[i], self.x_bases[i])
                for i in range(self.N)]

    def lp_width(self):
        k = self.z_basis.m
        return self.N * (k + 1) + sum(b.m for b in self.x_bases)


def load_config(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise ConfigError(path, "cannot read config: %s" % e) from e
    except json.JSONDecodeError as e:
        raise ConfigError(path, "invalid JSON: %s" % e) from e


def _provenance(config):
    """Identify the inputs: package version, config digest, and the working
    tree's git description when one is available."""
    from . import __version__
    blob = json.dumps(config, sort_keys=True).encode()
    doc = {"package_version": __version__,
           "config_sha256": hashlib.sha256(blob).hexdigest()}
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            doc["git_describe"] = out.stdout.strip()
    except Exception:
        pass
    return doc


def run_pipeline(setup, out_dir=None, threads=None, seed=None):
    """Solve and assemble; optionally write the artifact files."""
    if seed is not None:
        setup.seed = int(seed)
    if threads is not None:
        setup.threads = int(threads)
    t_total = time.perf_counter()
    gbar = setup.moments()
    oracle = make_oracle(setup.model, setup.x_spaces, setup.x_bases,
                         setup.z_space, setup.z_basis,
                         pool_margin=10.0 * setup.eps_lsip / setup.N,
                         pool_cap=32)
    cp_res = cutting_plane.run(
        setup.model, gbar, setup.x_spaces, setup.x_bases, setup.z_space,
        setup.z_basis, oracle, setup.eps_lsip, tau=setup.tau,
        max_iterations=setup.max_iterations, threads=setup.threads)
    t_solve = time.perf_counter() - t_total
    report = equilibrium.construct(
        cp_res, setup.model, setup.measures, setup.x_spaces, setup.x_bases,
        setup.z_space, setup.z_basis, mc_n=setup.mc_n,
        mc_repetitions=setup.mc_repetitions, seed=setup.seed,
        i_hat=setup.i_hat)
    t_total = time.perf_counter() - t_total

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        cp_res.write_iteration_log(os.path.join(out_dir, "iterations.csv"))
        equilibrium.write_nu_hat_csv(report,
                                     os.path.join(out_dir, "nu_hat.csv"))
        rng = np.random.default_rng(setup.seed + 77)
        n_export = min(setup.mc_n, 2000)
        for i in range(setup.N):
            equilibrium.write_coupling_csv(
                report, np.random.default_rng(setup.seed + 100 + i), n_export,
                i, os.path.join(out_dir, "coupling_samples_%d.csv" % i))
            equilibrium.write_transfer_csv(
                setup.model, cp_res.solution, setup.x_spaces, setup.x_bases,
                setup.z_space.vertices, i,
                os.path.join(out_dir, "transfer_%d.csv" % i))
        equilibrium.write_nu_tilde_hist_csv(
            report, rng, min(setup.mc_n, 20000),
            os.path.join(out_dir, "nu_tilde_hist.csv"))
        lp_time = sum(r.lp_time for r in cp_res.iterations)
        oracle_time = sum(r.oracle_time for r in cp_res.iterations)
        equilibrium.write_report_json(
            report, os.path.join(out_dir, "result.json"),
            extra={
                "alpha_ub_parametric": cp_res.alpha_ub + report.shift,
                "lsip_gap": cp_res.gap,
                "eps_lsip": setup.eps_lsip,
                "iterations": len(cp_res.iterations),
                "lp_rows": cp_res.n_lp_rows,
                "lp_width": setup.lp_width(),
                "config_echo": setup.config,
                "provenance": _provenance(setup.config),
                "timing": {"lp_time": lp_time, "oracle_time": oracle_time,
                           "solve_time": t_solve, "total_time": t_total},
            })
    return cp_res, report


def verify_setup(setup, out=sys.stdout):
    """Dry-run validation; returns the number of warnings."""
    warnings = 0
    for i in range(setup.N):
        mu = setup.measures[i]
        sp = setup.x_spaces[i]
        if isinstance(mu, DiscreteMeasure):
            for a in mu.atoms:
                if not sp.contains(a):
                    raise ConfigError("$.categories[%d].measure" % i,
                                      "atom %s outside the partition" % a)
        allm = moments_all_vertices(mu, sp)
        zero = np.flatnonzero(allm <= 1e-14)
        for v in zero:
            warnings += 1
            out.write("warning: category %d vertex %d at %s carries zero "
                      "measure mass\n" % (i, v, sp.vertices[v]))
    rng = np.random.default_rng(setup.seed)
    ok, worst = setup.model.check_lipschitz(
        rng,
        lambda i, n: uniform_points(setup.x_spaces[i], rng, n),
        lambda n: uniform_points(setup.z_space, rng, n),
        n=10000)
    if not ok:
        raise ConfigError("$.problem",
                          "Lipschitz constants violated by %.3g" % worst)
    n_vars = setup.lp_width()
    from .geometry import epsilon_bar
    radii = [0.0 if isinstance(sp, FiniteSpace) else epsilon_bar(sp, 0.0)
             for sp in setup.x_spaces]
    rh = 0.0 if isinstance(setup.z_space, FiniteSpace) \
        else epsilon_bar(setup.z_space, 0.0)
    best_ih = int(np.argmax(setup.model.L2))
    theo = equilibrium.eps_theo(setup.eps_lsip, setup.model.L1,
                                setup.model.L2, radii, rh, best_ih)
    out.write("lp decision variables n = %d\n" % n_vars)
    out.write("predicted eps_theo (best reference category) = %.6g\n" % theo)
    out.write("verify ok: %d warning(s)\n" % warnings)
    return warnings


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="teamsolve",
        description="approximate matching equilibria for N-category "
                    "matching-for-teams problems")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="solve a problem config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_ver = sub.add_parser("verify", help="validate a config without solving")
    p_ver.add_argument("--config", required=True)
    args = parser.parse_args(argv)

    level = os.environ.get("TEAMSOLVE_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(name)s %(levelname)s %(message)s")

    try:
        config = load_config(args.config)
        setup = ProblemSetup(config)
    except ConfigError as e:
        sys.stderr.write("config error at %s\n" % e)
        return 2
    if args.command == "verify":
        try:
            verify_setup(setup)
        except ConfigError as e:
            sys.stderr.write("config error at %s\n" % e)
            return 2
        return 0
    try:
        cp_res, report = run_pipeline(setup, out_dir=args.out,
                                      threads=args.threads, seed=args.seed)
    except Exception as e:
        sys.stderr.write("solver error [%s]: %s\n" % (type(e).__name__, e))
        return 1
    sys.stdout.write(
        "alpha_lb=%.9g alpha_tilde_ub=%.9g alpha_hat_ub=%.9g "
        "eps_hat_sub=%.3g eps_tilde_sub=%.3g eps_theo=%.3g\n"
        % (report.alpha_lb, report.alpha_tilde_ub, report.alpha_hat_ub,
           report.eps_hat_sub, report.eps_tilde_sub, report.eps_theo))
    return 0


if __name__ == "__main__":
    sys.exit(main())
