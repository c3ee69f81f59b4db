"""Command-line entry point: ``subflow {check,flow,stability,leung}``.

Exit codes: 0 success, 1 assertion failed, 2 configuration, 3 numerical,
4 precondition.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import refinement_study
from .config import RunConfig, load_config
from .domain import build_chart, integrate
from .errors import ConfigError, NumericalBlowupError, PreconditionError, SubflowError
from .fields import MapField, load_field_values, save_field
from .flow import flow_until, initial_map
from .stability import (StabilityVerdict, basis_vector, default_margin, hessian_min_eigenvalue,
                        instability_certificate, leung_sum, rayleigh_minimize, sphere_index_identity,
                        stability_probe)
from .target import Target, make_potential
from .variational import energy_density, tension_sup

log = logging.getLogger("subflow")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PRECONDITION = 0, 1, 2, 3, 4


def write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=False, default=_jsonable))
    tmp.replace(path)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def make_target(cfg: RunConfig) -> Target:
    return Target(cfg.target.kind, cfg.target.n)


def make_chart(cfg: RunConfig):
    d = cfg.domain
    return build_chart(d.name, d.resolution, d.periods, d.order)


def potential_factory(cfg: RunConfig):
    def make(target):
        return make_potential(cfg.potential.kind, target, **cfg.potential.params)
    return make


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- check -------------------------------------------------------------------

def cmd_check(cfg: RunConfig) -> int:
    target = make_target(cfg)
    charts = cfg.checks.charts or (cfg.domain.name,)
    orders = cfg.checks.orders or (cfg.domain.order,)
    studies = []
    for chart in charts:
        for order in orders:
            for suite in cfg.checks.suites:
                studies.append(refinement_study(suite, chart, order, cfg.checks.levels, target,
                                                potential_factory(cfg), seed=cfg.seed, dt=cfg.checks.dt,
                                                amplitude=cfg.checks.amplitude))
            if cfg.checks.literal_hessian_sign:
                studies.append(refinement_study("second_variation", chart, order, cfg.checks.levels, target,
                                                potential_factory(cfg), seed=cfg.seed, dt=cfg.checks.dt,
                                                literal_hessian_sign=True, amplitude=cfg.checks.amplitude))
    ok = all(s.passed for s in studies)
    for s in studies:
        orders_txt = "exact" if s.exact else ", ".join(f"{o:.2f}" for o in s.pair_orders)
        log.info("%-26s %-15s p=%d  orders [%s]  %s", s.check, s.chart, s.stencil_order, orders_txt,
                 "PASS" if s.passed else "FAIL")
    report = {"passed": ok, "seed": cfg.seed, "studies": [s.to_record() for s in studies]}
    write_json(_out_dir(cfg) / "check.json", report)
    return EXIT_OK if ok else EXIT_FAILED


# --- flow --------------------------------------------------------------------

def run_flow(cfg: RunConfig, out: Path | None = None):
    chart = make_chart(cfg)
    target = make_target(cfg)
    G = potential_factory(cfg)(target)
    f0 = initial_map(cfg.flow.initial, chart, target, seed=cfg.seed, point=cfg.flow.point)
    checkpoint = None
    if out is not None and cfg.flow.options.checkpoint_every:
        def checkpoint(step, f):
            save_field(out / f"checkpoint_{step:06d}.csv", f)
    opts = cfg.flow.options
    opts.seed = cfg.seed
    f, trace, status = flow_until(f0, G, opts, checkpoint)
    return f, G, trace, status


def cmd_flow(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    try:
        f, G, trace, status = run_flow(cfg, out)
    except NumericalBlowupError as exc:
        if exc.trace is not None:
            exc.trace.write_csv(out / "trace.csv")
        write_json(out / "flow.json", {"status": "blowup", "message": str(exc)})
        log.error("flow blew up: %s", exc)
        return EXIT_NUMERICAL
    trace.write_csv(out / "trace.csv")
    save_field(out / "field.csv", f)
    last = trace.accepted()[-1]
    summary = {"status": status, "steps": last.step, "attempts": len(trace.records) - 1,
               "energy": last.energy, "tension_sup": last.tension_sup,
               "horizontal_energy": integrate(f.chart, energy_density(f)), "volume": f.chart.volume,
               "constraint_drift": f.constraint_drift()}
    write_json(out / "flow.json", summary)
    log.info("flow %s after %d steps: E=%.10g sup|tau|=%.3e", status, last.step, last.energy, last.tension_sup)
    return EXIT_OK if status == "converged" else EXIT_FAILED


# --- field input ---------------------------------------------------------------

def load_or_flow(cfg: RunConfig, field_path):
    """The map to analyse: a dumped field if given, otherwise a fresh flow run."""
    target = make_target(cfg)
    G = potential_factory(cfg)(target)
    if field_path is None:
        f, G, _, _ = run_flow(cfg)
        return f, G
    meta, values = load_field_values(field_path)
    if meta:
        if meta.get("chart") != cfg.domain.name or tuple(meta.get("resolution", ())) != tuple(cfg.domain.resolution):
            raise ConfigError(f"field {field_path} was computed on {meta.get('chart')} {meta.get('resolution')}, "
                              f"config says {cfg.domain.name} {list(cfg.domain.resolution)}")
        if meta.get("target") != target.kind or int(meta.get("n", target.n)) != target.n:
            raise ConfigError(f"field {field_path} targets {meta.get('target')}^{meta.get('n')}, "
                              f"config says {target.kind}^{target.n}")
    return MapField(make_chart(cfg), target, values), G


# --- stability ---------------------------------------------------------------

def analyse_stability(cfg: RunConfig, f: MapField, G) -> StabilityVerdict:
    st = cfg.stability
    threshold = cfg.tension_threshold
    sup = tension_sup(f, G)
    if sup > threshold:
        raise PreconditionError(f"sup|tau| = {sup:.3e} exceeds the criticality threshold {threshold:.3e}")
    margin = st.margin if st.margin is not None else default_margin(f, G)
    verdict = None
    if f.target.is_sphere:
        verdict = instability_certificate(f, G, margin, threshold, rayleigh_iters=st.iters, seed=cfg.seed)
    if verdict is None or verdict.verdict != "unstable-certified":
        probe = stability_probe(f, G, st.samples, seed=cfg.seed, slack=st.slack)
        if probe.verdict == "unstable-certified":
            verdict = probe
        else:
            lam, V = rayleigh_minimize(f, G, st.iters, seed=cfg.seed)
            norm = integrate(f.chart, np.sum(V.values**2, axis=0))
            if lam * norm < -margin:
                verdict = StabilityVerdict("unstable-certified", lam * norm, V, "rayleigh",
                                           probes=probe.probes, lambda_min=lam)
            else:
                verdict = StabilityVerdict(probe.verdict, probe.min_index, None, None,
                                           probes=probe.probes, lambda_min=lam)
    verdict.tension_sup = sup
    verdict.hessian_min_eig = hessian_min_eigenvalue(f, G)
    return verdict


def cmd_stability(cfg: RunConfig, field_path=None) -> int:
    f, G = load_or_flow(cfg, field_path)
    verdict = analyse_stability(cfg, f, G)
    out = _out_dir(cfg)
    if verdict.witness is not None:
        save_field(out / "witness.csv", MapField(f.chart, Target("flat", f.target.ambient_dim),
                                                  verdict.witness.values))
    write_json(out / "verdict.json", verdict.to_record())
    log.info("verdict %s (min index %.6g, lambda_min %s)", verdict.verdict, verdict.min_index,
             verdict.lambda_min)
    return EXIT_OK


# --- leung -------------------------------------------------------------------

def cmd_leung(cfg: RunConfig, field_path=None) -> int:
    if cfg.target.kind != "sphere":
        raise ConfigError("the leung suite needs a sphere target")
    f, G = load_or_flow(cfg, field_path)
    k = f.target.ambient_dim
    rows = []
    for s in range(k):
        c = sphere_index_identity(f, G, basis_vector(k, s))
        rows.append({"direction": s + 1, "lhs": c.lhs, "rhs": c.rhs, "diff": c.diff, "scale": c.scale, "ok": c.ok})
        log.info("e%d  I(v,v)=%.12g  reduced=%.12g  diff=%.2e", s + 1, c.lhs, c.rhs, c.diff)
    L = leung_sum(f, G)
    ok = all(r["ok"] for r in rows) and L.ok
    report = {"n": f.target.n, "identities": rows,
              "sum": {"direct": L.sum_direct, "reduced": L.sum_reduced, "diff": L.diff, "scale": L.scale,
                      "ok": L.ok},
              "horizontal_energy": integrate(f.chart, energy_density(f)),
              "tension_sup": tension_sup(f, G), "passed": ok}
    write_json(_out_dir(cfg) / "leung.json", report)
    log.info("sum over s: direct=%.12g reduced=%.12g diff=%.2e", L.sum_direct, L.sum_reduced, L.diff)
    return EXIT_OK if ok else EXIT_FAILED


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("check", "flow", "stability", "leung"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="config file (defaults are used when omitted)")
        sp.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="overrides run.seed")
        if name in ("stability", "leung"):
            sp.add_argument("--field", type=Path, help="map dumped by `subflow flow`; flows from config if omitted")
        sp.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = str(args.out)
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "flow":
            return cmd_flow(cfg)
        if args.command == "stability":
            return cmd_stability(cfg, args.field)
        return cmd_leung(cfg, args.field)
    except SubflowError as exc:
        log.error("error: %s", exc)
        return exc.exit_code
    except FloatingPointError as exc:
        log.error("numerical error: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
