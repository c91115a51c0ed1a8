"""Command-line front end: one subcommand per experiment.

Each run reads a JSON config, writes JSON/CSV artifacts plus a short text
summary into ``--out``, and re-emits the fully resolved config as
``config.json`` so that the run can be replayed exactly.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import analysis, bits, codec, coupling, ensemble, lp, marginals, matcher
from .errors import ConfigInvalid, PrivcodeError

EPILOG = """exit codes:
  0  success
  1  other library error
  2  config-invalid (missing or inconsistent settings)
  3  instance-too-large (enumeration or audit scope out of range)
  4  negative-mass (targets could not be matched)
errors are reported on stderr as one JSON line {"error": kind, "message": ...}
"""

SCENARIOS = {
    "ensemble": "ensemble-study",
    "match": "match-demo",
    "roundtrip": "codec-roundtrip",
    "audit": "privacy-audit",
    "couple": "coupling-demo",
    "appendix": "appendix-check",
}

DEFAULTS = {
    "ensemble": {"x": None, "draws": 200, "seed": 0, "overlap_draws": 0},
    "match": {"x": None, "targets": "phi_A", "exact": False, "repair": True,
              "fraction": None, "seed": 0, "lp_check": True},
    "roundtrip": {"xs": None, "trials": 10000, "seed": 0, "delta": None,
                  "codebooks": True},
    "audit": {"scope": "weight-bounded", "prior": None},
    "couple": {"xs": None, "delta": 0.5, "S": None, "seed": 0},
    "appendix": {"count": 10000, "max_D": 64, "seed": 0},
}
NEEDS_PARAMS = {"ensemble", "match", "roundtrip", "audit", "couple"}


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    return data


def resolve_config(command: str, raw: dict) -> dict:
    """Fill defaults and check required fields before anything runs."""
    scenario = raw.get("scenario", SCENARIOS[command])
    if scenario != SCENARIOS[command]:
        raise ConfigInvalid(f"config is for scenario {scenario!r}, not {SCENARIOS[command]!r}")
    known = set(DEFAULTS[command]) | {"scenario", "params", "decoder"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigInvalid(f"unknown config keys {sorted(unknown)}")
    cfg = {"scenario": scenario}
    for key, default in DEFAULTS[command].items():
        cfg[key] = raw.get(key, default)
    if command in NEEDS_PARAMS:
        params = raw.get("params")
        if not isinstance(params, dict):
            raise ConfigInvalid("config needs a 'params' object")
        missing = [k for k in ("n", "p", "epsilon") if k not in params]
        if missing:
            raise ConfigInvalid(f"params missing {missing}")
        extra = set(params) - {"n", "p", "epsilon", "overrides", "seed"}
        if extra:
            raise ConfigInvalid(f"unknown params keys {sorted(extra)}")
        cfg["params"] = {"n": params["n"], "p": params["p"], "epsilon": params["epsilon"],
                         "overrides": params.get("overrides", {}),
                         "seed": params.get("seed", 0)}
        cfg["decoder"] = raw.get("decoder")
    return cfg


def build_decoder(cfg: dict) -> ensemble.DecoderSpec:
    pc = cfg["params"]
    try:
        params = ensemble.derive_parameters(int(pc["n"]), float(pc["p"]),
                                            float(pc["epsilon"]), pc["overrides"],
                                            seed=int(pc["seed"]))
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad params: {exc}") from exc
    dec = cfg.get("decoder") or {}
    if params.identity and not params.override and not dec:
        return ensemble.identity_decoder(params.n)
    syndrome = None
    if dec.get("H") is not None:
        syndrome = ensemble.build_syndrome_map(custom_H=dec["H"])
    return ensemble.sample_decoder(params, syndrome, dec.get("index_sets"))


def _source(value, n: int, what: str) -> np.ndarray:
    if value is None:
        return np.zeros(n, dtype=np.uint8)
    try:
        return bits.as_bits(value, n)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad {what}: {exc}") from exc


def _sources(values, n: int, what: str):
    if values is None:
        raise ConfigInvalid(f"config needs '{what}'")
    return [_source(v, n, what) for v in values]


# --------------------------------------------------------------------------
# scenarios; each returns {filename: text} and summary lines
# --------------------------------------------------------------------------

def run_ensemble(cfg, workers, stamp):
    spec0 = build_decoder(cfg)
    params = spec0.params
    x = _source(cfg["x"], params.n, "x")
    syndrome = spec0.syndrome
    rep = analysis.concentration_study(params, x, int(cfg["draws"]), cfg["seed"],
                                       syndrome=syndrome, workers=workers)
    result = rep.summary()
    if cfg["overlap_draws"]:
        result["overlap_study"] = {
            "draws": int(cfg["overlap_draws"]),
            "frequency": ensemble.overlap_exceedance_frequency(
                params.n, params.length, params.b, int(cfg["overlap_draws"]), cfg["seed"]),
            "union_bound": ensemble.overlap_union_bound(params.n, params.length, params.b),
        }
    rows = [(d, s, int(c), float(r), int(o), float(f)) for d, (s, c, r, o, f) in enumerate(
        zip(rep.seeds, rep.counts, rep.ratios, rep.max_overlaps, rep.expurgated_fractions))]
    files = {
        "ensemble.json": analysis.report_json("ensemble-study", result, params,
                                              {"root": cfg["seed"]}, stamp),
        "ensemble.csv": analysis.rows_csv(["draw", "seed", "valid_count", "ratio",
                                           "max_overlap", "expurgated_fraction"], rows),
    }
    lines = [f"mean valid count {rep.mean:.4f} vs expected {rep.expected:.4f} "
             f"(z = {rep.z_score:.3f})",
             f"Pr[max overlap >= 3] = {rep.overlap_exceedance:.4f}"]
    return files, lines


def _match_targets(cfg, spec, x):
    kind = cfg["targets"]
    if isinstance(kind, list):
        try:
            return marginals.BlockMarginalVector(np.array(kind, dtype=np.float64))
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad explicit targets: {exc}") from exc
    if kind == "phi_A":
        return marginals.reference_vectors(spec, x).phi_A
    if kind == "ideal":
        return marginals.ideal_vector(spec, x)
    if kind == "uniform":
        return marginals.uniform_vector(spec)
    if kind == "eligible-random":
        rng = np.random.default_rng(cfg["seed"])
        return analysis.random_eligible_targets(spec, x, rng, cfg["fraction"])[0]
    raise ConfigInvalid(f"unknown targets {kind!r}")


def run_match(cfg, workers, stamp):
    spec = build_decoder(cfg)
    x = _source(cfg["x"], spec.n, "x")
    targets = _match_targets(cfg, spec, x)
    res = matcher.match_marginals(spec, targets, exact=bool(cfg["exact"]),
                                  repair=bool(cfg["repair"]))
    result = {"report": json.loads(res.report.to_json()), "targets": targets.blocks}
    if cfg["lp_check"] and spec.length <= lp.MAX_LENGTH:
        result["lp_feasible"] = lp.lp_membership(spec, targets).feasible
    files = {
        "match.json": analysis.report_json("match-demo", result, spec.params,
                                           {"targets": cfg["seed"]}, stamp),
        "distribution.json": res.dist.to_json() + "\n",
        "decoder.json": spec.to_json() + "\n",
    }
    r = res.report
    lines = [f"block residual {r.stage_residuals.get('stage4', r.stage_residuals['stage3'])['block']:.3g}",
             f"min pointwise {float(r.min_pointwise):.6g} ({r.verified_mode})",
             f"repair weight {r.repair_weight:.6g}"]
    return files, lines


def run_roundtrip(cfg, workers, stamp):
    spec = build_decoder(cfg)
    xs = _sources(cfg["xs"], spec.n, "xs") if cfg["xs"] is not None else "bernoulli"
    rep = analysis.estimate_error(spec, source=xs, trials=int(cfg["trials"]),
                                  seed=cfg["seed"], delta=cfg["delta"])
    result = rep.summary()
    files = {"decoder.json": spec.to_json() + "\n"}
    if xs != "bernoulli":
        plans = [codec.build_encoding_plan(spec, x) for x in xs]
        result["plans"] = [pl.summary() for pl in plans]
        if cfg["codebooks"]:
            books = [json.loads(pl.index.codebook_json(spec.length)) for pl in plans
                     if pl.index is not None]
            files["codebooks.json"] = json.dumps(books, sort_keys=True, indent=2) + "\n"
    files["roundtrip.json"] = analysis.report_json("codec-roundtrip", result, spec.params,
                                                   {"encoder": cfg["seed"]}, stamp)
    lines = [f"per-bit error (MC) {np.round(rep.per_bit, 5).tolist()}",
             f"per-bit error (exact) {np.round(rep.exact_per_bit, 5).tolist()}",
             f"block error {rep.block_error:.5f}"]
    return files, lines


def run_audit(cfg, workers, stamp):
    spec = build_decoder(cfg)
    scope = cfg["scope"]
    if isinstance(scope, list):
        scope = [bits.bits_to_str(x) for x in _sources(scope, spec.n, "scope")]
    audit = analysis.audit_privacy(spec, scope=scope, prior=cfg["prior"])
    files = {
        "audit.json": analysis.report_json("privacy-audit", audit.summary(), spec.params,
                                           None, stamp),
        "decoder.json": spec.to_json() + "\n",
    }
    lines = [f"leakage {audit.leakage:.3g} over {audit.scope_size} sources",
             f"fallback sources {sorted(audit.attribution)}"]
    return files, lines


def run_couple(cfg, workers, stamp):
    spec = build_decoder(cfg)
    xs = _sources(cfg["xs"], spec.n, "xs")
    delta = float(cfg["delta"])
    plans = [codec.build_encoding_plan(spec, x) for x in xs]
    typ = coupling.check_distortion_typical(plans, xs, delta)
    sched = coupling.build_schedule(plans, xs, delta)
    worst, where = sched.worst_case()
    sw = sched.sweep()
    marginal_gap = max(float(np.abs(m - blk.prob).max())
                       for m, blk in zip(sw["measure"], sched.blocks))
    draw = coupling.coupled_encode(sched, cfg["S"], cfg["seed"])
    result = {"typical": typ, "worst_total_distortion": worst, "worst_at": where,
              "bound": sched.bound, "regions": int(sw["left"].size),
              "marginal_gap": marginal_gap, "draw": draw}
    files = {
        "couple.json": analysis.report_json("coupling-demo", result, spec.params,
                                            {"S": cfg["seed"]}, stamp),
        "schedule.csv": sched.to_csv(),
    }
    lines = [f"typical {typ['typical']}; worst total distortion {worst} <= bound "
             f"{sched.bound:g}: {worst <= sched.bound}"]
    return files, lines


def run_appendix(cfg, workers, stamp):
    rows, violations = analysis.appendix_sweep(int(cfg["count"]), int(cfg["max_D"]),
                                               cfg["seed"], workers)
    example = analysis.excess_fraction_check([0.3, 0.25, 0.25, 0.2], 50, 0.4)
    result = {"count": len(rows), "violations": violations, "worked_example": example}
    files = {
        "appendix.json": analysis.report_json("appendix-check", result, None,
                                              {"root": cfg["seed"]}, stamp),
        "appendix.csv": analysis.rows_csv(["D", "alpha", "eps", "spread", "spread_limit",
                                           "lhs", "rhs"], rows),
    }
    return files, [f"{len(rows)} pmfs, {violations} violations"]


RUNNERS = {"ensemble": run_ensemble, "match": run_match, "roundtrip": run_roundtrip,
           "audit": run_audit, "couple": run_couple, "appendix": run_appendix}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privcode", description="Private locally decodable source coding experiments.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenario in SCENARIOS.items():
        p = sub.add_parser(name, help=f"run the {scenario} scenario", epilog=EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit timestamps so artifacts are byte-reproducible")
    return parser


def run(command: str, config_path: str, out: str, workers: int = 1,
        timestamp: bool = True) -> int:
    cfg = resolve_config(command, load_config(config_path))
    stamp = (datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
             if timestamp else None)
    files, lines = RUNNERS[command](cfg, max(1, workers), stamp)
    os.makedirs(out, exist_ok=True)
    files["config.json"] = json.dumps(cfg, sort_keys=True, indent=2) + "\n"
    header = [f"scenario: {cfg['scenario']}"]
    if stamp:
        header.append(f"timestamp: {stamp}")
    files["summary.txt"] = "\n".join(header + lines) + "\n"
    for name, text in files.items():
        with open(os.path.join(out, name), "w") as fh:
            fh.write(text)
    print("\n".join(lines))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args.command, args.config, args.out, args.workers, not args.no_timestamp)
    except PrivcodeError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
