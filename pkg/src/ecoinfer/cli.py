"""Command-line front end: ``ecoinfer {ingest,fit,simulate,transitions,plebiscite,validate}``."""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analyses import age_party_curve, pair_rounds, plebiscite_cross, transition_matrix
from .datasets import (
    DEFAULT_ABSTAIN,
    Dataset,
    ingest,
    read_plebiscite,
    write_padron,
    write_plebiscite,
    write_results,
)
from .errors import EIError, IoFailure, ValidationError
from .estimators import METHODS, McmcConfig, holdout_validate
from .model import BracketPartition, OptionSet, cell_matrix
from .report import report_emit
from .synth import SimConfig, simulate_election, simulate_plebiscite


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_json(path, doc) -> Path:
    path = Path(path)
    try:
        path.write_bytes((json.dumps(doc, indent=1, sort_keys=True) + "\n").encode("utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def write_manifest(out_dir: Path, command: str, inputs, config: dict, seed: int,
                   started: str, outputs) -> Path:
    doc = {
        "command": command,
        "tool": "ecoinfer",
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(Path(p).relative_to(out_dir)): sha256(p) for p in sorted(map(str, outputs))},
        "started": started,
        "finished": _now(),
    }
    return write_json(out_dir / "manifest.json", doc)


def partition_from_args(args) -> BracketPartition:
    if args.bracket_width is not None:
        return BracketPartition.uniform(args.bracket_width)
    return BracketPartition.parse(args.brackets)


def mcmc_from_args(args) -> McmcConfig:
    return McmcConfig(chains=args.chains, iterations=args.iterations, burn_in=args.burn_in,
                      thinning=args.thinning, seed=args.seed, prior_shape=args.prior_shape,
                      prior_rate=args.prior_rate, proposal_step=args.proposal_step,
                      swaps_per_iteration=args.swaps, collapsed=not args.explicit_theta)


def _run_config(args, method: str) -> tuple[McmcConfig | None, dict]:
    cfg = mcmc_from_args(args) if method == "md" else None
    doc = {"method": method}
    if cfg is not None:
        doc["mcmc"] = cfg.to_dict()
    return cfg, doc


def _out(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    return out


def _formats(args):
    return ("csv",) if args.no_plots else ("csv", "svg")


def cmd_ingest(args) -> dict:
    started = _now()
    out = _out(args)
    partition = partition_from_args(args)
    ds = ingest(args.results, args.padron, partition, abstain_label=args.abstain_label)
    path = ds.write(out / "dataset.json")
    write_manifest(out, "ingest", [args.results, args.padron],
                   {"brackets": ",".join(partition.labels_spec()),
                    "abstain_label": args.abstain_label}, args.seed, started, [path])
    return ds.summary()


def cmd_fit(args) -> dict:
    started = _now()
    out = _out(args)
    ds = Dataset.read(args.dataset)
    cfg, doc = _run_config(args, args.method)
    curves = age_party_curve(list(ds.records), ds.partition, ds.options, args.method, cfg)
    written = report_emit(curves, out, _formats(args))
    write_manifest(out, "fit", [args.dataset], doc, args.seed, started, written)
    res = {"precincts": len(ds.records), "method": args.method}
    if curves.sd is not None:
        res["converged"] = curves.result.converged
    return res


def cmd_simulate(args) -> dict:
    started = _now()
    out = _out(args)
    partition = partition_from_args(args)
    parties = [p.strip() for p in args.parties.split(",") if p.strip()]
    options = OptionSet(tuple(parties) + (DEFAULT_ABSTAIN,), abstain=DEFAULT_ABSTAIN)
    R, C = len(partition), len(options)
    if args.beta:
        beta = np.array(json.loads(Path(args.beta).read_text(encoding="utf-8")), dtype=float)
    else:
        beta = np.random.default_rng(args.seed).dirichlet(np.full(C, 4.0), size=R)
    beta = cell_matrix(beta, partition.labels, options.options)
    sim = SimConfig(n_precincts=args.precincts, beta_true=beta, partition=partition,
                    options=options, electors_per_precinct=args.electors,
                    age_clustering=args.clustering, seed=args.seed)
    truth = simulate_election(sim)
    ids = [r.precinct_id for r in truth.records]
    written = [write_results(out / "results.csv", truth.records, options),
               write_padron(out / "padron.csv", ids, truth.ages, truth.age_counts)]
    if args.plebiscite_si:
        p_si = [float(v) for v in args.plebiscite_si.split(",")]
        if len(p_si) != C:
            raise ValidationError(f"--plebiscite-si needs {C} values (one per option incl. abstain)")
        si, _ = simulate_plebiscite(truth, p_si, seed=args.seed + 1)
        written.append(write_plebiscite(out / "plebiscite.csv", si))
    written.append(write_json(out / "truth.json", {
        "brackets": list(partition.labels_spec()),
        "options": list(options.options),
        "beta_true": beta.beta.tolist(),
        "realized_fractions": truth.true_fractions().tolist(),
        "true_tables": {pid: t.tolist() for pid, t in zip(ids, truth.true_tables)},
    }))
    config = {"precincts": args.precincts, "electors": args.electors,
              "clustering": args.clustering, "brackets": ",".join(partition.labels_spec()),
              "parties": parties, "beta": beta.beta.tolist(), "plebiscite_si": args.plebiscite_si}
    write_manifest(out, "simulate", [args.beta] if args.beta else [], config, args.seed,
                   started, written)
    return {"precincts": len(ids), "electors": int(truth.true_tables.sum()), "options": C}


def cmd_transitions(args) -> dict:
    started = _now()
    out = _out(args)
    r1, r2 = Dataset.read(args.round1), Dataset.read(args.round2)
    data = pair_rounds(list(r1.records), list(r2.records), r1.options, r2.options,
                       max_drift=args.max_drift)
    cfg, doc = _run_config(args, args.method)
    doc["max_drift"] = args.max_drift
    result = transition_matrix(data, args.method, cfg)
    written = report_emit(result, out, _formats(args))
    write_manifest(out, "transitions", [args.round1, args.round2], doc, args.seed, started, written)
    return {"paired": len(data.precinct_ids), "unpaired": len(data.unpaired),
            "max_drift": float(data.drift.max())}


def cmd_plebiscite(args) -> dict:
    started = _now()
    out = _out(args)
    ds = Dataset.read(args.dataset)
    si = read_plebiscite(args.plebiscite)
    cfg, doc = _run_config(args, args.method)
    result = plebiscite_cross(list(ds.records), si, ds.options, args.method, cfg)
    written = report_emit(result, out, _formats(args))
    write_manifest(out, "plebiscite", [args.dataset, args.plebiscite], doc, args.seed, started,
                   written)
    return {"paired": sum(r.precinct_id in si for r in ds.records)}


def cmd_validate(args) -> dict:
    started = _now()
    out = _out(args)
    ds = Dataset.read(args.dataset)
    cfg, doc = _run_config(args, args.method)
    doc["split"] = args.split
    rep = holdout_validate(list(ds.records), ds.partition, ds.options, args.method,
                           args.split, args.seed, cfg)
    written = report_emit(rep.beta, out, ("csv",))
    written.append(write_json(out / "validation.json", {
        "method": rep.method, "split_fraction": rep.split_fraction, "seed": rep.seed,
        "n_train": len(rep.train_ids), "n_test": len(rep.test_ids),
        "test_ids": list(rep.test_ids), "mae": rep.mae, "per_option_mae": rep.per_option_mae,
    }))
    write_manifest(out, "validate", [args.dataset], doc, args.seed, started, written)
    return {"mae": rep.mae, "n_test": len(rep.test_ids)}


def _add_common(p, method=False):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="single source of randomness (default 0)")
    if method:
        p.add_argument("--method", choices=METHODS, default="md")
        p.add_argument("--no-plots", action="store_true", help="skip SVG charts")
        d = McmcConfig()
        g = p.add_argument_group("MCMC (method md)")
        g.add_argument("--chains", type=int, default=d.chains)
        g.add_argument("--iterations", type=int, default=d.iterations)
        g.add_argument("--burn-in", type=int, default=d.burn_in)
        g.add_argument("--thinning", type=int, default=d.thinning)
        g.add_argument("--prior-shape", type=float, default=d.prior_shape)
        g.add_argument("--prior-rate", type=float, default=d.prior_rate)
        g.add_argument("--proposal-step", type=int, default=d.proposal_step)
        g.add_argument("--swaps", type=int, default=None,
                       help="swap proposals per precinct per sweep (default R*C)")
        g.add_argument("--explicit-theta", action="store_true",
                       help="sample theta explicitly instead of integrating it out")


def _add_brackets(p, default="18-29,30-44,45-59,60-74,75+"):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--brackets", default=default, help='e.g. "18-24,25-29,30+"')
    g.add_argument("--bracket-width", type=int, default=None, help="auto brackets of W years")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecoinfer", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="join results and padron into a validated dataset")
    p.add_argument("--results", required=True)
    p.add_argument("--padron", required=True)
    p.add_argument("--abstain-label", default=DEFAULT_ABSTAIN)
    _add_brackets(p)
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="estimate P(option | age bracket)")
    p.add_argument("--dataset", required=True)
    _add_common(p, method=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="write a synthetic election with known truth")
    p.add_argument("--precincts", type=int, default=100)
    p.add_argument("--electors", type=int, default=400)
    p.add_argument("--clustering", type=float, default=0.8)
    p.add_argument("--parties", default="A,B,C")
    p.add_argument("--beta", default=None, help="JSON file with the R x C true matrix")
    p.add_argument("--plebiscite-si", default=None,
                   help="comma list of P(si | option), abstain included; writes plebiscite.csv")
    _add_brackets(p)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("transitions", help="first round x second round transition matrix")
    p.add_argument("--round1", required=True)
    p.add_argument("--round2", required=True)
    p.add_argument("--max-drift", type=float, default=0.01)
    _add_common(p, method=True)
    p.set_defaults(func=cmd_transitions)

    p = sub.add_parser("plebiscite", help="first-round option x plebiscite si/no")
    p.add_argument("--dataset", required=True)
    p.add_argument("--plebiscite", required=True)
    _add_common(p, method=True)
    p.set_defaults(func=cmd_plebiscite)

    p = sub.add_parser("validate", help="holdout verification on test precincts")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", type=float, default=0.7)
    _add_common(p, method=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        summary = args.func(args)
    except EIError as exc:
        print(json.dumps(exc.to_record(), sort_keys=True), file=sys.stderr)
        return 1
    summary["seconds"] = round(time.perf_counter() - t0, 3)
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
