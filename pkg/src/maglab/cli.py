"""Command-line surface.

Subcommands: orbit | spectrum | xray | criteria | experiment
{linearization, conformal, averages}.  Exit codes: 0 success, 1 input
error, 2 numerical failure.  Report-producing commands write figures next
to the delimited output unless --no-figures is passed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys as _sys

from . import report as rp
from .config import (build_one_form, build_scalar, build_system, load_config,
                     load_words_file, resolve_words)
from .errors import InputError, MaglabError
from .experiments import (conformal_experiment, criteria_report,
                          linearization_experiment, oneform_average_decay,
                          random_reduced_words)
from .orbits import marked_spectrum, solve_class
from .xray import PotentialPair, TensorPair, d_mu, xray_I2

log = logging.getLogger("maglab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(_sys.stderr)
        _sys.stderr.write(f"maglab: error: {message}\n")
        _sys.exit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maglab", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, words=True):
        p.add_argument("--config", required=True, help="system config JSON")
        p.add_argument("--out", help="output path")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--jobs", type=int,
                       default=int(os.environ.get("MAGLAB_JOBS", "1")))
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
        if words:
            p.add_argument("--words", help="file with one word per line")

    p_orbit = sub.add_parser("orbit", help="solve one free homotopy class")
    p_orbit.add_argument("--word", required=True)
    common(p_orbit, words=False)

    p_spec = sub.add_parser("spectrum", help="marked action spectrum")
    common(p_spec)

    p_xray = sub.add_parser("xray", help="tensor X-ray transform over classes")
    p_xray.add_argument("--pair", required=True,
                        help="JSON file with a tensor or potential pair spec")
    common(p_xray)

    p_crit = sub.add_parser("criteria", help="injectivity criteria report")
    common(p_crit)

    p_exp = sub.add_parser("experiment", help="headline experiments")
    p_exp.add_argument("kind", choices=("linearization", "conformal", "averages"))
    common(p_exp)
    return parser


def _words_from(args, config, group, default_shortest=12):
    if getattr(args, "words", None):
        return load_words_file(args.words)
    spec = config.get("words")
    if spec is None:
        spec = {"shortest": default_shortest}
    return resolve_words(spec, group)


def _emit(args, payload, csv_header=None, csv_rows=None, default_name="report"):
    out = args.out
    if out is None:
        _sys.stdout.write(rp.dumps_json(payload))
        return None
    if args.format == "csv" and csv_header is not None:
        rp.write_csv(out, csv_header, csv_rows)
    else:
        rp.write_json(out, payload)
    log.info("wrote %s", out)
    return out


def _figure_path(out, suffix):
    if out is None:
        return None
    return os.path.splitext(out)[0] + suffix


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except InputError as exc:
        log.error("input error: %s", exc)
        return 1
    except MaglabError as exc:
        log.error("numerical failure: %s", exc)
        return 2


def _run(args) -> int:
    config = load_config(args.config)
    system = build_system(config)
    jobs = max(1, args.jobs)

    if args.command == "orbit":
        orbit = solve_class(system, args.word)
        payload = {
            "system": system.system_id, "word": orbit.word,
            "action": orbit.action, "length": orbit.length,
            "period": orbit.period, "alpha_integral": orbit.alpha_integral,
            "el_residual": orbit.el_residual,
            "closure_residual": orbit.closure_residual,
            "refined": orbit.refined,
            "initial": {"z": [orbit.initial.z.real, orbit.initial.z.imag],
                        "v": [orbit.initial.v.real, orbit.initial.v.imag]},
        }
        if orbit.failure:
            payload["error"] = orbit.failure
        _emit(args, payload)
        return 0

    if args.command == "spectrum":
        words = _words_from(args, config, system.group, default_shortest=20)
        spectrum, _ = marked_spectrum(system, words, jobs=jobs)
        if args.out:
            rp.write_spectrum(args.out, spectrum)
            if not args.no_figures:
                rp.figure_spectrum(spectrum, _figure_path(args.out, ".png"))
        else:
            _sys.stdout.write(rp.dumps_json(
                {"system": spectrum.system_id, "entries": spectrum.entries}))
        return 0

    if args.command == "xray":
        pair_spec = load_config(args.pair)
        words = _words_from(args, config, system.group, default_shortest=10)
        _, orbits = marked_spectrum(system, words, jobs=jobs, with_crit_dp=False)
        if "xi" in pair_spec or "phi" in pair_spec:
            pp = PotentialPair(
                xi=build_one_form(pair_spec.get("xi"), system.group),
                phi=build_scalar(pair_spec.get("phi"), system.group))
            pair = d_mu(system, pp)
            kind = "potential"
        else:
            from .fields import OneFormField, SymTensorField
            q = build_one_form(pair_spec.get("q"), system.group)
            p = SymTensorField.zero()
            if pair_spec.get("p", {}).get("metric_multiple") is not None:
                scal = build_scalar(pair_spec["p"]["metric_multiple"], system.group)
                p = SymTensorField.metric_multiple(system.metric, scal)
            pair = TensorPair(p, q)
            kind = "tensor"
        rows = []
        for orbit in orbits:
            if not orbit.refined:
                rows.append({"word": orbit.word, "value": None,
                             "error": orbit.failure})
                continue
            rows.append({"word": orbit.word,
                         "value": xray_I2(system, pair, orbit)})
        payload = {"system": system.system_id, "kind": kind, "rows": rows}
        _emit(args, payload, csv_header=["word", "value"],
              csv_rows=[[r["word"], r.get("value")] for r in rows])
        return 0

    if args.command == "criteria":
        words = _words_from(args, config, system.group, default_shortest=10)
        rep = criteria_report(system, words, jobs=jobs)
        _emit(args, rep,
              csv_header=["word", "period", "crit_dp", "pass"],
              csv_rows=[[r["word"], r["period"], r["crit_dp"], r["pass"]]
                        for r in rep["orbit_rows"]])
        if args.out and not args.no_figures:
            rp.figure_criteria(rep, _figure_path(args.out, ".png"))
        return 0

    if args.command == "experiment":
        exp_cfg = config.get("experiment", {})
        seed = int(config.get("seed", 0))
        if args.kind == "linearization":
            cfg = exp_cfg.get("linearization", {})
            f_dir = build_scalar(cfg.get("conformal"), system.group)
            beta = build_one_form(cfg.get("one_form"), system.group)
            if f_dir.is_zero() and beta.is_zero():
                raise InputError("linearization experiment needs a direction "
                                 "(experiment.linearization.conformal/one_form)")
            eps = cfg.get("epsilons", [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
            words = resolve_words(cfg.get("words", {"shortest": 8}), system.group)
            rep = linearization_experiment(system, f_dir, beta, eps, words,
                                           jobs=jobs)
            _emit(args, rep,
                  csv_header=["epsilon", "remainder"],
                  csv_rows=[[r["epsilon"], r["remainder"]] for r in rep["rows"]])
            print(f"linearization slope: {rep['slope']:.4f}")
            for row in rep["rows"]:
                print(f"  eps={row['epsilon']:.4g}  remainder={row['remainder']:.6g}")
            if args.out and not args.no_figures:
                rp.figure_linearization(rep, _figure_path(args.out, ".png"))
            return 0
        if args.kind == "conformal":
            cfg = exp_cfg.get("conformal", {})
            f = build_scalar(cfg.get("f"), system.group)
            if f.is_zero():
                raise InputError("conformal experiment needs a nonzero factor "
                                 "(experiment.conformal.f)")
            words = resolve_words(cfg.get("words", {"shortest": 20}), system.group)
            lengths = cfg.get("birkhoff_lengths", [1, 2, 3, 4, 6])
            bwords = random_reduced_words(lengths, seed)
            rep = conformal_experiment(system, f, words, bwords, jobs=jobs)
            _emit(args, rep,
                  csv_header=["word", "gap"],
                  csv_rows=[[w, g] for w, g in rep["per_word_gap"].items()])
            print(f"marked-action gap: {rep['gap']:.6g}")
            print(f"chain slacks: energy {rep['chains']['energy']['slack']:.6g}, "
                  f"length {rep['chains']['length']['slack']:.6g}")
            if args.out and not args.no_figures:
                rp.figure_conformal(rep, _figure_path(args.out, ".png"))
            return 0
        if args.kind == "averages":
            cfg = exp_cfg.get("averages", {})
            lengths = cfg.get("lengths", list(range(1, 13)))
            per = int(cfg.get("per_length", 1))
            words = random_reduced_words(lengths, seed, per_length=per)
            rep = oneform_average_decay(system, words, jobs=jobs)
            _emit(args, rep,
                  csv_header=["word", "length", "average", "refined"],
                  csv_rows=[[r["word"], r["length"], r["average"], r["refined"]]
                            for r in rep["rows"]])
            print(f"trend decreasing: {rep['trend_decreasing']}")
            if args.out and not args.no_figures:
                rp.figure_averages(rep, _figure_path(args.out, ".png"))
            return 0

    raise InputError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    raise SystemExit(main())
