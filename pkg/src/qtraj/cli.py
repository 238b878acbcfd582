"""Command line interface: ``qtraj <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 an assumption check refused the
run, 4 numerical failure.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import channel, kraus, purification
from .exceptions import InvalidInputError, QTrajError
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .io import to_jsonable, write_csv, write_json
from .projective import distance
from .trajectory import gammas_from_logs, init_trajectory, simulate_ensemble

log = logging.getLogger("qtraj")


def _params(pairs):
    out = {}
    for p in pairs or []:
        key, sep, val = p.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got {p!r}")
        out[key] = float(val)
    return out


def _model(args, **kw):
    return kraus.resolve_model(args.model, _params(args.param), **kw)


def _emit(obj, path=None):
    if path:
        write_json(path, obj)
    else:
        print(json.dumps(to_jsonable(obj), indent=2, sort_keys=True))


def parse_vector(text, k):
    """``"e2"`` or comma-separated complex entries such as ``"1,1j"``."""
    text = text.strip()
    if text.startswith("e") and text[1:].isdigit():
        i = int(text[1:])
        if not 1 <= i <= k:
            raise InvalidInputError(f"basis ray {text} out of range for C^{k}")
        return np.eye(k, dtype=complex)[i - 1]
    try:
        x = np.array([complex(s.strip().replace("i", "j")) for s in text.split(",")])
    except ValueError:
        raise InvalidInputError(f"cannot parse vector {text!r}") from None
    return x


def cmd_validate(args):
    m = _model(args, allow_invalid=True)
    rep = kraus.validate(m, args.tol)
    _emit({"name": m.name, "dim": m.dim, "n_elements": m.n_elements, "defect": rep.defect,
           "tol": rep.tol, "valid": rep.passed})
    return 0 if rep.passed else 2


def cmd_analyze(args):
    m = _model(args)
    rep = channel.analyze(m)
    _emit(rep.to_dict(), args.json)
    if args.json:
        print(f"m={rep.period_m} lambda={rep.gap_lambda:.6g} E_is_full={rep.E_is_full}")
    return 0


def cmd_check(args):
    m = _model(args)
    out = {}
    erg = channel.check_phi_erg(m)
    out["phi_erg"] = {"holds": erg.holds, "d": erg.d, "E_is_full": erg.E_is_full,
                      "extremal_supports": [s for s in erg.extremal_supports]}
    words = purification.check_pur_words(m, args.max_word_len)
    out["pur_words"] = words.to_dict()
    if args.mc_steps:
        mc = purification.check_pur_montecarlo(m, args.mc_steps, args.mc_traj, args.seed)
        out["pur_montecarlo"] = mc.to_dict()
        if args.decay_csv:
            mc.write_decay_csv(args.decay_csv)
    _emit(out, args.json)
    return 0


def _dump_trajectory(m, start, seed, n_steps, path):
    s = init_trajectory(m, start, seed=seed, index=0)
    k = m.dim
    header = ["n", "outcome"] + [h for j in range(k) for h in (f"x_re_{j}", f"x_im_{j}")]
    header += ["log_norm", "lambda2_of_M", "d_xy"] + [f"gamma_partial_{p}" for p in range(1, k + 1)]

    def row(outcome):
        x = s.point.vector
        M = s.martingale()
        lam = np.linalg.eigvalsh(M)
        lam2 = float(lam[-2]) if k > 1 else 0.0
        _, y = s.mle_estimators()
        g = gammas_from_logs(s.lyap_logs, s.n)
        with np.errstate(invalid="ignore"):
            partial = np.cumsum(g)
        vals = [s.n, outcome]
        for c in x:
            vals += [c.real, c.imag]
        return vals + [s.log_norm, lam2, distance(x, y)] + list(partial)

    rows = [row(-1)]
    for _ in range(n_steps):
        i = s.step()
        rows.append(row(i))
    write_csv(path, header, rows)


def cmd_simulate(args):
    m = _model(args)
    if args.pure is not None:
        start = parse_vector(args.pure, m.dim)
    elif args.density:
        start = np.eye(m.dim) / m.dim
    else:
        start = "uniform"
    res = simulate_ensemble(
        m, start, args.traj, args.steps, seed=args.seed,
        quantities=["state", "log_norm", "lambda2", "lyap_logs"], n_jobs=args.jobs,
    )
    states = res["state"][0]
    if res.mode == "pure":
        rho = np.einsum("na,nb->ab", states, states.conj()) / len(states)
    else:
        rho = states.mean(axis=0)
    g = gammas_from_logs(res["lyap_logs"][0], args.steps)
    summary = {
        "mode": res.mode,
        "n_traj": args.traj,
        "n_steps": args.steps,
        "seed": args.seed,
        "mean_state": rho,
        "median_lambda2": float(np.median(res["lambda2"][0])),
        "mean_log_norm_rate": float(np.mean(res["log_norm"][0]) / args.steps),
        "gamma_hat_mean": g.mean(axis=0),
    }
    _emit(summary, args.json)
    if args.dump:
        _dump_trajectory(m, start, args.seed, args.steps, args.dump)
    return 0


def cmd_experiment(args):
    cfg = ExperimentConfig.from_json(args.config)
    if args.out:
        cfg.output_dir = args.out
    if args.force:
        cfg.force = True
    if args.jobs:
        cfg.n_jobs = args.jobs
    res = run_experiment(args.name, cfg)
    summary = res.to_dict() if hasattr(res, "to_dict") else {}
    print(json.dumps(to_jsonable(summary), indent=2, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="qtraj", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def model_cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("model", help="builtin name, 'name:key=value,...' or model JSON file")
        sp.add_argument("--param", action="append", metavar="KEY=VALUE", help="builtin model parameter")
        return sp

    sp = model_cmd("validate", "check the stochasticity condition")
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_validate)

    sp = model_cmd("analyze", "spectrum, period, gap and invariant state of the channel")
    sp.add_argument("--json", metavar="OUT")
    sp.set_defaults(func=cmd_analyze)

    sp = model_cmd("check-assumptions", "purification and unique-invariant-state checks")
    sp.add_argument("--max-word-len", type=int, default=4)
    sp.add_argument("--mc-steps", type=int, default=0)
    sp.add_argument("--mc-traj", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--decay-csv", metavar="OUT")
    sp.add_argument("--json", metavar="OUT")
    sp.set_defaults(func=cmd_check)

    sp = model_cmd("simulate", "run an ensemble of trajectories")
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--traj", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--density", action="store_true", help="start every trajectory from Id/k")
    mode.add_argument("--pure", metavar="X", help="start ray, e.g. e1 or '1,1j'")
    sp.add_argument("--dump", metavar="CSV", help="write trajectory 0 step by step")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--json", metavar="OUT")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("experiment", help="run an experiment from a JSON config")
    sp.add_argument("name", choices=EXPERIMENTS)
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="output directory (overrides output_dir)")
    sp.add_argument("--force", action="store_true", help="run even if an assumption check fails")
    sp.add_argument("--jobs", type=int)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except QTrajError as exc:
        print(f"qtraj: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except argparse.ArgumentTypeError as exc:
        print(f"qtraj: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
