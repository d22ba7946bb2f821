"""Command-line front end.

Subcommands: trace (resolve one window and dump its collision log),
estimate (run a single estimator to JSON), verify (self-check suites),
sweep (phase-diagram grid), boundary (critical-point bracketing in p),
oracle (exact enumeration tables).

Exit codes: 0 ok, 1 usage or input error, 2 verification failure,
3 budget exhausted / no sign change.  BALLISTIC_SEED sets the default
master seed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from fractions import Fraction

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_BUDGET = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_seed() -> int:
    return int(os.environ.get("BALLISTIC_SEED", "20240917"))


def _build_parser() -> _Parser:
    top = _Parser(prog="ballistic", description=__doc__)
    sub = top.add_subparsers(dest="command")

    tr = sub.add_parser("trace", help="resolve one window and print its log")
    tr.add_argument("--particles", help='inline, e.g. "1 1 R; 2 2 B; 3 3 L"')
    tr.add_argument("--file", help="file with one 'index position velocity' per line")

    es = sub.add_parser("estimate", help="run one estimator, JSON to stdout")
    es.add_argument(
        "quantity",
        choices=[
            "q-left",
            "q-right",
            "alpha",
            "beta",
            "mean-z-left",
            "mean-z-right",
            "theta-bracket",
        ],
    )
    es.add_argument("--p", type=float, required=True)
    es.add_argument("--lam", "--lambda", dest="lam", type=float, required=True)
    es.add_argument("--spacing", default="exp")
    es.add_argument("--n", type=int, default=256)
    es.add_argument("--k", type=int, default=1, help="window size for mean-z")
    es.add_argument("--k-max", type=int, default=64, help="k grid cap for theta")
    es.add_argument("--windows", default="", help="comma list for beta")
    es.add_argument("--trials", type=int, default=20000)
    es.add_argument("--seed", type=int, default=None)

    ve = sub.add_parser("verify", help="run a named verification suite")
    ve.add_argument("suite", choices=["engine-oracle", "identities", "bounds"])
    ve.add_argument("--budget", choices=["quick", "full"], default="quick")
    ve.add_argument("--seed", type=int, default=None)

    sw = sub.add_parser("sweep", help="run a phase-diagram sweep from a config")
    sw.add_argument("config", help="JSON sweep configuration file")
    sw.add_argument("--workers", type=int, default=None)
    sw.add_argument("--out", default=None)

    bo = sub.add_parser("boundary", help="bracket the fixation onset in p")
    bo.add_argument("--lam", "--lambda", dest="lam", type=float, required=True)
    bo.add_argument("--spacing", default="exp")
    bo.add_argument("--p-lo", type=float, required=True)
    bo.add_argument("--p-hi", type=float, required=True)
    bo.add_argument("--trials", type=int, default=200000)
    bo.add_argument("--n", type=int, default=512)
    bo.add_argument("--k-max", type=int, default=256)
    bo.add_argument("--width", type=float, default=0.04)
    bo.add_argument("--max-probes", type=int, default=12)
    bo.add_argument("--seed", type=int, default=None)

    orc = sub.add_parser("oracle", help="exact enumeration table, JSON to stdout")
    orc.add_argument("--n", type=int, required=True)
    orc.add_argument("--p", required=True, help="rational, e.g. 1/4 or 0.25")
    orc.add_argument("--lam", "--lambda", dest="lam", required=True)
    orc.add_argument(
        "--stat",
        default="sigma",
        choices=["sigma", "zleft", "zright", "nleft", "counts"],
    )
    orc.add_argument("--poly", action="store_true", help="include polynomial form")
    return top


def _geometric_grid(k_max: int) -> list:
    ks = []
    k = 1
    while k <= k_max:
        ks.append(k)
        k *= 2
    return ks


def cmd_trace(args) -> int:
    from .engine import collision_log, resolve
    from .model import Configuration

    if args.particles:
        text = "\n".join(s.strip() for s in args.particles.split(";") if s.strip())
    elif args.file:
        try:
            with open(args.file) as fh:
                text = fh.read()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        print("error: give --particles or --file", file=sys.stderr)
        return EXIT_USAGE
    if not text.strip():
        print("error: empty configuration", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = Configuration.from_text(text)
        outcome = resolve(config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(collision_log(outcome))
    by_index = {p.index: p for p in config.particles}
    pattern = "".join(by_index[i].velocity.letter for i in outcome.survivors)
    ids = " ".join(
        f"{i}:{by_index[i].velocity.letter}" for i in outcome.survivors
    )
    print(f"survivors: {ids if ids else '(none)'}")
    print(f"pattern: {pattern if pattern else '(empty)'}")
    if outcome.first_left_visitor:
        sigma, tau = outcome.first_left_visitor
        print(f"first-left-visitor: index {sigma} at time {tau}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    from . import estimators as est
    from .model import Params, RandomnessContract
    from .sweep import spacing_from_name

    seed = args.seed if args.seed is not None else _default_seed()
    params = Params(args.p, args.lam)
    spec = spacing_from_name(args.spacing)
    rng = RandomnessContract(seed, 0, "")
    q = args.quantity
    if q in ("q-left", "q-right"):
        out = est.estimate_q(
            q.split("-")[1], spec, params, args.n, args.trials, rng
        ).to_jsonable()
    elif q == "alpha":
        out = est.estimate_alpha(spec, params, args.n, args.trials, rng).to_jsonable()
    elif q == "beta":
        windows = (
            [int(w) for w in args.windows.split(",") if w]
            if args.windows
            else sorted({max(8, args.n // 8), max(16, args.n // 4), args.n // 2, args.n})
        )
        out = est.estimate_beta(spec, params, windows, args.trials, rng).to_jsonable()
    elif q in ("mean-z-left", "mean-z-right"):
        out = est.estimate_mean_z(
            q.split("-")[2], spec, params, args.k, args.trials, rng
        ).to_jsonable()
    else:  # theta-bracket
        out = est.theta_bracket(
            spec, params, args.n, _geometric_grid(args.k_max), args.trials, rng
        ).to_jsonable()
    out["provenance"] = {
        "quantity": q,
        "p": args.p,
        "lambda": args.lam,
        "spacing": spec.label(),
        "seed": seed,
        "trials": args.trials,
    }
    json.dump(out, sys.stdout, indent=1, sort_keys=True)
    print()
    return EXIT_OK


def _report(name: str, ok: bool, detail: str = "") -> bool:
    tag = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"{tag}  {name}{suffix}")
    return ok


def _suite_engine_oracle(budget: str, seed: int) -> bool:
    from fractions import Fraction

    from . import kernel
    from .engine import mirror, resolve
    from .model import Configuration, Particle, Velocity
    from .oracle import naive_resolve

    kernel.warmup()
    lookup = {0: Velocity.BLOCKADE, 1: Velocity.RIGHT, -1: Velocity.LEFT}
    n_max = 8 if budget == "full" else 6
    ok_all = True

    mismatches = 0
    checked = 0
    for n in range(1, n_max + 1):
        for codes in itertools.product((-1, 0, 1), repeat=n):
            particles = tuple(
                Particle(i + 1, Fraction(i + 1), lookup[codes[i]]) for i in range(n)
            )
            cfg = Configuration(particles, "exact")
            a = resolve(cfg)
            b = naive_resolve(cfg)
            checked += 1
            same = a.survivors == b.survivors and sorted(
                (str(c.time), str(c.position), c.kind, c.indices)
                for c in a.collisions
            ) == sorted(
                (str(c.time), str(c.position), c.kind, c.indices)
                for c in b.collisions
            )
            alive, _, _, _ = kernel.resolve_arrays(
                np.arange(1.0, n + 1.0), np.array(codes, dtype=np.int8)
            )
            same = same and set(a.survivors) == {
                i + 1 for i in range(n) if alive[i]
            }
            if not same:
                mismatches += 1
    ok_all &= _report(
        f"engine == naive == kernel on all windows, n <= {n_max}",
        mismatches == 0,
        f"{checked} windows, {mismatches} mismatches",
    )

    rng = np.random.default_rng(seed)
    trials = 4000 if budget == "full" else 1000
    bad = 0
    for _ in range(trials):
        n = int(rng.integers(2, 50))
        pos = np.cumsum(rng.exponential(size=n))
        codes = rng.choice(
            np.array([-1, 0, 1], dtype=np.int8), size=n, p=[0.375, 0.25, 0.375]
        )
        particles = tuple(
            Particle(i + 1, float(pos[i]), lookup[int(codes[i])]) for i in range(n)
        )
        cfg = Configuration(particles, "float")
        a = resolve(cfg)
        alive, _, _, _ = kernel.resolve_arrays(pos, codes)
        if set(a.survivors) != {i + 1 for i in range(n) if alive[i]}:
            bad += 1
        m = resolve(mirror(cfg))
        if sorted(-i for i in m.survivors) != sorted(a.survivors):
            bad += 1
    ok_all &= _report(
        "random float windows: kernel/engine/mirror agree",
        bad == 0,
        f"{trials} windows",
    )
    return ok_all


def _suite_identities(budget: str, seed: int) -> bool:
    from . import kernel
    from .estimators import (
        check_dichotomy,
        check_geometric_visits,
        check_superadditivity,
        identity_report,
    )
    from .model import Params, RandomnessContract, SpacingSpec

    kernel.warmup()
    spec = SpacingSpec.exponential()
    # window sizes per point: residuals with a (q-1) factor are sensitive
    # to the truncation gap of a saturating visit probability, and the
    # gap at (0.30, 0.40) decays slowly, so that point gets a big window
    if budget == "full":
        settings = {
            (0.35, 0.5): (512, 100000),
            (0.30, 0.40): (4096, 20000),
            (0.40, 0.60): (1024, 50000),
        }
    else:
        settings = {
            (0.35, 0.5): (256, 20000),
            (0.30, 0.40): (4096, 4000),
            (0.40, 0.60): (1024, 10000),
        }
    ok_all = True
    for (p, lam), (n, trials) in settings.items():
        rng = RandomnessContract(seed, 0, f"verify/id/{p}/{lam}")
        rep = identity_report(spec, Params(p, lam), n, trials, rng)
        worst = max(r.sigmas for r in rep["residuals"])
        ok_all &= _report(
            f"identity residuals at (p={p}, lam={lam})",
            all(r.within(4) for r in rep["residuals"]),
            f"worst {worst:.2f} sigma",
        )
        dich = check_dichotomy(
            rep["q_right"],
            rep["q_left"],
            rep["alpha"],
            rep["beta_right"],
            rep["beta_left"],
            Params(p, lam),
        )
        ok_all &= _report(
            f"dichotomy at (p={p}, lam={lam})", dich["ok"], f"side {dich['side']}"
        )

    trials = 100000 if budget == "full" else 20000
    n = 512 if budget == "full" else 256
    rng = RandomnessContract(seed, 0, "verify/super")
    sup = check_superadditivity(
        spec, Params(0.3, 0.5), 1, 20, 50, trials, rng
    )
    ok_all &= _report(
        "window splitting inequality",
        sup["violations"] == 0,
        f"{sup['conditioned']} conditioned samples",
    )

    rng = RandomnessContract(seed, 0, "verify/geom")
    geo = check_geometric_visits(spec, Params(0.45, 0.5), n, trials, rng)
    ok_all &= _report(
        "geometric visit counts at (0.45, 0.5)",
        geo.get("p_value", 0.0) > 1e-3,
        f"p-value {geo.get('p_value'):.4g}",
    )
    return ok_all


def _suite_bounds(budget: str, seed: int) -> bool:
    from .model import AlphaTriple
    from .theory import (
        eval_bound_functions,
        eval_F,
        fixed_point_pc,
        solve_fluctuation_system,
    )

    rng = np.random.default_rng(seed)
    n_triples = 100000 if budget == "full" else 20000
    ok_all = True

    floor_bad = mirror_bad = 0
    for _ in range(n_triples):
        ah = rng.random()
        ar = ah + (1 - ah) * rng.random()
        al = 1 + ah - ar
        lam = 0.001 + 0.998 * rng.random()
        a = AlphaTriple(ar, al, ah)
        v = eval_F(0.5, lam, a)
        if v < 1 / (4 + ah) - 1e-12:
            floor_bad += 1
        if abs(v - eval_F(0.5, 1 - lam, AlphaTriple(al, ar, ah))) > 1e-12:
            mirror_bad += 1
    ok_all &= _report(
        "F floor and mirror identities",
        floor_bad == 0 and mirror_bad == 0,
        f"{n_triples} random triples",
    )

    order_bad = 0
    for i in range(999):
        lam = (i + 1) / 1000
        b = eval_bound_functions(lam)
        if not (
            b.elementary_lower
            <= b.f_star_1
            <= b.f_star_2
            and b.f_star_upper <= b.elementary_upper
        ):
            order_bad += 1
    ok_all &= _report("bound curve ordering over lambda", order_bad == 0)

    sym = AlphaTriple(Fraction(1, 2), Fraction(1, 2), Fraction(0))
    fp = fixed_point_pc(Fraction(1, 2), sym)
    ok_all &= _report(
        "symmetric fixed point at 1/4",
        abs(fp["p_fixed"] - 0.25) < 1e-9,
        f"{fp['p_fixed']:.12f}",
    )

    sym_f = AlphaTriple(0.5, 0.5, 0.0)
    onset_bad = 0
    for i in range(199):
        p = (i + 1) / 200
        sol = solve_fluctuation_system(p, 0.5, sym_f)
        should_be_feasible = p > sol.F_value + 1e-9
        if sol.feasible != should_be_feasible and not sol.marginal:
            onset_bad += 1
    ok_all &= _report("fluctuation-system onset matches F", onset_bad == 0)

    sol = solve_fluctuation_system(0.36, 0.5, sym_f)
    ok_all &= _report(
        "symmetric solution at p=0.36 is 2/3",
        sol.feasible
        and abs(sol.q_right - 2 / 3) < 1e-10
        and abs(sol.q_left - 2 / 3) < 1e-10,
    )
    return ok_all


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    suites = {
        "engine-oracle": _suite_engine_oracle,
        "identities": _suite_identities,
        "bounds": _suite_bounds,
    }
    ok = suites[args.suite](args.budget, seed)
    print(f"suite {args.suite}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_sweep(args) -> int:
    from .sweep import SweepConfig, run_sweep

    try:
        with open(args.config) as fh:
            config = SweepConfig.from_json(fh.read())
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.workers is not None:
        config.workers = args.workers
    if args.out is not None:
        config.out_dir = args.out

    def progress(p, lam):
        print(f"cell p={p} lambda={lam} done", file=sys.stderr)

    result = run_sweep(config, progress=progress)
    print(f"wrote {os.path.join(config.out_dir, 'sweep.csv')}")
    for v in result["violations"]:
        print(f"VIOLATION: {v}", file=sys.stderr)
    return EXIT_VERIFY if result["violations"] else EXIT_OK


def cmd_boundary(args) -> int:
    from .sweep import boundary_bracket, spacing_from_name

    seed = args.seed if args.seed is not None else _default_seed()
    try:
        spec = spacing_from_name(args.spacing)
        result = boundary_bracket(
            args.lam,
            spec,
            args.p_lo,
            args.p_hi,
            args.trials,
            args.n,
            _geometric_grid(args.k_max),
            seed,
            width=args.width,
            max_probes=args.max_probes,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    json.dump(result.to_jsonable(), sys.stdout, indent=1, sort_keys=True)
    print()
    if result.status == "no-sign-change":
        print("error: no sign change on the given range", file=sys.stderr)
        return EXIT_BUDGET
    if result.status == "budget-exhausted":
        print("error: probe budget exhausted before reaching width", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import enumerate_exact

    try:
        table = enumerate_exact(
            args.n,
            Fraction(args.p),
            Fraction(args.lam),
            statistic=args.stat,
            include_polynomial=args.poly,
        )
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    json.dump(table.to_jsonable(), sys.stdout, indent=1, sort_keys=True)
    print()
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    handlers = {
        "trace": cmd_trace,
        "estimate": cmd_estimate,
        "verify": cmd_verify,
        "sweep": cmd_sweep,
        "boundary": cmd_boundary,
        "oracle": cmd_oracle,
    }
    try:
        return handlers[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
