"""Phase-diagram sweeps and critical-point bracketing.

A sweep evaluates one PhasePoint per (p, lambda) grid cell: the theta
bracket, visit probabilities, visitor-ordering and first-mover survival
estimates, all closed-form bounds, and a conservative classification.
Cells are independent (their random streams are keyed by the cell
coordinates), so sweeps parallelize over a process pool and finished
cells persist as one JSON file each; re-running a sweep skips cells that
are already on disk and reproduces byte-identical output for the same
configuration regardless of worker count.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .estimators import (
    BetaPair,
    Estimate,
    ThetaBracket,
    estimate_alpha,
    estimate_beta,
    theta_bracket,
)
from .model import AlphaTriple, Params, RandomnessContract, SpacingSpec
from .theory import BoundSet, eval_bound_functions, eval_F

CSV_COLUMNS = [
    "p",
    "lambda",
    "theta_lower",
    "theta_lower_se",
    "theta_upper",
    "theta_upper_se",
    "q_left",
    "q_right",
    "alpha_right",
    "alpha_hat",
    "f1",
    "f2",
    "fstar",
    "F_of_p",
    "classification",
]

FIXATION = "Fixation-detected"
FLUCTUATION = "Fluctuation-consistent"
UNDECIDED = "Undecided"


def spacing_from_name(name: str) -> SpacingSpec:
    """Parse a spacing law name: exp | unit | uniform:lo:hi | rational:g:w,..."""
    if name in ("exp", "exponential"):
        return SpacingSpec.exponential()
    if name in ("unit", "deterministic"):
        return SpacingSpec.unit()
    if name.startswith("uniform:"):
        _, lo, hi = name.split(":")
        return SpacingSpec.uniform(float(lo), float(hi))
    if name.startswith("rational:"):
        atoms = []
        for piece in name.split(":", 1)[1].split(","):
            gap, weight = piece.split("=")
            atoms.append((gap, weight))
        return SpacingSpec.rational(atoms)
    raise ValueError(f"unknown spacing {name!r}")


@dataclass
class SweepConfig:
    """Declarative sweep description; serializes to/from JSON."""

    p_values: list
    lam_values: list
    spacing: str
    trials: int
    n: int
    k_grid: list
    seed: int
    workers: int = 1
    out_dir: str = "sweep-out"
    upper_threshold: float = 0.05

    def __post_init__(self):
        if not self.p_values or not self.lam_values:
            raise ValueError("empty grid")
        for v in list(self.p_values) + list(self.lam_values):
            if not (0 < v < 1):
                raise ValueError(f"grid value {v} outside (0,1)")
        if self.trials < 100:
            raise ValueError("need at least 100 trials per cell")
        if not self.k_grid:
            raise ValueError("empty k grid")
        spacing_from_name(self.spacing)

    @property
    def spacing_spec(self) -> SpacingSpec:
        return spacing_from_name(self.spacing)

    def to_json(self) -> str:
        return json.dumps(
            {
                "p_values": list(self.p_values),
                "lam_values": list(self.lam_values),
                "spacing": self.spacing,
                "trials": self.trials,
                "n": self.n,
                "k_grid": list(self.k_grid),
                "seed": self.seed,
                "workers": self.workers,
                "out_dir": self.out_dir,
                "upper_threshold": self.upper_threshold,
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "SweepConfig":
        raw = json.loads(text)
        return SweepConfig(**raw)


@dataclass
class PhasePoint:
    """Everything measured and derived at one (p, lambda) cell."""

    p: float
    lam: float
    bracket: ThetaBracket
    alpha: AlphaTriple
    alpha_se: tuple
    beta: BetaPair
    bounds: BoundSet
    classification: str

    def csv_row(self) -> list:
        b = self.bracket
        return [
            repr(self.p),
            repr(self.lam),
            repr(b.lower.value),
            repr(b.lower.stderr),
            repr(b.upper.value),
            repr(b.upper.stderr),
            repr(b.q_left.value),
            repr(b.q_right.value),
            repr(self.alpha.alpha_right),
            repr(self.alpha.alpha_hat),
            repr(float(self.bounds.f_star_1)),
            repr(float(self.bounds.f_star_2)),
            repr(float(self.bounds.f_star_upper)),
            repr(float(self.bounds.f_of_p)),
            self.classification,
        ]

    def to_jsonable(self) -> dict:
        return {
            "p": self.p,
            "lambda": self.lam,
            "bracket": self.bracket.to_jsonable(),
            "alpha": {
                "alpha_right": self.alpha.alpha_right,
                "alpha_left": self.alpha.alpha_left,
                "alpha_hat": self.alpha.alpha_hat,
                "stderr": list(self.alpha_se),
            },
            "beta": self.beta.to_jsonable(),
            "bounds": self.bounds.to_jsonable(),
            "classification": self.classification,
        }


def classify(
    bracket: ThetaBracket, upper_threshold: float
) -> str:
    """Conservative cell classification.

    Fixation needs the lower bound three standard errors above zero;
    fluctuation-consistency needs a null lower bound and a small upper
    bound.  Everything else stays undecided.
    """
    if bracket.detected:
        return FIXATION
    if bracket.lower.value == 0 and bracket.upper.value < upper_threshold:
        return FLUCTUATION
    return UNDECIDED


def check_phase_point(point: PhasePoint, atomless: bool) -> list:
    """Machine check of the classification sanity constraints."""
    violations = []
    floor = point.bounds.f_star_2 if atomless else point.bounds.f_star_1
    if point.classification == FIXATION and point.p <= float(floor):
        violations.append(
            f"fixation detected at p={point.p} <= proven fluctuation bound {float(floor)}"
        )
    if point.classification == FLUCTUATION and point.p > float(
        point.bounds.f_star_upper
    ):
        violations.append(
            f"fluctuation-consistent at p={point.p} > proven fixation bound "
            f"{float(point.bounds.f_star_upper)}"
        )
    if (
        point.bracket.lower.value
        - 3 * point.bracket.lower.stderr
        > point.bracket.upper.value + 3 * point.bracket.upper.stderr
    ):
        violations.append("lower bound exceeds upper bound beyond 3 sigma")
    return violations


def compute_phase_point(
    p: float,
    lam: float,
    spec: SpacingSpec,
    trials: int,
    n: int,
    k_grid: Sequence[int],
    seed: int,
    upper_threshold: float = 0.05,
) -> PhasePoint:
    """Estimate one grid cell; streams are keyed by the cell coordinates."""
    params = Params(p, lam)
    rng = RandomnessContract(seed, 0, f"cell/p{p:.8f}/l{lam:.8f}")
    bracket = theta_bracket(spec, params, n, k_grid, trials, rng)
    alpha = estimate_alpha(spec, params, n, trials, rng)
    schedule = sorted({max(8, n // 8), max(16, n // 4), max(32, n // 2), n})
    beta = estimate_beta(spec, params, schedule, trials, rng)
    bounds = eval_bound_functions(lam, alpha.triple)
    return PhasePoint(
        p=p,
        lam=lam,
        bracket=bracket,
        alpha=alpha.triple,
        alpha_se=(alpha.se_right, alpha.se_left, alpha.se_hat),
        beta=beta,
        bounds=bounds,
        classification=classify(bracket, upper_threshold),
    )


def _cell_path(out_dir: str, p: float, lam: float) -> str:
    return os.path.join(out_dir, "cells", f"p{p:.8f}_l{lam:.8f}.json")


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _cell_worker(args):
    (p, lam, spacing, trials, n, k_grid, seed, upper_threshold) = args
    point = compute_phase_point(
        p, lam, spacing_from_name(spacing), trials, n, k_grid, seed, upper_threshold
    )
    return p, lam, point.to_jsonable()


def run_sweep(config: SweepConfig, progress=None) -> dict:
    """Run (or resume) a sweep; returns {'points': [...], 'violations': [...]}.

    Writes one JSON per cell under out_dir/cells/, then assembles
    sweep.csv and sweep.json in grid order.  Already-present cells are
    not recomputed.
    """
    os.makedirs(os.path.join(config.out_dir, "cells"), exist_ok=True)
    grid = [(p, lam) for p in config.p_values for lam in config.lam_values]
    pending = [
        (p, lam)
        for (p, lam) in grid
        if not os.path.exists(_cell_path(config.out_dir, p, lam))
    ]
    jobs = [
        (
            p,
            lam,
            config.spacing,
            config.trials,
            config.n,
            list(config.k_grid),
            config.seed,
            config.upper_threshold,
        )
        for (p, lam) in pending
    ]

    if jobs:
        if config.workers > 1:
            import multiprocessing as mp

            with mp.get_context("spawn").Pool(config.workers) as pool:
                for p, lam, payload in pool.imap_unordered(_cell_worker, jobs):
                    _atomic_write(
                        _cell_path(config.out_dir, p, lam),
                        json.dumps(payload, indent=1, sort_keys=True),
                    )
                    if progress:
                        progress(p, lam)
        else:
            for job in jobs:
                p, lam, payload = _cell_worker(job)
                _atomic_write(
                    _cell_path(config.out_dir, p, lam),
                    json.dumps(payload, indent=1, sort_keys=True),
                )
                if progress:
                    progress(p, lam)

    atomless = config.spacing_spec.atomless
    rows = []
    points = []
    violations = []
    for p, lam in grid:
        with open(_cell_path(config.out_dir, p, lam)) as fh:
            payload = json.load(fh)
        points.append(payload)
        row = _csv_row_from_payload(payload)
        rows.append(row)
        violations.extend(_check_payload(payload, atomless))

    csv_text = ",".join(CSV_COLUMNS) + "\n"
    csv_text += "\n".join(",".join(r) for r in rows) + "\n"
    _atomic_write(os.path.join(config.out_dir, "sweep.csv"), csv_text)
    _atomic_write(
        os.path.join(config.out_dir, "sweep.json"),
        json.dumps(
            {"config": json.loads(config.to_json()), "points": points},
            indent=1,
            sort_keys=True,
        ),
    )
    return {"points": points, "violations": violations, "csv": csv_text}


def _csv_row_from_payload(payload: dict) -> list:
    b = payload["bracket"]
    return [
        repr(payload["p"]),
        repr(payload["lambda"]),
        repr(b["lower"]["value"]),
        repr(b["lower"]["stderr"]),
        repr(b["upper"]["value"]),
        repr(b["upper"]["stderr"]),
        repr(b["q_left"]["value"]),
        repr(b["q_right"]["value"]),
        repr(payload["alpha"]["alpha_right"]),
        repr(payload["alpha"]["alpha_hat"]),
        repr(payload["bounds"]["f_star_1"]),
        repr(payload["bounds"]["f_star_2"]),
        repr(payload["bounds"]["f_star_upper"]),
        repr(payload["bounds"]["F"]),
        payload["classification"],
    ]


def _check_payload(payload: dict, atomless: bool) -> list:
    violations = []
    p = payload["p"]
    floor = payload["bounds"]["f_star_2" if atomless else "f_star_1"]
    ceiling = payload["bounds"]["f_star_upper"]
    cls = payload["classification"]
    b = payload["bracket"]
    if cls == FIXATION and p <= floor:
        violations.append(f"cell p={p} lam={payload['lambda']}: fixation below floor")
    if cls == FLUCTUATION and p > ceiling:
        violations.append(
            f"cell p={p} lam={payload['lambda']}: fluctuation above ceiling"
        )
    lo = b["lower"]["value"] - 3 * b["lower"]["stderr"]
    hi = b["upper"]["value"] + 3 * b["upper"]["stderr"]
    if lo > hi:
        violations.append(
            f"cell p={p} lam={payload['lambda']}: bracket inverted beyond 3 sigma"
        )
    return violations


@dataclass
class BoundaryResult:
    lam: float
    spacing: str
    bracket: tuple
    status: str  # ok | no-sign-change | budget-exhausted
    probes: list = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {
            "lambda": self.lam,
            "spacing": self.spacing,
            "bracket": list(self.bracket),
            "status": self.status,
            "probes": self.probes,
        }


def boundary_bracket(
    lam: float,
    spec: SpacingSpec,
    p_lo: float,
    p_hi: float,
    trials: int,
    n: int,
    k_grid: Sequence[int],
    seed: int,
    width: float = 0.04,
    max_probes: int = 12,
) -> BoundaryResult:
    """Bisect the fixation-detection transition in p at fixed lambda.

    A probe is "detected" when the finite-window survival criterion puts
    the theta lower bound three standard errors above zero.  The returned
    bracket [lo, hi] has hi detected and lo not; bisection stops at the
    width target.  Probes at equal p reuse identical random streams, so
    the whole search is reproducible from the seed.
    """
    if not (0 < p_lo < p_hi < 1):
        raise ValueError("need 0 < p_lo < p_hi < 1")
    probes = []

    def probe(p: float):
        params = Params(p, lam)
        rng = RandomnessContract(seed, 0, f"boundary/p{p:.10f}/l{lam:.8f}")
        bracket = theta_bracket(spec, params, n, k_grid, trials, rng)
        probes.append(
            {
                "p": p,
                "lower": bracket.lower.value,
                "lower_se": bracket.lower.stderr,
                "upper": bracket.upper.value,
                "detected": bracket.detected,
            }
        )
        return bracket.detected

    budget = max_probes
    lo, hi = p_lo, p_hi
    if probe(lo):
        return BoundaryResult(
            lam, spec.label(), (lo, hi), "no-sign-change", probes
        )
    budget -= 1
    if not probe(hi):
        return BoundaryResult(
            lam, spec.label(), (lo, hi), "no-sign-change", probes
        )
    budget -= 1
    while hi - lo > width:
        if budget <= 0:
            return BoundaryResult(
                lam, spec.label(), (lo, hi), "budget-exhausted", probes
            )
        mid = (lo + hi) / 2
        if probe(mid):
            hi = mid
        else:
            lo = mid
        budget -= 1
    return BoundaryResult(lam, spec.label(), (lo, hi), "ok", probes)
