"""Monte Carlo estimators for visit, ordering and survival probabilities.

Every estimator draws windows through per-trial counter-based streams, so
results are reproducible from (master seed, trial count, labels) alone and
independent of chunking or scheduling.  Right-side quantities (windows on
the negative half-line) are computed by reflecting the sampled window
through the origin, which swaps mover classes and reduces everything to
left-side statistics of the reflected window.

Window truncation makes visit probabilities lower bounds: a visitor seen
in the first n particles is a visitor outright, and enlarging the window
can only reveal more (the fate of a left mover is settled by lower-indexed
particles).  Estimates carry their bound direction explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import kernel
from .engine import mirror as mirror_config
from .engine import resolve
from .model import (
    AlphaTriple,
    Configuration,
    Params,
    RandomnessContract,
    SpacingSpec,
    StreamBank,
    sample_half_configuration,
    velocities_from_uniforms,
)

CHUNK = 4096

LOWER = "LowerBound"
UPPER = "UpperBound"
POINT = "PointEstimate"


@dataclass
class Estimate:
    """A Monte Carlo estimate with provenance and bound direction."""

    value: float
    stderr: float
    trials: int
    truncation: dict
    bound_direction: str
    anomalies: int = 0
    meta: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        out = {
            "value": self.value,
            "stderr": self.stderr,
            "trials": self.trials,
            "truncation": self.truncation,
            "bound_direction": self.bound_direction,
        }
        if self.anomalies:
            out["anomalies"] = self.anomalies
        if self.meta:
            out["meta"] = self.meta
        return out


@dataclass
class AlphaEstimate:
    """Estimated first-visitor ordering probabilities with diagnostics."""

    triple: AlphaTriple
    se_right: float
    se_left: float
    se_hat: float
    kept: int
    trials: int
    truncation: dict
    degenerate: bool
    tie_count: int
    anomalies: int = 0

    @property
    def alpha_right(self):
        return self.triple.alpha_right

    @property
    def alpha_left(self):
        return self.triple.alpha_left

    @property
    def alpha_hat(self):
        return self.triple.alpha_hat

    def to_jsonable(self) -> dict:
        return {
            "alpha_right": self.alpha_right,
            "alpha_left": self.alpha_left,
            "alpha_hat": self.alpha_hat,
            "se_right": self.se_right,
            "se_left": self.se_left,
            "se_hat": self.se_hat,
            "kept": self.kept,
            "trials": self.trials,
            "truncation": self.truncation,
            "degenerate": self.degenerate,
            "tie_count": self.tie_count,
            "anomalies": self.anomalies,
        }


@dataclass
class QPair:
    q_right: Estimate
    q_left: Estimate


@dataclass
class BetaPair:
    """First-mover survival frequencies over a schedule of window sizes.

    These are not monotone in the window size (a later window can both
    kill and spare the first mover relative to a shorter one), so the
    whole sequence is reported together with a stability diagnostic: the
    largest change across the last two window steps.
    """

    windows: list
    beta_right: list  # Estimates per window
    beta_left: list
    stability_right: float
    stability_left: float

    def to_jsonable(self) -> dict:
        return {
            "windows": list(self.windows),
            "beta_right": [e.to_jsonable() for e in self.beta_right],
            "beta_left": [e.to_jsonable() for e in self.beta_left],
            "stability_right": self.stability_right,
            "stability_left": self.stability_left,
        }


@dataclass
class ThetaBracket:
    """Monotone bracket for the blockade fixation probability."""

    lower: Estimate
    upper: Estimate
    q_left: Estimate
    q_right: Estimate
    theta0_left: Estimate
    theta0_right: Estimate
    theta_left: Estimate
    theta_right: Estimate
    k_table: dict
    detected: bool

    def to_jsonable(self) -> dict:
        return {
            "lower": self.lower.to_jsonable(),
            "upper": self.upper.to_jsonable(),
            "q_left": self.q_left.to_jsonable(),
            "q_right": self.q_right.to_jsonable(),
            "theta0_left": self.theta0_left.to_jsonable(),
            "theta0_right": self.theta0_right.to_jsonable(),
            "theta_left": self.theta_left.to_jsonable(),
            "theta_right": self.theta_right.to_jsonable(),
            "k_table": {str(k): v for k, v in self.k_table.items()},
            "detected": self.detected,
        }


def _label(rng: RandomnessContract, *parts: str) -> str:
    base = rng.stream_label
    tail = "/".join(parts)
    return f"{base}/{tail}" if base else tail


def _chunks(trials: int, chunk: int = CHUNK):
    t0 = 0
    while t0 < trials:
        yield t0, min(chunk, trials - t0)
        t0 += min(chunk, trials - t0)


def _binomial_se(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1 - p_hat), 0.0) / n)


class WindowSampler:
    """Chunked half-line window sampler feeding the compiled kernel.

    ``mirrored=True`` stands for windows on the negative half-line: the
    sampled window is reflected through the origin (velocities negated,
    positions kept positive ascending), so the reflected window's left
    movers are the original window's right movers.

    Atomless laws and unit spacing run through the float kernel (unit
    positions and half-integer collision coordinates are exact in binary).
    Rational atomic spacings fall back to the exact rational engine.
    """

    def __init__(
        self,
        spec: SpacingSpec,
        params: Params,
        seed: int,
        label: str,
        mirrored: bool = False,
    ):
        self.spec = spec
        self.params = params
        self.seed = seed
        self.label = label
        self.mirrored = mirrored
        self.fast = spec.variant in ("exponential", "uniform", "unit")
        self.bank = StreamBank(seed, label)

    # -- fast path -------------------------------------------------------

    def windows(self, trial0: int, count: int, n: int):
        """(positions, velocity codes) matrices for the kernel."""
        if not self.fast:
            raise NotImplementedError("raw windows need an atomless or unit law")
        u = np.empty((count, 2 * n))
        for i in range(count):
            u[i] = self.bank.uniforms(trial0 + i, 2 * n)
        ug = u[:, 0::2]
        uv = u[:, 1::2]
        if self.spec.variant == "exponential":
            pos = np.cumsum(np.maximum(-np.log1p(-ug), 1e-300), axis=1)
        elif self.spec.variant == "uniform":
            pos = np.cumsum(self.spec.lo + (self.spec.hi - self.spec.lo) * ug, axis=1)
        else:  # unit
            pos = np.broadcast_to(
                np.arange(1.0, n + 1.0), (count, n)
            ).copy()
        codes = velocities_from_uniforms(uv, self.params)
        if self.mirrored:
            codes = -codes
        return pos, np.ascontiguousarray(codes, dtype=np.int8)

    # -- exact fallback ----------------------------------------------------

    def configurations(self, trial0: int, count: int, n: int):
        side = "negative" if self.mirrored else "positive"
        out = []
        for i in range(count):
            rc = RandomnessContract(self.seed, trial0 + i, self.label)
            cfg = sample_half_configuration(self.spec, self.params, n, side, rc)
            if self.mirrored:
                cfg = mirror_config(cfg)
            out.append(cfg)
        return out

    def _engine_summary_row(self, cfg: Configuration):
        o = resolve(cfg)
        vel = [v.speed for v in cfg.velocities]
        alive = set(o.survivors)
        idx = cfg.indices
        min_left = -1
        max_right = -1
        for off, i in enumerate(idx):
            if i in alive:
                if vel[off] == -1 and min_left < 0:
                    min_left = off
                if vel[off] == 1:
                    max_right = off
        pmask0 = 0
        rec = o.fates[idx[0]].record
        if rec is not None:
            by_index = {p.index: p for p in cfg.particles}
            for j in rec.indices:
                if j != idx[0]:
                    pmask0 |= 1 << (by_index[j].velocity.speed + 1)
        npair = sum(1 for c in o.collisions if c.kind == "pair")
        ntri = sum(1 for c in o.collisions if c.kind == "triple")
        return [
            o.counts[0],
            o.counts[1],
            o.counts[2],
            min_left,
            max_right,
            npair,
            ntri,
            1 if idx[0] in alive else 0,
            pmask0,
        ]

    # -- uniform row access -------------------------------------------------

    def summary_rows(self, trial0: int, count: int, n: int):
        """(rows (count,9) int64, positions (count,n) float64, first codes)."""
        if self.fast:
            pos, codes = self.windows(trial0, count, n)
            rows = kernel.batch_summary(pos, codes)
            return rows, pos, codes[:, 0].astype(np.int64)
        cfgs = self.configurations(trial0, count, n)
        rows = np.array([self._engine_summary_row(c) for c in cfgs], dtype=np.int64)
        pos = np.array([[float(p.position) for p in c.particles] for c in cfgs])
        v0 = np.array([c.particles[0].velocity.speed for c in cfgs], dtype=np.int64)
        return rows, pos, v0

    def prefix_rows(self, trial0: int, count: int, ks: Sequence[int]):
        """(rows (count,K,7) int64, positions, first codes); see kernel docs."""
        ks_arr = np.asarray(sorted(ks), dtype=np.int64)
        if self.fast:
            pos, codes = self.windows(trial0, count, int(ks_arr[-1]))
            rows = kernel.batch_prefix_summary(pos, codes, ks_arr)
            return rows, pos, codes[:, 0].astype(np.int64)
        n = int(ks_arr[-1])
        cfgs = self.configurations(trial0, count, n)
        rows = np.empty((count, len(ks_arr), 7), dtype=np.int64)
        for t, c in enumerate(cfgs):
            for kix, k in enumerate(ks_arr):
                sub = Configuration(c.particles[:k], c.mode, dict(c.provenance))
                r = self._engine_summary_row(sub)
                rows[t, kix] = [r[0], r[1], r[2], r[3], r[7], r[8], r[6]]
        pos = np.array([[float(p.position) for p in c.particles] for c in cfgs])
        v0 = np.array([c.particles[0].velocity.speed for c in cfgs], dtype=np.int64)
        return rows, pos, v0


def estimate_q(
    side: str,
    spec: SpacingSpec,
    params: Params,
    n: int,
    trials: int,
    rng: RandomnessContract,
) -> Estimate:
    """Truncated visit probability: P(a mover from the first n particles
    reaches the origin).  side="left" is the left-mover visit probability
    of the positive half-line; side="right" the mirrored quantity.
    Always a lower bound for the untruncated probability.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    sampler = WindowSampler(
        spec, params, rng.master_seed, _label(rng, "q", side), mirrored=(side == "right")
    )
    hits = 0
    anomalies = 0
    for t0, count in _chunks(trials):
        rows, _, _ = sampler.summary_rows(t0, count, n)
        hits += int((rows[:, 1] > 0).sum())
        if spec.atomless:
            anomalies += int(rows[:, 6].sum())
    v = hits / trials
    return Estimate(v, _binomial_se(v, trials), trials, {"n": n}, LOWER, anomalies)


def estimate_qpair(spec, params, n, trials, rng) -> QPair:
    return QPair(
        q_right=estimate_q("right", spec, params, n, trials, rng),
        q_left=estimate_q("left", spec, params, n, trials, rng),
    )


def estimate_alpha(
    spec: SpacingSpec,
    params: Params,
    n: int,
    trials: int,
    rng: RandomnessContract,
    min_kept: int = 100,
) -> AlphaEstimate:
    """First-visitor ordering probabilities from two independent half-lines.

    A trial is kept only when both windows produce a visitor and both
    visit times fall within the span of the shorter window; that makes
    the conditioning event decidable at finite truncation.  The residual
    truncation bias is probed by re-running the same trials at window n/2
    and reporting the difference.
    """
    if spec.variant == "rational":
        return _estimate_alpha_exact(spec, params, n, trials, rng, min_kept)
    ks = sorted({max(1, n // 2), n})
    pos_sampler = WindowSampler(
        spec, params, rng.master_seed, _label(rng, "alpha", "pos"), mirrored=False
    )
    neg_sampler = WindowSampler(
        spec, params, rng.master_seed, _label(rng, "alpha", "neg"), mirrored=True
    )
    K = len(ks)
    kept = np.zeros(K, dtype=np.int64)
    right_first = np.zeros(K, dtype=np.int64)
    ties = np.zeros(K, dtype=np.int64)
    anomalies = 0
    for t0, count in _chunks(trials):
        rows_p, pos_p, _ = pos_sampler.prefix_rows(t0, count, ks)
        rows_n, pos_n, _ = neg_sampler.prefix_rows(t0, count, ks)
        if spec.atomless:
            anomalies += int(rows_p[:, -1, 6].sum() + rows_n[:, -1, 6].sum())
        rows_idx = np.arange(count)
        for kix, k in enumerate(ks):
            has_l = rows_p[:, kix, 1] > 0
            has_r = rows_n[:, kix, 1] > 0
            off_l = np.where(has_l, rows_p[:, kix, 3], 0)
            off_r = np.where(has_r, rows_n[:, kix, 3], 0)
            tau_l = pos_p[rows_idx, off_l]
            tau_r = pos_n[rows_idx, off_r]
            span = np.minimum(pos_p[:, k - 1], pos_n[:, k - 1])
            keep = has_l & has_r & (tau_l <= span) & (tau_r <= span)
            kept[kix] += int(keep.sum())
            right_first[kix] += int((keep & (tau_r < tau_l)).sum())
            ties[kix] += int((keep & (tau_r == tau_l)).sum())

    full = K - 1
    if kept[full] == 0:
        return AlphaEstimate(
            triple=AlphaTriple(0.5, 0.5, 0.0),
            se_right=float("inf"),
            se_left=float("inf"),
            se_hat=float("inf"),
            kept=0,
            trials=trials,
            truncation={"n": n, "alpha_right_shift": float("nan")},
            degenerate=True,
            tie_count=0,
            anomalies=anomalies,
        )

    def triple_at(kix):
        m = kept[kix]
        a_hat = ties[kix] / m
        a_right = (right_first[kix] + ties[kix]) / m
        a_left = 1 + a_hat - a_right
        return a_right, a_left, a_hat

    a_right, a_left, a_hat = triple_at(full)
    shift = a_right - triple_at(0)[0] if K == 2 else 0.0
    m = int(kept[full])
    if spec.atomless:
        anomalies += int(ties[full])
    return AlphaEstimate(
        triple=AlphaTriple(a_right, a_left, a_hat),
        se_right=_binomial_se(a_right, m),
        se_left=_binomial_se(a_left, m),
        se_hat=_binomial_se(a_hat, m),
        kept=m,
        trials=trials,
        truncation={"n": n, "alpha_right_shift": shift},
        degenerate=m < min_kept,
        tie_count=int(ties[full]),
        anomalies=anomalies,
    )


def _estimate_alpha_exact(spec, params, n, trials, rng, min_kept):
    """Exact-arithmetic alpha path for rational atomic spacings."""
    pos_sampler = WindowSampler(
        spec, params, rng.master_seed, _label(rng, "alpha", "pos"), mirrored=False
    )
    neg_sampler = WindowSampler(
        spec, params, rng.master_seed, _label(rng, "alpha", "neg"), mirrored=True
    )
    kept = right_first = ties = 0
    for t0, count in _chunks(trials, 256):
        for cp, cn in zip(
            pos_sampler.configurations(t0, count, n),
            neg_sampler.configurations(t0, count, n),
        ):
            op, on = resolve(cp), resolve(cn)
            if op.first_left_visitor is None or on.first_left_visitor is None:
                continue
            tau_l = op.first_left_visitor[1]
            tau_r = on.first_left_visitor[1]
            span = min(cp.particles[-1].position, cn.particles[-1].position)
            if tau_l > span or tau_r > span:
                continue
            kept += 1
            if tau_r < tau_l:
                right_first += 1
            elif tau_r == tau_l:
                ties += 1
    if kept == 0:
        return AlphaEstimate(
            AlphaTriple(0.5, 0.5, 0.0),
            float("inf"),
            float("inf"),
            float("inf"),
            0,
            trials,
            {"n": n},
            True,
            0,
        )
    a_hat = ties / kept
    a_right = (right_first + ties) / kept
    a_left = 1 + a_hat - a_right
    return AlphaEstimate(
        AlphaTriple(a_right, a_left, a_hat),
        _binomial_se(a_right, kept),
        _binomial_se(a_left, kept),
        _binomial_se(a_hat, kept),
        kept,
        trials,
        {"n": n},
        kept < min_kept,
        ties,
    )


def estimate_beta(
    spec: SpacingSpec,
    params: Params,
    windows: Sequence[int],
    trials: int,
    rng: RandomnessContract,
) -> BetaPair:
    """Survival frequency of the first mover over a window schedule.

    beta_right tracks the first particle of the positive half-line being
    a right mover that survives the window; beta_left is the mirrored
    quantity for the first particle of the negative half-line.
    """
    windows = sorted(windows)
    if any(b <= a for a, b in zip(windows, windows[1:])):
        raise ValueError("window schedule must be strictly increasing")
    out = {}
    for side, mirrored in (("right", False), ("left", True)):
        sampler = WindowSampler(
            spec, params, rng.master_seed, _label(rng, "beta", side), mirrored=mirrored
        )
        hits = np.zeros(len(windows), dtype=np.int64)
        anomalies = 0
        for t0, count in _chunks(trials):
            rows, _, v0 = sampler.prefix_rows(t0, count, windows)
            is_mover = v0 == 1
            for kix in range(len(windows)):
                hits[kix] += int((is_mover & (rows[:, kix, 4] == 1)).sum())
            if spec.atomless:
                anomalies += int(rows[:, -1, 6].sum())
        estimates = [
            Estimate(
                h / trials,
                _binomial_se(h / trials, trials),
                trials,
                {"n": w},
                POINT,
                anomalies if kix == len(windows) - 1 else 0,
            )
            for kix, (h, w) in enumerate(zip(hits, windows))
        ]
        values = [e.value for e in estimates]
        if len(values) >= 3:
            stability = max(
                abs(values[-1] - values[-2]), abs(values[-2] - values[-3])
            )
        elif len(values) == 2:
            stability = abs(values[-1] - values[-2])
        else:
            stability = float("nan")
        out[side] = (estimates, stability)
    return BetaPair(
        windows=list(windows),
        beta_right=out["right"][0],
        beta_left=out["left"][0],
        stability_right=out["right"][1],
        stability_left=out["left"][1],
    )


def _mean_z_accumulate(sampler, ks, trials, split_parity: bool):
    """Accumulate per-k means of Z(window k)/k, optionally split by parity."""
    K = len(ks)
    n_acc = np.zeros((2, K))
    s_acc = np.zeros((2, K))
    q_acc = np.zeros((2, K))
    anomalies = 0
    for t0, count in _chunks(trials):
        rows, _, _ = sampler.prefix_rows(t0, count, ks)
        z = (rows[:, :, 0] - rows[:, :, 1]).astype(np.float64) / np.asarray(
            sorted(ks), dtype=np.float64
        )
        if sampler.spec.atomless:
            anomalies += int(rows[:, -1, 6].sum())
        if split_parity:
            parity = (t0 + np.arange(count)) % 2
        else:
            parity = np.zeros(count, dtype=np.int64)
        for h in (0, 1):
            sel = z[parity == h]
            n_acc[h] += sel.shape[0]
            s_acc[h] += sel.sum(axis=0)
            q_acc[h] += (sel * sel).sum(axis=0)
    return n_acc, s_acc, q_acc, anomalies


def _mean_se(n, s, q):
    mean = s / n
    var = np.maximum(q / n - mean * mean, 0.0)
    se = np.sqrt(var / np.maximum(n, 1))
    return mean, se


def estimate_mean_z(
    side: str,
    spec: SpacingSpec,
    params: Params,
    k: int,
    trials: int,
    rng: RandomnessContract,
) -> Estimate:
    """Mean of Z(window of k)/k: surviving blockades minus surviving
    threatening movers, per particle.  side="left" counts left movers on
    the positive window 1..k; side="right" the mirrored window -k..-1.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    sampler = WindowSampler(
        spec,
        params,
        rng.master_seed,
        _label(rng, "z", side),
        mirrored=(side == "right"),
    )
    n_acc, s_acc, q_acc, anomalies = _mean_z_accumulate(
        sampler, [k], trials, split_parity=False
    )
    mean, se = _mean_se(n_acc[0], s_acc[0], q_acc[0])
    return Estimate(
        float(mean[0]), float(se[0]), trials, {"k": k}, POINT, anomalies
    )


def _sup_mean_z(sampler, ks, trials):
    """Split-sample estimate of sup over the k grid of mean Z(1,k)/k.

    The argmax k is selected on the even-trial half and the mean is
    re-evaluated on the odd-trial half, which removes the upward bias of
    maximizing noisy estimates under common random numbers.
    """
    ks = sorted(ks)
    n_acc, s_acc, q_acc, anomalies = _mean_z_accumulate(
        sampler, ks, trials, split_parity=True
    )
    mean_sel, _ = _mean_se(n_acc[0], s_acc[0], q_acc[0])
    mean_eval, se_eval = _mean_se(n_acc[1], s_acc[1], q_acc[1])
    k_star_ix = int(np.argmax(mean_sel))
    value = float(mean_eval[k_star_ix])
    se = float(se_eval[k_star_ix])
    mean_all, se_all = _mean_se(
        n_acc[0] + n_acc[1], s_acc[0] + s_acc[1], q_acc[0] + q_acc[1]
    )
    table = {
        int(k): (float(m), float(s)) for k, m, s in zip(ks, mean_all, se_all)
    }
    return value, se, int(ks[k_star_ix]), table, anomalies


def theta_bracket(
    spec: SpacingSpec,
    params: Params,
    n: int,
    k_grid: Sequence[int],
    trials: int,
    rng: RandomnessContract,
) -> ThetaBracket:
    """Bracket the fixation probability between two one-sided estimates.

    Upper: (1 - q_right)(1 - q_left) from truncated visit probabilities
    (each q is a lower bound, so the product bounds theta from above).
    Lower: the finite-window survival criterion
    max(0, sup_k mean Z_left(1,k)/k) * max(0, sup_l mean Z_right(-l,-1)/l) / p^2,
    with the sup taken over the k grid by the split-sample scheme under
    common random numbers.
    """
    if not k_grid:
        raise ValueError("k grid must be nonempty")
    p = params.p
    q_left = estimate_q("left", spec, params, n, trials, rng)
    q_right = estimate_q("right", spec, params, n, trials, rng)

    k_table = {}
    theta0 = {}
    for side, mirrored in (("left", False), ("right", True)):
        sampler = WindowSampler(
            spec,
            params,
            rng.master_seed,
            _label(rng, "z", side),
            mirrored=mirrored,
        )
        value, se, k_star, table, anomalies = _sup_mean_z(sampler, k_grid, trials)
        clamped = max(0.0, value)
        theta0[side] = Estimate(
            clamped,
            se,
            trials,
            {"k_grid": sorted(int(k) for k in k_grid), "k_star": k_star},
            POINT,
            anomalies,
            meta={"raw_value": value},
        )
        for k, (m, s) in table.items():
            k_table.setdefault(k, {})[side] = (m, s)

    t0l, t0r = theta0["left"], theta0["right"]
    lower_value = t0l.value * t0r.value / (p * p)
    lower_se = (
        math.sqrt((t0l.value * t0r.stderr) ** 2 + (t0r.value * t0l.stderr) ** 2)
        / (p * p)
    )
    if lower_value == 0.0:
        # keep a usable scale for the sign test when one side clamps to 0
        lower_se = max(
            lower_se,
            t0l.stderr * t0r.stderr / (p * p),
        )
    lower = Estimate(
        lower_value,
        lower_se,
        trials,
        {"n": n, "k_grid": sorted(int(k) for k in k_grid)},
        LOWER,
    )

    uv = (1 - q_right.value) * (1 - q_left.value)
    use = math.sqrt(
        ((1 - q_left.value) * q_right.stderr) ** 2
        + ((1 - q_right.value) * q_left.stderr) ** 2
    )
    upper = Estimate(uv, use, trials, {"n": n}, UPPER)

    theta_left = Estimate(
        p * (1 - q_left.value), p * q_left.stderr, trials, {"n": n}, UPPER
    )
    theta_right = Estimate(
        p * (1 - q_right.value), p * q_right.stderr, trials, {"n": n}, UPPER
    )
    detected = lower.value > 0 and lower.value > 3 * lower.stderr
    return ThetaBracket(
        lower=lower,
        upper=upper,
        q_left=q_left,
        q_right=q_right,
        theta0_left=t0l,
        theta0_right=t0r,
        theta_left=theta_left,
        theta_right=theta_right,
        k_table=k_table,
        detected=detected,
    )


# ---------------------------------------------------------------------------
# identity and consistency checks
# ---------------------------------------------------------------------------


def propagate_stderr(fn, values, stderrs, h: float = 1e-6) -> float:
    """First-order (delta method) standard error of fn(values)."""
    base = np.asarray(values, dtype=float)
    var = 0.0
    for i, se in enumerate(stderrs):
        if se == 0:
            continue
        up = base.copy()
        dn = base.copy()
        up[i] += h
        dn[i] -= h
        deriv = (fn(*up) - fn(*dn)) / (2 * h)
        var += (deriv * se) ** 2
    return math.sqrt(var)


@dataclass
class Residual:
    name: str
    value: float
    stderr: float

    @property
    def sigmas(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == 0 else float("inf")
        return abs(self.value) / self.stderr

    def within(self, k: float = 4.0) -> bool:
        return self.sigmas <= k

    def to_jsonable(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "stderr": self.stderr,
            "sigmas": self.sigmas,
        }


def window_event_probabilities(
    spec: SpacingSpec,
    params: Params,
    n: int,
    trials: int,
    rng: RandomnessContract,
) -> dict:
    """First-particle collision classes and visit events on both half-lines.

    Keys (all window-truncated Estimates):
      right1_blockade      first particle of the positive line is a right
                           mover annihilating with a blockade
      right1_left          ... annihilating with a left mover
      visitor_and_right1_blockade   joint event with a left mover reaching 0
      leftm1_blockade      mirrored: particle -1 is a left mover annihilating
                           with a blockade
      leftm1_right         ... annihilating with a right mover
    """
    out = {}
    for prefix, mirrored in (("pos", False), ("neg", True)):
        sampler = WindowSampler(
            spec,
            params,
            rng.master_seed,
            _label(rng, "events", prefix),
            mirrored=mirrored,
        )
        hits_blockade = 0
        hits_left = 0
        hits_joint = 0
        for t0, count in _chunks(trials):
            rows, _, v0 = sampler.summary_rows(t0, count, n)
            first_mover = v0 == 1
            died_with_blockade = first_mover & (
                (rows[:, 8] & kernel.BIT_BLOCKADE) > 0
            )
            died_with_left = first_mover & ((rows[:, 8] & kernel.BIT_LEFT) > 0)
            hits_blockade += int(died_with_blockade.sum())
            hits_left += int(died_with_left.sum())
            hits_joint += int((died_with_blockade & (rows[:, 1] > 0)).sum())
        names = (
            ("right1_blockade", "right1_left", "visitor_and_right1_blockade")
            if not mirrored
            else ("leftm1_blockade", "leftm1_right", "leftm1_joint_unused")
        )
        for name, hits in zip(names, (hits_blockade, hits_left, hits_joint)):
            v = hits / trials
            out[name] = Estimate(
                v, _binomial_se(v, trials), trials, {"n": n}, POINT
            )
    del out["leftm1_joint_unused"]
    return out


def check_identities(
    q_right: Estimate,
    q_left: Estimate,
    alpha: AlphaEstimate,
    beta_right: Estimate,
    beta_left: Estimate,
    params: Params,
    events: Optional[dict] = None,
) -> list:
    """Residuals of the three recursion identities linking q, alpha, beta,
    plus (when window event probabilities are supplied) the three
    mass-transport collision-class identities and the joint visit identity.
    Every residual carries a first-order propagated standard error.
    """
    p, lam = params.p, params.lam
    vals = [
        q_right.value,
        q_left.value,
        alpha.alpha_right,
        alpha.alpha_left,
        beta_right.value,
        beta_left.value,
    ]
    ses = [
        q_right.stderr,
        q_left.stderr,
        alpha.se_right,
        alpha.se_left,
        beta_right.stderr,
        beta_left.stderr,
    ]

    def r_first(qr, ql, ar, al, br, bl):
        return (ql - 1) * (p * al * qr * ql + p * ql - (1 - lam) * (1 - p)) - ql * br

    def r_second(qr, ql, ar, al, br, bl):
        return (qr - 1) * (p * ar * qr * ql + p * qr - lam * (1 - p)) - qr * bl

    def r_third(qr, ql, ar, al, br, bl):
        return (
            p * qr * ql * (al - ar)
            + p * (ql - qr)
            - (1 - 2 * lam) * (1 - p)
            - (br - bl)
        )

    out = []
    for name, fn in (
        ("recursion-left", r_first),
        ("recursion-right", r_second),
        ("recursion-difference", r_third),
    ):
        out.append(Residual(name, fn(*vals), propagate_stderr(fn, vals, ses)))

    if events is not None:
        e1 = events["right1_blockade"]
        e2 = events["leftm1_blockade"]
        e3a = events["right1_left"]
        e3b = events["leftm1_right"]
        joint = events["visitor_and_right1_blockade"]

        def m1(qr, ql, ar, al, e):
            return e - (p * ar * qr * ql + p * qr * (1 - ql))

        def m2(qr, ql, ar, al, e):
            return e - (p * al * qr * ql + p * (1 - qr) * ql)

        def m4(qr, ql, ar, e):
            return e - p * qr * ql * ar

        v = [q_right.value, q_left.value, alpha.alpha_right, alpha.alpha_left]
        s = [q_right.stderr, q_left.stderr, alpha.se_right, alpha.se_left]
        out.append(
            Residual(
                "mass-transport-right",
                m1(*v, e1.value),
                propagate_stderr(m1, v + [e1.value], s + [e1.stderr]),
            )
        )
        out.append(
            Residual(
                "mass-transport-left",
                m2(*v, e2.value),
                propagate_stderr(m2, v + [e2.value], s + [e2.stderr]),
            )
        )
        out.append(
            Residual(
                "mass-transport-exchange",
                e3a.value - e3b.value,
                math.sqrt(e3a.stderr**2 + e3b.stderr**2),
            )
        )
        v4 = [q_right.value, q_left.value, alpha.alpha_right]
        s4 = [q_right.stderr, q_left.stderr, alpha.se_right]
        out.append(
            Residual(
                "joint-visit-product",
                m4(*v4, joint.value),
                propagate_stderr(m4, v4 + [joint.value], s4 + [joint.stderr]),
            )
        )
    return out


def identity_report(
    spec: SpacingSpec,
    params: Params,
    n: int,
    trials: int,
    rng: RandomnessContract,
) -> dict:
    """Run every estimator needed by the identity suite and compile residuals."""
    q_r = estimate_q("right", spec, params, n, trials, rng)
    q_l = estimate_q("left", spec, params, n, trials, rng)
    alpha = estimate_alpha(spec, params, n, trials, rng)
    betas = estimate_beta(spec, params, [n], trials, rng)
    events = window_event_probabilities(spec, params, n, trials, rng)
    residuals = check_identities(
        q_r, q_l, alpha, betas.beta_right[0], betas.beta_left[0], params, events
    )
    return {
        "params": (params.p, params.lam),
        "spacing": spec.label(),
        "n": n,
        "trials": trials,
        "q_right": q_r,
        "q_left": q_l,
        "alpha": alpha,
        "beta_right": betas.beta_right[0],
        "beta_left": betas.beta_left[0],
        "events": events,
        "residuals": residuals,
    }


def check_superadditivity(
    spec: SpacingSpec,
    params: Params,
    a: int,
    b: int,
    c: int,
    trials: int,
    rng: RandomnessContract,
) -> dict:
    """Count violations of the window splitting inequality.

    On samples where the window a..b leaves no surviving right mover,
    Z_left(a,c) >= Z_left(a,b) + Z_left(b+1,c) must hold; any violation
    is an engine bug, not noise.
    """
    if not (1 <= a < b < c):
        raise ValueError("need 1 <= a < b < c")
    sampler = WindowSampler(
        spec, params, rng.master_seed, _label(rng, "super"), mirrored=False
    )
    conditioned = 0
    violations = 0
    for t0, count in _chunks(trials):
        if sampler.fast:
            pos, codes = sampler.windows(t0, count, c)
            r_ab = kernel.batch_summary(pos[:, a - 1 : b], codes[:, a - 1 : b])
            r_ac = kernel.batch_summary(pos[:, a - 1 : c], codes[:, a - 1 : c])
            r_bc = kernel.batch_summary(pos[:, b:c], codes[:, b:c])
        else:
            rows = []
            for cfg in sampler.configurations(t0, count, c):
                sub = []
                for lo, hi_ in ((a - 1, b), (a - 1, c), (b, c)):
                    piece = Configuration(
                        cfg.particles[lo:hi_], cfg.mode, dict(cfg.provenance)
                    )
                    sub.append(sampler._engine_summary_row(piece))
                rows.append(sub)
            arr = np.array(rows, dtype=np.int64)
            r_ab, r_ac, r_bc = arr[:, 0], arr[:, 1], arr[:, 2]
        cond = r_ab[:, 2] == 0
        conditioned += int(cond.sum())
        z_ab = r_ab[:, 0] - r_ab[:, 1]
        z_ac = r_ac[:, 0] - r_ac[:, 1]
        z_bc = r_bc[:, 0] - r_bc[:, 1]
        violations += int((cond & (z_ac < z_ab + z_bc)).sum())
    return {
        "windows": (a, b, c),
        "trials": trials,
        "conditioned": conditioned,
        "violations": violations,
    }


def check_dichotomy(
    q_right: Estimate,
    q_left: Estimate,
    alpha: AlphaEstimate,
    beta_right: Estimate,
    beta_left: Estimate,
    params: Params,
    beta_tolerance: float = 0.02,
) -> dict:
    """Evaluate the sign condition that forces one mover class to die out.

    s = p q_left q_right (alpha_left - alpha_right) - (1-2 lambda)(1-p):
    s <= 0 implies the first right mover a.s. dies and q_right <= q_left;
    s >= 0 implies the mirrored statement.  Near s = 0 both sides apply.
    """
    p, lam = params.p, params.lam

    def s_fn(qr, ql, ar, al):
        return p * ql * qr * (al - ar) - (1 - 2 * lam) * (1 - p)

    vals = [q_right.value, q_left.value, alpha.alpha_right, alpha.alpha_left]
    ses = [q_right.stderr, q_left.stderr, alpha.se_right, alpha.se_left]
    s = s_fn(*vals)
    s_se = propagate_stderr(s_fn, vals, ses)

    q_gap_se = math.sqrt(q_right.stderr**2 + q_left.stderr**2)
    checks = {}
    if s <= 4 * s_se:  # left branch plausibly active
        checks["beta_right_zero"] = beta_right.value <= max(
            beta_tolerance, 4 * beta_right.stderr
        )
        checks["q_right_le_q_left"] = (
            q_right.value - q_left.value <= 4 * q_gap_se
        )
    if s >= -4 * s_se:  # right branch plausibly active
        checks["beta_left_zero"] = beta_left.value <= max(
            beta_tolerance, 4 * beta_left.stderr
        )
        checks["q_right_ge_q_left"] = (
            q_left.value - q_right.value <= 4 * q_gap_se
        )
    side = "both" if abs(s) <= 4 * s_se else ("left" if s < 0 else "right")
    return {
        "s": s,
        "s_stderr": s_se,
        "side": side,
        "checks": checks,
        "ok": all(checks.values()),
    }


def check_geometric_visits(
    spec: SpacingSpec,
    params: Params,
    n: int,
    trials: int,
    rng: RandomnessContract,
    max_atom: int = 12,
) -> dict:
    """Compare the law of the surviving left-mover count to a geometric law.

    When some mass escapes visiting (q_left < 1) the number of left movers
    surviving the half-line window is geometric with mean q/(1-q); the
    empirical histogram is scored by a chi-square distance against the
    geometric law with the plug-in parameter.
    """
    from scipy import stats

    sampler = WindowSampler(
        spec, params, rng.master_seed, _label(rng, "geom"), mirrored=False
    )
    counts = np.zeros(max_atom + 2, dtype=np.int64)  # last bin = tail
    total_visits = 0.0
    total_sq = 0.0
    for t0, count in _chunks(trials):
        rows, _, _ = sampler.summary_rows(t0, count, n)
        nl = rows[:, 1]
        total_visits += float(nl.sum())
        total_sq += float((nl.astype(np.float64) ** 2).sum())
        clipped = np.minimum(nl, max_atom + 1)
        counts += np.bincount(clipped, minlength=max_atom + 2)

    q_hat = 1 - counts[0] / trials
    if q_hat >= 1.0:
        return {"q_hat": q_hat, "error": "no mass at zero visits; q too close to 1"}
    probs = [(1 - q_hat) * q_hat**j for j in range(max_atom + 1)]
    probs.append(1 - sum(probs))
    expected = np.array(probs) * trials
    keep = expected >= 5
    obs = counts[keep].astype(np.float64)
    exp = expected[keep]
    # fold the dropped mass into the last kept bin so totals match
    obs[-1] += counts[~keep].sum()
    exp[-1] += expected[~keep].sum()
    chi2 = float(((obs - exp) ** 2 / exp).sum())
    dof = max(int(keep.sum()) - 2, 1)
    p_value = float(stats.chi2.sf(chi2, dof))

    mean = total_visits / trials
    mean_se = math.sqrt(
        max(total_sq / trials - mean * mean, 0.0) / trials
    )
    mean_target = q_hat / (1 - q_hat)
    return {
        "q_hat": q_hat,
        "chi2": chi2,
        "dof": dof,
        "p_value": p_value,
        "mean": mean,
        "mean_se": mean_se,
        "mean_target": mean_target,
        "histogram": counts.tolist(),
    }
