"""Seed-sweep experiments probing the convergence claims at desk scale.

Five probes: decay rate of the running average squared gradient norm, per-seed
last-iterate convergence, seed-mean (L1-style) convergence, summability of the
weighted gradient series, and moment/growth probes (reciprocal product
moments, S_T^(3/4) growth, boundedness of the second-moment mass).

Engine: all seeds advance in lockstep as stacked (seeds x dim) arrays — one
process, disjoint per-seed rng streams, bitwise-identical per seed to a lone
run_trajectory call (each array row only ever meets its own row's data).
`threads > 1` splits the seed list across processes and concatenates rows.

Expectations are estimated by seed means over the declared seed set;
aggregation is a deterministic reduction over seeds sorted ascending.
epsilon-style thresholds are pilot-calibrated once, then frozen below with
their provenance; reports echo the provenance next to each verdict.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import ConstraintViolation, HyperParams, alpha1, beta2_at, eta_at, validate_hyperparams
from .problems import (
    Logistic,
    LeastSquares,
    NoisyQuadratic,
    Problem,
    _sigmoid,
    make_least_squares,
    make_logistic,
    make_noisy_quadratic,
    rng_stream,
)


class InsufficientSeeds(ValueError):
    """The probe needs more seeds than the config declares."""


class HorizonTooShort(ValueError):
    """The probe needs a longer horizon T than the config declares."""


class DegenerateFit(ValueError):
    """Log-log fit impossible: duplicate abscissae or too few points."""


# thresholds frozen from pilot sweeps; see each probe's report for usage
FROZEN_THRESHOLDS = {
    "last_iterate_eps": {
        "value": 9.0e-2,
        "provenance": "pilot 2026-08-17: noisy quadratic d=10 sigma=1, delta=0.25 "
        "gamma=1.25, T=1e6, seeds 0-19; max final-3-checkpoint last-iterate grad "
        "norm was 5.14e-2; frozen at ~1.75x headroom",
    },
    "l1_eps": {
        "value": 4.5e-2,
        "provenance": "pilot 2026-08-17: noisy quadratic d=10 sigma=1, delta=0.25 "
        "gamma=1.25, T=2^18, seeds 0-99; final seed-mean last-iterate grad norm "
        "was 2.86e-2; frozen at ~1.6x headroom",
    },
    "rate_slope_tol": {
        "value": 0.1,
        "provenance": "design tolerance of +/-0.1 around the guaranteed band "
        "rate -(1/2-delta), kept as stated rather than widened; pilot 2026-08-17 "
        "(noisy quadratic d=10, T=2^20, seeds 0-19) measured final-decade slopes "
        "-0.61 (delta=0.1) and -0.79 (delta=0.25) with r^2 > 0.999, i.e. the "
        "stationary step-size scaling -(1/2+delta): on a noise-dominated "
        "strongly convex problem the guarantee is an upper bound, not a law of "
        "the decay, so this verdict fails honestly there",
    },
    "ratio_step_slack": {
        "value": 1.05,
        "provenance": "pilot 2026-08-17: delta=0 runs (noisy quadratic d=10, "
        "T=2^20, seeds 0-19) showed max per-step checkpoint ratio 0.95 "
        "(gamma=1.5) and 0.90 (gamma=1.0) — no up-steps at all; the 5% per-step "
        "slack only guards seed-mean noise near a plateau",
    },
}

PROBE_NAMES = ("rate", "last_iterate", "l1", "summability", "moment", "sgd_anchor")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ProblemSpec:
    """Serializable recipe for a problem instance (cli config surface)."""

    kind: str  # noisy_quadratic | least_squares | logistic
    d: int = 10
    n: int = 0  # rows for data problems; 0 = kind default
    sigma: float = 1.0
    eig_min: float = 1.0
    eig_max: float = 4.0
    data_seed: int = 0
    reg: float = 0.05

    def build(self) -> Problem:
        if self.kind == "noisy_quadratic":
            return make_noisy_quadratic(
                np.linspace(self.eig_min, self.eig_max, self.d), self.sigma
            )
        if self.kind == "least_squares":
            n = self.n or 50
            return make_least_squares(n, self.d, seed=self.data_seed)
        if self.kind == "logistic":
            n = self.n or 100
            return make_logistic(n, self.d, seed=self.data_seed, reg=self.reg)
        raise ConstraintViolation(f"unknown problem kind {self.kind!r}")


#: problem kinds the verification driver may run; also the only kinds
#: ProblemSpec.build understands.
SUITE_KINDS = ("noisy_quadratic", "least_squares", "logistic")

#: fault fixtures the verification driver understands ("" = none).
#: "lipschitz_tenth" re-runs the smoothness-step check against a certificate
#: claiming one tenth of the true constant, forcing a named failure — it
#: exists to exercise the nonzero-exit path end to end.
FAULT_FIXTURES = ("", "lipschitz_tenth")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    h: HyperParams
    T: int
    seeds: tuple
    checkpoints: tuple
    probes: tuple = ("rate",)
    out_dir: str | None = None
    threads: int = 1
    epsilon_last: float | None = None
    epsilon_l1: float | None = None
    suite: tuple = SUITE_KINDS  # problem kinds for the verification driver
    inject_fault: str = ""  # fault fixture for the verification driver

    def as_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["checkpoints"] = list(self.checkpoints)
        d["probes"] = list(self.probes)
        d["suite"] = list(self.suite)
        return d


def default_checkpoints(T: int) -> tuple:
    """Powers of two up to T, with T itself always included."""
    cps = [1 << k for k in range(T.bit_length()) if (1 << k) <= T]
    if cps[-1] != T:
        cps.append(T)
    return tuple(cps)


def validate_config(cfg: ExperimentConfig) -> None:
    validate_hyperparams(cfg.h)
    if cfg.T < 1:
        raise ConstraintViolation(f"T must be >= 1, got {cfg.T}")
    if len(set(cfg.seeds)) != len(cfg.seeds) or not cfg.seeds:
        raise ConstraintViolation("seeds must be a non-empty list of distinct integers")
    cps = list(cfg.checkpoints)
    if not cps or any(b <= a for a, b in zip(cps, cps[1:])):
        raise ConstraintViolation("checkpoints must be non-empty and strictly increasing")
    if cps[0] < 1 or cps[-1] > cfg.T:
        raise ConstraintViolation(f"checkpoints must lie in [1, T={cfg.T}]")
    for probe in cfg.probes:
        if probe not in PROBE_NAMES:
            raise ConstraintViolation(f"unknown probe {probe!r} (known: {PROBE_NAMES})")
    if cfg.problem.d != cfg.h.dim:
        raise ConstraintViolation(
            f"problem dimension {cfg.problem.d} != hyperparameter dim {cfg.h.dim}"
        )
    if cfg.threads < 1:
        raise ConstraintViolation(f"threads must be >= 1, got {cfg.threads}")
    for kind in cfg.suite:
        if kind not in SUITE_KINDS:
            raise ConstraintViolation(f"unknown problem kind {kind!r} (known: {SUITE_KINDS})")
    if cfg.inject_fault not in FAULT_FIXTURES:
        raise ConstraintViolation(
            f"unknown fault fixture {cfg.inject_fault!r} (known: {FAULT_FIXTURES})"
        )


# ---------------------------------------------------------------------------
# the lockstep seed-sweep engine


_BLOCK = 4096  # oracle draws prefetched per seed


def _sweep_seeds(
    p: Problem,
    h: HyperParams,
    T: int,
    seeds,
    checkpoints,
    rule: str = "adam",
    collect_dsum: bool = False,
):
    """Advance all seeds together; return per-seed series at the checkpoints.

    Oracle streams are the same ("trajectory", seed, "oracle") streams a lone
    run_trajectory uses, consumed in the same order, and every arithmetic step
    is the rowwise image of adam_step's expressions — so row s of the stacked
    state matches the single-seed trajectory bitwise.
    """
    S = len(seeds)
    d = p.dim
    cps = list(checkpoints)
    n_cp = len(cps)
    rngs = [rng_stream("trajectory", s, "oracle") for s in seeds]

    quad = isinstance(p, NoisyQuadratic)
    data_n = 0 if quad else p.rows.shape[0]

    W = np.ones((S, d))
    M = np.zeros((S, d))
    V = np.full((S, d), h.v)
    run_gsq = np.zeros(S)
    eta_gsq = np.zeros(S)
    # per-coordinate so the addition order matches the trace's running S:
    # (v + g_1^2) + g_2^2 + ... per coordinate, summed over coordinates last
    Svec = np.full((S, d), h.v)
    sup_grad = np.zeros(S)
    sup_sigv = np.full(S, d * h.v)
    eta_prev = np.full((S, d), h.v / alpha1(h)) if collect_dsum else None
    dsum = np.empty((S, T)) if collect_dsum else None

    out = {
        name: np.empty((S, n_cp))
        for name in (
            "avg_gsq",
            "last_grad",
            "eta_gsq_sum",
            "S_total",
            "sigma_v",
            "sup_sigma_v",
            "sup_grad",
        )
    }

    noise = np.empty((S, _BLOCK, d)) if quad and p.sigma > 0 else None
    idxb = np.empty((S, _BLOCK), dtype=np.int64) if not quad else None

    cp_i = 0
    for t in range(1, T + 1):
        j = (t - 1) % _BLOCK
        if j == 0:
            take = min(_BLOCK, T - (t - 1))
            for s in range(S):
                if noise is not None:
                    rngs[s].standard_normal((take, d), out=noise[s, :take])
                if idxb is not None:
                    idxb[s, :take] = rngs[s].integers(0, data_n, size=take)

        # exact gradient at the pre-update iterate w_t
        if quad:
            grad_now = W * p.eigenvalues
        elif isinstance(p, LeastSquares):
            grad_now = W @ p.hess.T - p.lin
        else:
            Z = W @ p.rows.T
            Pm = _sigmoid(-p.labels * Z)
            grad_now = -(Pm * p.labels) @ p.rows / data_n + p.reg * W
        gn2 = np.einsum("sd,sd->s", grad_now, grad_now)
        run_gsq += gn2
        eta_t = eta_at(t, h)
        eta_gsq += eta_t * gn2
        np.maximum(sup_grad, np.sqrt(gn2), out=sup_grad)

        # oracle draw, then one update (rowwise adam_step / sgd_step)
        if quad:
            G = grad_now if p.sigma == 0 else grad_now + p.sigma * noise[:, j]
        else:
            idx = idxb[:, j]
            a = p.rows[idx]
            if isinstance(p, LeastSquares):
                r = np.einsum("kd,kd->k", a, W) - p.targets[idx]
                G = a * r[:, None]
            else:
                y = p.labels[idx]
                sg = _sigmoid(-y * np.einsum("kd,kd->k", a, W))
                G = -(y * sg)[:, None] * a + p.reg * W

        G2 = G * G
        if rule == "adam":
            b2 = beta2_at(t, h)
            V = b2 * V + (1.0 - b2) * G2
            M = h.beta1 * M + (1.0 - h.beta1) * G
            eta_v = eta_t / (np.sqrt(V) + h.mu)
            W = W - eta_v * M
            if collect_dsum:
                dsum[:, t - 1] = (eta_prev - eta_v).sum(axis=1)
                eta_prev = eta_v
        elif rule == "sgd":
            W = W - t**-0.5 * G
        else:
            raise ValueError(f"unknown update rule {rule!r}")

        Svec += G2
        sigv = V.sum(axis=1)
        np.maximum(sup_sigv, sigv, out=sup_sigv)

        if cp_i < n_cp and t == cps[cp_i]:
            out["avg_gsq"][:, cp_i] = run_gsq / t
            out["last_grad"][:, cp_i] = np.sqrt(gn2)
            out["eta_gsq_sum"][:, cp_i] = eta_gsq
            out["S_total"][:, cp_i] = Svec.sum(axis=1)
            out["sigma_v"][:, cp_i] = sigv
            out["sup_sigma_v"][:, cp_i] = sup_sigv
            out["sup_grad"][:, cp_i] = sup_grad
            cp_i += 1

    out["final_W"] = W
    if collect_dsum:
        out["dsum"] = dsum
    return out


def _sweep_worker(args):
    spec_dict, h, T, seeds, checkpoints, rule, collect_dsum = args
    p = ProblemSpec(**spec_dict).build()
    return _sweep_seeds(p, h, T, seeds, checkpoints, rule, collect_dsum)


def run_sweep(cfg: ExperimentConfig, rule: str = "adam", collect_dsum: bool = False) -> dict:
    """Run the sweep for cfg (splitting seeds across processes if threads>1)."""
    validate_config(cfg)
    seeds = sorted(cfg.seeds)
    if cfg.threads <= 1 or len(seeds) < 2:
        p = cfg.problem.build()
        res = _sweep_seeds(p, cfg.h, cfg.T, seeds, cfg.checkpoints, rule, collect_dsum)
    else:
        nw = min(cfg.threads, len(seeds))
        bounds = np.array_split(np.asarray(seeds), nw)
        jobs = [
            (asdict(cfg.problem), cfg.h, cfg.T, [int(s) for s in b], cfg.checkpoints, rule, collect_dsum)
            for b in bounds
            if len(b)
        ]
        with ProcessPoolExecutor(max_workers=nw) as ex:
            parts = list(ex.map(_sweep_worker, jobs))
        res = {
            k: np.concatenate([part[k] for part in parts], axis=0) for k in parts[0]
        }
    res["seeds"] = np.asarray(seeds)
    return res


# ---------------------------------------------------------------------------
# fitting and aggregation helpers


def fit_loglog_slope(points, fit_range) -> tuple:
    """OLS slope of ln y on ln x over points with x inside fit_range.

    Returns (slope, stderr, r2).  Requires >= 4 in-range points with distinct,
    positive x (and positive y); otherwise DegenerateFit.
    """
    lo, hi = fit_range
    sel = [(x, y) for x, y in points if lo <= x <= hi]
    if len(sel) < 4:
        raise DegenerateFit(f"only {len(sel)} points inside fit range [{lo}, {hi}]")
    xs = np.array([x for x, _ in sel], dtype=np.float64)
    ys = np.array([y for _, y in sel], dtype=np.float64)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DegenerateFit("log-log fit needs positive coordinates")
    if len(np.unique(xs)) != len(xs):
        raise DegenerateFit("duplicate x values")
    lx, ly = np.log(xs), np.log(ys)
    n = len(lx)
    mx, my = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - mx) ** 2))
    sxy = float(np.sum((lx - mx) * (ly - my)))
    slope = sxy / sxx
    resid = ly - (my + slope * (lx - mx))
    rss = float(resid @ resid)
    tss = float(np.sum((ly - my) ** 2))
    stderr = math.sqrt(rss / (n - 2) / sxx) if n > 2 else 0.0
    r2 = 1.0 if tss <= 1e-300 else 1.0 - rss / tss
    return slope, stderr, r2


def _stats(per_seed: np.ndarray) -> dict:
    return {
        "mean": per_seed.mean(axis=0).tolist(),
        "median": np.median(per_seed, axis=0).tolist(),
        "q10": np.quantile(per_seed, 0.10, axis=0).tolist(),
        "q90": np.quantile(per_seed, 0.90, axis=0).tolist(),
    }


def geometric_tail_rowsums(rows: np.ndarray, q: float, tail_cut: float = 1e-12) -> np.ndarray:
    """For each row r and step k: sum_{u>=0} q^u * r[k+u], truncated at q^u <
    tail_cut and at the row end.  q = 0 returns the rows unchanged."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    S, T = rows.shape
    if q == 0.0:
        return rows.copy()
    tau = min(int(math.floor(math.log(tail_cut) / math.log(q))), T - 1)
    kernel = q ** np.arange(tau + 1, dtype=np.float64)
    if T * (tau + 1) <= 1 << 22:  # small: direct sliding dot
        padded = np.concatenate([rows, np.zeros((S, tau))], axis=1)
        out = np.empty((S, T))
        for s in range(S):
            out[s] = np.correlate(padded[s], kernel, mode="valid")
        return out
    nfft = 1 << (T + tau + 1).bit_length()
    Kf = np.fft.rfft(kernel[::-1], nfft)
    Rf = np.fft.rfft(rows, nfft, axis=1)
    conv = np.fft.irfft(Rf * Kf, nfft, axis=1)
    return np.maximum(conv[:, tau : tau + T], 0.0)


def _log_pi_series(dsum: np.ndarray, h: HyperParams, cert) -> np.ndarray:
    """ln PiHat_t per seed per step, computed in the log domain."""
    q = math.sqrt(h.beta1)
    dbar = geometric_tail_rowsums(dsum, q)
    D1 = 2.0 / (1.0 - q) * (cert.A + 2.0 * cert.L_f * cert.B) * (cert.L_f + 1.0)
    weight = D1 / (1.0 - q) + 1.0
    return -np.cumsum(np.log1p(weight * dbar), axis=1)


def _logmeanexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + math.log(float(np.mean(np.exp(x - m))))


def _jsonsafe(obj):
    """Strict-JSON form: non-finite floats become None, numpy scalars native."""
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, dict):
        return {k: _jsonsafe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonsafe(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    probe: str
    config: dict
    checkpoints: list
    per_seed: dict = field(default_factory=dict)  # name -> (S, n_cp) nested lists
    stats: dict = field(default_factory=dict)  # name -> {mean/median/q10/q90}
    fits: dict = field(default_factory=dict)  # name -> {slope, stderr, r2, range}
    verdicts: dict = field(default_factory=dict)  # name -> {status, observed, ...}
    notes: list = field(default_factory=list)

    @property
    def status(self) -> str:
        states = [v["status"] for v in self.verdicts.values()]
        if any(s == "fail" for s in states):
            return "fail"
        return "pass"

    def as_dict(self) -> dict:
        return _jsonsafe(
            {
                "probe": self.probe,
                "status": self.status,
                "config": self.config,
                "checkpoints": self.checkpoints,
                "per_seed": self.per_seed,
                "stats": self.stats,
                "fits": self.fits,
                "verdicts": self.verdicts,
                "notes": self.notes,
            }
        )


def _base_report(cfg: ExperimentConfig, probe: str, res: dict, names) -> ExperimentReport:
    rep = ExperimentReport(probe=probe, config=cfg.as_dict(), checkpoints=list(cfg.checkpoints))
    for name in names:
        rep.per_seed[name] = res[name].tolist()
        rep.stats[name] = _stats(res[name])
    return rep


def _final_decade(cfg: ExperimentConfig):
    return (cfg.T / 10.0, float(cfg.T))


def _scale_gate(cond: bool, exc: type, msg: str, enforce: bool, below: list) -> None:
    """Probe size gates: raise when enforced, collect the message otherwise."""
    if cond:
        return
    if enforce:
        raise exc(msg)
    below.append(msg)


def _mark_below_scale(rep: ExperimentReport, msgs) -> None:
    """Keep every verdict's numbers but downgrade them to informational."""
    for v in rep.verdicts.values():
        if v["status"] in ("pass", "fail"):
            v["status"] = "informational"
    for m in msgs:
        rep.notes.append(f"below acceptance scale: {m}")


# ---------------------------------------------------------------------------
# probes


def rate_experiment(
    cfg: ExperimentConfig, _shared: dict | None = None, enforce_scale: bool = True
) -> ExperimentReport:
    """Decay of the running average squared gradient norm.

    delta > 0: final-decade log-log slope of the seed mean should be
    -(1/2 - delta).  delta = 0: the ratio to ln(T)/sqrt(T) (gamma > 1) or
    ln^2(T)/sqrt(T) (gamma = 1) should be bounded and non-increasing across
    the final decade.

    ``enforce_scale=False`` lets undersized runs complete; their verdicts are
    downgraded to informational and the report notes the missing scale.
    """
    below: list = []
    _scale_gate(
        len(cfg.seeds) >= 20, InsufficientSeeds,
        f"rate probe needs >= 20 seeds, got {len(cfg.seeds)}", enforce_scale, below,
    )
    _scale_gate(
        cfg.T >= 1 << 14, HorizonTooShort,
        f"rate probe needs T >= 2^14, got {cfg.T}", enforce_scale, below,
    )
    res = _shared if _shared is not None else run_sweep(cfg)
    rep = _base_report(cfg, "rate", res, ["avg_gsq", "last_grad"])
    cps = np.asarray(cfg.checkpoints, dtype=np.float64)
    mean_avg = res["avg_gsq"].mean(axis=0)
    lo, hi = _final_decade(cfg)

    if cfg.h.delta > 0:
        try:
            slope, stderr, r2 = fit_loglog_slope(list(zip(cps, mean_avg)), (lo, hi))
        except DegenerateFit:
            if enforce_scale:
                raise
            rep.notes.append("slope fit skipped: too few final-decade checkpoints")
            _mark_below_scale(rep, below)
            return rep
        target = -(0.5 - cfg.h.delta)
        tol = FROZEN_THRESHOLDS["rate_slope_tol"]["value"]
        rep.fits["avg_gsq_slope"] = {
            "slope": slope, "stderr": stderr, "r2": r2, "range": [lo, hi],
        }
        rep.verdicts["rate_slope"] = {
            "status": "pass" if abs(slope - target) <= tol else "fail",
            "observed": slope,
            "target": target,
            "tolerance": tol,
            "provenance": FROZEN_THRESHOLDS["rate_slope_tol"]["provenance"],
        }
        # reference point for reading failures of the verdict above: when the
        # noise floor dominates the final decade, the stationary gradient
        # energy tracks eta_t and the slope lands at -(1/2+delta) instead
        rep.verdicts["slope_step_size_scaling"] = {
            "status": "informational",
            "observed": slope,
            "target": -(0.5 + cfg.h.delta),
            "provenance": "stationary-regime reference, not a pass/fail check: "
            "gradient energy proportional to the step size gives slope "
            "-(1/2+delta) on noise-dominated problems",
        }
    else:
        power = 2.0 if cfg.h.gamma == 1.0 else 1.0
        denom = np.log(cps) ** power / np.sqrt(cps)
        denom[denom == 0.0] = np.nan  # ln(1) = 0: ratio undefined at t = 1
        ratio = mean_avg / denom
        rep.per_seed["log_rate_ratio"] = (res["avg_gsq"] / denom).tolist()
        rep.stats["log_rate_ratio"] = _stats(res["avg_gsq"] / denom)
        in_dec = (cps >= lo) & (cps <= hi) & ~np.isnan(denom)
        r_dec = ratio[in_dec]
        slack = FROZEN_THRESHOLDS["ratio_step_slack"]["value"]
        if r_dec.size:
            noninc = bool(np.all(r_dec[1:] <= slack * r_dec[:-1]) and r_dec[-1] <= r_dec[0])
            status = "pass" if noninc else "fail"
        else:
            status = "informational"
            rep.notes.append("no final-decade checkpoints past t = 1: ratio verdict empty")
        rep.verdicts["log_rate_ratio"] = {
            "status": status,
            "observed": r_dec.tolist(),
            "target": f"non-increasing over final decade (x{slack} per-step slack), "
            f"ratio to ln^{power:g}(T)/sqrt(T)",
            "provenance": FROZEN_THRESHOLDS["ratio_step_slack"]["provenance"],
        }
    if below:
        _mark_below_scale(rep, below)
    return rep


def last_iterate_experiment(
    cfg: ExperimentConfig, _shared: dict | None = None, enforce_scale: bool = True
) -> ExperimentReport:
    """Per-seed last-iterate gradient norm below the frozen threshold.

    No size gates; the gamma/delta requirement is a hypothesis of the claim
    under test, so it stays a hard error regardless of ``enforce_scale``.
    """
    if not (cfg.h.gamma > 1.0 and cfg.h.delta > 0.0):
        raise ConstraintViolation(
            f"last-iterate probe requires gamma > 1 and delta > 0 "
            f"(got gamma={cfg.h.gamma}, delta={cfg.h.delta})"
        )
    res = _shared if _shared is not None else run_sweep(cfg)
    rep = _base_report(cfg, "last_iterate", res, ["last_grad"])
    eps = cfg.epsilon_last or FROZEN_THRESHOLDS["last_iterate_eps"]["value"]
    last3 = res["last_grad"][:, -3:] if res["last_grad"].shape[1] >= 3 else res["last_grad"]
    worst = float(last3.max())
    rep.verdicts["last_iterate_below_eps"] = {
        "status": "pass" if worst < eps else "fail",
        "observed": worst,
        "threshold": eps,
        "provenance": FROZEN_THRESHOLDS["last_iterate_eps"]["provenance"]
        if cfg.epsilon_last is None
        else "epsilon_last from config",
    }
    # transient peak should sit before the final decade
    cps = np.asarray(cfg.checkpoints, dtype=np.float64)
    argmax = np.argmax(res["last_grad"], axis=1)
    peak_cp = cps[argmax]
    rep.verdicts["peak_before_final_decade"] = {
        "status": "pass" if bool(np.all(peak_cp < _final_decade(cfg)[0])) else "fail",
        "observed": peak_cp.tolist(),
        "threshold": _final_decade(cfg)[0],
        "provenance": "per-seed argmax of the checkpoint series",
    }
    return rep


def l1_experiment(
    cfg: ExperimentConfig, _shared: dict | None = None, enforce_scale: bool = True
) -> ExperimentReport:
    """Seed-mean last-iterate gradient norm: decreasing tail, finite sup."""
    if not (cfg.h.gamma > 1.0 and cfg.h.delta > 0.0):
        raise ConstraintViolation(
            f"L1 probe requires gamma > 1 and delta > 0 "
            f"(got gamma={cfg.h.gamma}, delta={cfg.h.delta})"
        )
    below: list = []
    _scale_gate(
        len(cfg.seeds) >= 100, InsufficientSeeds,
        f"L1 probe needs >= 100 seeds, got {len(cfg.seeds)}", enforce_scale, below,
    )
    res = _shared if _shared is not None else run_sweep(cfg)
    rep = _base_report(cfg, "l1", res, ["last_grad", "sup_grad"])
    eps = cfg.epsilon_l1 or FROZEN_THRESHOLDS["l1_eps"]["value"]
    mean_last = res["last_grad"].mean(axis=0)
    tail = mean_last[-4:]
    strictly_dec = bool(np.all(np.diff(tail) < 0))
    rep.verdicts["mean_strictly_decreasing"] = {
        "status": "pass" if strictly_dec else "fail",
        "observed": tail.tolist(),
        "target": "strictly decreasing over final four checkpoints",
        "provenance": "seed-mean of last-iterate gradient norms",
    }
    rep.verdicts["mean_below_eps"] = {
        "status": "pass" if float(mean_last[-1]) < eps else "fail",
        "observed": float(mean_last[-1]),
        "threshold": eps,
        "provenance": FROZEN_THRESHOLDS["l1_eps"]["provenance"]
        if cfg.epsilon_l1 is None
        else "epsilon_l1 from config",
    }
    # dominating-variable probe: seed-mean of sup_t |grad| stable in seed count
    sup_final = res["sup_grad"][:, -1]
    half = len(cfg.seeds) // 2
    if half >= 1:
        m_half, m_full = float(sup_final[:half].mean()), float(sup_final.mean())
        drift = abs(m_full - m_half) / m_full
        rep.verdicts["sup_grad_seed_stability"] = {
            "status": "pass" if drift <= 0.10 else "fail",
            "observed": {"first_half_mean": m_half, "full_mean": m_full, "drift": drift},
            "threshold": 0.10,
            "provenance": "seed-mean of running sup gradient norm, first half vs all seeds",
        }
    else:
        rep.notes.append("single seed: sup-gradient seed-stability probe skipped")
    if below:
        _mark_below_scale(rep, below)
    return rep


def summability_probe(
    cfg: ExperimentConfig, _shared: dict | None = None, enforce_scale: bool = True
) -> ExperimentReport:
    """Partial sums of eta_t |grad f(w_t)|^2 must flatten: final increment < 1%.

    No size gates (``enforce_scale`` accepted for driver uniformity); runs
    outside the gamma/delta hypotheses are reported informational.
    """
    res = _shared if _shared is not None else run_sweep(cfg)
    rep = _base_report(cfg, "summability", res, ["eta_gsq_sum"])
    informational = not (cfg.h.gamma > 1.0 and cfg.h.delta > 0.0)
    sums = res["eta_gsq_sum"]
    inc = (sums[:, -1] - sums[:, -2]) / sums[:, -1]
    worst = float(inc.max())
    status = "pass" if worst < 0.01 else "fail"
    if informational:
        status = "informational"
        rep.notes.append(
            "hypotheses gamma > 1, delta > 0 not met; summability result is informational only"
        )
    rep.verdicts["final_increment_below_1pct"] = {
        "status": status,
        "observed": worst,
        "threshold": 0.01,
        "provenance": "per-seed increment over the last checkpoint interval / total",
    }
    return rep


def moment_probe(
    cfg: ExperimentConfig, _shared: dict | None = None, enforce_scale: bool = True
) -> ExperimentReport:
    """Reciprocal-product moments, S_T^(3/4) growth, second-moment-mass sup."""
    below: list = []
    _scale_gate(
        len(cfg.seeds) >= 50, InsufficientSeeds,
        f"moment probe needs >= 50 seeds, got {len(cfg.seeds)}", enforce_scale, below,
    )
    res = _shared if _shared is not None else run_sweep(cfg, collect_dsum=True)
    if "dsum" not in res:
        raise ValueError("moment probe needs a sweep with collect_dsum=True")
    rep = _base_report(cfg, "moment", res, ["S_total", "sigma_v", "sup_sigma_v"])
    p_obj = cfg.problem.build()
    cps = np.asarray(cfg.checkpoints, dtype=np.int64)
    lo, hi = _final_decade(cfg)
    in_dec = (cps >= lo) & (cps <= hi)

    # E[PiHat_T^-p] drift over the final decade, p = 1, 2, 3 (log domain)
    log_pi = _log_pi_series(res["dsum"], cfg.h, p_obj.certificate)
    log_pi_cp = log_pi[:, cps - 1]
    rep.per_seed["log_pi_hat"] = log_pi_cp.tolist()
    rep.stats["log_pi_hat"] = _stats(log_pi_cp)
    for p_mom in (1, 2, 3):
        log_mom = np.array(
            [_logmeanexp(-p_mom * log_pi_cp[:, i]) for i in range(len(cps))]
        )
        dec = log_mom[in_dec]
        # relative drift < 10%  <=>  log-range < log(1.1); stay in logs so a
        # huge range cannot overflow on the way to the verdict
        log_range = float(dec.max() - dec.min())
        drift = math.expm1(log_range) if log_range < 700.0 else None
        rep.stats[f"log_mean_pi_inv_p{p_mom}"] = {"mean": log_mom.tolist()}
        rep.verdicts[f"pi_inv_moment_p{p_mom}_stable"] = {
            "status": "pass" if log_range < math.log1p(0.10) else "fail",
            "observed": {"drift": drift, "log_range": log_range},
            "threshold": 0.10,
            "provenance": "surrogate product series; relative drift of "
            "E[PiHat^-p] over final-decade checkpoints, log-domain mean",
        }

    # E[S_T^(3/4)] growth
    s34_mean = (res["S_total"] ** 0.75).mean(axis=0)
    if cfg.h.delta > 0:
        try:
            slope, stderr, r2 = fit_loglog_slope(
                list(zip(cps.astype(float), s34_mean)), (lo, hi)
            )
        except DegenerateFit:
            if enforce_scale:
                raise
            slope = None
            rep.notes.append("S^(3/4) fit skipped: too few final-decade checkpoints")
        if slope is not None:
            rep.fits["S34_slope"] = {"slope": slope, "stderr": stderr, "r2": r2, "range": [lo, hi]}
            rep.verdicts["S34_growth"] = {
                "status": "pass" if abs(slope - 0.75) <= 0.1 else "fail",
                "observed": slope,
                "target": 0.75,
                "tolerance": 0.1,
                "provenance": "log-log fit of seed-mean S_T^(3/4) over the final decade",
            }
    else:
        rep.notes.append("delta = 0: S^(3/4) growth fit skipped (hypothesis delta > 0)")

    # sup of the second-moment mass: exactly constant over the final decade
    sup_cp = res["sup_sigma_v"][:, in_dec]
    if cfg.h.gamma > 1.0:
        constant = bool(np.all(sup_cp == sup_cp[:, :1]))
        rep.verdicts["sup_sigma_v_constant"] = {
            "status": "pass" if constant else "fail",
            "observed": {"max_spread": float(np.max(sup_cp.max(axis=1) - sup_cp.min(axis=1)))},
            "target": "running sup of sum_i v_{t,i} identical at all final-decade checkpoints",
            "provenance": "exact float comparison of running-max snapshots",
        }
    else:
        rep.notes.append("gamma <= 1: sup sigma_v constancy is informational (hypothesis gamma > 1)")
        rep.verdicts["sup_sigma_v_constant"] = {
            "status": "informational",
            "observed": {"max_spread": float(np.max(sup_cp.max(axis=1) - sup_cp.min(axis=1)))},
            "target": "see notes",
            "provenance": "exact float comparison of running-max snapshots",
        }
    if below:
        _mark_below_scale(rep, below)
    return rep


def sgd_anchor_experiment(
    cfg: ExperimentConfig, _shared: dict | None = None, enforce_scale: bool = True
) -> ExperimentReport:
    """Plain SGD with eta_t = 1/sqrt(t) as a harness sanity anchor.

    Noiseless quadratic: average squared gradient decays with slope near -1;
    noisy: the running average plateaus at a sigma^2-proportional floor.
    Informational only — it validates the harness, not the method under study.
    """
    res = _shared if _shared is not None else run_sweep(cfg, rule="sgd")
    rep = _base_report(cfg, "sgd_anchor", res, ["avg_gsq", "last_grad"])
    rep.notes.append("SGD baseline anchor; informational")
    cps = np.asarray(cfg.checkpoints, dtype=np.float64)
    mean_avg = res["avg_gsq"].mean(axis=0)
    try:
        slope, stderr, r2 = fit_loglog_slope(list(zip(cps, mean_avg)), _final_decade(cfg))
        rep.fits["avg_gsq_slope"] = {
            "slope": slope, "stderr": stderr, "r2": r2, "range": list(_final_decade(cfg)),
        }
    except DegenerateFit as e:
        rep.notes.append(f"slope fit skipped: {e}")
    rep.verdicts["anchor"] = {
        "status": "informational",
        "observed": mean_avg[-1],
        "provenance": "harness sanity anchor",
    }
    return rep


PROBES = {
    "rate": rate_experiment,
    "last_iterate": last_iterate_experiment,
    "l1": l1_experiment,
    "summability": summability_probe,
    "moment": moment_probe,
    "sgd_anchor": sgd_anchor_experiment,
}


def run_probes(cfg: ExperimentConfig, enforce_scale: bool = True) -> dict:
    """Run every probe named in cfg.probes, sharing one sweep where possible."""
    validate_config(cfg)
    need_dsum = "moment" in cfg.probes
    shared = None
    reports = {}
    for probe in cfg.probes:
        if probe == "sgd_anchor":
            reports[probe] = sgd_anchor_experiment(cfg, enforce_scale=enforce_scale)
            continue
        if shared is None:
            shared = run_sweep(cfg, collect_dsum=need_dsum)
        reports[probe] = PROBES[probe](cfg, _shared=shared, enforce_scale=enforce_scale)
    return reports
