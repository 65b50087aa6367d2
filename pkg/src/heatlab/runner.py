"""Experiment orchestration behind the CLI commands.

Each command builds its inputs from a validated :class:`RunConfig`, runs the
compute (optionally fanning ensemble members over a worker pool), reduces
results in seed order for bitwise-stable reports, and writes artifacts plus
a manifest.  A single trajectory is never parallelized.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import estimates, plots
from .config import RunConfig
from .dyadic import bernstein_ratio, grid_dyadic_scales, low_pass
from .estimates import decay_fit, duhamel_norm_check, fit_power_law, heat_smoothing_ratio
from .flow import BLOWUP, COMPLETED, CutoffSchedule, SolverConfig, default_sample_times, evolve, linear_propagate
from .initial_data import RoughDataSpec, decompose, mismatch_leak, sample_rough_radial
from .report import (
    ExperimentReport,
    MemberResult,
    Verdict,
    dump_json,
    write_manifest,
    write_snapshot,
    write_trajectory_csv,
)
from .spectral import Field, Grid, lebesgue_norm, random_field, rescale_field, sobolev_norm


@dataclass
class RunOutcome:
    exit_code: int
    summary: dict
    out_dir: Path


def _effective_jobs(cfg: RunConfig) -> int:
    jobs = cfg.jobs
    cap = os.environ.get("HEATLAB_THREADS")
    if cap:
        jobs = min(jobs, max(1, int(cap)))
    return max(1, jobs)


def _map_seeds(worker, args_list, jobs: int):
    """Ordered parallel map; results are reduced in seed order regardless of
    completion order so reports are bitwise stable."""
    if jobs <= 1 or len(args_list) <= 1:
        return [worker(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, args_list))


def _grid(cfg: RunConfig) -> Grid:
    return Grid(cfg.d, cfg.L, cfg.M)


def _data_spec(cfg: RunConfig, seed: int, gamma0: float | None = None, amplitude: float | None = None) -> RoughDataSpec:
    return RoughDataSpec(
        gamma0=cfg.gamma0 if gamma0 is None else gamma0,
        d=cfg.d,
        amplitude=cfg.amplitude if amplitude is None else amplitude,
        seed=seed,
        spectral_margin=cfg.spectral_margin,
        band=(cfg.k_lo, cfg.k_hi),
    )


def _solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(
        mu=cfg.mu,
        t_end=cfg.t_end,
        dt0=cfg.dt0,
        dt_ratio=cfg.dt_ratio,
        dt_max=cfg.dt_max,
        sample_times=tuple(default_sample_times(cfg.t_end, cfg.sample_count, cfg.t_first)),
        record_snapshots=cfg.snapshots,
        blowup_threshold=cfg.blowup_threshold,
    )


def _schedule(cfg: RunConfig) -> CutoffSchedule:
    if cfg.schedule_kind == "sqrt":
        return CutoffSchedule("sqrt", cfg.alpha)
    return CutoffSchedule()


def _fit_window(cfg: RunConfig) -> tuple[float, float]:
    lo = max(1.0, cfg.fit_window[0])
    hi = min(cfg.fit_window[1], 0.8 * cfg.t_end)
    return (lo, hi)


# ---------------------------------------------------------------- simulate


def run_simulate(cfg: RunConfig) -> RunOutcome:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    grid = _grid(cfg)
    h0 = sample_rough_radial(_data_spec(cfg, cfg.seed), grid)
    traj = evolve(h0, _solver_config(cfg), _schedule(cfg))

    write_trajectory_csv(traj, out / "trajectory.csv")
    for t, snap in traj.snapshots:
        write_snapshot(snap, t, out / f"snapshot-{t:.6g}.hlf")
    summary: dict = {"status": traj.status, "records": len(traj.records)}
    if traj.status != COMPLETED:
        summary["status_time"] = traj.status_time

    if traj.completed:
        window = _fit_window(cfg)
        in_window = int(np.sum((traj.times() >= window[0]) & (traj.times() <= window[1])))
        if in_window >= 8:
            fit = decay_fit(traj, window)
            summary["decay_fit"] = {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
                "window": fit.window,
            }
    if cfg.schedule_kind == "sqrt" and traj.completed:
        low = estimates.lowfreq_diagnostic(traj, cfg.alpha, cfg.gamma0)
        summary["lowfreq"] = {
            "implied_budget": low.implied_budget,
            "improved_implied_budget": low.improved_implied_budget,
            "y_alpha": low.y_alpha,
        }
    if cfg.emit_plots:
        fit_obj = None
        if "decay_fit" in summary:
            f = summary["decay_fit"]
            fit_obj = estimates.FitResult(f["slope"], f["intercept"], f["r_squared"], f["window"], 0)
        svg = plots.decay_plot_svg(traj.times(), traj.column("l2"), fit_obj, "L2 norm decay")
        plots.write_svg(svg, out / "decay.svg")

    exit_code = 0 if traj.status == COMPLETED else (2 if traj.status == BLOWUP else 1)
    write_manifest(out, cfg.digest, "simulate", started, summary, exit_code)
    return RunOutcome(exit_code, summary, out)


# ------------------------------------------------------------------ verify

_WORKER_CFG: RunConfig | None = None


def _verify_member(args) -> MemberResult:
    cfg, seed = args
    grid = _grid(cfg)
    member = MemberResult(seed=seed)
    h0 = sample_rough_radial(_data_spec(cfg, seed), grid)

    # Strichartz-type quotient of the linear flow against the rough norm
    member.ratios["strichartz"] = estimates.strichartz_ratio(h0, cfg.gamma0, horizon=None)
    if cfg.refine_m and cfg.refine_m != cfg.M:
        fine = Grid(cfg.d, cfg.L, cfg.refine_m)
        h0_fine = sample_rough_radial(_data_spec(cfg, seed), fine)
        member.ratios["strichartz_refined"] = estimates.strichartz_ratio(
            h0_fine, cfg.gamma0, horizon=None
        )

    # frequency-localized norm quotients on a generic random field
    f = random_field(grid, seed, k_cut=(2.0 / 3.0) * grid.k_max)
    scales = grid_dyadic_scales(grid, 2.0)
    bern = [bernstein_ratio(f, n, p=2.0, q=math.inf) for n in scales]
    for n, value in zip(scales, bern):
        member.ratios[f"bernstein_n{n:g}"] = value
    deriv = [bernstein_ratio(f, n, p=2.0, q=2.0, s=0.5) for n in scales]
    member.ratios["bernstein_deriv_max"] = max(deriv)
    member.ratios["bernstein_deriv_min"] = min(deriv)

    # mismatch and decomposition sweeps on the rough datum
    n_sweep = [n for n in grid_dyadic_scales(grid, 4.0) if n <= cfg.k_hi / 2.0]
    h0_norm = sobolev_norm(h0, -cfg.gamma0)
    if len(n_sweep) >= 2:
        leaks = [mismatch_leak(h0, n) for n in n_sweep]
        # keep the leading run of scales before the leak sinks into rounding noise
        floor = 1e-10 * h0_norm
        ok = []
        for n, v in zip(n_sweep, leaks):
            if v <= floor:
                break
            ok.append((n, v))
        if len(ok) >= 2:
            member.fits["mismatch_slope"] = fit_power_law(
                np.array([n for n, _ in ok]), np.array([v for _, v in ok])
            ).slope
        w0 = [decompose(h0, n, gamma0=cfg.gamma0) for n in n_sweep]
        member.fits["w0_slope"] = fit_power_law(
            np.array(n_sweep), np.array([r.w0_l2 for r in w0])
        ).slope
        member.ratios["v0_constant"] = max(
            r.v0_sobolev / h0_norm for r, n in zip(w0, n_sweep) if n >= 4.0
        )

    # heat-semigroup smoothing constants
    smoothing = []
    for t in (0.1, 1.0, 10.0):
        smoothing.append(heat_smoothing_ratio(f, t, 1.0, 2.0))
        smoothing.append(heat_smoothing_ratio(f, t, 2.0, math.inf))
    member.ratios["smoothing_max"] = max(smoothing)

    # forced-flow (Duhamel) quotients under a smooth random forcing
    times = np.concatenate([[0.0], np.geomspace(1e-3, 5.0, 47)])
    f0 = random_field(grid, seed, k_cut=grid.k_max / 2.0, tag=1)
    forcing = [linear_propagate(f0, 0.5 * t) for t in times]
    check = duhamel_norm_check(times, forcing)
    member.ratios["duhamel_sup_l2"] = check.sup_l2_quotient
    member.ratios["duhamel_critical"] = check.critical_quotient
    member.ratios["duhamel_h1"] = check.h1_quotient

    # radial weighted embedding across dilates of a band-limited projection
    # (dilating by lam needs content within k_max / lam on each axis)
    embed = []
    s_embed = 0.75
    alpha = cfg.d / 2.0 - s_embed
    n_embed = 2.0 ** math.floor(math.log2(grid.k_max / 8.0))
    f_embed = low_pass(h0, n_embed)
    lam = 1
    while lam <= 4 and grid.M % lam == 0 and grid.M // lam >= 16:
        g_f = rescale_field(f_embed, lam) if lam > 1 else f_embed
        embed.append(estimates.radial_embedding_ratio(g_f, alpha, math.inf, 2.0, s_embed))
        lam *= 2
    if embed:
        member.ratios["embedding_max"] = max(embed)
        member.ratios["embedding_min"] = min(embed)

    # exact lattice Hoelder consistency ||f||_2^2 <= ||f||_1 ||f||_inf
    l1 = lebesgue_norm(h0, 1.0)
    l2 = lebesgue_norm(h0, 2.0)
    linf = lebesgue_norm(h0, math.inf)
    member.ratios["holder_quotient"] = l2**2 / (l1 * linf)
    return member


def _aggregate(members: list[MemberResult], key: str, kind: str = "ratios") -> np.ndarray:
    vals = []
    for m in members:
        src = m.ratios if kind == "ratios" else m.fits
        if key in src:
            vals.append(src[key])
    return np.array(vals)


def run_verify(cfg: RunConfig) -> RunOutcome:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    grid = _grid(cfg)
    tol = cfg.tolerances

    seeds = cfg.seeds[: cfg.verify_members] if len(cfg.seeds) > 1 else tuple(
        range(cfg.seed, cfg.seed + cfg.verify_members)
    )
    members = _map_seeds(_verify_member, [(cfg, s) for s in seeds], _effective_jobs(cfg))
    members.sort(key=lambda m: m.seed)

    # Bernstein suite runs on its own larger ensemble of random fields
    bern_scales = grid_dyadic_scales(grid, 2.0)
    bern_sup = {n: 0.0 for n in bern_scales}
    deriv_lo, deriv_hi = math.inf, 0.0
    for seed in range(cfg.seed, cfg.seed + cfg.bernstein_members):
        f = random_field(grid, seed, k_cut=(2.0 / 3.0) * grid.k_max, tag=2)
        for n in bern_scales:
            bern_sup[n] = max(bern_sup[n], bernstein_ratio(f, n, p=2.0, q=math.inf))
            r = bernstein_ratio(f, n, p=2.0, q=2.0, s=0.5)
            deriv_lo, deriv_hi = min(deriv_lo, r), max(deriv_hi, r)

    verdicts: list[Verdict] = []

    def add(criterion_id: str, observed: float, bound: float, passed: bool, detail: str = ""):
        verdicts.append(Verdict(criterion_id, bool(passed), float(observed), float(bound), detail))

    spread = max(bern_sup.values()) / min(bern_sup.values())
    add(
        "bernstein-spread",
        spread,
        tol["bernstein_spread_max"],
        spread < tol["bernstein_spread_max"],
        f"sup ratios over N={[f'{n:g}' for n in bern_scales]}",
    )
    add(
        "bernstein-derivative-band",
        deriv_hi,
        2**0.5,
        deriv_hi <= 2**0.5 * (1 + 1e-9) and deriv_lo >= 2**-0.5 * (1 - 1e-9),
        f"range [{deriv_lo:.6f}, {deriv_hi:.6f}], admissible [2^-1/2, 2^1/2]",
    )

    mismatch_slopes = _aggregate(members, "mismatch_slope", "fits")
    if mismatch_slopes.size:
        worst = float(mismatch_slopes.max())
        add("mismatch-slope", worst, tol["mismatch_slope_max"], worst <= tol["mismatch_slope_max"])
    w0_slopes = _aggregate(members, "w0_slope", "fits")
    if w0_slopes.size:
        worst = float(w0_slopes.max())
        bound = cfg.gamma0 + tol["w0_slope_margin"]
        add("w0-slope", worst, bound, worst <= bound)
    v0_consts = _aggregate(members, "v0_constant")
    if v0_consts.size:
        worst = float(v0_consts.max())
        add("v0-constant", worst, tol["v0_constant_max"], worst < tol["v0_constant_max"])

    stri = _aggregate(members, "strichartz")
    spread = float(stri.max() / np.median(stri))
    add("strichartz-spread", spread, tol["strichartz_spread_max"], spread < tol["strichartz_spread_max"])
    stri_fine = _aggregate(members, "strichartz_refined")
    if stri_fine.size == stri.size and stri.size:
        rel = float(np.max(np.abs(stri_fine - stri) / stri))
        add("strichartz-refinement", rel, tol["strichartz_refine_rel"], rel <= tol["strichartz_refine_rel"])

    smooth = _aggregate(members, "smoothing_max")
    add("heat-smoothing", float(smooth.max()), tol["smoothing_constant_max"], smooth.max() < tol["smoothing_constant_max"])

    duh = np.concatenate(
        [_aggregate(members, k) for k in ("duhamel_sup_l2", "duhamel_critical", "duhamel_h1")]
    )
    add("duhamel-bounded", float(duh.max()), tol["duhamel_quotient_max"], duh.max() < tol["duhamel_quotient_max"])

    emb_hi = _aggregate(members, "embedding_max")
    emb_lo = _aggregate(members, "embedding_min")
    if emb_hi.size:
        spread = float(emb_hi.max() / max(emb_lo.min(), 1e-300))
        add("radial-embedding-dilates", spread, tol["embedding_spread_max"], spread < tol["embedding_spread_max"])

    hold = _aggregate(members, "holder_quotient")
    add("holder-consistency", float(hold.max()), 1.0, bool(hold.max() <= 1.0 + 1e-12))

    report = ExperimentReport(
        config_digest=cfg.digest,
        experiment="verify",
        per_member=members,
        aggregates={
            "strichartz": {"max": float(stri.max()), "median": float(np.median(stri))},
            "bernstein_sup_by_scale": {f"{n:g}": bern_sup[n] for n in bern_scales},
            "slopes": {
                "mismatch_max": float(mismatch_slopes.max()) if mismatch_slopes.size else None,
                "w0_max": float(w0_slopes.max()) if w0_slopes.size else None,
            },
        },
        verdicts=verdicts,
    )
    dump_json(report, out / "report.json")

    if cfg.emit_plots:
        svg = plots.ratio_plot_svg(
            list(bern_sup), list(bern_sup.values()), "Bernstein sup ratio vs N"
        )
        plots.write_svg(svg, out / "bernstein.svg")

    exit_code = 0 if report.all_passed else 1
    summary = {
        "verdicts_total": len(verdicts),
        "verdicts_passed": sum(v.passed for v in verdicts),
        "failed": [v.criterion_id for v in verdicts if not v.passed],
    }
    write_manifest(out, cfg.digest, "verify", started, summary, exit_code)
    return RunOutcome(exit_code, summary, out)


# ------------------------------------------------------------- decay sweep


def _sweep_member(args) -> dict:
    cfg, gamma0, seed, mu, amplitude = args
    grid = _grid(cfg)
    h0 = sample_rough_radial(_data_spec(cfg, seed, gamma0=gamma0, amplitude=amplitude), grid)
    solver = SolverConfig(
        mu=mu,
        t_end=cfg.t_end,
        dt0=cfg.dt0,
        dt_ratio=cfg.dt_ratio,
        dt_max=cfg.dt_max,
        sample_times=tuple(default_sample_times(cfg.t_end, cfg.sample_count, cfg.t_first)),
        blowup_threshold=cfg.blowup_threshold,
    )
    traj = evolve(h0, solver)
    entry = {"gamma0": gamma0, "seed": seed, "mu": mu, "status": traj.status}
    if traj.completed:
        fit = decay_fit(traj, _fit_window(cfg))
        entry.update(slope=fit.slope, r_squared=fit.r_squared)
    return entry


def run_decay_sweep(cfg: RunConfig) -> RunOutcome:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    tol = cfg.tolerances
    gammas = cfg.gamma0_list or (cfg.gamma0,)

    tasks = [(cfg, g0, seed, -1, cfg.amplitude) for g0 in gammas for seed in cfg.seeds]
    if cfg.include_focusing:
        tasks += [(cfg, g0, seed, +1, cfg.focusing_amplitude) for g0 in gammas for seed in cfg.seeds]
    rows = _map_seeds(_sweep_member, tasks, _effective_jobs(cfg))
    rows.sort(key=lambda r: (r["gamma0"], r["mu"], r["seed"]))

    verdicts: list[Verdict] = []
    for g0 in gammas:
        for mu in sorted({r["mu"] for r in rows}):
            sub = [r for r in rows if r["gamma0"] == g0 and r["mu"] == mu]
            if not sub:
                continue
            label = f"decay-gamma{g0:g}-mu{mu:+d}"
            if any(r["status"] != COMPLETED for r in sub):
                verdicts.append(Verdict(label, False, math.nan, 0.0, "run did not complete"))
                continue
            slopes = np.array([r["slope"] for r in sub])
            target = -g0 / 2.0
            slope_tol = tol["decay_slope_tol_zero"] if g0 == 0 else tol["decay_slope_tol"]
            worst = float(np.max(np.abs(slopes - target)))
            ok = worst <= slope_tol
            detail = f"target {target:+.4f}"
            if g0 > 0:
                r2_min = float(min(r["r_squared"] for r in sub))
                ok = ok and r2_min >= tol["decay_r2_min"]
                detail += f", r2_min {r2_min:.4f}"
            verdicts.append(Verdict(label, bool(ok), worst, slope_tol, detail))

    lines = ["gamma0,mu,seed,status,slope,r_squared"]
    for r in rows:
        lines.append(
            f"{r['gamma0']!r},{r['mu']},{r['seed']},{r['status']},"
            f"{r.get('slope', math.nan)!r},{r.get('r_squared', math.nan)!r}"
        )
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")

    report = ExperimentReport(
        config_digest=cfg.digest,
        experiment="decay-sweep",
        aggregates={"rows": rows},
        verdicts=verdicts,
    )
    dump_json(report, out / "report.json")

    if cfg.emit_plots:
        defoc = [r for r in rows if r["mu"] == -1 and r["status"] == COMPLETED and r["gamma0"] > 0]
        if defoc:
            svg = plots.ratio_plot_svg(
                [r["gamma0"] for r in defoc],
                [-r["slope"] for r in defoc],
                "measured decay exponent vs gamma0",
            )
            plots.write_svg(svg, out / "sweep.svg")

    exit_code = 0 if all(v.passed for v in verdicts) else 1
    summary = {
        "verdicts_total": len(verdicts),
        "verdicts_passed": sum(v.passed for v in verdicts),
        "failed": [v.criterion_id for v in verdicts if not v.passed],
    }
    write_manifest(out, cfg.digest, "decay-sweep", started, summary, exit_code)
    return RunOutcome(exit_code, summary, out)


# -------------------------------------------------------------- decompose


def run_decompose(cfg: RunConfig) -> RunOutcome:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    grid = _grid(cfg)
    tol = cfg.tolerances

    h0 = sample_rough_radial(_data_spec(cfg, cfg.seed), grid)
    h0_norm = sobolev_norm(h0, -cfg.gamma0)
    n_sweep = [n for n in grid_dyadic_scales(grid, 2.0) if n <= cfg.k_hi]
    rows = []
    for n in n_sweep:
        res = decompose(h0, n, gamma0=cfg.gamma0)
        rows.append(
            {
                "n": n,
                "w0_l2": res.w0_l2,
                "v0_sobolev": res.v0_sobolev,
                "mismatch_leak": mismatch_leak(h0, n),
                "support_ok": res.support_ok,
            }
        )

    verdicts: list[Verdict] = []
    leak_pts = [(r["n"], r["mismatch_leak"]) for r in rows if r["n"] >= 4 and r["mismatch_leak"] > 1e-12 * h0_norm]
    if len(leak_pts) >= 2:
        slope = fit_power_law(np.array([p[0] for p in leak_pts]), np.array([p[1] for p in leak_pts])).slope
        verdicts.append(
            Verdict("mismatch-slope", slope <= tol["mismatch_slope_max"], slope, tol["mismatch_slope_max"])
        )
    w0_slope = fit_power_law(
        np.array([r["n"] for r in rows]), np.array([r["w0_l2"] for r in rows])
    ).slope
    bound = cfg.gamma0 + tol["w0_slope_margin"]
    verdicts.append(Verdict("w0-slope", w0_slope <= bound, w0_slope, bound))
    v0_const = max(r["v0_sobolev"] / h0_norm for r in rows if r["n"] >= 4)
    verdicts.append(
        Verdict("v0-constant", v0_const < tol["v0_constant_max"], v0_const, tol["v0_constant_max"])
    )

    lines = ["n,w0_l2,v0_sobolev,mismatch_leak,support_ok"]
    for r in rows:
        lines.append(
            f"{r['n']!r},{r['w0_l2']!r},{r['v0_sobolev']!r},{r['mismatch_leak']!r},{int(r['support_ok'])}"
        )
    (out / "decomposition.csv").write_text("\n".join(lines) + "\n")

    report = ExperimentReport(
        config_digest=cfg.digest,
        experiment="decompose",
        aggregates={"rows": rows, "h0_norm": h0_norm},
        verdicts=verdicts,
    )
    dump_json(report, out / "report.json")
    if cfg.emit_plots:
        svg = plots.ratio_plot_svg(
            [r["n"] for r in rows],
            [max(r["mismatch_leak"], 1e-300) for r in rows],
            "mismatch leak vs N",
            slope=-1.0,
        )
        plots.write_svg(svg, out / "mismatch.svg")

    exit_code = 0 if all(v.passed for v in verdicts) else 1
    summary = {
        "verdicts_total": len(verdicts),
        "verdicts_passed": sum(v.passed for v in verdicts),
        "failed": [v.criterion_id for v in verdicts if not v.passed],
    }
    write_manifest(out, cfg.digest, "decompose", started, summary, exit_code)
    return RunOutcome(exit_code, summary, out)


COMMANDS = {
    "simulate": run_simulate,
    "verify": run_verify,
    "decay-sweep": run_decay_sweep,
    "decompose": run_decompose,
}
