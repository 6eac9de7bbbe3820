"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Random markets come from ``oracle.sample_params`` with fixed seeds, so every
run sees the same draws. Draws whose closed-form wholesale prices are
negative are skipped: the brute-force searches cover nonnegative prices only.
"""

import csv
import io
import subprocess
import sys
import time
import warnings
from functools import lru_cache

import numpy as np

from mvno_pricing import cli, game, oracle, solvers
from mvno_pricing.market import derive
from mvno_pricing.oracle import GridSpec
from mvno_pricing.solvers import NegativePriceWarning

SINGLE_GRID = GridSpec(201, 4)
FS_GRID = GridSpec(201, 6)
PS_GRID = GridSpec(2001, 2)


def report(capsys, number, passed, text):
    with capsys.disabled():
        print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}")


def quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativePriceWarning)
        return fn(*args, **kwargs)


def nonnegative(sol):
    return sol.feasible and all(w is None or w >= 0 for w in sol.w)


# -- shared draws -------------------------------------------------------------


@lru_cache(maxsize=None)
def single_partner_draws():
    rng = np.random.default_rng(101)
    out = []
    while len(out) < 200:
        params = oracle.sample_params(rng)
        partner = 1 + len(out) % 2
        sol = quiet(solvers.solve_part_nonpart, params, partner)
        if nonnegative(sol):
            out.append((params, partner, sol))
    return tuple(out)


@lru_cache(maxsize=None)
def sequential_draws():
    rng = np.random.default_rng(202)
    out, n_boundary, n_interior = [], 0, 0
    while n_boundary < 50 or n_interior < 50:
        params = oracle.sample_params(rng)
        boundary = params.r0 <= solvers.thresholds(params).r_bar_0
        if (boundary and n_boundary >= 50) or (not boundary and n_interior >= 50):
            continue
        leader = 1 + len(out) % 2
        sol = quiet(solvers.solve_part_part_fs, params, leader)
        if not nonnegative(sol):
            continue
        out.append((params, leader, sol))
        n_boundary += boundary
        n_interior += not boundary
    return tuple(out)


@lru_cache(maxsize=None)
def simultaneous_draws():
    rng = np.random.default_rng(303)
    out = []
    while len(out) < 100:
        params = oracle.sample_params(rng)
        if len(out) % 3 == 0:
            r_flat = solvers.thresholds(params).r_flat_0
            if r_flat < 0:
                continue
            params = params.replace(r0=r_flat)
        sol = quiet(solvers.solve_part_part_ps, params)
        if sol.feasible and not nonnegative(sol):
            continue
        out.append((params, sol))
    return tuple(out)


# -- criteria -------------------------------------------------------------------


def test_criterion_1_single_partner_oracle(capsys):
    start = time.perf_counter()
    draws = single_partner_draws()
    failures = []
    for k, (params, partner, _) in enumerate(draws):
        v = oracle.part_nonpart_oracle(params, partner, SINGLE_GRID)
        if not v.passed:
            failures.append((k, v.max_gap))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed <= 60.0
    report(capsys, 1, ok, f"single-partner oracle agrees on {len(draws) - len(failures)}/{len(draws)} draws "
                          f"in {elapsed:.1f}s (limit 60s)")
    assert not failures, failures[:5]
    assert elapsed <= 60.0


def test_criterion_2_sequential_oracle(capsys):
    draws = sequential_draws()
    failures, pinned = [], 0
    for k, (params, leader, sol) in enumerate(draws):
        v = oracle.bilevel_fs_oracle(params, leader, FS_GRID)
        ok = v.passed
        if sol.boundary:
            pinned += 1
            ok = ok and abs(v.oracle["p0"] - params.p2) <= 1e-6 * params.p2
            ok = ok and abs(sol.p0 - params.p2) <= 1e-6 * params.p2
        if not ok:
            failures.append((k, v.max_gap, v.detail))
    leaders = {leader for _, leader, _ in draws}
    ok = not failures and pinned == 50 and leaders == {1, 2}
    report(capsys, 2, ok, f"sequential oracle agrees on {len(draws) - len(failures)}/{len(draws)} draws "
                          f"({pinned} boundary, {len(draws) - pinned} interior, leaders {sorted(leaders)})")
    assert ok, failures[:5]


def test_criterion_3_simultaneous_trichotomy(capsys):
    draws = simultaneous_draws()
    counts, failures = {}, []
    for k, (params, sol) in enumerate(draws):
        v = oracle.simultaneous_ps_oracle(params, PS_GRID)
        cls = "none" if not sol.feasible else ("boundary" if sol.boundary else "interior")
        counts[cls] = counts.get(cls, 0) + 1
        if not v.passed:
            failures.append((k, cls, v.detail))
    ok = not failures and set(counts) == {"none", "boundary", "interior"}
    report(capsys, 3, ok, f"simultaneous classification agrees on {len(draws) - len(failures)}/{len(draws)} draws "
                          f"({', '.join(f'{c}: {n}' for c, n in sorted(counts.items()))})")
    assert ok, failures[:5]


def test_criterion_4_first_order_conditions(capsys):
    failures, checked, identities = [], 0, 0
    for params, partner, sol in single_partner_draws():
        checked += 1
        if not oracle.kkt_residuals_single(params, partner, sol.w[partner - 1]).satisfied:
            failures.append(("single", params))
    for params, leader, sol in sequential_draws():
        checked += 1
        if not oracle.kkt_residuals_fs(params, leader, sol.w).satisfied:
            failures.append(("sequential", params))
    for params, sol in simultaneous_draws():
        points = [sol.w] if sol.feasible else [solvers.point_wA(params), solvers.point_wB(params)]
        for pt in points:
            checked += 1
            rep = oracle.kkt_residuals_ps(params, pt)
            ok = rep.satisfied
            if rep.on_boundary:
                identities += 1
                ok = ok and rep.multiplier_identity_gap <= 1e-6
            if not ok:
                failures.append(("simultaneous", params))
    ok = not failures
    report(capsys, 4, ok, f"first-order conditions hold at {checked - len(failures)}/{checked} optima; "
                          f"multiplier identity checked at {identities} boundary points")
    assert ok, failures[:3]


def test_criterion_5_curvature_constants(capsys):
    rng = np.random.default_rng(505)
    names = ["mvno retail", "single-partner wholesale", "sequential leader 1", "sequential leader 2",
             "simultaneous 1", "simultaneous 2"]
    hits = dict.fromkeys(names, 0)
    ratios = {k: [] for k in names}
    n = 50
    for _ in range(n):
        params = oracle.sample_params(rng)
        d = derive(params)
        e, s, a = params.eps, d.s, 1.0 - params.gamma
        stated = {
            "mvno retail": -2.0 * e * s,
            "single-partner wholesale": -e * a * a * s / 2.0,
            "sequential leader 1": -e * a * a * d.pi1**2 * s / 2.0,
            "sequential leader 2": -e * a * a * d.pi2**2 * s / 2.0,
            "simultaneous 1": -e * a * a * d.pi1**2 * s,
            "simultaneous 2": -e * a * a * d.pi2**2 * s,
        }
        c1, c2 = oracle.curvatures(params, 1), oracle.curvatures(params, 2)
        fd = {
            "mvno retail": c1["mvno_retail"][0],
            "single-partner wholesale": c1["single_wholesale"][0],
            "sequential leader 1": c1["fs_leader"][0],
            "sequential leader 2": c2["fs_leader"][0],
            "simultaneous 1": c1["ps_1"][0],
            "simultaneous 2": c1["ps_2"][0],
        }
        for k in names:
            ratios[k].append(fd[k] / stated[k])
            hits[k] += abs(fd[k] - stated[k]) <= 1e-6 * abs(stated[k])
    ok = all(v == n for v in hits.values())
    parts = [f"{k} {hits[k]}/{n} (median ratio {np.median(ratios[k]):.6f})" for k in names]
    report(capsys, 5, ok, "finite-difference curvature vs stated constants: " + "; ".join(parts))
    assert ok, {k: v for k, v in hits.items() if v < n}


def test_criterion_6_threshold_equivalences(capsys):
    rng = np.random.default_rng(606)
    flips = single = seq = 0
    identity_worst = 0.0
    failures = []
    for _ in range(100):
        params = oracle.sample_params(rng)
        th = solvers.thresholds(params)
        d = derive(params)
        lhs = th.r_bar_0 - th.r_flat_0
        rhs = 2.0 * d.q_total / d.s - 2.0 * params.p2
        scale = max(abs(th.r_bar_0), abs(th.r_flat_0), 2.0 * d.q_total / d.s, 2.0 * params.p2)
        identity_worst = max(identity_worst, abs(lhs - rhs) / (scale * np.finfo(float).eps))
        for i in (1, 2):
            r = th.r_bar_i0(i)
            if r <= 0:
                continue
            single += 1
            delta = 1e-6 * max(1.0, r)
            below = solvers.solve_part_nonpart(params.replace(r0=max(0.0, r - delta)), i)
            above = solvers.solve_part_nonpart(params.replace(r0=r + delta), i)
            # the stationary price overshoots p2 exactly below the threshold
            over_below = solvers.p0_tilde_single(params.replace(r0=max(0.0, r - delta)),
                                                 solvers.w_tilde_single(params.replace(r0=max(0.0, r - delta)), i))
            over_above = solvers.p0_tilde_single(params.replace(r0=r + delta),
                                                 solvers.w_tilde_single(params.replace(r0=r + delta), i))
            ok = below.boundary and not above.boundary and over_below > params.p2 and over_above < params.p2
            flips += ok
            if not ok:
                failures.append(("single", i, r))
        r = th.r_bar_0
        if r > 0:
            for leader in (1, 2):
                seq += 1
                delta = 1e-6 * max(1.0, r)
                lo, hi = params.replace(r0=max(0.0, r - delta)), params.replace(r0=r + delta)
                below = quiet(solvers.solve_part_part_fs, lo, leader)
                above = quiet(solvers.solve_part_part_fs, hi, leader)
                p_lo = solvers.p0_tilde_pair(lo, *solvers.point_w_tilde(lo, leader))
                p_hi = solvers.p0_tilde_pair(hi, *solvers.point_w_tilde(hi, leader))
                ok = below.boundary and above.p0 < params.p2 and p_lo > params.p2 and p_hi < params.p2
                flips += ok
                if not ok:
                    failures.append(("sequential", leader, r))
    ok = not failures and identity_worst <= 16.0
    report(capsys, 6, ok, f"branches flip at the threshold in {flips}/{single + seq} sweeps "
                          f"({single} single-partner, {seq} sequential); threshold-gap identity within "
                          f"{identity_worst:.1f} ulp")
    assert ok, failures[:5]


def test_criterion_7_partnership_equilibrium(capsys):
    rng = np.random.default_rng(707)
    n = pp_ne = loss_ok = sub = unique = 0
    failures = []
    while n < 200:
        params = oracle.sample_params(rng)
        th = solvers.thresholds(params)
        cap = th.r_bar_0 if n % 2 == 0 else min(th.r_bar_0, th.r_bar_20)
        if cap < 0:
            continue
        params = params.replace(r0=float(rng.uniform(0.0, 1.0)) * cap)
        rep = quiet(game.partnership_report, params)
        if not rep.fs_prices_above_cost:
            continue
        n += 1
        pp_ne += ("Part", "Part") in rep.equilibria
        loss_ok += rep.customer_loss_holds
        if ("Part", "Part") not in rep.equilibria or not rep.customer_loss_holds:
            failures.append(params)
        if params.r0 <= min(th.r_bar_0, th.r_bar_20):
            sub += 1
            if rep.equilibria == [("Part", "Part")]:
                unique += 1
            else:
                failures.append(params)
    ok = not failures and sub > 0
    report(capsys, 7, ok, f"(Part, Part) is an equilibrium in {pp_ne}/{n} draws, customer-loss comparison holds "
                          f"in {loss_ok}/{n}; unique in {unique}/{sub} draws below both thresholds")
    assert ok, failures[:3]


def _read_csv(path):
    text = path.read_text()
    rows = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(rows))))


def _series(rows):
    out = {}
    for r in rows:
        out.setdefault((r["scenario"], r["leader"]), []).append(r)
    return out


def test_criterion_8_reference_trends(tmp_path, capsys):
    g_path, r_path = tmp_path / "gamma.csv", tmp_path / "r0.csv"
    assert cli.main(["sweep", "--scenario", "all", "--sweep", "gamma", "--from", "0", "--to", "0.999",
                     "--steps", "1000", "--out", str(g_path)]) == 0
    assert cli.main(["sweep", "--scenario", "all", "--sweep", "r0", "--from", "0", "--to", "60",
                     "--steps", "121", "--out", str(r_path)]) == 0
    limits, problems = [], []
    for key, rows in _series(_read_csv(g_path)).items():
        for col in ("scaled_w1", "scaled_w2"):
            vals = [(float(r["sweep_value"]), float(r[col])) for r in rows if r[col] != ""]
            if len(vals) < 3 or vals[-1][0] < 0.999:
                continue
            (_, v2), (_, v1), (_, v0) = vals[-3:]
            step_last, step_prev = abs(v0 - v1), abs(v1 - v2)
            converging = v0 > 0 and step_last <= 1e-3 * abs(v0) and step_last <= step_prev * (1 + 1e-6) + 1e-12
            limits.append(f"{key[0]}{'/' + key[1] if key[1] else ''} {col}={v0:.4g}")
            if not converging:
                problems.append((key, col, vals[-3:]))
    monotone = 0
    for key, rows in _series(_read_csv(r_path)).items():
        prices = [float(r["p0"]) for r in rows if r["p0"] != ""]
        if all(b <= a + 1e-9 for a, b in zip(prices, prices[1:])):
            monotone += 1
        else:
            problems.append((key, "p0 not non-increasing"))
    n_series = len(_series(_read_csv(r_path)))
    ok = not problems and limits and monotone == n_series
    report(capsys, 8, ok, f"(1-gamma)*w settles at a positive limit for {len(limits)} price series "
                          f"({', '.join(limits)}); p0 non-increasing in r0 for {monotone}/{n_series} scenarios")
    assert ok, problems


def test_criterion_9_deterministic_output(tmp_path, capsys):
    outputs = []
    for k in range(2):
        path = tmp_path / f"run{k}.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "mvno_pricing.cli", "sweep", "--scenario", "all", "--sweep", "r0",
             "--from", "0", "--to", "50", "--steps", "26", "--out", str(path)],
            capture_output=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(path.read_bytes())
    ok = outputs[0] == outputs[1] and len(outputs[0]) > 0
    report(capsys, 9, ok, f"two independent sweep runs produced byte-identical CSV ({len(outputs[0])} bytes)")
    assert ok
