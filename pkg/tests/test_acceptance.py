"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The expensive Monte Carlo batches are shared across criteria through
module-scoped fixtures; run with ``pytest tests/test_acceptance.py -v -s``
to watch the per-criterion lines appear.
"""
import numpy as np
import pytest

from ris_anm_sim import crlb as crlb_mod
from ris_anm_sim.channel import sample_scene, steering
from ris_anm_sim.control import coupling_power, design_phases
from ris_anm_sim.estimation import angle_differences, freqs_from_toeplitz, gain_products
from ris_anm_sim.exceptions import ConvergenceError, IllConditionedError
from ris_anm_sim.harness import ExperimentConfig, run_trial
from ris_anm_sim.sounding import SoundingConfig, make_training_matrix, overhead_hybrid


def report(criterion, passed, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line, flush=True)
    assert passed, line


def collect_trials(config, n_trials, grid_index=0):
    """Run trials, splitting successful results from counted failures."""
    rows, results, failures = [], [], []
    for trial in range(n_trials):
        try:
            row, rec, _, result = run_trial(config, grid_index, trial)
        except (ConvergenceError, IllConditionedError) as err:
            failures.append(err)
            continue
        rows.append(row)
        results.append(result)
    return rows, results, failures


class SolverHealth:
    """Accumulates certificate and residual checks across criteria 4-7."""

    instances = []
    convergence_failures = []

    @classmethod
    def track(cls, results, failures):
        cls.instances.extend(
            (sol.min_eigenvalue, sol.gen_left, sol.gen_right, sol.h_hat,
             sol.primal_residual, sol.dual_residual)
            for res in results
            for sol in (res.stage1, res.stage2)
        )
        cls.convergence_failures.extend(
            err for err in failures if isinstance(err, ConvergenceError)
        )


@pytest.fixture(scope="module")
def noiseless_batch():
    config = ExperimentConfig.from_named_setup(
        "setup2", p_t_dbm=(20.0,), d_x=(15.0,), trials=1, seed=1001,
        noiseless_oracle=True, compute_crlb=False,
    )
    rows, results, failures = collect_trials(config, 100)
    SolverHealth.track(results, failures)
    return rows, results, failures


@pytest.fixture(scope="module")
def power_batches():
    batches = {}
    for p in (0.0, 10.0, 20.0):
        config = ExperimentConfig.from_named_setup(
            "setup2", p_t_dbm=(p,), d_x=(15.0,), trials=1, seed=2002,
        )
        rows, results, failures = collect_trials(config, 100)
        SolverHealth.track(results, failures)
        batches[p] = (rows, results, failures)
    return batches


@pytest.fixture(scope="module")
def distance_batch():
    config = ExperimentConfig.from_named_setup(
        "setup3", n_r=32, m=8, n_rfr=8, p_t_dbm=(10.0,), d_x=(20.0, 50.0, 80.0),
        d_t=100.0, trials=1, seed=3003,
    )
    batches = {}
    for g, (_, dx) in enumerate(config.grid()):
        rows, results, failures = collect_trials(config, 50, grid_index=g)
        SolverHealth.track(results, failures)
        batches[dx] = (rows, results, failures)
    return batches


def test_criterion_01_overhead_exactness():
    expected = {"setup1": 40, "setup2": 40, "setup3": 56, "setup4": 56}
    got = {}
    for name, t_h in expected.items():
        c = ExperimentConfig.from_named_setup(name)
        cfg = SoundingConfig(n_b=c.n_b, n_r=c.n_r, n_m=c.n_m, m=c.m, k=c.k,
                             t=c.t, n_cb=c.n_cb, n_rfb=c.n_rfb, n_rfr=c.n_rfr)
        got[name] = overhead_hybrid(cfg)
    report(1, got == expected, f"training overheads {got} == {expected}")


def test_criterion_02_fim_correctness():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        scene1 = sample_scene(rng, 2, 16, 32)
        pilots = make_training_matrix(16, 8, rng)
        sels = np.vstack([
            np.eye(32)[np.sort(rng.choice(32, 2, replace=False))] for _ in range(5)
        ]).astype(complex)
        s1, sigma2 = 0.8, 0.03

        def mean1(aod, aoa, gains):
            return crlb_mod.stage1_mean(aod, aoa, gains, pilots, sels, s1)

        rep1 = crlb_mod.fim_stage1(scene1.aod, scene1.aoa, scene1.gains,
                                   pilots, sels, s1, sigma2)
        fd1 = crlb_mod.fim_from_jacobian(
            crlb_mod.fd_jacobian(mean1, scene1.aod, scene1.aoa, scene1.gains), sigma2
        )
        worst = max(worst, np.linalg.norm(rep1.fim - fd1) / np.linalg.norm(rep1.fim))

        scene2 = sample_scene(rng, 2, 32, 16)
        combiner = (np.exp(1j * rng.uniform(0, 2 * np.pi, (16, 8))) / 4.0)
        reflected = rng.standard_normal((32, 40)) + 1j * rng.standard_normal((32, 40))
        s2 = 0.15

        def mean2(aod, aoa, gains):
            return crlb_mod.stage2_mean(aod, aoa, gains, reflected, combiner, s2)

        rep2 = crlb_mod.fim_stage2(scene2.aod, scene2.aoa, scene2.gains,
                                   reflected, combiner, s2, sigma2)
        fd2 = crlb_mod.fim_from_jacobian(
            crlb_mod.fd_jacobian(mean2, scene2.aod, scene2.aoa, scene2.gains), sigma2
        )
        worst = max(worst, np.linalg.norm(rep2.fim - fd2) / np.linalg.norm(rep2.fim))
    report(2, worst < 1e-4,
           f"worst analytic-vs-FD FIM relative error {worst:.2e} < 1e-4 over 100 scenes")


def test_criterion_03_crlb_power_law():
    rng = np.random.default_rng(7)
    scene = sample_scene(rng, 2, 16, 32)
    pilots = make_training_matrix(16, 8, rng)
    sels = np.vstack([
        np.eye(32)[np.sort(rng.choice(32, 2, replace=False))] for _ in range(5)
    ]).astype(complex)
    sigma2 = 5e-13
    powers_dbm = np.array([0.0, 5.0, 10.0, 15.0, 20.0])
    powers = 10.0 ** ((powers_dbm - 30.0) / 10.0)
    bounds = []
    for p in powers:
        rep = crlb_mod.fim_stage1(scene.aod, scene.aoa, scene.gains, pilots, sels,
                                  np.sqrt(p) * 1.4e-5, sigma2)
        bounds.append(np.concatenate([
            crlb_mod.angle_bounds(rep, "aod"),
            crlb_mod.angle_bounds(rep, "aoa"),
            crlb_mod.gain_bounds(rep),
        ]))
    logs = np.log10(np.array(bounds))
    slopes = np.diff(logs, axis=0) / np.diff(np.log10(powers))[:, None]
    err = np.max(np.abs(slopes + 1.0))
    report(3, err < 1e-6,
           f"every bound falls 10 dB per decade of power (slope error {err:.2e})")


def test_criterion_04_noiseless_oracle_recovery(noiseless_batch):
    rows, results, failures = noiseless_batch
    hits = 0
    config = ExperimentConfig.from_named_setup(
        "setup2", p_t_dbm=(20.0,), d_x=(15.0,), trials=1, seed=1001,
        noiseless_oracle=True, compute_crlb=False,
    )
    for row, result in zip(rows, results):
        # regenerate the trial's scene from its substream to score per path
        from ris_anm_sim.harness import _sounding_config, _trial_rng

        rng = _trial_rng(config.seed, 0, int(row["trial"]))
        cfg = _sounding_config(config, 20.0)
        scene_mr = sample_scene(rng, 2, cfg.n_m, cfg.n_r)
        scene_rb = sample_scene(rng, 2, cfg.n_r, cfg.n_b)
        ang_err = max(
            np.max(np.abs(result.theta_mr - scene_mr.aod)),
            np.max(np.abs(result.phi_mr - scene_mr.aoa)),
            np.max(np.abs(result.theta_rb - scene_rb.aod)),
            np.max(np.abs(result.phi_rb - scene_rb.aoa)),
        )
        gain_err = max(
            np.max(np.abs(result.rho_mr - scene_mr.gains) / np.abs(scene_mr.gains)),
            np.max(np.abs(result.rho_rb - scene_rb.gains) / np.abs(scene_rb.gains)),
        )
        if ang_err < 1e-5 and gain_err < 1e-4:
            hits += 1
    report(4, hits >= 95,
           f"{hits}/100 noiseless trials hit angle<1e-5 rad and gain rel<1e-4 "
           f"({len(failures)} failures)")


def test_criterion_05_estimator_above_bound(power_batches):
    rows, _, _ = power_batches[20.0]
    pairs = [
        ("mse_theta_mr", "crlb_theta_mr"), ("mse_phi_mr", "crlb_phi_mr"),
        ("mse_rho_mr", "crlb_rho_mr"), ("mse_theta_rb", "crlb_theta_rb"),
        ("mse_phi_rb", "crlb_phi_rb"), ("mse_rho_rb", "crlb_rho_rb"),
    ]
    ratios = {}
    for mse_key, crlb_key in pairs:
        per_scene = [r[mse_key] / r[crlb_key] for r in rows]
        ratios[mse_key[4:]] = float(np.mean(per_scene))
    passed = all(v >= 0.95 for v in ratios.values())
    detail = ", ".join(f"{k}={v:.2f}" for k, v in ratios.items())
    report(5, passed, f"per-scene MSE/CRLB ratios at 20 dBm all >= 0.95: {detail}")


def test_criterion_06_power_trend(power_batches):
    medians = {}
    for p, (rows, _, failures) in power_batches.items():
        medians[p] = float(np.median([r["mse_theta_mr"] for r in rows]))
    passed = medians[0.0] > medians[10.0] > medians[20.0]
    report(6, passed,
           "median first-hop departure MSE strictly decreasing in power: "
           + ", ".join(f"{p:.0f}dBm={medians[p]:.3e}" for p in sorted(medians)))


def test_criterion_07_distance_trend(distance_batch):
    medians = {}
    for dx, (rows, _, failures) in distance_batch.items():
        medians[dx] = float(np.median([r["mse_theta_mr"] for r in rows]))
    passed = medians[20.0] < medians[50.0] < medians[80.0]
    report(7, passed,
           "median first-hop departure MSE strictly increasing in distance: "
           + ", ".join(f"{dx:.0f}m={medians[dx]:.3e}" for dx in sorted(medians)))


def test_criterion_08_phase_design_dominance():
    rng = np.random.default_rng(88)
    n_r = 32
    dominated = 0
    for _ in range(100):
        scene_mr = sample_scene(rng, 2, 16, n_r)
        scene_rb = sample_scene(rng, 2, n_r, 16)
        deltas = angle_differences(scene_mr.aoa, scene_rb.aod).ravel()
        gains = gain_products(scene_rb.gains, scene_mr.gains)
        design = design_phases(n_r, deltas, gains)
        draws = [
            coupling_power(np.exp(1j * rng.uniform(0, 2 * np.pi, n_r)), deltas, gains)
            for _ in range(100)
        ]
        if design.objective >= np.mean(draws):
            dominated += 1
    closed_form_ok = True
    for _ in range(20):
        delta = rng.uniform(-np.pi / 2, np.pi / 2)
        gain = rng.standard_normal() + 1j * rng.standard_normal()
        design = design_phases(n_r, [delta], [gain])
        want = n_r ** 2 * abs(gain) ** 2
        closed_form_ok &= abs(design.objective - want) <= 1e-9 * want
    report(8, dominated == 100 and closed_form_ok,
           f"designed phases beat the random-phase mean in {dominated}/100 scenes; "
           f"single-pair closed form to 1e-9: {closed_form_ok}")


def test_criterion_09_solver_health(noiseless_batch, power_batches, distance_batch):
    violations = 0
    worst_res = 0.0
    worst_eig = 0.0
    for min_eig, gen_left, gen_right, h_hat, pri, dua in SolverHealth.instances:
        n_r = gen_left.size
        trace = float(gen_left[0].real * n_r + gen_right[0].real * gen_right.size)
        if min_eig < -1e-8 * max(trace, 0.0):
            violations += 1
        worst_eig = min(worst_eig, min_eig / max(trace, 1e-300))
        worst_res = max(worst_res, pri, dua)
        if pri >= 1e-6 or dua >= 1e-6:
            violations += 1
    n_inst = len(SolverHealth.instances)
    n_conv_fail = len(SolverHealth.convergence_failures)
    report(9, violations == 0 and n_conv_fail == 0 and n_inst > 0,
           f"{n_inst} solver instances: certificates PSD (worst rel eig {worst_eig:.1e}), "
           f"residuals < 1e-6 (worst {worst_res:.1e}), {n_conv_fail} convergence failures")


def test_criterion_10_rootmusic_exactness():
    n, freqs = 16, [0.2, 0.45]  # separation exactly 4/16
    t = np.zeros((n, n), dtype=complex)
    for f in freqs:
        a = steering(n, f)
        t += np.outer(a, a.conj())
    got, degenerate = freqs_from_toeplitz(t, 2)
    err = np.max(np.abs(got - np.array(freqs)))
    report(10, err < 1e-8 and not degenerate,
           f"rank-2 certificate at separation 4/16 recovered to {err:.2e} < 1e-8")
