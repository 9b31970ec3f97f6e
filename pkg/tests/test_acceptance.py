"""Acceptance suite: one test per release criterion, with a printed verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass lines and timings.  Everything here is pinned: tolerances, instance
counts, and runtime budgets are part of the criteria themselves.
"""

import time

import numpy as np
import pytest

from matchltr import (
    EstimatorKind,
    ExperimentPlan,
    ExposureModel,
    LambdaWeight,
    LossKind,
    PreferenceMatrix,
    RankedList,
    SideAssignment,
    TrainConfig,
    default_method_configs,
    derive_seed,
    expected_metric_exact,
    exposure_from_popularity,
    load_dataset,
    load_eval_report,
    load_exposure,
    load_fold_plan,
    load_model,
    load_preferences,
    load_side_assignment,
    load_training_log,
    loss_gradient,
    loss_user,
    make_folds,
    metric_ground_truth,
    run_experiment,
    run_verification,
    sample_dataset,
    save_dataset,
    save_eval_report,
    save_exposure,
    save_fold_plan,
    save_model,
    save_preferences,
    save_side_assignment,
    save_training_log,
    synth_preferences,
    train_model,
)
from matchltr.cli import main as cli_main
from matchltr.ranker import GradientTables
from matchltr.train import EpochRecord, TrainingLog
from matchltr.verify import check_instance, single_pair_witness

# trend-experiment configuration (criterion 6), calibrated on nearby seeds
TREND_MATRIX_SEED = 20250811
TREND_PLAN_SEED = 0
TREND_EPOCHS = 100
TREND_LR = 0.2
TREND_DIM = 64
TREND_BATCH = 16


def _verdict(n, ok, detail):
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {n}: {detail}"


class TestCriterion1Unbiasedness:
    def test_two_sided_estimator_exact_over_1000_instances(self):
        start = time.perf_counter()
        report = run_verification(trials=1000, max_users=4, max_candidates=6,
                                  tolerance=1e-10, seed=0)
        elapsed = time.perf_counter() - start
        ok = report.passed and report.max_abs_error["ipw2"] < 1e-10 and elapsed < 10.0
        _verdict(
            1, ok,
            f"|E[two-sided] - truth| max {report.max_abs_error['ipw2']:.3e} "
            f"over 1000 instances in {elapsed:.1f}s (budget 10s)",
        )


class TestCriterion2BiasWitness:
    def test_single_pair_witness_and_one_sided_deviation(self, capsys, tmp_path):
        result = check_instance(single_pair_witness())
        witness_ok = (result.expected["naive"] == 1.0 and result.truth == 3.0)

        # the verify command itself must exhibit the witness
        code = cli_main(["verify", "--trials", "200", "--seed", "1",
                         "--out", str(tmp_path)])
        out = capsys.readouterr().out
        cmd_ok = code == 0 and "naive expectation 1" in out and "vs truth 3" in out

        # one-sided correction deviates whenever a mutually relevant pair has
        # partial backward exposure (forward relevance present, else all zero)
        rng = np.random.default_rng(2)
        deviations = []
        for _ in range(200):
            theta_b = rng.uniform(0.05, 0.999)
            theta_f = rng.uniform(0.05, 1.0)
            rankings = [RankedList.from_indices(0, [0])]
            r = np.ones((1, 1))
            e = expected_metric_exact(rankings, r, r, np.full((1, 1), theta_f),
                                      np.full((1, 1), theta_b), LambdaWeight(k=1),
                                      EstimatorKind.IPW1)
            deviations.append(abs(e - 3.0))
        ipw1_ok = min(deviations) > 1e-6
        _verdict(
            2, witness_ok and cmd_ok and ipw1_ok,
            "naive expectation 1.0 vs truth 3.0 on the mutual half-exposure pair; "
            f"verify command exhibits it; one-sided estimator deviated on all "
            f"200 partial-backward-exposure instances (min gap {min(deviations):.3g})",
        )


class TestCriterion3MonteCarloConsistency:
    def test_sample_mean_within_two_percent(self):
        start = time.perf_counter()
        rng = np.random.default_rng(3)
        n_users, n_cands = 4, 6
        r_fwd = rng.integers(0, 2, (n_users, n_cands)).astype(float)
        r_bwd = rng.integers(0, 2, (n_users, n_cands)).astype(float)
        r_fwd[:, 0] = 1.0  # keep the truth comfortably away from zero
        r_bwd[:, 0] = 1.0
        theta_fwd = rng.uniform(0.3, 1.0, (n_users, n_cands))
        theta_bwd = rng.uniform(0.3, 1.0, (n_users, n_cands))
        rankings = [RankedList.from_indices(u, rng.permutation(n_cands))
                    for u in range(n_users)]
        weight = LambdaWeight(k=4)
        truth = metric_ground_truth(rankings, r_fwd, r_bwd, weight).value

        lam = np.stack([weight.weights(np.arange(1, n_cands + 1))] * n_users)
        cols = np.stack([lst.entry_indices() for lst in rankings])
        rows = np.arange(n_users)[:, None]
        n_draws = 100_000
        o_f = rng.random((n_draws, n_users, n_cands)) < theta_fwd
        o_b = rng.random((n_draws, n_users, n_cands)) < theta_bwd
        y_f = o_f * r_fwd
        y_b = y_f * o_b * r_bwd
        gains = np.exp2(y_f) * (np.exp2(y_b) - 1.0) / (theta_fwd * theta_bwd) \
            + (np.exp2(y_f) - 1.0) / theta_fwd
        per_draw = (gains[:, rows, cols] * lam).sum(axis=(1, 2)) / n_users
        rel_err = abs(per_draw.mean() - truth) / truth
        elapsed = time.perf_counter() - start
        ok = rel_err < 0.02 and elapsed < 60.0
        _verdict(
            3, ok,
            f"relative error {rel_err:.4%} after {n_draws} exposure draws "
            f"(limit 2%) in {elapsed:.1f}s (budget 60s)",
        )


class TestCriterion4GradientCorrectness:
    @staticmethod
    def _finite_difference(model, u, cands, y_fwd, y_bwd, tf, tb, kind, step=1e-5):
        fd = GradientTables.zeros_like(model)
        for name in ("w_pro_fwd", "w_rea_fwd", "w_pro_bwd", "w_rea_bwd"):
            table = getattr(model, name)
            grad = getattr(fd, name)
            for i in range(table.shape[0]):
                for j in range(table.shape[1]):
                    orig = table[i, j]
                    table[i, j] = orig + step
                    up = loss_user(model, u, cands, y_fwd, y_bwd, tf, tb, kind)
                    table[i, j] = orig - step
                    down = loss_user(model, u, cands, y_fwd, y_bwd, tf, tb, kind)
                    table[i, j] = orig
                    grad[i, j] = (up - down) / (2.0 * step)
        return fd

    def test_all_losses_match_central_differences(self):
        from matchltr import RankerModel

        rng = np.random.default_rng(4)
        kinds = list(LossKind)
        worst = 0.0
        checked = 0
        for trial in range(105):
            dim = int(rng.choice([2, 4]))
            n_cands = int(rng.integers(2, 6))
            n_rea = n_cands + int(rng.integers(0, 3))
            model = RankerModel(
                w_pro_fwd=rng.normal(0, 0.5, (3, dim)),
                w_rea_fwd=rng.normal(0, 0.5, (n_rea, dim)),
                w_pro_bwd=rng.normal(0, 0.5, (3, dim)),
                w_rea_bwd=rng.normal(0, 0.5, (n_rea, dim)),
            )
            u = int(rng.integers(0, 3))
            cands = rng.choice(n_rea, size=n_cands, replace=False)
            y_fwd = (rng.random(n_cands) < 0.6).astype(float)
            y_bwd = y_fwd * (rng.random(n_cands) < 0.5)
            tf = rng.uniform(0.2, 1.0, n_cands)
            tb = rng.uniform(0.2, 1.0, n_cands)
            kind = kinds[trial % 3]
            analytic = loss_gradient(model, u, cands, y_fwd, y_bwd, tf, tb, kind)
            fd = self._finite_difference(model, u, cands, y_fwd, y_bwd, tf, tb, kind)
            for name in ("w_pro_fwd", "w_rea_fwd", "w_pro_bwd", "w_rea_bwd"):
                a, b = getattr(analytic, name), getattr(fd, name)
                denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
                worst = max(worst, float((np.abs(a - b) / denom).max()))
            checked += 1
        ok = checked >= 100 and worst < 1e-4
        _verdict(
            4, ok,
            f"max relative gradient error {worst:.2e} over {checked} instances "
            f"(limit 1e-4, central differences, step 1e-5)",
        )


class TestCriterion5UnitExposureCollapse:
    def test_losses_metrics_and_trajectories_coincide_bitwise(self, tmp_path):
        rng = np.random.default_rng(5)
        m = PreferenceMatrix(forward=rng.random((14, 14)) * 0.9 + 0.05,
                             backward=rng.random((14, 14)) * 0.9 + 0.05)
        exposure = exposure_from_popularity(m, eta=0.0)
        theta_ok = (exposure.theta_reactive_exposure == 1.0).all() \
            and (exposure.theta_proactive_exposure == 1.0).all()
        plan = make_folds(SideAssignment.trivial(14, 14), 3, seed=0)
        dataset = sample_dataset(m, exposure, plan, seed=1)

        # per-user losses coincide bitwise at unit exposure
        from matchltr.train import _per_user_training_data
        losses_ok = True
        per_user = _per_user_training_data(dataset)
        model, _ = train_model(dataset, TrainConfig(dim=4, epochs=1, seed=7,
                                                    learning_rate=0.1))
        for u, (cands, yf, yb, tf, tb) in enumerate(per_user):
            base = loss_user(model, u, cands, yf, yb, tf, tb, LossKind.CONVENTIONAL)
            for kind in (LossKind.IPW1, LossKind.IPW2):
                if loss_user(model, u, cands, yf, yb, tf, tb, kind) != base:
                    losses_ok = False

        outputs = {}
        for kind in LossKind:
            cfg = TrainConfig(loss_kind=kind, dim=4, epochs=10,
                              learning_rate=0.3, batch=5, seed=7)
            mdl, log = train_model(dataset, cfg)
            path = tmp_path / f"{kind.value}.bin"
            save_model(mdl, path)
            log_path = tmp_path / f"{kind.value}.csv"
            save_training_log(log, log_path)
            outputs[kind] = (path.read_bytes(), log_path.read_bytes(), log)

        ckpt_base, log_base, records_base = outputs[LossKind.CONVENTIONAL]
        traj_ok = all(
            outputs[kind][0] == ckpt_base and outputs[kind][1] == log_base
            and outputs[kind][2].records == records_base.records
            for kind in (LossKind.IPW1, LossKind.IPW2)
        )
        ok = theta_ok and losses_ok and traj_ok
        _verdict(
            5, ok,
            "eta=0 propensities are exactly 1 and the three losses, validation "
            "metrics, checkpoints and logs coincide byte-for-byte at equal seeds",
        )


class TestCriterion6QualitativeTrend:
    def test_two_sided_wins_majority_one_sided_worst_plurality(self):
        start = time.perf_counter()
        m = synth_preferences(200, 200, rank=4, noise=0.05, seed=TREND_MATRIX_SEED)
        cfgs = default_method_configs(TrainConfig(
            dim=TREND_DIM, epochs=TREND_EPOCHS, learning_rate=TREND_LR,
            batch=TREND_BATCH, k_valid=10,
        ))
        plan = ExperimentPlan(etas=(0.5, 1.0), folds=5, k_values=(10,),
                              seeds=(TREND_PLAN_SEED,))
        records = run_experiment(m, plan, cfgs)
        elapsed = time.perf_counter() - start

        cells = {}
        for r in records:
            cells.setdefault((r.eta, r.fold), {})[r.method] = r.dcg_mean
        assert len(cells) == 10
        wins = {name: 0 for name in ("conventional", "ipw1", "ipw2")}
        worsts = {name: 0 for name in ("conventional", "ipw1", "ipw2")}
        for vals in cells.values():
            wins[max(vals, key=vals.get)] += 1
            worsts[min(vals, key=vals.get)] += 1

        majority_ok = wins["ipw2"] > len(cells) // 2
        plurality_ok = worsts["ipw1"] > worsts["conventional"] \
            and worsts["ipw1"] > worsts["ipw2"]
        runtime_ok = elapsed < 15 * 60
        ok = majority_ok and plurality_ok and runtime_ok
        _verdict(
            6, ok,
            f"test DCG@10 over 10 (eta, fold) cells: two-sided best in "
            f"{wins['ipw2']}/10 (needs >5), worst counts {worsts} with the "
            f"one-sided variant worst most often; runtime {elapsed / 60:.1f} min "
            f"(budget 15 min)",
        )


class TestCriterion7DeterminismAndRoundTrips:
    def test_identical_seeds_identical_bytes_and_lossless_formats(self, tmp_path):
        args_gen = ["gen-data", "--synth", "16,16,3,0.05", "--eta", "0.7",
                    "--folds", "4", "--seed", "11"]
        dirs = []
        for name in ("d1", "d2"):
            out = tmp_path / name
            assert cli_main(args_gen + ["--out", str(out)]) == 0
            dirs.append(out)
        gen_names = ("preferences.csv", "sides.json", "folds.json",
                     "exposure.json", "dataset.csv")
        gen_ok = all((dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes()
                     for n in gen_names)

        runs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert cli_main(["train", "--data", str(dirs[0]), "--loss", "ipw2",
                             "--epochs", "4", "--dim", "4", "--seed", "3",
                             "--out", str(out)]) == 0
            runs.append(out)
        train_ok = all(
            (runs[0] / n).read_bytes() == (runs[1] / n).read_bytes()
            for n in ("checkpoint.bin", "train_log.csv")
        )

        evals = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            assert cli_main(["evaluate", "--data", str(dirs[0]), "--model",
                             str(runs[0] / "checkpoint.bin"), "--loss", "ipw2",
                             "--seed", "5", "--out", str(out)]) == 0
            evals.append(out)
        eval_ok = (evals[0] / "eval.csv").read_bytes() == \
            (evals[1] / "eval.csv").read_bytes()

        reps = []
        for name in ("p1", "p2"):
            out = tmp_path / name
            assert cli_main(["report", str(evals[0] / "eval.csv"),
                             "--out", str(out)]) == 0
            reps.append(out)
        report_ok = all(
            (reps[0] / n).read_bytes() == (reps[1] / n).read_bytes()
            for n in ("report_by_fold.csv", "report_by_eta.csv")
        )

        # every on-disk format round-trips losslessly
        prefs = load_preferences(dirs[0] / "preferences.csv")
        plan = load_fold_plan(dirs[0] / "folds.json")
        exposure = load_exposure(dirs[0] / "exposure.json")
        sides = load_side_assignment(dirs[0] / "sides.json")
        dataset = load_dataset(dirs[0] / "dataset.csv", plan)
        model = load_model(runs[0] / "checkpoint.bin")
        log = load_training_log(runs[0] / "train_log.csv")
        report = load_eval_report(evals[0] / "eval.csv")

        rt = tmp_path / "rt"
        rt.mkdir()
        save_preferences(prefs, rt / "preferences.csv")
        save_fold_plan(plan, rt / "folds.json")
        save_exposure(exposure, rt / "exposure.json")
        save_side_assignment(sides, rt / "sides.json")
        save_dataset(dataset, rt / "dataset.csv")
        save_model(model, rt / "checkpoint.bin")
        save_training_log(log, rt / "train_log.csv")
        save_eval_report(report, rt / "eval.csv")
        round_trip_ok = all(
            (rt / n).read_bytes() == (src / n).read_bytes()
            for n, src in (
                ("preferences.csv", dirs[0]), ("folds.json", dirs[0]),
                ("exposure.json", dirs[0]), ("sides.json", dirs[0]),
                ("dataset.csv", dirs[0]), ("checkpoint.bin", runs[0]),
                ("train_log.csv", runs[0]),
            )
        ) and (rt / "eval.csv").read_bytes() == (evals[0] / "eval.csv").read_bytes()

        ok = gen_ok and train_ok and eval_ok and report_ok and round_trip_ok
        _verdict(
            7, ok,
            "identical seeds reproduce identical dataset/checkpoint/report bytes "
            "and all eight file formats reload and re-save byte-identically",
        )
