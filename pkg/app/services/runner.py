"""Task orchestration shared by the command line and the HTTP API."""

import logging
import time
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from app.config import get_settings
from app.exceptions import DatasetError
from app.models.schemas import (
    EvaluationScheme,
    ExperimentConfig,
    GraphModel,
    KernelChoice,
    OccTraining,
    Task,
    TaskResult,
)
from app.services.classifier import LabeledDataset, fit, predict
from app.services.datasets import Dataset, cached_distances, load_dataset, save_dataset
from app.services.evaluation import make_folds, run_cv, write_report
from app.services.graphs import threshold_binarize
from app.services.kernels import random_walk_features
from app.services.occ import SCORE_NAMES, anomalous_side, anomaly_flags, occ_scores
from app.services.seeding import stream
from app.services.simulate import simulate_classification, simulate_survival, true_survival
from app.services.survival import (
    SurvivalDataset,
    fit_survival,
    kaplan_meier,
    survival_grid,
    survival_surface,
)

logger = logging.getLogger(__name__)

SIMULATION_POLICIES = {
    "pref_attach_edges_per_step": "1",
    "pref_attach_weight": "degree^power + 1",
    "time_truncation": "rejection",
    "stratified_split": "per-class floor/ceil allocation",
}


class KernelInput:
    """
    Training kernel inputs and test-to-train cross terms for one dataset.

    GP-F and GP-lambda slice a cached distance matrix; GP-RW builds walk-count features
    once, so every block of the Gram is a product of feature rows.
    """

    def __init__(self, cfg: ExperimentConfig, dataset: Dataset):
        self.choice = cfg.kernel
        if self.choice is KernelChoice.GP_RW:
            graphs = dataset.graphs
            if not all(g.is_binary for g in graphs):
                cutoff = cfg.binarize_cutoff
                if cutoff is None:
                    cutoff = get_settings().binarize_cutoff
                logger.info(f"Binarizing weighted graphs at |w| > {cutoff} for the random-walk kernel")
                graphs = [threshold_binarize(g, cutoff) for g in graphs]
            self.features = random_walk_features(graphs, cfg.rw_steps, cfg.rw_decay, cfg.rw_normalize)
            self.distances = None
        else:
            self.features = None
            self.distances = cached_distances(dataset, cfg.distance_kind(), cfg.n_jobs)

    def _gram(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.features[rows] @ self.features[cols].T

    def labeled(self, train: np.ndarray, labels: np.ndarray) -> LabeledDataset:
        if self.features is not None:
            K = self._gram(train, train)
            return LabeledDataset(labels, gram=(K + K.T) / 2.0)
        return LabeledDataset(labels, distances=self.distances.restrict(train))

    def cross(self, test: np.ndarray, train: np.ndarray) -> np.ndarray:
        if self.features is not None:
            return self._gram(test, train)
        return self.distances.restrict(test, train)

    def self_values(self, test: np.ndarray) -> Optional[np.ndarray]:
        if self.features is None:
            return None
        return np.sum(self.features[test] ** 2, axis=1)


class ExperimentRunner:
    """Runs one task end to end and writes its CSV outputs."""

    def __init__(self):
        self.settings = get_settings()
        self._tasks = {
            Task.SIMULATE: self.simulate,
            Task.DISTANCES: self.distances,
            Task.CLASSIFY: self.classify,
            Task.OCC: self.occ,
            Task.SURVIVAL: self.survival,
        }

    def run(self, cfg: ExperimentConfig) -> TaskResult:
        started = time.perf_counter()
        logger.info(f"Starting task '{cfg.task.value}' (seed={cfg.seed}, out={cfg.out})")
        result = self._tasks[cfg.task](cfg)
        logger.info(f"Task '{cfg.task.value}' finished in {time.perf_counter() - started:.1f}s")
        return result

    def _load(self, cfg: ExperimentConfig, need: str) -> Dataset:
        dataset = load_dataset(cfg.dataset)
        if need == "labels" and dataset.labels is None:
            raise DatasetError("task needs labels.csv", str(cfg.dataset))
        if need == "times" and dataset.times is None:
            raise DatasetError("task needs times.csv", str(cfg.dataset))
        return dataset

    # ============== Tasks ==============

    def simulate(self, cfg: ExperimentConfig) -> TaskResult:
        design = cfg.sim_design()
        if design.model is GraphModel.ERGM:
            raise ValueError(
                "ERGM generation is not supported; choose small-world, sbm, corr-er, pref-attach or er"
            )
        rng = stream(cfg.seed, "generator")
        out = Path(cfg.out)
        policies = {"small_world_radius": str(design.lattice_radius), **SIMULATION_POLICIES}

        if design.survival_case is not None:
            sim = simulate_survival(design, rng)
            manifest = save_dataset(
                out, sim.graphs, times=sim.times, groups=sim.groups,
                design=design, seed=cfg.seed, policies=policies,
            )
        else:
            sim = simulate_classification(design, rng)
            manifest = save_dataset(
                out, sim.graphs, labels=sim.labels,
                design=design, seed=cfg.seed, policies=policies,
            )
        return TaskResult(
            task=cfg.task,
            outputs=[str(out / "manifest.json")],
            summary={"kind": manifest.kind, "m": manifest.m, "n": manifest.n},
        )

    def distances(self, cfg: ExperimentConfig) -> TaskResult:
        dataset = load_dataset(cfg.dataset)
        D = cached_distances(dataset, cfg.distance_kind(), cfg.n_jobs)
        off_diagonal = D.values[~np.eye(D.m, dtype=bool)]
        return TaskResult(
            task=cfg.task,
            outputs=[str(Path(cfg.dataset) / f"distances_{D.kind.value}.csv")],
            summary={"kind": D.kind.value, "m": D.m,
                     "mean_distance": float(off_diagonal.mean()) if off_diagonal.size else 0.0},
        )

    def classify(self, cfg: ExperimentConfig) -> TaskResult:
        dataset = self._load(cfg, "labels")
        kernel = KernelInput(cfg, dataset)
        labels = dataset.labels
        classifier_cfg = cfg.classifier_config()

        def fit_predict(train: np.ndarray, test: np.ndarray, rng: np.random.Generator) -> np.ndarray:
            post = fit(kernel.labeled(train, labels[train]), classifier_cfg, rng)
            pred = predict(
                post, kernel.cross(test, train), mode=cfg.predict_mode,
                self_input=kernel.self_values(test),
            )
            return pred.probability

        report = run_cv(cfg, labels, fit_predict)
        paths = write_report(report, cfg.out)
        return TaskResult(
            task=cfg.task,
            outputs=[str(p) for p in paths],
            summary={
                "mean_accuracy": report.mean_accuracy,
                "sd_accuracy": report.sd_accuracy,
                "mean_auc": report.mean_auc,
                "skipped": report.skipped,
            },
            report=report,
        )

    def occ(self, cfg: ExperimentConfig) -> TaskResult:
        """
        Fit the classifier on each training split and score held-out points of both classes.

        One-class training keeps only points labelled occ_train_label; unbalanced training
        fits on the whole split with both labels. Each replicate uses a stratified split and
        the threshold side called anomalous is the one away from the scores of the
        occ_train_label training points.
        """
        dataset = self._load(cfg, "labels")
        kernel = KernelInput(cfg, dataset)
        labels = dataset.labels
        classifier_cfg = cfg.classifier_config()
        folds = make_folds(
            labels, EvaluationScheme.SPLIT, stream(cfg.seed, "split"),
            test_fraction=cfg.test_fraction, replicates=cfg.replicates,
        )

        score_rows, threshold_rows = [], []
        flagged_minority = {name: [] for name in SCORE_NAMES}
        for fold in folds:
            reference = fold.train[labels[fold.train] == cfg.occ_train_label]
            if cfg.occ_training is OccTraining.UNBALANCED:
                train = fold.train
                # +1 marks the reference class so pi stays its membership probability
                train_labels = np.where(labels[train] == cfg.occ_train_label, 1.0, -1.0)
            else:
                train = reference
                train_labels = np.ones(train.size)
            test = fold.test
            rng = stream(cfg.seed, "sampler", fold.replicate, 0)
            post = fit(kernel.labeled(train, train_labels), classifier_cfg, rng)

            scores = occ_scores(
                post, kernel.cross(test, train), kernel.self_values(test), cfg.predict_mode
            )
            in_sample = occ_scores(
                post, kernel.cross(reference, train), kernel.self_values(reference), cfg.predict_mode
            )
            minority = labels[test] != cfg.occ_train_label
            frame = scores.to_frame()
            frame.insert(0, "label", labels[test].astype(int))
            frame.insert(0, "index", test)
            frame.insert(0, "replicate", fold.replicate)

            for name in SCORE_NAMES:
                threshold = scores.thresholds[name]
                side = anomalous_side(threshold, in_sample.score(name))
                flags = anomaly_flags(scores.score(name), threshold, side)
                frame[f"anomalous_{name}"] = flags
                if minority.any() and side is not None:
                    flagged_minority[name].append(float(flags[minority].mean()))
                threshold_rows.append({
                    "replicate": fold.replicate,
                    "score": name,
                    "threshold": threshold.value,
                    "split_index": threshold.split_index,
                    "degenerate": threshold.degenerate,
                    "anomalous_side": side,
                })
            score_rows.append(frame)

        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "occ_scores.csv", out / "occ_thresholds.csv"]
        pd.concat(score_rows, ignore_index=True).to_csv(paths[0], index=False, float_format="%.10g")
        pd.DataFrame(threshold_rows).to_csv(paths[1], index=False, float_format="%.10g")

        summary = {
            f"{name}_minority_flagged": float(np.mean(v)) if v else None
            for name, v in flagged_minority.items()
        }
        logger.info(f"OCC minority detection rates: {summary}")
        return TaskResult(task=cfg.task, outputs=[str(p) for p in paths], summary=summary)

    def survival(self, cfg: ExperimentConfig) -> TaskResult:
        dataset = self._load(cfg, "times")
        if cfg.kernel is KernelChoice.GP_RW:
            raise ValueError("survival analysis uses distance kernels; choose gp-f or gp-lambda")
        D = cached_distances(dataset, cfg.distance_kind(), cfg.n_jobs)
        covariates = dataset.covariates
        data = SurvivalDataset(
            times=dataset.times,
            distances=D,
            covariates=None if covariates is None else covariates.to_numpy(),
            covariate_names=[] if covariates is None else list(covariates.columns),
            groups=dataset.groups,
        )
        survival_cfg = cfg.survival_config()
        post = fit_survival(data, survival_cfg, stream(cfg.seed, "sampler"), cfg.n_jobs)
        surface = survival_surface(
            post,
            grid=survival_grid(data.times, survival_cfg.grid_points),
            max_draws=survival_cfg.surface_draws,
        )

        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "surfaces": out / "survival_surfaces.csv",
            "km": out / "survival_km.csv",
            "posterior": out / "survival_posterior.csv",
        }
        surface.to_frame().to_csv(paths["surfaces"], index=False, float_format="%.10g")
        kaplan_meier(data.times, surface.grid, data.groups).to_csv(
            paths["km"], index=False, float_format="%.10g"
        )
        post.to_csv(paths["posterior"])

        summary: dict = {"mean_omega": float(post.omega_draws.mean()), "m": data.m}
        design = dataset.manifest.design
        if design is not None and design.survival_case is not None and data.groups is not None:
            truth = {"time": surface.grid}
            means = surface.group_means()
            for g in (0, 1):
                truth[f"group_{g}"] = true_survival(design.survival_case, g, surface.grid)
                if g in means:
                    summary[f"sup_error_group_{g}"] = float(np.max(np.abs(means[g] - truth[f"group_{g}"])))
            paths["truth"] = out / "survival_truth.csv"
            pd.DataFrame(truth).to_csv(paths["truth"], index=False, float_format="%.10g")

        return TaskResult(task=cfg.task, outputs=[str(p) for p in paths.values()], summary=summary)


# Singleton instance
experiment_runner = ExperimentRunner()
