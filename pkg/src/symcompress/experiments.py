"""Experiment drivers: error scaling, dataset compression, width compression
with shared batch trajectories, and scaling-law improvement.

Every run is a pure function of its config and seed list.  Per-cell seeds are
derived from (user seed, cell coordinates), so single cells can be recomputed
standalone and concurrent execution cannot change any number.  Reports carry
enough metadata to re-derive every row; timing lives in the in-memory
metadata but is excluded from serialized output so that re-runs are
bit-for-bit identical.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .compressor import CompressionConfig, compress
from .data import LabeledDataset, cylindrical_harmonic, make_harmonic_dataset, make_teacher_student
from .moments import WeightedSet, n_basis
from .nn import TrainConfig, TwoLayerNet, compress_width, forward, init_net, mse_eval, train
from .seeding import derive_seed
from .symfunc import eval_probe, make_probes

__all__ = [
    "PowerLawFit",
    "ExperimentReport",
    "fit_power_law",
    "run_error_scaling",
    "run_dataset_compression",
    "run_lth",
    "run_nsl",
    "ARM_LEGEND",
    "RULE_LEGEND",
]

VERSION_STRING = "symcompress-0.1.0"

# Integer codes used in report rows (rows are purely numeric).
ARM_LEGEND = {0: "full", 1: "compressed", 2: "subsample"}
RULE_LEGEND = {0: "sgd", 1: "sgd_momentum", 2: "adamw"}
_RULE_ID = {name: rid for rid, name in RULE_LEGEND.items()}

# Keys dropped when serializing, so identical runs produce identical bytes.
_VOLATILE_METADATA = ("wall_time_s",)


@dataclass
class PowerLawFit:
    """Least-squares fit of ln y = intercept - alpha ln x."""

    alpha: float
    intercept: float
    r2: float
    n_points: int
    alpha_stderr: float = float("nan")


def fit_power_law(points) -> PowerLawFit:
    """Fit y ~ x^(-alpha) by least squares in log-log coordinates.

    Needs at least 3 strictly positive (x, y) pairs.  alpha is the negated
    slope; r2 is the usual coefficient of determination (1.0 for an exact
    fit, including the constant-y case).
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    if any(x <= 0.0 or y <= 0.0 for x, y in pts):
        raise ValueError("power-law fit needs strictly positive x and y")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    n = len(pts)
    design = np.column_stack([lx, np.ones(n)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ssr = float(resid @ resid)
    sst = float(np.sum((ly - ly.mean()) ** 2))
    if sst > 0.0:
        r2 = 1.0 - ssr / sst
    else:
        r2 = 1.0 if ssr <= 1e-24 else 0.0
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    if n > 2 and sxx > 0.0:
        stderr = math.sqrt(max(ssr, 0.0) / (n - 2) / sxx)
    else:
        stderr = float("nan")
    return PowerLawFit(
        alpha=float(-slope),
        intercept=float(intercept),
        r2=float(r2),
        n_points=n,
        alpha_stderr=stderr,
    )


@dataclass
class ExperimentReport:
    """Named numeric rows plus config metadata and any power-law fits.

    Rows are append-only and every row carries the seed that produced it.
    CSV output is the data table alone; JSON adds metadata and fits.  Both
    forms omit wall time so re-runs serialize bit-for-bit.
    """

    name: str
    columns: list[str]
    metadata: dict = field(default_factory=dict)
    rows: list[list[float]] = field(default_factory=list)
    fits: dict[str, PowerLawFit] = field(default_factory=dict)

    def __post_init__(self):
        if "seed" not in self.columns:
            raise ValueError("reports must carry a seed column")
        self.metadata.setdefault("version", VERSION_STRING)

    def add_row(self, **values) -> None:
        if set(values) != set(self.columns):
            raise ValueError(f"row keys {sorted(values)} != columns {sorted(self.columns)}")
        self.rows.append([values[c] for c in self.columns])

    @staticmethod
    def _fmt(v) -> str:
        if isinstance(v, (bool, np.bool_)):
            return str(int(v))
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return f"{float(v):.17g}"

    def to_csv_text(self) -> str:
        lines = [",".join(self.columns)]
        lines.extend(",".join(self._fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_json_text(self, include_timing: bool = False) -> str:
        meta = {
            k: v
            for k, v in self.metadata.items()
            if include_timing or k not in _VOLATILE_METADATA
        }
        payload = {
            "name": self.name,
            "metadata": meta,
            "columns": self.columns,
            "rows": [[float(v) for v in row] for row in self.rows],
            "fits": {k: asdict(f) for k, f in self.fits.items()},
        }
        return json.dumps(payload, sort_keys=True, indent=1) + "\n"

    def save(self, path, fmt: str = "csv") -> None:
        if fmt not in ("csv", "json"):
            raise ValueError(f"format must be csv or json, got {fmt!r}")
        text = self.to_csv_text() if fmt == "csv" else self.to_json_text()
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[self.columns.index(name)] for row in self.rows])


def _map_jobs(worker, jobs, workers: int):
    """Run jobs in order; results keyed by position, so concurrency is
    invisible in the output."""
    if workers <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, jobs))


# ---------------------------------------------------------------------------
# Error scaling of the probe function under d -> max(ceil(0.1 d), N) squeezes.


def error_scaling_cell(m: int, k: int, d: int, trial: int, seed: int, n_probe: int = 10) -> dict:
    """One (m, k, d, trial) cell, recomputable standalone with the same seed."""
    cell_seed = derive_seed(seed, m, k, d, trial)
    probe = make_probes(m, n_probe=n_probe, seed=derive_seed(cell_seed, 0))
    pts = np.random.default_rng(derive_seed(cell_seed, 1)).uniform(-1.0, 1.0, size=(d, m))
    ws = WeightedSet.uniform(pts)
    requested = math.ceil(0.1 * d)
    target = max(requested, n_basis(m, k))
    cfg = CompressionConfig(k=k, target_size=target, seed=derive_seed(cell_seed, 2))
    out, rep = compress(ws, cfg)
    before = eval_probe(ws, probe)
    after = eval_probe(out, probe)
    return {
        "m": m,
        "k": k,
        "d": d,
        "trial": trial,
        "seed": cell_seed,
        "target_size": target,
        "support": rep.final_support,
        "floored": int(target > requested),
        "error": abs(before - after),
    }


def _error_cell_worker(job) -> dict:
    return error_scaling_cell(*job)


def run_error_scaling(
    m_list,
    k_list,
    d_grid,
    trials: int,
    seed: int,
    workers: int = 1,
    n_probe: int = 10,
) -> ExperimentReport:
    """Probe-function error |f(original) - f(compressed)| across a grid.

    Inputs are uniform on [-1,1]^m, probes standard normal (both recorded in
    metadata).  Per-(m,k): medians over trials are fitted as a power law in
    d; the fit skips floored cells and zero medians.
    """
    t0 = time.perf_counter()
    jobs = [
        (m, k, d, t, seed, n_probe)
        for m in m_list
        for k in k_list
        for d in d_grid
        for t in range(trials)
    ]
    cells = _map_jobs(_error_cell_worker, jobs, workers)

    cols = ["m", "k", "d", "trial", "seed", "target_size", "support", "floored", "error"]
    report = ExperimentReport(
        name="error_scaling",
        columns=cols,
        metadata={
            "seed": seed,
            "m_list": list(m_list),
            "k_list": list(k_list),
            "d_grid": list(d_grid),
            "trials": trials,
            "n_probe": n_probe,
            "input_distribution": "uniform[-1,1]^m",
            "probe_distribution": "standard normal",
            "aggregate": "median over trials, spread = IQR",
        },
    )
    for cell in cells:
        report.add_row(**cell)

    aggregates = []
    for m in m_list:
        for k in k_list:
            fit_pts = []
            for d in d_grid:
                errs = sorted(
                    c["error"] for c in cells if (c["m"], c["k"], c["d"]) == (m, k, d)
                )
                floored = any(
                    c["floored"] for c in cells if (c["m"], c["k"], c["d"]) == (m, k, d)
                )
                med = float(np.median(errs))
                q1, q3 = np.percentile(errs, [25.0, 75.0])
                aggregates.append(
                    {
                        "m": m,
                        "k": k,
                        "d": d,
                        "median_error": med,
                        "iqr": float(q3 - q1),
                        "floored": int(floored),
                    }
                )
                if not floored and med > 0.0:
                    fit_pts.append((d, med))
            if len(fit_pts) >= 3:
                report.fits[f"m{m}_k{k}"] = fit_power_law(fit_pts)
    report.metadata["aggregates"] = aggregates
    report.metadata["wall_time_s"] = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# Dataset compression: full vs compressed vs random subset, teacher-student.


def _compress_dataset(ds: LabeledDataset, k: int, target: int, tol: float, seed: int) -> LabeledDataset:
    ws = ds.as_weighted_set()
    cfg = CompressionConfig(k=k, target_size=target, tol=tol, seed=seed)
    out, _ = compress(ws, cfg)
    return LabeledDataset.from_weighted_set(out.restricted())


def _eval_epochs(epochs: int, every: int) -> set[int]:
    marks = {e for e in range(epochs) if (e + 1) % every == 0}
    marks.add(epochs - 1)
    return marks


def _dataset_compression_seed(job) -> list[dict]:
    (seed, d, d_prime, k, tol, cfg, width, test_size, eval_every) = job
    ds, teacher = make_teacher_student(d, derive_seed(seed, 0))
    rng = np.random.default_rng(derive_seed(seed, 1))
    test_x = rng.uniform(-1.0, 1.0, size=(test_size, 2))
    test_y = forward(teacher, test_x)[:, 0]

    comp = _compress_dataset(ds, k, d_prime, tol, derive_seed(seed, 2))
    sub_idx = np.random.default_rng(derive_seed(seed, 3)).choice(d, size=d_prime, replace=False)
    sub = ds.subset(np.sort(sub_idx))
    net0 = init_net(2, width, 1, activation="relu", seed=derive_seed(seed, 4))
    run_cfg = replace(cfg, batch_seed=derive_seed(seed, 5))

    signal_var = float(np.var(forward(teacher, ds.X)[:, 0]))
    rows: list[dict] = []
    marks = _eval_epochs(cfg.epochs, eval_every)
    for arm_id, arm_ds in ((0, ds), (1, comp), (2, sub)):

        def hook(epoch, net, _arm=arm_id):
            if epoch in marks:
                rows.append(
                    {
                        "seed": seed,
                        "arm": _arm,
                        "epoch": epoch,
                        "test_mse": mse_eval(net, test_x, test_y),
                        "signal_var": signal_var,
                    }
                )

        train(net0, arm_ds, run_cfg, eval_hook=hook)
    return rows


def run_dataset_compression(
    d: int,
    d_prime: int,
    k: int,
    train_cfg: TrainConfig,
    seeds,
    workers: int = 1,
    tol: float = 1e-8,
    student_width: int = 50,
    test_size: int = 20000,
    eval_every: int = 10,
) -> ExperimentReport:
    """Teacher-student training on full / compressed / random-subset data.

    All three arms share the student architecture and init; the compressed
    arm trains through the weighted sampler.  Test MSE on a fresh noise-free
    sample is recorded every `eval_every` epochs and at the final epoch.
    Arm codes: 0 full, 1 compressed, 2 subsample.
    """
    if not d_prime < d:
        raise ValueError("d_prime must be smaller than d")
    t0 = time.perf_counter()
    jobs = [
        (seed, d, d_prime, k, tol, train_cfg, student_width, test_size, eval_every)
        for seed in seeds
    ]
    per_seed = _map_jobs(_dataset_compression_seed, jobs, workers)

    report = ExperimentReport(
        name="dataset_compression",
        columns=["seed", "arm", "epoch", "test_mse", "signal_var"],
        metadata={
            "d": d,
            "d_prime": d_prime,
            "k": k,
            "tol": tol,
            "seeds": list(seeds),
            "student_width": student_width,
            "test_size": test_size,
            "eval_every": eval_every,
            "train_cfg": asdict(train_cfg),
            "arm_legend": {str(i): v for i, v in ARM_LEGEND.items()},
        },
    )
    for rows in per_seed:
        for row in rows:
            report.add_row(**row)
    report.metadata["wall_time_s"] = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# Width compression with shared minibatch trajectories (three arms, n rules).


def _lth_seed(job) -> list[dict]:
    (seed, width, width_prime, k, tol, cfg, rules, rule_lrs, d_train, test_size, eval_every) = job
    ds = make_harmonic_dataset(d_train, derive_seed(seed, 0))
    rng = np.random.default_rng(derive_seed(seed, 1))
    test_x = rng.uniform(-1.0, 1.0, size=(test_size, 2))
    test_y = cylindrical_harmonic(test_x[:, 0], test_x[:, 1])

    net0 = init_net(2, width, 1, activation="relu", seed=derive_seed(seed, 2))
    comp0 = compress_width(net0, k, width_prime, tol=tol, seed=derive_seed(seed, 3))
    sub_idx = np.sort(
        np.random.default_rng(derive_seed(seed, 4)).choice(width, size=width_prime, replace=False)
    )
    sub0 = TwoLayerNet(
        net0.W1[sub_idx].copy(),
        net0.b1[sub_idx].copy(),
        net0.W2[:, sub_idx].copy(),
        np.ones(width_prime),
        net0.activation,
    )

    rows: list[dict] = []
    marks = _eval_epochs(cfg.epochs, eval_every)
    for rule in rules:
        batch_seed = derive_seed(seed, 5, _RULE_ID[rule])
        arms = (
            (0, net0, False),
            (1, comp0, True),  # compressed dynamics: per-neuron rescaled grads
            (2, sub0, False),
        )
        for arm_id, start, rescale in arms:

            def hook(epoch, net, _arm=arm_id, _rule=_RULE_ID[rule]):
                if epoch in marks:
                    rows.append(
                        {
                            "seed": seed,
                            "rule": _rule,
                            "arm": _arm,
                            "epoch": epoch,
                            "test_mse": mse_eval(net, test_x, test_y),
                        }
                    )

            arm_cfg = replace(
                cfg,
                optimizer=rule,
                lr0=rule_lrs[rule],
                grad_rescale=rescale,
                batch_seed=batch_seed,
            )
            train(start, ds, arm_cfg, eval_hook=hook)
    return rows


def run_lth(
    width: int,
    width_prime: int,
    k: int,
    rules,
    train_cfg: TrainConfig,
    seeds,
    workers: int = 1,
    tol: float = 1e-8,
    d_train: int = 10000,
    test_size: int = 20000,
    eval_every: int = 10,
    rule_lrs: dict | None = None,
) -> ExperimentReport:
    """Width compression at init vs a random subnetwork, on the harmonic task.

    Three arms per (seed, rule): the original width, the compressed width
    (moment matching on neuron objects, trained with rescaled per-neuron
    gradients), and a random width_prime-subnetwork.  All arms of a (seed,
    rule) share one minibatch trajectory.  Arm codes: 0 full, 1 compressed,
    2 subnetwork; rule codes: 0 sgd, 1 sgd_momentum, 2 adamw.
    """
    if not width_prime < width:
        raise ValueError("width_prime must be smaller than width")
    bad = [r for r in rules if r not in _RULE_ID]
    if bad:
        raise ValueError(f"unknown rules {bad}; choose from {sorted(_RULE_ID)}")
    # plain SGD's function-space step grows with width, so the stable range at
    # the default width 4096 is narrow: below ~3e-3 nothing moves in a desk-scale
    # step budget, at 5e-3 the loss diverges; 4e-3 trains. Momentum compounds the
    # step by 1/(1-beta), hence the 10x reduction for the momentum rule.
    defaults = {"sgd": 4e-3, "sgd_momentum": 4e-4, "adamw": 1e-3}
    lrs = dict(defaults)
    if rule_lrs:
        lrs.update(rule_lrs)

    t0 = time.perf_counter()
    jobs = [
        (seed, width, width_prime, k, tol, train_cfg, tuple(rules), lrs, d_train, test_size, eval_every)
        for seed in seeds
    ]
    per_seed = _map_jobs(_lth_seed, jobs, workers)

    report = ExperimentReport(
        name="lth",
        columns=["seed", "rule", "arm", "epoch", "test_mse"],
        metadata={
            "width": width,
            "width_prime": width_prime,
            "k": k,
            "tol": tol,
            "rules": list(rules),
            "rule_lrs": {r: lrs[r] for r in rules},
            "seeds": list(seeds),
            "d_train": d_train,
            "test_size": test_size,
            "eval_every": eval_every,
            "train_cfg": asdict(train_cfg),
            "arm_legend": {"0": "full", "1": "compressed", "2": "subnetwork"},
            "rule_legend": {str(i): v for i, v in RULE_LEGEND.items()},
        },
    )
    for rows in per_seed:
        for row in rows:
            report.add_row(**row)
    report.metadata["wall_time_s"] = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# Scaling-law improvement: loss vs d for original training, vs d' compressed.


def _nsl_job(job) -> list[dict]:
    (mode, d, seed, k, tol, cfg, width, test_size, harmonic_train) = job
    d_prime = math.ceil(16.0 * math.sqrt(d))
    floored = int(d_prime >= d)

    if mode == "dataset":
        ds, teacher = make_teacher_student(d, derive_seed(seed, d, 0))
        rng = np.random.default_rng(derive_seed(seed, d, 1))
        test_x = rng.uniform(-1.0, 1.0, size=(test_size, 2))
        test_y = forward(teacher, test_x)[:, 0]
        arms = {0: ds}
        if not floored:
            arms[1] = _compress_dataset(ds, k, d_prime, tol, derive_seed(seed, d, 2))
        net0 = init_net(2, width, 1, activation="relu", seed=derive_seed(seed, d, 3))
        out = []
        for arm_id, arm_ds in arms.items():
            run_cfg = replace(cfg, batch_seed=derive_seed(seed, d, 4))
            net, _ = train(net0, arm_ds, run_cfg)
            out.append(
                {
                    "seed": seed,
                    "d": d,
                    "d_prime": d_prime,
                    "arm": arm_id,
                    "floored": floored,
                    "final_test_mse": mse_eval(net, test_x, test_y),
                }
            )
        return out

    # width mode: d is the hidden width, the dataset is fixed-size harmonic
    ds = make_harmonic_dataset(harmonic_train, derive_seed(seed, d, 0))
    rng = np.random.default_rng(derive_seed(seed, d, 1))
    test_x = rng.uniform(-1.0, 1.0, size=(test_size, 2))
    test_y = cylindrical_harmonic(test_x[:, 0], test_x[:, 1])
    net0 = init_net(2, d, 1, activation="relu", seed=derive_seed(seed, d, 3))
    nets = {0: (net0, False)}
    if not floored:
        comp = compress_width(net0, k, d_prime, tol=tol, seed=derive_seed(seed, d, 2))
        nets[1] = (comp, True)
    out = []
    for arm_id, (start, rescale) in nets.items():
        run_cfg = replace(cfg, grad_rescale=rescale, batch_seed=derive_seed(seed, d, 4))
        net, _ = train(start, ds, run_cfg)
        out.append(
            {
                "seed": seed,
                "d": d,
                "d_prime": d_prime,
                "arm": arm_id,
                "floored": floored,
                "final_test_mse": mse_eval(net, test_x, test_y),
            }
        )
    return out


def run_nsl(
    d_grid,
    seeds,
    mode: str = "dataset",
    k: int = 6,
    train_cfg: TrainConfig | None = None,
    workers: int = 1,
    tol: float = 1e-8,
    student_width: int = 50,
    test_size: int = 20000,
    harmonic_train: int = 20000,
) -> ExperimentReport:
    """Loss scaling before vs after the d -> ceil(16 sqrt(d)) compression.

    dataset mode: teacher-student, each d trained on the original d points
    (arm 0) and on the compressed d' points (arm 1); width mode: the
    harmonic task with d the hidden width.  The original arm's losses are
    fitted against d and the compressed arm's against d'; the headline
    number is the exponent ratio.  Grid entries with d' >= d are flagged
    floored and excluded from both fits.
    """
    if mode not in ("dataset", "width"):
        raise ValueError(f"mode must be dataset or width, got {mode!r}")
    if train_cfg is None:
        # one size-512 minibatch per epoch keeps compute constant across d
        train_cfg = TrainConfig(
            optimizer="adamw", lr0=1e-3, epochs=2048, batch_size=512, steps_per_epoch=1
        )
    t0 = time.perf_counter()
    jobs = [
        (mode, d, seed, k, tol, train_cfg, student_width, test_size, harmonic_train)
        for d in d_grid
        for seed in seeds
    ]
    results = _map_jobs(_nsl_job, jobs, workers)

    report = ExperimentReport(
        name="nsl",
        columns=["seed", "d", "d_prime", "arm", "floored", "final_test_mse"],
        metadata={
            "mode": mode,
            "k": k,
            "tol": tol,
            "d_grid": list(d_grid),
            "seeds": list(seeds),
            "compress_rule": "d_prime = ceil(16 sqrt(d))",
            "student_width": student_width,
            "test_size": test_size,
            "harmonic_train": harmonic_train,
            "train_cfg": asdict(train_cfg),
            "arm_legend": {"0": "original", "1": "compressed"},
        },
    )
    for rows in results:
        for row in rows:
            report.add_row(**row)

    orig_pts, comp_pts = [], []
    for d in d_grid:
        rows_d = [r for rows in results for r in rows if r["d"] == d]
        if any(r["floored"] for r in rows_d):
            continue
        full = [r["final_test_mse"] for r in rows_d if r["arm"] == 0]
        comp = [r["final_test_mse"] for r in rows_d if r["arm"] == 1]
        d_prime = rows_d[0]["d_prime"]
        if full:
            orig_pts.append((d, float(np.mean(full))))
        if comp:
            comp_pts.append((d_prime, float(np.mean(comp))))
    if len(orig_pts) >= 3:
        report.fits["original"] = fit_power_law(orig_pts)
    if len(comp_pts) >= 3:
        report.fits["compressed"] = fit_power_law(comp_pts)
    if "original" in report.fits and "compressed" in report.fits:
        a = report.fits["original"].alpha
        ac = report.fits["compressed"].alpha
        report.metadata["exponent_ratio"] = float(ac / a) if a != 0.0 else float("inf")
    report.metadata["wall_time_s"] = time.perf_counter() - t0
    return report
