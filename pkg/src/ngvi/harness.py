"""Experiment configuration, multi-method runs, metrics and file output."""

import configparser
import csv
import hashlib
import io
import json
import math
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .data import SplitSpec, load_dataset, split, subsample
from .errors import ConfigError
from .gaussian import GaussianParams
from .oracles import OracleConfig, ProblemSpec
from .optimizers import METHODS, StepConfig, run_optimizer

TIMING_DIR = "timing"


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``dataset`` is a LIBSVM dataset name or ``synthetic:toy`` for the 2-D
    regression toy.  ``steps`` maps each method to its step size.
    """

    name: str
    dataset: str
    methods: tuple = ("vn", "srvn", "bwgd")
    steps: dict = field(default_factory=dict)
    gamma: float = 1.0
    beta: float = 0.01
    c0: float = 1.0
    m0_scale: float = 1.0
    seeds: tuple = (0,)
    max_iters: int = 1000
    grad_tol: float = 1e-8
    fixed_point_tol: float = 1e-8
    quadrature_nodes: int = 64
    train_count: int = 0
    split_seed: int = 0
    shuffle: bool = True
    scale: bool = False
    subsample: int = 0
    nonconvex_reg: bool = False
    out_dir: str = "runs"

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
            if m not in self.steps or not self.steps[m] > 0:
                raise ConfigError(f"method {m!r} has no positive step size")
        if not self.c0 > 0:
            raise ConfigError("c0 must be positive")
        if not self.seeds:
            raise ConfigError("need at least one seed")

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp["experiment"] = {
            "name": self.name, "dataset": self.dataset, "methods": ", ".join(self.methods),
            "gamma": fmt(self.gamma), "beta": fmt(self.beta), "c0": fmt(self.c0),
            "m0_scale": fmt(self.m0_scale), "seeds": ", ".join(str(s) for s in self.seeds),
            "max_iters": str(self.max_iters), "grad_tol": fmt(self.grad_tol),
            "fixed_point_tol": fmt(self.fixed_point_tol),
            "nonconvex_reg": str(self.nonconvex_reg).lower(), "out_dir": self.out_dir,
        }
        cp["steps"] = {m: fmt(self.steps[m]) for m in sorted(self.steps)}
        cp["oracle"] = {"quadrature_nodes": str(self.quadrature_nodes)}
        cp["data"] = {"train_count": str(self.train_count), "split_seed": str(self.split_seed),
                      "shuffle": str(self.shuffle).lower(), "scale": str(self.scale).lower(),
                      "subsample": str(self.subsample)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self):
        # output location does not change results, so it is left out of the hash
        return hashlib.sha256(replace(self, out_dir="").to_ini().encode()).hexdigest()[:16]


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def parse_config(text):
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if "experiment" not in cp:
        raise ConfigError("config needs an [experiment] section")
    ex = cp["experiment"]
    kw = {"name": ex.get("name", "experiment"), "dataset": ex["dataset"]}
    if "methods" in ex:
        kw["methods"] = tuple(m.strip() for m in ex["methods"].split(",") if m.strip())
    for key in ("gamma", "beta", "c0", "m0_scale", "grad_tol", "fixed_point_tol"):
        if key in ex:
            kw[key] = ex.getfloat(key)
    if "max_iters" in ex:
        kw["max_iters"] = ex.getint("max_iters")
    if "seeds" in ex:
        kw["seeds"] = _ints(ex["seeds"])
    if "nonconvex_reg" in ex:
        kw["nonconvex_reg"] = ex.getboolean("nonconvex_reg")
    if "out_dir" in ex:
        kw["out_dir"] = ex["out_dir"]
    kw["steps"] = {k: float(v) for k, v in cp["steps"].items()} if "steps" in cp else {}
    if "oracle" in cp:
        kw["quadrature_nodes"] = cp["oracle"].getint("quadrature_nodes", 64)
    if "data" in cp:
        dsec = cp["data"]
        kw["train_count"] = dsec.getint("train_count", 0)
        kw["split_seed"] = dsec.getint("split_seed", 0)
        kw["shuffle"] = dsec.getboolean("shuffle", True)
        kw["scale"] = dsec.getboolean("scale", False)
        kw["subsample"] = dsec.getint("subsample", 0)
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def preset_names():
    root = resources.files("ngvi") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_config(name_or_path):
    """Read a config file, or a bundled preset when given a bare name."""
    path = Path(name_or_path)
    if path.exists():
        return parse_config(path.read_text())
    res = resources.files("ngvi") / "presets" / f"{name_or_path}.ini"
    if res.is_file():
        return parse_config(res.read_text())
    raise ConfigError(f"no config file or preset named {name_or_path!r}; "
                      f"presets: {', '.join(preset_names())}")


@dataclass(frozen=True)
class TestMetrics:
    nll_sum: float
    nll_mean: float
    accuracy: float


def compute_test_metrics(theta_hat, test):
    """Test negative log-likelihood and accuracy; a zero score predicts +1."""
    a = np.asarray(test.X @ np.asarray(theta_hat, dtype=float)).ravel()
    per = np.logaddexp(0.0, -test.y * a)
    total = float(math.fsum(per))
    pred = np.where(a >= 0, 1.0, -1.0)
    return TestMetrics(total, total / test.n, float(np.mean(pred == test.y)))


@dataclass
class LoadedData:
    train: ProblemSpec
    test: object
    digest: str


def build_problem(cfg, cache_dir=None, offline=False):
    if cfg.dataset.startswith("synthetic:"):
        from .studies import toy_regression

        kind = cfg.dataset.split(":", 1)[1]
        if kind != "toy":
            raise ConfigError(f"unknown synthetic problem {kind!r}")
        prob = toy_regression()
        digest = hashlib.sha256(prob.A.tobytes() + prob.b.tobytes()).hexdigest()
        return LoadedData(prob, None, digest)
    dm, digest = load_dataset(cfg.dataset, cache_dir=cache_dir, offline=offline)
    if cfg.subsample:
        dm = subsample(dm, cfg.subsample, seed=cfg.split_seed)
    if cfg.train_count:
        tr, te = split(dm, SplitSpec(cfg.train_count, cfg.split_seed, cfg.scale, cfg.shuffle))
    else:
        tr, te = dm, None
    prob = ProblemSpec.logistic(tr.X, tr.y, cfg.beta, cfg.gamma, cfg.nonconvex_reg)
    return LoadedData(prob, te, digest)


def initial_state(cfg, d, seed):
    rng = np.random.default_rng(seed)
    return GaussianParams.isotropic(cfg.m0_scale * rng.standard_normal(d), cfg.c0)


def _run_seed(cfg, data, seed):
    init = initial_state(cfg, data.train.dim, seed)
    ocfg = OracleConfig(quadrature_nodes=cfg.quadrature_nodes)
    monitor = None
    if data.test is not None:
        monitor = lambda q: {"test_nll": compute_test_metrics(q.mean, data.test).nll_sum}
    out = {}
    for method in cfg.methods:
        step = StepConfig(rho=cfg.steps[method], gamma=cfg.gamma, max_iters=cfg.max_iters,
                          grad_tol=cfg.grad_tol, fixed_point_tol=cfg.fixed_point_tol)
        rec = run_optimizer(method, init, data.train, ocfg, step, on_error="record",
                            monitor=monitor)
        rec.metrics["seed"] = seed
        if data.test is not None:
            tm = compute_test_metrics(rec.final.mean, data.test)
            rec.metrics.update(test_nll=tm.nll_sum, test_nll_mean=tm.nll_mean,
                               test_accuracy=tm.accuracy)
        out[method] = rec
    return out


def git_describe():
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=10, cwd=Path(__file__).resolve().parent)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: dict          # method -> list of RunRecord, one per seed
    out_dir: Path
    summary: list


SERIES_COLS = ("iter", "neg_elbo", "grad_norm", "C_frob", "V_eig_min", "V_eig_max")
SUMMARY_COLS = ("method", "seed", "iterations", "converged", "neg_elbo", "test_nll",
                "test_nll_mean", "test_accuracy", "grad_residual", "fixed_point_residual",
                "error", "config_hash", "git_describe", "dataset_digest")


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_record_csv(rec, out_dir):
    seed = rec.metrics.get("seed", 0)
    extra = sorted(rec.extra)
    header = list(SERIES_COLS) + extra
    rows = []
    for k, row in enumerate(rec.rows):
        vals = dict(zip(("iter", "wall_ms", "neg_elbo", "grad_norm", "C_frob", "V_eig_min",
                         "V_eig_max"), row))
        rows.append([vals[c] for c in SERIES_COLS] + [rec.extra[e][k] for e in extra])
    _write_csv(out_dir / f"{rec.method}_seed{seed}.csv", header, rows)
    _write_csv(out_dir / TIMING_DIR / f"{rec.method}_seed{seed}.csv", ["iter", "wall_ms"],
               [(r[0], r[1]) for r in rec.rows])


def run_experiment(cfg, out_dir=None, cache_dir=None, offline=False, workers=None,
                   plots=True, svg=False):
    """Run every method for every seed and write CSV, summary and series files.

    Seeds run concurrently; the methods of one seed run one after another.
    A failing method is recorded in the summary without stopping the others.
    Per-iteration wall-clock times go to the ``timing`` subdirectory; all
    other files are reproducible byte for byte.
    """
    out = Path(out_dir if out_dir is not None else Path(cfg.out_dir) / cfg.name)
    data = build_problem(cfg, cache_dir, offline)
    with ThreadPoolExecutor(max_workers=workers or len(cfg.seeds)) as pool:
        per_seed = list(pool.map(lambda s: _run_seed(cfg, data, s), cfg.seeds))
    records = {m: [ps[m] for ps in per_seed] for m in cfg.methods}

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    chash, gdesc = cfg.digest(), git_describe()
    summary = []
    for m in cfg.methods:
        for rec in records[m]:
            write_record_csv(rec, out)
            mt = rec.metrics
            summary.append({
                "method": m, "seed": mt["seed"], "iterations": rec.iterations,
                "converged": rec.converged, "neg_elbo": rec.rows[-1][2],
                "test_nll": mt.get("test_nll"), "test_nll_mean": mt.get("test_nll_mean"),
                "test_accuracy": mt.get("test_accuracy"), "grad_residual": rec.grad_residual,
                "fixed_point_residual": rec.fixed_point_residual, "error": rec.error,
                "config_hash": chash, "git_describe": gdesc, "dataset_digest": data.digest,
            })
    _write_csv(out / "summary.csv", SUMMARY_COLS, [[r[c] for c in SUMMARY_COLS] for r in summary])
    _write_csv(out / TIMING_DIR / "summary.csv",
               ["method", "seed", "iterations", "total_ms", "ms_per_iteration"],
               [[m, rec.metrics["seed"], rec.iterations, rec.rows[-1][1],
                 rec.rows[-1][1] / max(rec.iterations, 1)]
                for m in cfg.methods for rec in records[m]])
    (out / "summary.json").write_text(json.dumps(
        {"config": cfg.name, "config_hash": chash, "git_describe": gdesc,
         "dataset_digest": data.digest, "runs": summary}, indent=2, default=float) + "\n")
    if plots:
        emit_plot_data(records, out / "plots", svg=svg)
    return ExperimentResult(cfg, records, out, summary)


# -- plot data -----------------------------------------------------------------

def _pad(seqs):
    n = max(len(s) for s in seqs)
    return np.array([np.concatenate([s, np.full(n - len(s), s[-1])]) for s in seqs])


def _metric_series(rec, metric):
    if metric in rec.extra:
        return np.asarray(rec.extra[metric], dtype=float)
    return rec.column(metric)


def emit_plot_data(records, out_dir, metrics=None, svg=False):
    """Series files per (method, metric, axis) with mean/min/max across seeds.

    Values are shifted by the smallest value any method reached, so curves
    show the gap to the best run.  Iteration-axis files are reproducible;
    seconds-axis files carry wall-clock times and go under ``timing``.
    """
    if not records or not any(records.values()):
        raise ValueError("no records to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if metrics is None:
        first = next(iter(records.values()))[0]
        metrics = ["neg_elbo"] + sorted(first.extra)
    offsets = []
    written = []
    for metric in metrics:
        stacks = {m: _pad([_metric_series(r, metric) for r in recs])
                  for m, recs in records.items() if recs}
        best = min(float(np.min(s)) for s in stacks.values())
        offsets.append((metric, best))
        for m, S in stacks.items():
            G = S - best
            it = np.arange(G.shape[1])
            rows = zip(it, G.mean(axis=0), G.min(axis=0), G.max(axis=0))
            p = out / f"{m}_{metric}_iteration.csv"
            _write_csv(p, ["iteration", "mean", "min", "max"], rows)
            written.append(p)
            secs = _pad([r.column("wall_ms") / 1e3 for r in records[m]]).mean(axis=0)
            rows = zip(secs, G.mean(axis=0), G.min(axis=0), G.max(axis=0))
            p = out / TIMING_DIR / f"{m}_{metric}_seconds.csv"
            _write_csv(p, ["seconds", "mean", "min", "max"], rows)
            written.append(p)
    _write_csv(out / "offsets.csv", ["metric", "subtracted_minimum"], offsets)
    if svg:
        written += render_svg(out, metrics, list(records))
    return written


def load_series(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def render_svg(plot_dir, metrics, methods):
    """Log-scale line charts of the iteration-axis series (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "ngvi"
    paths = []
    for metric in metrics:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for m in methods:
            p = Path(plot_dir) / f"{m}_{metric}_iteration.csv"
            if not p.exists():
                continue
            _, S = load_series(p)
            x, mean, lo, hi = S.T
            pos = lambda v: np.maximum(v, 1e-16)
            ax.plot(x, pos(mean), label=m)
            ax.fill_between(x, pos(lo), pos(hi), alpha=0.25)
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel(f"{metric} - best")
        ax.legend()
        fig.tight_layout()
        out = Path(plot_dir) / f"{metric}_iteration.svg"
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(out)
    return paths


class _LoadedRecord:
    """Minimal stand-in for RunRecord rebuilt from a run directory."""

    def __init__(self, method, header, data, wall_ms):
        self.method = method
        self._cols = {h: data[:, i] for i, h in enumerate(header)}
        self._cols["wall_ms"] = wall_ms
        self.extra = {h: data[:, i] for i, h in enumerate(header) if h not in SERIES_COLS}

    def column(self, name):
        return self._cols[name]


def load_run_dir(run_dir):
    """Rebuild per-method, per-seed series from the CSV files of a run."""
    run_dir = Path(run_dir)
    records = {}
    for p in sorted(run_dir.glob("*_seed*.csv")):
        method = p.stem.rsplit("_seed", 1)[0]
        header, data = load_series(p)
        tp = run_dir / TIMING_DIR / p.name
        wall = load_series(tp)[1][:, 1] if tp.exists() else np.zeros(len(data))
        records.setdefault(method, []).append(_LoadedRecord(method, header, data, wall))
    if not records:
        raise FileNotFoundError(f"no run CSV files in {run_dir}")
    return records
