"""Experiment runner: turns an :class:`ExperimentConfig` into CSV files and a manifest.

Every experiment is a function ``(cfg, ctx) -> None`` that writes its
outputs through ``ctx``; the runner records CRC32s, writes the manifest
last and removes partial outputs if anything raises.
"""

import csv
import io
import json
import logging
import math
import os
import time
import zlib
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..channel import CorrelationProfile, RngStream, build_czz
from ..cnn.network import cnn_estimate, from_image
from ..cnn.train import DatasetSpec, TrainConfig, generate_dataset, train
from ..cnn.weights_io import load_dataset, load_weights, save_dataset, save_weights
from ..downlink import RateConfig, rate_gains, rates_from_gains
from ..estimation import (analytic_mse_dft_parts, db, empirical_mse, from_db,
                          lmmse_from_ls, ls_mse, mse_from_errors, sigma2_from_snr_db)
from ..pilots import dft_phase_matrix, lmmse_mse_of_phi, mm_optimize_phase
from .config import dump_config

log = logging.getLogger(__name__)

MSE_COLUMNS = ("method", "M", "K", "T_p", "rho1", "rho2", "rho3", "snr_db", "mse_total_db",
               "mse_direct_db", "mse_cascaded_db", "stderr_linear", "trials", "seed")
RATE_COLUMNS = ("method", "M", "K", "T_p", "T_c", "rho1", "rho2", "rho3", "gamma_tr_db",
                "gamma_bar_db", "rate_mean", "rate_stderr", "trials", "seed")
MM_COLUMNS = ("init", "iter", "mse_linear", "mse_db", "lambda")
TRAIN_LOG_COLUMNS = ("arch", "epoch", "train_loss", "val_loss")
HYPER_COLUMNS = ("arch", "D", "N_f", "M", "K", "snr_db", "mse_direct_db", "mse_cascaded_db",
                 "best_epoch", "trials", "seed")
TIMING_COLUMNS = ("arch", "D", "N_f", "samples", "infer_seconds", "seconds_per_sample")

CNN_METHODS = ("dncnn", "ffdnet")


@dataclass
class RunManifest:
    experiment: str
    config: str
    code_version: str
    seed: int
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)   # [{"file", "crc32", "bytes"}]
    notes: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def _atomic_write(path, data):
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class RunContext:
    """Output bookkeeping for one run."""

    def __init__(self, out_dir, manifest):
        self.out_dir = Path(out_dir)
        self.manifest = manifest
        self.written = []

    def path(self, name):
        return self.out_dir / name

    def write_bytes(self, name, data, record=True):
        p = self.path(name)
        _atomic_write(p, data)
        self.written.append(p)
        if record:
            self.manifest.outputs.append(
                {"file": name, "crc32": f"{zlib.crc32(data) & 0xFFFFFFFF:08x}",
                 "bytes": len(data)})
        return p

    def write_csv(self, name, columns, rows, record=True):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row width {len(row)} != {len(columns)} columns in {name}")
            wr.writerow([_fmt(v) for v in row])
        return self.write_bytes(name, buf.getvalue().encode("utf-8"), record)

    def record_file(self, name):
        """Register a file written by other code (e.g. weights) in the manifest."""
        p = self.path(name)
        data = p.read_bytes()
        self.written.append(p)
        self.manifest.outputs.append(
            {"file": name, "crc32": f"{zlib.crc32(data) & 0xFFFFFFFF:08x}", "bytes": len(data)})

    def cleanup(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


# -- helpers ----------------------------------------------------------------

def profile_of(cfg, K=None, rho=None):
    r1, r2, r3 = (cfg.rho1, cfg.rho2, cfg.rho3) if rho is None else (rho, rho, rho)
    return CorrelationProfile(cfg.M, cfg.K if K is None else K, r1, r2, r3)


def _weights_path(cfg, method):
    path = cfg.dncnn_weights if method == "dncnn" else cfg.ffdnet_weights
    if path is None and cfg.weights is not None and cfg.arch == method:
        path = cfg.weights
    if path is None:
        raise FileNotFoundError(f"method {method!r} needs a weights path in the config")
    return path


def load_method_weights(cfg):
    out = {}
    for method in cfg.methods:
        if method in CNN_METHODS:
            w = load_weights(_weights_path(cfg, method))
            if w.arch != method:
                raise ValueError(f"{_weights_path(cfg, method)} holds {w.arch} weights")
            out[method] = w
    return out


def _mse_row(method, p, T_p, snr_db, total, direct, cascaded, stderr, trials, seed):
    return (method, p.M, p.K, T_p, p.rho1, p.rho2, p.rho3, snr_db, db(total), db(direct),
            db(cascaded), stderr, trials, seed)


def _check_cnn_shape(w, p):
    if (w.M, w.K) != (p.M, p.K):
        raise ValueError(f"{w.arch} weights were trained for M={w.M}, K={w.K}, "
                         f"not M={p.M}, K={p.K}")


def _mse_point(cfg, p, snr_db, rng, weights, rows):
    T_p = cfg.pilot_length
    phi = dft_phase_matrix(T_p, p.K)
    s2 = sigma2_from_snr_db(snr_db)
    for method in cfg.methods:
        w = weights.get(method)
        if w is not None:
            _check_cnn_shape(w, p)
        # Every method sees the same channels and noise at a given point.
        e = empirical_mse(method, p, phi, s2, cfg.trials, rng, weights=w, workers=cfg.threads)
        rows.append(_mse_row(method, p, T_p, snr_db, e.total, e.direct, e.cascaded,
                             e.stderr_total, cfg.trials, cfg.seed))


def analytic_rows(p, T_p, snr_db, seed):
    s2 = sigma2_from_snr_db(snr_db)
    _, ls_d, ls_c = ls_mse(p.M, p.K, T_p, s2)
    lm_d, lm_c = analytic_mse_dft_parts(p, T_p, s2)
    return [_mse_row("ls-analytic", p, T_p, snr_db, ls_d + ls_c, ls_d, ls_c, 0.0, 0, seed),
            _mse_row("lmmse-analytic", p, T_p, snr_db, lm_d + lm_c, lm_d, lm_c, 0.0, 0, seed)]


# -- experiments -----------------------------------------------------------

def exp_mse_vs_snr(cfg, ctx, analytic_only=False):
    p = profile_of(cfg)
    weights = {} if analytic_only else load_method_weights(cfg)
    rows = []
    base = RngStream(cfg.seed)
    for i, snr in enumerate(cfg.snr_db):
        if not analytic_only:
            _mse_point(cfg, p, snr, base.child(i), weights, rows)
        rows += analytic_rows(p, cfg.pilot_length, snr, cfg.seed)
    ctx.write_csv("mse_vs_snr.csv", MSE_COLUMNS, rows)
    _note_snr_mismatch(cfg, weights, cfg.snr_db, ctx)


def exp_mse_vs_rho(cfg, ctx, analytic_only=False):
    weights = {} if analytic_only else load_method_weights(cfg)
    rows = []
    base = RngStream(cfg.seed)
    for i, rho in enumerate(cfg.rho_grid):
        p = profile_of(cfg, rho=rho)
        if not analytic_only:
            _mse_point(cfg, p, cfg.gamma_tr_db, base.child(i), weights, rows)
        rows += analytic_rows(p, cfg.pilot_length, cfg.gamma_tr_db, cfg.seed)
    ctx.write_csv("mse_vs_rho.csv", MSE_COLUMNS, rows)
    _note_snr_mismatch(cfg, weights, (cfg.gamma_tr_db,), ctx)


def exp_mm_trace(cfg, ctx):
    if cfg.pilot_length != cfg.K + 1:
        raise ValueError("mm-trace requires T_p = K + 1")
    p = profile_of(cfg)
    czz = build_czz(p)
    s2 = sigma2_from_snr_db(cfg.gamma_tr_db)
    rows = []
    dft = dft_phase_matrix(cfg.K + 1, cfg.K)
    mse_dft = lmmse_mse_of_phi(dft, czz, s2, cfg.M)
    rows.append(("dft", 0, mse_dft, db(mse_dft), float("nan")))
    base = RngStream(cfg.seed)
    for i in range(cfg.mm_inits):
        _, trace = mm_optimize_phase(czz, s2, cfg.M, cfg.K, epsilon=cfg.mm_epsilon,
                                     max_iter=cfg.mm_max_iter, rng=base.child(i))
        rows += [(f"random-{i}",) + r for r in trace.rows()]
        if not trace.converged:
            ctx.manifest.notes.append(f"random-{i} hit mm_max_iter={cfg.mm_max_iter}")
    ctx.write_csv("mm_trace.csv", MM_COLUMNS, rows)


def _rate_rows(cfg, p, gains_by_method, T_p, gamma_bars):
    rows = []
    for method, gains in gains_by_method.items():
        for gb in gamma_bars:
            rc = RateConfig(float(from_db(gb)), T_p, cfg.T_c)
            mean, se = rates_from_gains(gains, rc)
            rows.append((method, p.M, p.K, T_p, cfg.T_c, p.rho1, p.rho2, p.rho3,
                         cfg.gamma_tr_db, gb, mean, se, cfg.trials, cfg.seed))
    return rows


def _rate_gains(cfg, p, T_p, rng, weights):
    out = {}
    for method in cfg.methods:
        w = weights.get(method)
        if w is not None:
            _check_cnn_shape(w, p)
        out[method] = rate_gains(method, p, cfg.gamma_tr_db, cfg.trials, rng, T_p, w,
                                 cfg.threads)
    return out


def exp_rate_vs_snr(cfg, ctx):
    p = profile_of(cfg)
    weights = load_method_weights(cfg)
    gains = _rate_gains(cfg, p, cfg.pilot_length, RngStream(cfg.seed), weights)
    ctx.write_csv("rate_vs_snr.csv", RATE_COLUMNS,
                  _rate_rows(cfg, p, gains, cfg.pilot_length, cfg.gamma_bar_db))
    _note_snr_mismatch(cfg, weights, (cfg.gamma_tr_db,), ctx)


def exp_rate_vs_k(cfg, ctx):
    weights = load_method_weights(cfg)
    rows = []
    base = RngStream(cfg.seed)
    for i, K in enumerate(cfg.K_grid):
        if K + 1 >= cfg.T_c:
            raise ValueError(f"K={K} leaves no data symbols for T_c={cfg.T_c}")
        p = profile_of(cfg, K=K)
        gains = _rate_gains(cfg, p, K + 1, base.child(i), weights)
        rows += _rate_rows(cfg, p, gains, K + 1, cfg.gamma_bar_db)
    ctx.write_csv("rate_vs_k.csv", RATE_COLUMNS, rows)


def _note_snr_mismatch(cfg, weights, snrs, ctx):
    for method in weights:
        trained = set(cfg.train_snr_db)
        off = [s for s in snrs if s not in trained]
        if off:
            ctx.manifest.notes.append(
                f"{method} evaluated at SNRs {off} dB outside its training set "
                f"{sorted(trained)} dB")


def dataset_spec(cfg):
    return DatasetSpec(profile_of(cfg), tuple(cfg.train_snr_db),
                       (cfg.n_train, cfg.n_val, cfg.n_test), cfg.seed, cfg.pilot_length)


def train_config(cfg):
    return TrainConfig(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon,
                       cfg.batch_size, cfg.patience, cfg.max_epochs, cfg.improvement_delta)


def _get_dataset(cfg):
    if cfg.dataset is not None and Path(cfg.dataset).exists():
        ds = load_dataset(cfg.dataset)
        if (ds.M, ds.K, ds.T_p) != (cfg.M, cfg.K, cfg.pilot_length):
            raise ValueError(f"dataset {cfg.dataset} does not match the configured profile")
        return ds
    return generate_dataset(dataset_spec(cfg))


def test_split_mse(w, split, p, T_p):
    """Per-SNR test MSE of the network, LS and LMMSE on identical samples.

    Returns ``{snr_db: {method: MseEstimate}}``.
    """
    out = {}
    z_ls_all = from_image(split.inputs)
    z_all = from_image(split.targets)
    for snr in sorted(set(float(s) for s in split.snr_db)):
        rows = split.snr_db == np.float32(snr)
        z_ls, z = z_ls_all[rows], z_all[rows]
        s2 = sigma2_from_snr_db(snr)
        res = {"ls": mse_from_errors(z_ls - z, p.M),
               "lmmse": mse_from_errors(lmmse_from_ls(z_ls, p, T_p, s2) - z, p.M)}
        if w is not None:
            res[w.arch] = mse_from_errors(cnn_estimate(w, z_ls, p.M, s2, T_p) - z, p.M)
        out[snr] = res
    return out


def exp_train(cfg, ctx):
    p = profile_of(cfg)
    ds = _get_dataset(cfg)
    w, trace = train(cfg.arch, ds, train_config(cfg), RngStream(cfg.seed).child(7), cfg.D,
                     cfg.N_f)
    name = Path(cfg.weights).name if cfg.weights else f"{cfg.arch}.lisw"
    wpath = Path(cfg.weights) if cfg.weights else ctx.path(name)
    save_weights(w, wpath)
    if wpath.parent.resolve() == ctx.out_dir.resolve():
        ctx.record_file(name)
    ctx.write_csv("training_log.csv", TRAIN_LOG_COLUMNS,
                  [(cfg.arch,) + e for e in trace.epochs])
    rows = []
    for snr, res in test_split_mse(w, ds["test"], p, ds.T_p).items():
        for method, e in res.items():
            rows.append(_mse_row(method, p, ds.T_p, snr, e.total, e.direct, e.cascaded,
                                 e.stderr_total, e.trials, cfg.seed))
    ctx.write_csv("test_mse.csv", MSE_COLUMNS, rows)
    ctx.manifest.notes.append(
        f"best epoch {trace.best_epoch}, stopped early: {trace.stopped_early}")


def exp_gen_data(cfg, ctx):
    ds = generate_dataset(dataset_spec(cfg))
    if cfg.dataset:
        save_dataset(ds, cfg.dataset)
        if Path(cfg.dataset).parent.resolve() == ctx.out_dir.resolve():
            ctx.record_file(Path(cfg.dataset).name)
    else:
        save_dataset(ds, ctx.path("dataset.lisd"))
        ctx.record_file("dataset.lisd")


def exp_table_hyperparams(cfg, ctx):
    p = profile_of(cfg)
    ds = _get_dataset(cfg)
    rows, timings = [], []
    test = ds["test"]
    archs = [m for m in cfg.methods if m in CNN_METHODS] or [cfg.arch]
    for arch in archs:
        for D in cfg.D_grid:
            for N_f in cfg.N_f_grid:
                w, trace = train(arch, ds, train_config(cfg),
                                 RngStream(cfg.seed).child(7), D, N_f)
                res = test_split_mse(w, test, p, ds.T_p)
                for snr, by_method in res.items():
                    e = by_method[arch]
                    rows.append((arch, D, N_f, p.M, p.K, snr, db(e.direct), db(e.cascaded),
                                 trace.best_epoch, e.trials, cfg.seed))
                timings.append((arch, D, N_f, len(test)) + _time_inference(w, test, p, ds.T_p))
    ctx.write_csv("table_hyperparams.csv", HYPER_COLUMNS, rows)
    # Wall-clock timings are hardware dependent and kept out of the manifest CRCs.
    ctx.write_csv("table_timings.csv", TIMING_COLUMNS, timings, record=False)


def _time_inference(w, split, p, T_p):
    z_ls = from_image(split.inputs)
    s2 = split.sigma.astype(float) ** 2
    t0 = time.perf_counter()
    cnn_estimate(w, z_ls, p.M, s2, T_p)
    dt = time.perf_counter() - t0
    return dt, dt / len(split)


EXPERIMENTS = {
    "mse-vs-snr": exp_mse_vs_snr,
    "mse-vs-rho": exp_mse_vs_rho,
    "mm-trace": exp_mm_trace,
    "rate-vs-snr": exp_rate_vs_snr,
    "rate-vs-k": exp_rate_vs_k,
    "train": exp_train,
    "gen-data": exp_gen_data,
    "table-hyperparams": exp_table_hyperparams,
}


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_experiment(cfg, out_dir=None, analytic_only=False):
    """Run ``cfg.experiment`` and write its outputs plus ``manifest.json``.

    Partial outputs are removed if the experiment raises.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.experiment, dump_config(cfg), __version__, cfg.seed, _now())
    ctx = RunContext(out, manifest)
    fn = EXPERIMENTS[cfg.experiment]
    try:
        ctx.write_bytes("config.txt", manifest.config.encode("utf-8"))
        if analytic_only:
            if cfg.experiment not in ("mse-vs-snr", "mse-vs-rho"):
                raise ValueError("analytic curves exist for mse-vs-snr and mse-vs-rho only")
            fn(cfg, ctx, analytic_only=True)
        else:
            fn(cfg, ctx)
        manifest.finished = _now()
        ctx.write_bytes("manifest.json", manifest.to_json().encode("utf-8"), record=False)
    except BaseException:
        ctx.cleanup()
        raise
    log.info("%s finished, %d outputs in %s", cfg.experiment, len(manifest.outputs), out)
    return manifest
