"""Run the experiment configs in scripts/configs and render an SVG per CSV.

    python3 scripts/run_figures.py                 # fast linear-estimator figures
    python3 scripts/run_figures.py --cnn           # also train and evaluate the CNNs (~20 min)
    python3 scripts/run_figures.py --only mm_trace

Outputs land in out/<config name>/.  Trained weights go to out/weights/.
"""

import argparse
import sys
import time
from pathlib import Path

from lisce.harness.chart import ChartSpec, emit_chart
from lisce.harness.config import load_config
from lisce.harness.runner import run_experiment

HERE = Path(__file__).resolve().parent
FAST = ("mse_vs_snr", "mse_vs_rho", "mm_trace", "rate_vs_k")
CNN = ("train_dncnn", "train_ffdnet", "eval_cnn", "rate_vs_snr")

CHARTS = {
    "mse_vs_snr": [("mse_vs_snr.csv", ChartSpec("snr_db", "mse_total_db",
                                                title="MSE vs training SNR"))],
    "eval_cnn": [("mse_vs_snr.csv", ChartSpec("snr_db", "mse_total_db",
                                              title="MSE vs training SNR"))],
    "mse_vs_rho": [("mse_vs_rho.csv", ChartSpec("rho1", "mse_total_db",
                                                title="MSE vs correlation, -10 dB"))],
    "mm_trace": [("mm_trace.csv", ChartSpec("iter", "mse_db", series="init",
                                            title="MM objective per iteration"))],
    "rate_vs_snr": [("rate_vs_snr.csv", ChartSpec("gamma_bar_db", "rate_mean",
                                                  title="Rate vs transmit SNR"))],
    "rate_vs_k": [("rate_vs_k.csv", ChartSpec("K", "rate_mean", log_x=True,
                                              where=(("gamma_bar_db", "0.0"),),
                                              title="Rate vs K at 0 dB"))],
    "train_dncnn": [("training_log.csv", ChartSpec("epoch", "val_loss", series="arch",
                                                   title="DnCNN validation loss"))],
    "train_ffdnet": [("training_log.csv", ChartSpec("epoch", "val_loss", series="arch",
                                                    title="FFDNet validation loss"))],
}


def run(name, root):
    cfg = load_config(HERE / "configs" / f"{name}.cfg")
    out = root / name
    t0 = time.perf_counter()
    man = run_experiment(cfg, out)
    print(f"{name}: {len(man.outputs)} files in {out} ({time.perf_counter() - t0:.1f} s)")
    for note in man.notes:
        print(f"  note: {note}")
    for csv_name, spec in CHARTS.get(name, []):
        print(f"  chart: {emit_chart(out / csv_name, spec)}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cnn", action="store_true", help="include CNN training and evaluation")
    ap.add_argument("--only", nargs="+", help="config names to run, in order")
    ap.add_argument("--out", default="out")
    args = ap.parse_args(argv)
    names = args.only or (FAST + CNN if args.cnn else FAST)
    root = Path(args.out)
    (root / "weights").mkdir(parents=True, exist_ok=True)
    for name in names:
        run(name, root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
