"""Command-line entry point: ``train``, ``run`` and ``matrix``.

Every command takes a JSON config (see ``config.py``); ``--seed``, ``--out``
and ``--ablation`` override the corresponding config fields.  Exit codes are
stable for scripting: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ABLATION_POLICY, RunConfig
from .errors import ConfigError, DivergenceError, EdgeSchedError
from .experiments import (
    run_cell,
    run_matrix,
    train_predictor,
    write_matrix_csv,
    write_report_json,
    write_trace_csv,
)
from .metrics import aggregate
from .predictor import load_weights, save_weights

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.__post_init__()
    if args.out is not None:
        cfg.out_dir = args.out
    if getattr(args, "ablation", None) is not None:
        cfg.ablation = args.ablation
        cfg.__post_init__()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    trained = train_predictor(cfg)
    weights_path = out / "weights.json"
    save_weights(trained.predictor, weights_path)
    trained.report.write_csv(out / "training.csv")
    print(f"weights: {weights_path}")
    print(f"final training loss: {trained.report.losses[-1]:.6f}")
    print(f"held-out accuracy: {trained.heldout_accuracy:.4f}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    policy_name = ABLATION_POLICY[cfg.ablation]
    predictor = None
    if policy_name in ("pref_bandit", "pref_only"):
        if not cfg.predictor.weights_path:
            raise ConfigError(
                "this ablation needs trained weights; set predictor.weights_path "
                "or train first"
            )
        predictor = load_weights(cfg.predictor.weights_path)
    result = run_cell(cfg, policy_name, cfg.version, cfg.bandwidth.mode,
                      cfg.seed, predictor=predictor)
    report = aggregate(result)
    write_trace_csv(result, out / "trace.csv")
    write_report_json(report, out / "report.json")
    print(f"policy={report.policy} version={report.version} bw={report.bw_mode}")
    print(f"acc_sr={report.acc_success_rate:.4f} delay_sr={report.delay_success_rate:.4f}")
    print(f"objective={report.objective:.6f} energy_j={report.energy_j_total:.1f}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    result = run_matrix(cfg)
    write_matrix_csv(result.tables, out / "matrix.csv")
    print(f"cells: {len(result.mean_reports)} rows -> {out / 'matrix.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgesched",
        description="Deterministic edge-cloud inference scheduling experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("train", cmd_train, "train the preference classifier and save weights"),
        ("run", cmd_run, "run one experiment; writes trace.csv and report.json"),
        ("matrix", cmd_matrix, "run the policy x version x bandwidth grid"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "run":
            p.add_argument("--ablation", choices=("rpp", "cdco", "both"), default=None,
                           help="rpp: prediction-guided placement only; "
                                "cdco: feedback bandit only; both: full pipeline")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except EdgeSchedError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
