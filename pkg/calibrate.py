"""Scratch calibration harness (not part of the package)."""
import sys, time
import numpy as np
from edgesched.config import RunConfig
from edgesched.experiments import build_workload, run_cell, train_predictor
from edgesched.metrics import aggregate
from edgesched.simulator import predict_workload

n = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
version = sys.argv[2] if len(sys.argv) > 2 else "V1"
mode = sys.argv[3] if len(sys.argv) > 3 else "stable"
seed = int(sys.argv[4]) if len(sys.argv) > 4 else 0

cfg = RunConfig()
cfg.workload.n_tasks = n

t0 = time.perf_counter()
trained = train_predictor(cfg, version, seed)
t_train = time.perf_counter() - t0
print(f"predictor heldout acc: {trained.heldout_accuracy:.3f} (train {t_train:.1f}s)")

workload = build_workload(cfg, version, seed)
env = cfg.environment(version, mode, seed)
labels = [env.preference_label(t) for t in workload.tasks]
print(f"label mix: compute={np.mean(labels):.3f}")
edge_feasible = np.mean([
    t.accuracy_req <= env.acc_model.quality(env.edge_servers[0].deployed_model, t.complexity)
    for t in workload.tasks])
print(f"edge-accuracy-feasible fraction: {edge_feasible:.3f}")
comp = np.array([t.complexity for t in workload.tasks])
print(f"complexity terciles: {np.mean(comp < 1/3):.2f}/{np.mean((comp >= 1/3) & (comp < 2/3)):.2f}/{np.mean(comp >= 2/3):.2f}")

t0 = time.perf_counter()
predictions = predict_workload(trained.predictor, workload, cfg.workload.delay_req_range[1])
print(f"predict: {time.perf_counter()-t0:.1f}s")

hdr = f"{'policy':12s} {'acc':>6s} {'acc_sr':>7s} {'dly_sr':>7s} {'delay':>7s} {'U_tf':>9s} {'B_mbps':>8s} {'E_j':>10s} {'obj':>8s} {'t':>5s}"
print(hdr)
for name in ("pref_bandit", "pref_only", "bandit_only", "all_edge", "all_cloud", "random", "greedy"):
    t0 = time.perf_counter()
    res = run_cell(cfg, name, version, mode, seed, workload=workload, predictions=predictions)
    dt = time.perf_counter() - t0
    r = aggregate(res)
    print(f"{name:12s} {r.avg_accuracy:6.2f} {r.acc_success_rate:7.3f} {r.delay_success_rate:7.3f} "
          f"{r.avg_delay_ms:7.1f} {r.compute_tflop_total:9.2f} {r.bandwidth_mbps_avg:8.2f} "
          f"{r.energy_j_total:10.1f} {r.objective:8.4f} {dt:5.1f}")
