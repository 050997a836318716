"""
Equitable aggregation versus sample-weighted FedProx
====================================================

Same data, same cohorts, same local training; only the aggregation weights
differ. FedProx weights clients by sample count, which favours the larger
group (six clients with 240 samples each against four with 160). Equitable-FL
gives each discovered cluster half the mass.

Client disagreement (CD) is the mean absolute gap between cohort members'
test losses under the new global model. Lower is fairer.
"""

# %%
import numpy as np

from equitable_fl.experiment import ExperimentConfig, build_state, run_experiment

cfg = ExperimentConfig(seed=1)
state = build_state(cfg)
runs = {algo: run_experiment(cfg.with_overrides(algorithm=algo), state)
        for algo in ("fedavg", "fedprox", "equitable", "fedprox_powd")}

# %%
print(f"{'rounds':>8} " + " ".join(f"{a:>13}" for a in runs))
for lo in range(0, cfg.hp.rounds, 10):
    cds = [np.mean([r.cd for r in s.records[lo:lo + 10]]) for s in runs.values()]
    print(f"{lo + 1:>3}-{lo + 10:<4} " + " ".join(f"{v:13.4f}" for v in cds))

# %%
print()
for algo, s in runs.items():
    nmi = "" if np.isnan(s.mean_nmi) else f"  NMI {s.mean_nmi:.3f}"
    print(f"{algo:13s} acc {s.final_accuracy:.3f}  CD(last 20%) {s.mean_cd_final:.4f}"
          f"  sigma_acc {s.mean_sigma_acc_final:.4f}{nmi}")
