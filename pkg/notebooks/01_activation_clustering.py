"""
Clustering clients by their activation vectors
==============================================

Ten clients hold disjoint label sets: four see digits 0-3, six see 4-9.
After one round of local training each client reports the log-softmax of its
penultimate layer averaged over a small probe batch. The server never sees
labels, yet the Gram matrix of those vectors separates the two groups.
"""

# %%
import numpy as np

from equitable_fl import clustering
from equitable_fl.experiment import ExperimentConfig, build_state
from equitable_fl.federation import local_update, stream

cfg = ExperimentConfig(seed=0)
state = build_state(cfg)
print("clients per planted cluster:",
      np.bincount([c.true_cluster for c in state.clients]))

# %%
# Let every client train once from the shared initial model.
updates = [local_update(c, state.params, cfg.hp, stream(0, 2, 0, c.client_id))
           for c in state.clients]
A = np.stack([u.activation for u in updates])
print("activation matrix:", A.shape)

# %%
# The similarity matrix is A A^T. Its leading eigenvector is the shared
# "average client" direction; the next one splits the groups.
S = clustering.similarity(A)
emb = clustering.spectral_embedding(S, 2)
np.set_printoptions(precision=3, suppress=True)
print("spectral embedding (rows = clients):")
print(emb)

# %%
assignment = clustering.cluster_cohort(A, 2, np.random.default_rng(0))
print("recovered labels:", assignment.labels)
print("planted labels:  ", [c.true_cluster for c in state.clients])
print("weights:", assignment.weights.round(4), "sum", assignment.weights.sum())
# Each cluster carries half the mass no matter how many members it has:
for q in range(2):
    print(f"cluster {q}: size {assignment.cluster_sizes[q]}, "
          f"mass {assignment.weights[assignment.labels == q].sum():.3f}")
