"""
When does the convergence guarantee apply?
==========================================

The guarantee needs eta*L*E <= 1/2, eta*mu*E <= 1/2, mu < 1 and K above a
floor set by L and mu. L (the smoothness constant) is unknown for a real
network, so we sweep a few guesses against the step sizes and proximal
weights people actually tune over.
"""

# %%
from equitable_fl.theory import theorem_eta, validate_theorem_conditions

E, K = 5, 250
for L in (0.1, 1.0, 10.0):
    for eta in (0.001, 0.01, 0.1):
        for mu in (0.01, 1.0):
            rep = validate_theorem_conditions(eta, mu, E, K, L)
            failed = [c.name for c in rep.conditions if not c.satisfied]
            print(f"L={L:<5} eta={eta:<6} mu={mu:<5} zeta={rep.zeta:.3e} "
                  f"{'ok' if not failed else 'violates ' + ', '.join(failed)}")

# %%
# The prescribed step size always satisfies the step condition once K >= 3L/16.
eta = theorem_eta(E, K, 1.0)
rep = validate_theorem_conditions(eta, 0.01, E, K, 1.0)
print(f"\nprescribed eta = {eta:.6f}")
print(rep.format())
