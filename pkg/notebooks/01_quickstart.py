# %% [markdown]
# # Quickstart: search for an augmented feature set
#
# A target built from an interaction, `y = x1 * x2 + 0.1 * x3 + noise`, is hard
# for a forest to learn from the raw columns. The search should find `x1 x2 *`.

# %%
import numpy as np

from featforge import synthetic
from featforge.evaluation import evaluate
from featforge.pipeline import FeatureSet
from featforge.search import SearchConfig, provenance, run

frame = synthetic.interaction_linear(n=600, seed=0)
frame.names, frame.n

# %% [markdown]
# Baseline score of the raw columns (1-MSE, 5-fold random forest).

# %%
raw = evaluate(frame, FeatureSet.initial(frame), "rf", seed=0)
raw.primary, raw.secondary

# %% [markdown]
# Ten iterations of six router-gated steps. Every iteration restarts from the raw set.

# %%
result = run(frame, SearchConfig(iterations=10, steps=6, seed=0))
print(f"baseline {result.baseline_report.primary:.3f} -> best {result.best_report.primary:.3f}")
print(f"best found at {result.best_record.key}: {result.best_record.tokens}")

# %% [markdown]
# The trajectory of one iteration: decision, action and score per step.

# %%
for r in result.records[1:7]:
    print(r.step, r.decision.value, r.detail, round(r.score, 4))

# %% [markdown]
# Provenance of the best set: kept and dropped originals, generated features in infix form.

# %%
prov = provenance(result.best_set)
print(prov["counts"])
for g in prov["generated"]:
    print(g["name"], "=", g["infix"])

# %%
scores = np.array([r.score for r in result.records])
print("running best:", np.round(np.maximum.accumulate(scores)[::6], 3))
