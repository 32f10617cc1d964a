# %% [markdown]
# # Training the router offline
#
# Uniform-routing runs log (state, decision, behavior probability, score) for every
# step. A small policy network is trained on those logs with clipped PPO and then
# compared with uniform routing on fresh seeds.

# %%
import numpy as np

from featforge import synthetic
from featforge.rl import PolicyNet, PPOConfig, bandit_accuracy, collect, ppo_update, synthetic_bandit
from featforge.search import SearchConfig, run

# %% [markdown]
# Sanity check on a synthetic bandit where the right action depends on `state[0]`.

# %%
pol, rep = ppo_update(PolicyNet(seed=0), synthetic_bandit(400, np.random.default_rng(0)), PPOConfig(),
                      np.random.default_rng(0))
print("epoch objective", np.round(rep.epoch_objective, 3))
print("held-out accuracy", bandit_accuracy(pol, 2000, np.random.default_rng(1)))

# %% [markdown]
# Collect about 400 samples from uniform runs on the synthetic suite.

# %%
samples = []
for seed in (100, 101):
    for frame in synthetic.suite(seed=seed):
        res = run(frame, SearchConfig(iterations=10, steps=6, seed=seed))
        samples += collect(res.records, group=f"{frame.name}-{seed}")
len(samples)

# %%
policy, rep = ppo_update(PolicyNet(seed=0), samples, PPOConfig(), np.random.default_rng(0))
print("generate share before/after", rep.action_share_before, rep.action_share_after)

# %% [markdown]
# Paired comparison on new seeds: same seed, trained router vs uniform routing.

# %%
for seed in range(3):
    full, base = [], []
    for frame in synthetic.suite(seed=seed):
        cfg = SearchConfig(iterations=10, steps=6, seed=seed)
        full.append(run(frame, SearchConfig(**{**cfg.__dict__, "router": "ppo"}), policy=policy).best_report.primary)
        base.append(run(frame, cfg).best_report.primary)
    print(seed, np.round(full, 3), np.round(base, 3))
