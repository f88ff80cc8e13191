# # The instruction corpus
#
# Single-objective instructions mention one task, multi-objective ones two.
# Numeric goals are the 25th and 75th percentiles of each measure over random
# levels, so "few" and "many" mean something concrete for the grid size.

# %%
import numpy as np

from instructpcg.instruction import HOLDOUT, featurize, generate_datasets, goal_percentiles

single, multi = generate_datasets(seed=0)
print(len(single), len(multi))
print(f"mean length: {single.mean_length():.1f} / {multi.mean_length():.1f} characters")

# %%
for (task, lvl), value in sorted(goal_percentiles().items(), key=lambda kv: (kv[0][0], kv[0][1])):
    print(f"{task.name:2s} {lvl:4s} {value:g}")

# %% [markdown]
# A few records, with their active-task mask and goals. Holdout records use
# surface templates never seen during training.

# %%
for r in list(single)[::17] + list(multi)[::61]:
    tag = " (holdout)" if r.split == HOLDOUT else ""
    print(f"{r.composition:6s} {r.text!r}{tag}")

# %% [markdown]
# The text front-end hashes word unigrams and bigrams into a unit vector.
# Related phrasings end up closer than unrelated ones.

# %%
def cos(a, b):
    return float(featurize(a).values @ featurize(b).values)

print(cos("many bats", "many many bats"), cos("many bats", "few walls"))
print(np.count_nonzero(featurize("a level with many bats").values), "non-zero features")
