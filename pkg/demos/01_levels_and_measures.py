# # Levels, measures and goal fitness
#
# A level is a small grid of empty cells, walls and bats. Five measures
# describe it: region count (RG), longest shortest path (PL), wall count (WC),
# bat count (BC) and the share of bats in a named half (BD).

# %%
from instructpcg.fitness import Direction, GoalSpec, goal_fitness, measure, progress
from instructpcg.level import parse_level, random_level, render_level

level = random_level(16, 16, seed=3)
print(render_level(level))

# %% [markdown]
# Measuring it gives one raw value per task. BD needs a direction.

# %%
m = measure(level, Direction.LEFT)
print(m)

# %% [markdown]
# Goal fitness maps each instructed task to [-5, 5]: +5 means the goal is met
# exactly. Tasks without a goal score 0.

# %%
goals = GoalSpec(wc=72, bd=(Direction.LEFT, 1.0))
print(goal_fitness(m, goals, 16, 16))

# %% [markdown]
# Progress tells how far an edit sequence moved a measure from its start
# value toward the goal, clamped to [0, 1].

# %%
print(progress(72, m.wc, 74), progress(72, m.wc, 72))

# %% [markdown]
# Hand-written levels are handy for checking the measures by eye.

# %%
tiny = parse_level(
    "..#.\n"
    "###.\n"
    "b...\n"
)
print(measure(tiny))
