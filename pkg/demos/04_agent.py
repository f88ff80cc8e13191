# # Teaching an agent to hit a wall count
#
# The agent walks a cursor over the grid in raster order and may set the cell
# under it to empty, wall or bat, or leave it alone. Each step is rewarded by
# how much closer the instructed measures moved to their goals.
#
# Here the condition is the text-free scalar goal vector, trained on the
# "few/many walls" instructions for a short while. Expect a few minutes.

# %%
from instructpcg.env_rl import EnvConfig, PPOConfig, RandomPolicy, ScalarConditioner, derive_env_seed, \
    mean_progress, run_episodes, train_agent
from instructpcg.fitness import TaskId
from instructpcg.instruction import generate_datasets
from instructpcg.level import render_level

single, _ = generate_datasets()
records = [r for r in single if r.tasks == [TaskId.WC]]
cond = ScalarConditioner()
env = EnvConfig(cond_dim=cond.dim)
jobs = [(r, derive_env_seed(1, k)) for k, r in enumerate(records)]

print("random actions:", round(mean_progress(run_episodes(RandomPolicy(), cond, jobs, env)), 3))

# %%
def show(update, policy, metrics):
    if update % 20 == 0:
        print(f"update {update}: train Progress {metrics.rows[-1][2]:.3f}")

policy, metrics = train_agent(cond, records, env, PPOConfig(updates=150, probe_interval=150), seed=0, callback=show)

# %%
episodes = run_episodes(policy, cond, jobs, env, greedy=True)
print("trained, greedy:", round(mean_progress(episodes), 3))
ep = episodes[0]
print(ep.record.text, "| start", ep.initial.wc, "goal", ep.record.goals.wc, "end", ep.final[TaskId.WC])
print(render_level(ep.final_level))
