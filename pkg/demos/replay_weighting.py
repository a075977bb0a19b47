"""How TD errors become replay weights, sampling odds and a step size."""
# %%
import math

import numpy as np

from idem_dqn.agent import adaptive_lr
from idem_dqn.replay import Mode, ReplayBuffer, Transition, weight_of

for delta in (0.0, 0.5, -2.0, math.log(2) / 0.5, 200.0):
    print(f"delta={delta:8.3f}  weight={weight_of(delta, 0.5):.6g}")

# %% Five stored transitions with growing |TD| and the resulting sampling distribution.
buf = ReplayBuffer(capacity=5, mode=Mode.WEIGHTED, lam=0.5)
for i, delta in enumerate([0.0, 0.5, 1.0, 2.0, 4.0]):
    buf.push(Transition(i, 0, 0.0, i, False), delta)
print("weighted:", np.round(buf.probabilities(), 4))
draws = np.bincount(buf.sample(50_000, np.random.default_rng(0)).indices, minlength=5) / 50_000
print("sampled: ", np.round(draws, 4))

# %% After an update the sampled entries get fresh errors; small errors flatten the distribution.
buf.refresh_weights([3, 4], [0.1, 0.1])
print("refreshed:", np.round(buf.probabilities(), 4))

# %% The step size shrinks as the running mean |TD| grows.
for td_mean in (0.0, 0.1, 0.5, 1.0, math.log(10)):
    print(f"mean|TD|={td_mean:.3f}  lr={adaptive_lr(1e-4, 1.0, td_mean):.3e}")
