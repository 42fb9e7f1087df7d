# %% [markdown]
# # Motor efficiency map
#
# The loss model scales linearly with the power factor k, so the efficiency
# at a given relative torque and speed does not depend on motor size.

# %%
import numpy as np

from evgp.powertrain import MotorParams, efficiency_map, motor_efficiency, write_efficiency_csv

mp = MotorParams()
tq, sp, eff, feas = efficiency_map(mp, 1.0, 40, 60)
masked = np.where(feas, eff, np.nan)
best = np.unravel_index(np.nanargmax(masked), masked.shape)
print(f"peak efficiency {masked[best]:.4f} at {tq[best[0]]:.0f} N*m, {sp[best[1]]:.0f} rpm")

# %% [markdown]
# Reference corner: rated torque at the base speed.

# %%
eta, _, loss = motor_efficiency(mp, 1.0, mp.max_torque(1.0), mp.hyperbola_const * mp.max_speed)
print(f"eta={float(eta):.5f}, losses={float(loss):.2f} W")

# %%
for k in (0.5, 2.0):
    _, _, ek, fk = efficiency_map(mp, k, 40, 60)
    diff = np.nanmax(np.abs(np.where(fk, ek, np.nan) - masked))
    print(f"k={k}: largest efficiency change on feasible points {diff:.1e}")

# %%
write_efficiency_csv("effmap.csv", tq, sp, eff, feas)
print("wrote effmap.csv (torque_nm, speed_rpm, efficiency, feasible)")
