# %% [markdown]
# # Single-speed versus CVT on the WLTC
#
# Every positive-power second of the cycle becomes one equally weighted load
# point at the wheel.  Two zero-weight guards (66 % grade at launch, 160 km/h
# top speed) bound the design without entering the objective.

# %%
import math
import time

from evgp.cycles import VehicleParams, central_difference, guard_scenarios, to_wheel_loads
from evgp.fixtures import load_fixture
from evgp.powertrain import MotorParams, Topology, build_design_model, design

vp, mp = VehicleParams(), MotorParams()
cycle = central_difference(load_fixture("wltc"))
loads = to_wheel_loads(cycle, vp)
scenarios = loads + guard_scenarios(vp)
print(f"{len(cycle)} samples, {len(loads)} load points")
print(build_design_model(scenarios, vp, mp, Topology.single()).size())

# %% [markdown]
# A fixed ratio has to cover both guards, so the motor is sized by the launch
# torque and the top-speed point.

# %%
t0 = time.perf_counter()
single = design(scenarios, Topology.single(), vp, mp)
print(f"single: i={single.ratios[0]:.3f}  p={single.motor_max_power / 1e3:.1f} kW  "
      f"t={single.motor_max_torque:.1f} N*m  ({time.perf_counter() - t0:.1f} s, "
      f"{single.solution.iterations} Newton steps)")

# %% [markdown]
# With a free ratio per load the launch guard can use the top ratio and the
# motor shrinks.

# %%
cvt = design(scenarios, Topology.cvt(), vp, mp)
print(f"cvt:    p={cvt.motor_max_power / 1e3:.1f} kW  t={cvt.motor_max_torque:.1f} N*m")
print(f"average input power {math.exp(single.log_objective):.0f} W -> {math.exp(cvt.log_objective):.0f} W "
      f"({1 - math.exp(cvt.log_objective - single.log_objective):.1%} lower)")

# %%
ratios = sorted(p.ratio for p in cvt.operating_points if not p.is_guard)
print("CVT ratio quartiles:", [round(ratios[int(q * (len(ratios) - 1))], 2) for q in (0, .25, .5, .75, 1)])
