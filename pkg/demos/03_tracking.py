"""Closed-loop ankle tracking with the rigid and series-elastic actuator models.

Run from the repository root:  python demos/03_tracking.py

A 100 Hz PID loop drives the motor current; the plant is integrated with
RK4 at 0.1 ms.  The script reports per-cycle lag and peak error, then
compares the stiff transmission with the spring stack.
"""

import numpy as np

from gaitsea.plantsim import (
    ActuatorParams,
    PidGains,
    PlantState,
    SpringStack,
    reference_trace,
    run_tracking,
    sea_energy,
    simulate_open_loop,
    step_response,
)

params = ActuatorParams()
print(f"gear ratio {params.total_ratio:.1f}, peak torque {params.peak_torque} Nm, "
      f"max drive current {params.max_drive_current:.2f} A")

step = step_response()
print(f"10 deg step: overshoot {step.overshoot_pct:.1f} %, settles in {step.settling_s * 1000:.0f} ms")

ref = reference_trace(speed=1.2, cycles=30)
for mode in ("rigid", "sea"):
    rep = run_tracking(ref, mode=mode)
    print(f"\n{mode}: max delay {rep.max_delay_pct:.2f} % of cycle, max peak error {rep.max_peak_err_pct:.2f} %")
    print(f"  torque |max| {rep.max_abs_torque:.2f} Nm, rms {rep.rms_torque:.2f} Nm")

# a softer controller lags visibly
soft = run_tracking(ref, gains=PidGains(kp=0.2, ki=0.0, kd=0.0))
print(f"\nkp=0.2 only: max delay {soft.max_delay_pct:.2f} %, peak error {soft.max_peak_err_pct:.2f} %")

# the undamped spring-mass pair trades energy without losing it
free = ActuatorParams(load_damping=0.0)
stack = SpringStack()
s0 = PlantState(trans_angle=2.0)
e0 = sea_energy(s0, free, stack)
s1 = simulate_open_loop(s0, 0.0, 1.0, 1e-4, free, stack)
print(f"\nfree SEA oscillation: energy {e0:.3e} J -> {sea_energy(s1, free, stack):.3e} J after 1 s, "
      f"joint now at {s1.alpha:.3f} deg")
print(f"spring stiffness {stack.stiffness:.1f} Nm/deg, natural frequency "
      f"{np.sqrt(stack.stiffness * 180 / np.pi * (1 / params.reflected_motor_inertia + 1 / params.load_inertia)) / (2 * np.pi):.1f} Hz")
