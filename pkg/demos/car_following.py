"""Car-following behavior of the longitudinal model.

Walks through the acceleration law on a few hand-checkable situations,
then runs a three-lane highway for ten simulated minutes with lane
changes disabled and reports the closest approach between any two
vehicles.

Run:  python3 demos/car_following.py
"""

import numpy as np

from nafdrive.learner import make_rngs
from nafdrive.longitudinal import IdmParams, free_leader_accel, idm_accel
from nafdrive.simworld import World, WorldConfig


def main():
    p = IdmParams(v0=30.0)
    print("acceleration law (v0 = 30 m/s):")
    cases = [
        ("standstill, open road", (0.0, 0.0, 1e6)),
        ("following at 20 m/s, same speed, 30 m gap", (20.0, 0.0, 30.0)),
        ("closing at 5 m/s on a 20 m gap", (25.0, 5.0, 20.0)),
        ("leader pulling away fast", (20.0, -10.0, 15.0)),
    ]
    for label, (v, dv, gap) in cases:
        print(f"  {label:45s} a = {idm_accel(v, dv, gap, p):+6.3f} m/s^2")
    print(f"  {'free flow at desired speed':45s} "
          f"a = {free_leader_accel(30.0, p):+6.3f} m/s^2")

    print("\n10 minutes of three-lane traffic, lane changes disabled:")
    rngs = make_rngs(0)
    world = World(WorldConfig(lane_changes_enabled=False),
                  rngs["spawn"], rngs["trigger"])
    min_gap = np.inf
    for _ in range(6000):
        result = world.step(lambda states: [], 0.1)
        min_gap = min(min_gap, result.min_gap)
    print(f"  vehicles on road now: {len(world.vehicles)}")
    print(f"  closest approach:     {min_gap:.2f} m bumper-to-bumper")
    print(f"  faults recorded:      {len(world.fault_log)}")


if __name__ == "__main__":
    main()
