import sys
import numpy as np
from niformation.sim import run_scenario

for name in sys.argv[1:]:
    log = run_scenario(name)
    s = log.summary
    print(f"=== {name}: status={s['status']} wp={s['waypoints_completed']} "
          f"t={s['final_time']:.2f}")
    print(f"    min_clearance={s['min_obstacle_clearance_cm']}, "
          f"boundary={s['avoidance_min_boundary_clearance_cm']}, "
          f"final_offset_err={s['final_offset_error_cm']:.2f}")
    for r in s["restorations"]:
        print(f"    restore: start={r['start_time']:.2f} "
              f"err={r['offset_error_cm']:.2f} status={r['status']}")
    for ev in log.events:
        extras = {k: v for k, v in ev.items() if k not in ("time", "event")}
        print(f"      ev {ev['time']:.2f} {ev['event']} {extras}")
