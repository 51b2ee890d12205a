import sys
import numpy as np
from niformation.sim import run_scenario

name = sys.argv[1]
t0, t1 = float(sys.argv[2]), float(sys.argv[3])
stride = int(sys.argv[4]) if len(sys.argv) > 4 else 25
log = run_scenario(name)
times = log.times
mask = (times >= t0) & (times <= t1)
idx = np.where(mask)[0][::stride]
n = log.positions.shape[1]
for k in idx:
    row = " ".join(
        f"a{i+1}=({log.positions[k, i, 0]:8.2f},{log.positions[k, i, 1]:8.2f})"
        f" c=({log.commands[k, i, 0]:7.1f},{log.commands[k, i, 1]:7.1f})"
        for i in range(n))
    print(f"t={times[k]:6.2f} ph={log.phases[k]:2d} av={log.avoid_modes[k]} {row}")
print("status", log.summary["status"], "final_offset_err",
      log.summary["final_offset_error_cm"])
