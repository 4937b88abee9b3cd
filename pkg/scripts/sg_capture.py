"""Single Stern-Gerlach run at |alpha|^2 = 0.4 from z0 = 0.2, plus the capture map."""
import numpy as np

from _common import path
from pilotwave.integrate import catch_time
from pilotwave.io import FigureOptions, emit_csv, emit_figure
from pilotwave.scenarios import ScenarioSpec, run_sg

spec = ScenarioSpec(alpha2=0.4, beta2=0.6, z0=0.2)
res = run_sg(spec)
cap = res.trajectory.events_of("packetCapture")[0]
print(f"capture t={cap.time:.6f} z={res.trajectory.at(cap.time):.6f} by {cap.detail['by']}"
      f" -> {res.final_destination}")
emit_csv(res, path("sg_capture.csv"))
emit_figure(res, path("sg_capture.svg"), FigureOptions(resolution=400))

# capture side over the initial position, for a few weights
for a2 in (0.2, 0.4, 0.5, 0.8):
    z = np.linspace(-0.499, 0.499, 2001)
    up = [catch_time(np.sqrt(a2), np.sqrt(1 - a2), zi)[1] == "upPacket" for zi in z]
    print(f"|alpha|^2={a2}: up fraction {np.mean(up):.4f}, threshold z0={0.5 - a2:+.3f}")
