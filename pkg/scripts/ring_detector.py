"""Spinless ring detector: trajectory in (z, theta) and the rotated-basis coordinates."""
import numpy as np

from _common import path
from pilotwave.detectors import DetectorSpec
from pilotwave.dynamics import RotatedBasis
from pilotwave.io import FigureOptions, emit_csv, emit_figure
from pilotwave.scenarios import ScenarioSpec, run_interferometer

det = DetectorSpec("ringVelocity")
spec = ScenarioSpec(experiment="interferometerWithDetector", spin_mode="spinless",
                    detector=det)
res = run_interferometer(spec, with_approx=True)
emit_csv(res, path("ring_detector.csv"))
emit_figure(res, path("ring_detector.svg"), FigureOptions(resolution=400))
rb = RotatedBasis(spec.k, det.k_ring, spec.u, det.angular_velocity(spec.hbar_m), det.R)
A = res.trajectory.array()
sel = (res.trajectory.t > -0.5) & (res.trajectory.t < 0.5)
Z, Y = rb.forward(A[sel, 0], A[sel, 1])
ab = np.sqrt(spec.alpha2 * spec.beta2)
print(f"-> {res.final_destination}, record {res.records[0].verdict}, surreal {res.surreal}")
print(f"Y spread over the overlap: {np.ptp(Y):.3g}")
print(f"predicted Z amplitude {rb.oscillation_amplitude(ab, 1.0):.4g}, "
      f"z amplitude {rb.z_amplitude(ab, 1.0):.4g} (free {ab / spec.k:.4g})")
