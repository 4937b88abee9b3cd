"""Which-way verdicts for every detector and packet variant."""
import time

from pilotwave.detectors import DetectorSpec
from pilotwave.scenarios import ScenarioSpec, run_interferometer

KINDS = ("bohmianPosition", "spinFlip", "phaseFlip", "ringVelocity")
t0 = time.perf_counter()
print(f"{'variant':18s}" + "".join(f"{k:>18s}" for k in KINDS))
for packet, mode in (("rect", "spinful"), ("rect", "spinless"), ("gauss", "spinless")):
    cells = []
    for kind in KINDS:
        res = run_interferometer(ScenarioSpec(experiment="interferometerWithDetector",
                                              packet=packet, spin_mode=mode,
                                              detector=DetectorSpec(kind)))
        rec = res.records[0].verdict.replace("particle", "")
        cells.append(f"{res.final_destination[-1]} {rec}{' S' if res.surreal else ''}")
    print(f"{packet + '/' + mode:18s}" + "".join(f"{c:>18s}" for c in cells))
print(f"({time.perf_counter() - t0:.1f}s; letters name the detector that fires, S marks a"
      " record contradicting the path)")
