"""Interferometer without a detector: the two-arm exchange, spinful and spinless."""
from _common import path
from pilotwave.io import FigureOptions, emit_csv, emit_figure
from pilotwave.scenarios import ScenarioSpec, run_empty_wave

for mode in ("spinful", "spinless"):
    for packet in ("rect", "gauss"):
        spec = ScenarioSpec(experiment="emptyWave", spin_mode=mode, packet=packet)
        res = run_empty_wave(spec, with_approx=(mode == "spinless"))
        tr = res.trajectory
        ev = [(e.kind, round(e.time, 6)) for e in tr.events
              if e.kind in ("overlapEntry", "overlapExit")]
        print(f"{packet}/{mode}: z0={spec.initial_z:.4f} -> {res.final_destination}; {ev}")
        name = f"empty_wave_{packet}_{mode}"
        emit_csv(res, path(name + ".csv"))
        emit_figure(res, path(name + ".svg"), FigureOptions(resolution=400))
