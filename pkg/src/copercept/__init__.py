"""Simulation and analysis of multi-camera collaborative perception over constrained wireless links.

Submodules
----------
channel
    Link capacity, delays, path loss and packet loss.
scenario
    Seeded synthetic pedestrians, camera fleet and descriptor observations.
calib
    Extrinsic self-calibration from matched pedestrians under a bit budget.
age
    Age of information and age of perceived targets.
sched
    Grid-search scheduling of calibration and streaming resources.
fusion
    Priority masking, ground-plane fusion and MODA scoring.
config, sweeps, report, cli
    Run configuration, sweep presets, CSV summaries and the command line.
"""

__version__ = "0.1.0"
