"""Waveform inversion driven by a data-driven reduced-order model of the wave propagator.

Modules
-------
core           grids, media, sensor arrays, time lattices, block matrices
signals        probing pulse, compressed pulse and square-root pulse
wave_sim       finite-difference simulation, data cubes and wave snapshots
rom            mass and stiffness assembly, block Cholesky, ROM time stepping
internal_wave  reference basis and the data-driven internal-wave estimate
inversion      search bases, Lambda matrices, regularized Gauss-Newton loop
scenario       YAML scenario files
fileio         binary grid and cube files, CSV tables
checks         invariant checks behind ``romwave verify``
cli            command-line front end
"""

__version__ = "0.1.0"
