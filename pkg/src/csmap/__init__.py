"""Discrete-event simulation of the CSMA/AP-T MAC over Wi-Wi-synchronized clocks.

The package is organised around the physical stack it models:

- ``timebase``: free-running / disciplined oscillators, PPS generation,
  Allan-deviation analysis of phase records.
- ``timesync``: two-way time transfer (timestamps and carrier phase),
  integer-ambiguity tracking, distance estimation, PID disciplining.
- ``mac``: arbitration-point scheduling and the adaptive carrier-sense
  arbitration algorithm.
- ``phy``: path loss, collision detection, DBPSK bit errors with carrier
  frequency offset, I/Q synthesis for carrier sensing.
- ``packet``: bit-exact 500,000-bit frame codec.
- ``engine`` / ``scenario`` / ``trajectory``: the deterministic
  discrete-event engine and its configuration.
- ``service`` / ``cli``: FastAPI front end plus a thin command-line client.
"""

__version__ = "0.1.0"

SPEED_OF_LIGHT = 299_792_458.0  # m/s
