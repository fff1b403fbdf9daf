"""Closed-loop simulation lab: event-camera horizon tracking on a dualcopter.

Subpackage map: ``dynamics`` (plant, encoders, references, delay lines),
``camera`` (disk renderer and event generation), ``estimator`` (sliding-
window Hough + Kalman filter), ``controller`` (PD law and allocation),
``sysid`` (Bode extraction, transfer fitting, delay regression),
``harness`` (closed-loop experiments and suites), ``liveserver`` (real-time
telemetry/steering endpoint), ``cli`` (command line).
"""

__version__ = "0.1.0"
