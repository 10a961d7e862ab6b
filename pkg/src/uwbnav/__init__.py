"""Indoor point-to-point navigation lab.

A deterministic 2D differential-drive simulator, a from-scratch DDPG local
planner, a simulated 4-anchor UWB localization pipeline (scalar Kalman
range smoothing + Gauss-Newton trilateration), a Dynamic Window Approach
baseline, an evaluation harness with the navigation metrics, and a
WebSocket teleoperation service for human comparison runs.
"""

__version__ = "0.1.0"
