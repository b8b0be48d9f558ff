"""Trajectory attention toolkit: camera-motion trajectories, attention kernels and pose metrics."""
__version__ = "0.1.0"
