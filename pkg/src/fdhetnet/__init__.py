"""Full-duplex small-cell HetNet simulator: wireless backhaul, massive-MIMO
macro cell, Lyapunov scheduling and SCA-based load balancing."""

__version__ = "0.1.0"
