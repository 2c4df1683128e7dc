"""hlwlab: load-balancing laboratory for MPTCP-enabled hybrid LiFi/WiFi
networks — scene simulation, optimal/heuristic time-resource allocation,
graph-attention imitation of the solver, and benchmarking."""

__version__ = "0.1.0"
