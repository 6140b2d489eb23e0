"""Gate-level laboratory for power side-channel countermeasures.

Subpackages cover the netlist IR and reference circuits, boolean masking
and dual-rail precharge transforms, toggle-level simulation, jitter-based
randomness modelling, randomized clocking, bus protection, synthetic trace
generation, and correlation/warping attacks for evaluating all of it.
"""

__version__ = "0.1.0"

from .netlist import Gate, Netlist, load_netlist, parse_netlist, save_netlist, serialize_netlist

__all__ = [
    "Gate",
    "Netlist",
    "parse_netlist",
    "serialize_netlist",
    "load_netlist",
    "save_netlist",
    "__version__",
]
