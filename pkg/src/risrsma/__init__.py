"""Robust weighted-average-sum-rate optimization for a transmissive-RIS RSMA downlink.

The package is organized bottom-up:

- ``scenario``    system configuration, pathloss/Rayleigh channels, CSI-error samples
- ``core``        design variables, SINRs, rates, SAA averages, feasibility
- ``wmmse``       rate-WMMSE machinery: equalizers, weights, averaged coefficients
- ``subsolvers``  the three convex blocks (power / transmissive / common rate)
- ``bcd``         the outer block-coordinate-descent driver
- ``baselines``   SDMA and SC-SIC NOMA comparison schemes
- ``experiments`` batch experiment runners and CSV output
- ``cli``         command-line entry point
"""

from .scenario import SystemConfig, ChannelSet, SampleSet, generate_scenario, draw_samples
from .core import Design, RateReport, sinr, rate, average_rates, check_feasibility
from .bcd import BcdConfig, BcdTrace, initialize, run

__all__ = [
    "SystemConfig",
    "ChannelSet",
    "SampleSet",
    "generate_scenario",
    "draw_samples",
    "Design",
    "RateReport",
    "sinr",
    "rate",
    "average_rates",
    "check_feasibility",
    "BcdConfig",
    "BcdTrace",
    "initialize",
    "run",
]
