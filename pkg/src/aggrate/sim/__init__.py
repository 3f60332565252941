"""WLAN downlink simulator."""

from .airtime import channel_access_interval, frame_airtime, mean_access_delay, theoretical_goodput
from .config import (ApConfig, BackhaulConfig, ChannelVariation, ConfigError, ContenderConfig,
                     ControllerConfig, NoiseConfig, Scenario, StationConfig, parse_scenario, set_field)
from .engine import (Backhaul, Pacer, Simulator, StationQueue, apply_loss_and_retx, assemble_frame,
                     backhaul_transit, enqueue_paced, run_scenario)
from .trace import Trace

__all__ = [
    "ApConfig", "BackhaulConfig", "ChannelVariation", "ConfigError", "ContenderConfig",
    "ControllerConfig", "NoiseConfig", "Scenario", "StationConfig", "parse_scenario", "set_field",
    "Backhaul", "Pacer", "Simulator", "StationQueue", "apply_loss_and_retx", "assemble_frame",
    "backhaul_transit", "enqueue_paced", "run_scenario", "Trace",
    "channel_access_interval", "frame_airtime", "mean_access_delay", "theoretical_goodput",
]
