"""Virtual traffic light broadcast protocol stack and discrete-event simulator."""

from .channel import DEFAULT_CURVE, deliver, position_at, psr_at
from .intersection import (
    build_standard_intersection,
    display_state_for,
    standard_phase_table,
    validate_phase_table,
)
from .metrics import compare_receivers, compute_metrics
from .protocol import crc16, decode_frame, effective_throughput, encode_frame, tag_frame, tx_time
from .scenario import load_scenario, parse_scenario
from .simengine import run, sweep

__version__ = "0.1.0"
