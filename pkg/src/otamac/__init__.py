"""Digital and analog over-the-air gradient aggregation over a Gaussian MAC."""

from .channel import (AskCodebook, ChannelConfig, SumConstellation, ask_amplitude,
                      decode_error_bound, md_decode_sum, transmit_mac)
from .estimators import AnalogOTA, UQOTA, WZOTA, make_scheme
from .exceptions import (BudgetExceeded, DigitOutOfRange, DimensionMismatch, GuardOverflow,
                         IndexOutOfRange, InvalidConfig, OTAError, PowerViolation, RangeViolation)
from .schemes import (RoundEstimate, SchemeParams, analog_round, estimate_alpha_beta,
                      select_params_uq, select_params_wz, uq_ota_round, wz_ota_round)

__version__ = "0.1.0"
