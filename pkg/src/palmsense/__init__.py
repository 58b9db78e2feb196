"""Contact-state estimation for a 16-electrode tactile palm."""

from .errors import (
    ChannelOutOfRange,
    DegenerateComponent,
    FormatError,
    InsufficientData,
    LengthMismatch,
    PalmSenseError,
    PositionOutOfBoard,
    SingularInputCovariance,
    VersionMismatch,
)
from .localization import activation, calibrate_baseline, detect_contact, estimate_position
from .mixture import EmConfig, FitReport, fit_em, fit_force_model, gmm_density, gmr_predict, rmse, select_k
from .simulator import ContactCommand, PalmSimulator, SimConfig
from .types import (
    CalibrationProfile,
    ContactEstimate,
    Dataset,
    LabeledSample,
    MixtureModel,
    PalmGeometry,
    TactileFrame,
    geometry_default,
)
from .wire import crc16, decode_stream, encode_frame

__version__ = "0.1.0"
