"""Ensemble Kalman filters (EnKF, ETKF, EAKF) with diagnostics for stability,
boundedness and memory loss of the signal-ensemble process."""
from .errors import (
    AuditFailed,
    ConfigError,
    DegenerateEigenvalue,
    EnkfLabError,
    InvalidInput,
    NotPSD,
    NumericalBlowup,
    RankDeficient,
    SingularObservationNoise,
    TooFewMembers,
    UnsupportedInflation,
)
from .filters import (
    Ensemble,
    InflationScheme,
    eakf_analysis,
    enkf_analysis,
    ensemble_moments,
    etkf_analysis,
    filter_step,
    inflate,
    kalman_posterior_cov,
)
from .kernels import BACKEND
from .models import EnergyFunctional, ModelSpec, eval_energy, forecast, forecast_ensemble
from .observations import ObservationOperator, observe, whiten_and_reduce
from .seeding import Streams

__version__ = "0.1.0"
