"""deface-bench: robustness and fairness benchmark for face obfuscation."""

__version__ = "0.1.0"

from .datamodel import (  # noqa: F401
    Dataset,
    DemographicKey,
    FaceRecord,
    Gender,
    ObfuscationRun,
    Race,
    load_manifest,
    passing_rate,
)
from .errors import IntegrityError, ParseError  # noqa: F401
from .fairness import EPS_GRID, BiasReport, RateTable, bias_table, eo_bias  # noqa: F401
from .identification import Scenario, Threat, identification_run  # noqa: F401
from .verification import PairMode, optimize_threshold, roc_metrics, verification_report  # noqa: F401
