"""Joint estimation of class posterior and propensity score from PU data."""

__version__ = "0.1.0"

from .data import Dataset, PUDataset, ScalingParams, load_csv, standardize, train_test_split  # noqa: E402
from .estimators import (  # noqa: E402
    FittedPUModel,
    TMConfig,
    classify,
    fit_em,
    fit_joint,
    fit_lbe,
    fit_method,
    fit_naive,
    fit_oracle,
    fit_tm,
    fit_tm_simple,
    predict_posterior,
    predict_propensity,
)
from .glm import LinearParams, SolverConfig  # noqa: E402
from .synth import ArtifSpec, ScenarioSpec, apply_labelling, gen_artif  # noqa: E402

__all__ = [
    "ArtifSpec",
    "Dataset",
    "FittedPUModel",
    "LinearParams",
    "PUDataset",
    "ScalingParams",
    "ScenarioSpec",
    "SolverConfig",
    "TMConfig",
    "apply_labelling",
    "classify",
    "fit_em",
    "fit_joint",
    "fit_lbe",
    "fit_method",
    "fit_naive",
    "fit_oracle",
    "fit_tm",
    "fit_tm_simple",
    "gen_artif",
    "load_csv",
    "predict_posterior",
    "predict_propensity",
    "standardize",
    "train_test_split",
]
