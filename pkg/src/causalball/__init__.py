"""Causal ball screening for doubly robust effect estimation with very many covariates."""

__version__ = "0.1.0"

from .ballcov import bcov_sq_definitional, bcov_sq_fast, cond_bcov_sq, delta_indicator
from .dr_estimator import DrEstimate, aipw, estimate, influence_and_variance, wald_ci
from .errors import CBSError, ConvergenceError, DegenerateDataError, SchemaError
from .outcome_lasso import CvReport, LassoFit, cv_select_lambda, fit_lasso, predict
from .pipeline import AnalysisReport, CausalData, RunConfig, Schema, ingest_csv, run_cbs
from .ps_alasso import (AdaptiveWeights, PsFit, WamdReport, compute_weights,
                        fit_alasso_logistic, tune, wamd)
from .screening import FeatureMatrix, ScreenResult, screen
