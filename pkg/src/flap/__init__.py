"""Counterfactually fair decisions through data preprocessing."""
from .data import (Column, Dataset, DatasetSchema, EmptyGroupError, IngestReport, SchemaError,
                   SensitiveGroup, load_csv, parse_schema, read_schema, simple_dataset, split,
                   write_csv, write_schema)
from .learners import (Design, FitError, LogisticModel, Predictor, fit_aa, fit_aml, fit_fl,
                       fit_ftu, fit_logistic, fit_ml, predict_aml, predict_ftu, predict_ml)
from .metrics import MetricConfig, cf_bound_table, expected_drawn_accuracy, RankTable, accuracy, cf_bound, cf_metric, rank_neighborhood
from .pipeline import (DecisionDraw, FlapModel, flap_decide, flap_fit, flap_score, load_predictor,
                       save_predictor)
from .preprocess import (GroupEcdf, GroupMoments, Preprocessor, counterfactual_attr,
                         counterfactual_attr_orth, ecdf_eval, ecdf_inverse, fit_preprocessor,
                         fit_marginal_mapping, fit_orthogonalization)
from .scm import (Exogenous, ExogenousRecord, Scm1Params, Scm2Params, Scm3Params,
                  counterfactual_decision_prob, simulate_ex1, simulate_ex2, simulate_ex3)
from .citest import (PowerStudyGrid, TestResult, kernel_ci_test, logistic_cf_test,
                     power_study)

__version__ = "0.1.0"
