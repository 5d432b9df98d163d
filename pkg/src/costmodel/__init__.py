from .config import ModelConfig
from .preprocess import PreprocessStats, fit_preprocess, encode_plan, minmax
from .network import CostModel, TrainedModel, collate
from .training import TrainingLog, calibrate_variance, train
from .inference import (MCDropoutSamples, PredictionRow, PredictionTable, aggregate, mc_inference,
                        mc_inference_query, predict_workload)
