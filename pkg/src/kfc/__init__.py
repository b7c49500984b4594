"""K-means / Fit / Consensus: clusterwise models over Bregman divergences, combined by consensus."""

from .aggregation import AggregationConfig, AggregationSample, GridSpec, Kernel, Method
from .bregman import Divergence, RepairStrategy, divergence, repair_to_domain
from .clustering import Centroids, KMeansResult, assign, kmeans_fit
from .data import Dataset, Task, read_csv, write_csv
from .datagen import DatasetSpec, Family, generate
from .errors import DataError, KFCError, NumericError
from .local_models import LinearModel, LogisticModel, fit_linear, fit_logistic, predict_local
from .metrics import misclassification, nmi, rmse
from .pipeline import (BenchmarkReport, ClusterModel, Ensemble, PipelineParams, k_sweep, kfc_predict,
                       kfc_train, replicate)
from .serialize import load, save

__version__ = "0.1.0"
