"""scikit-learn style wrapper around the forecaster.

PhaseFormerForecaster trains on a raw series (or a multichannel panel,
channel-independently) and predicts native-scale horizons from lookback
windows via fit/predict, so it composes with sklearn tooling
(get_params/set_params/clone). Instance normalization makes the model
scale-free, so no global scaling is applied here; the benchmark pipeline
with train-split standardization lives in the data/training modules.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .data import RawDataset, SplitSpec
from .errors import DataError, ShapeError
from .model import ModelConfig
from .preprocessing import estimate_period
from .training import predict_windows, train


class PhaseFormerForecaster(RegressorMixin, BaseEstimator):
    """Forecast l_out future steps from l_in past steps of a periodic series.

    Parameters mirror the model/training configuration. l_phase="auto"
    estimates the period from the training series; otherwise pass the period
    length directly. fit(X) accepts a 1-D series or a (T, channels) panel
    treated channel-independently; the tail `val_fraction` of the rows is
    held out for early stopping.
    """

    def __init__(self, l_in=720, l_out=96, l_phase="auto", embed_dim=8,
                 n_routers=8, n_layers=1, n_heads=1, residual=False,
                 lr=1e-3, batch_size=256, max_epochs=30, patience=5,
                 val_fraction=0.2, seed=0):
        self.l_in = l_in
        self.l_out = l_out
        self.l_phase = l_phase
        self.embed_dim = embed_dim
        self.n_routers = n_routers
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.residual = residual
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.seed = seed

    def fit(self, X, y=None):
        values = np.asarray(X, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ShapeError("X must be a 1-D series or a (T, channels) panel")
        n_rows = values.shape[0]
        n_val = int(n_rows * self.val_fraction)
        n_train = n_rows - n_val
        window = self.l_in + self.l_out
        if n_train < window or n_val < window:
            raise DataError(
                f"{n_rows} rows with val_fraction={self.val_fraction} cannot "
                f"fit windows of {window} in both partitions")

        if self.l_phase == "auto":
            max_lag = min(self.l_in // 2, n_train // 2)
            l_phase = estimate_period(values[:n_train, 0], max_lag)
        else:
            l_phase = int(self.l_phase)

        config = ModelConfig(
            l_in=self.l_in, l_out=self.l_out, l_phase=l_phase,
            embed_dim=self.embed_dim, n_routers=self.n_routers,
            n_layers=self.n_layers, n_heads=self.n_heads,
            residual=self.residual, seed=self.seed)
        dataset = RawDataset(name="fit", timestamps=[], values=values)
        # No held-out test here: report test metrics on the validation tail.
        splits = SplitSpec(train=(0, n_train), val=(n_train, n_rows),
                           test=(n_train, n_rows))
        params, report = train(
            dataset, splits, config, epochs=self.max_epochs,
            batch_size=self.batch_size, patience=self.patience,
            lr=self.lr, seed=self.seed)
        self.config_ = config
        self.params_ = params
        self.report_ = report
        self.l_phase_ = l_phase
        self.n_features_in_ = values.shape[1]
        return self

    def predict(self, X):
        """Forecast for each lookback window; X is (l_in,) or (n, l_in)."""
        check_is_fitted(self, "params_")
        return predict_windows(self.params_, self.config_, X)
