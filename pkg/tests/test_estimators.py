import numpy as np
import pytest
from sklearn.base import clone

from svgd_forecast.data import SynthConfig, fit_transform, generate_synthetic, prepare_splits
from svgd_forecast.errors import ContractError
from svgd_forecast.estimators import BNNForecaster, DetNNForecaster, LogZScoreTransformer, MLPForecaster

TINY = dict(conv_specs=((2, 4, 2),), encoder_dim=4, recon_dim=3, decoder_hidden=(4,), batch_size=8, epochs=1)


@pytest.fixture(scope="module")
def splits():
    series = generate_synthetic(SynthConfig(num_hours=24 * 28, holidays=()), seed=1)
    return prepare_splits(series, L_in=24, d=3, stride=4)


def test_transformer_matches_fit_transform():
    values = np.random.default_rng(0).uniform(1, 50, 200)
    tr = LogZScoreTransformer().fit(values)
    ref = fit_transform(values)
    np.testing.assert_array_equal(tr.transform(values), ref.forward(values))
    np.testing.assert_allclose(tr.inverse_transform(tr.transform(values)), values, rtol=1e-12)


@pytest.mark.parametrize("cls", [BNNForecaster, DetNNForecaster, MLPForecaster])
def test_get_params_and_clone(cls):
    est = cls(random_state=7)
    params = est.get_params()
    assert params["random_state"] == 7
    twin = clone(est)
    assert twin.get_params() == params and twin is not est


def test_bnn_fit_predict(splits):
    _, train_set, val_set, _ = splits
    est = BNNForecaster(n_particles=3, random_state=2, **TINY).fit(train_set)
    assert est.ensemble_.n_particles == 3
    mean = est.predict(val_set)
    lo, hi = est.predict_interval(val_set)
    assert mean.shape == val_set.targets.shape
    assert np.all(lo <= mean) and np.all(mean <= hi)
    again = BNNForecaster(n_particles=3, random_state=2, **TINY).fit(train_set)
    assert again.ensemble_.theta.tobytes() == est.ensemble_.theta.tobytes()


def test_array_pair_input_equals_dataset(splits):
    _, train_set, val_set, _ = splits
    est = DetNNForecaster(random_state=0, **TINY).fit((train_set.inputs, train_set.target_calendar), train_set.targets)
    ref = DetNNForecaster(random_state=0, **TINY).fit(train_set)
    np.testing.assert_array_equal(est.predict(val_set), ref.predict((val_set.inputs, val_set.target_calendar)))
    assert est.ensemble_.n_particles == 1
    np.testing.assert_array_equal(est.predict_summary(val_set).var_model, 0.0)


def test_mlp_fit_predict(splits):
    _, train_set, val_set, _ = splits
    est = MLPForecaster(hidden=(8, 8), epochs=2, batch_size=8).fit(train_set)
    s = est.predict_summary(val_set)
    assert s.mean.shape == val_set.targets.shape and np.all(s.var_total > 0)


def test_input_validation(splits):
    _, train_set, _, _ = splits
    with pytest.raises(ContractError):
        DetNNForecaster(**TINY).fit((train_set.inputs, train_set.target_calendar))
    with pytest.raises(ContractError):
        DetNNForecaster(**TINY).fit(np.zeros((3, 4)))
    est = DetNNForecaster(**TINY).fit(train_set)
    with pytest.raises(ContractError):
        est.predict((train_set.inputs, train_set.target_calendar[:, :2]))
