"""Tests for feature construction and the LSTM preference classifier."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesched.errors import RangeError, ShapeError
from edgesched.predictor import (
    FeatureVector,
    LabeledWindow,
    LstmLayerParams,
    LstmState,
    PreferencePredictor,
    accuracy_on,
    bce_loss,
    forward,
    load_weights,
    loss_and_gradients,
    lstm_step,
    make_feature,
    predict_preference,
    save_weights,
    train,
)
from edgesched.scheduler import Preference, Task


def _task(acc=80.0, delay=0.2):
    return Task(id=0, arrival_t=0, data_size=1.0, accuracy_req=acc, delay_req=delay)


# -- make_feature ---------------------------------------------------------------

def test_make_feature_scaling():
    fv = make_feature(_task(80.0, 0.2), complexity_scaled=0.5, t_index=0.0,
                      max_delay_req=0.6)
    assert fv.as_array() == pytest.approx([0.0, 0.5, 0.8, 0.2 / 0.6])


def test_make_feature_extremes():
    fv = make_feature(_task(50.0, 0.6), complexity_scaled=0.0, t_index=1.0,
                      max_delay_req=0.6)
    assert fv.as_array() == pytest.approx([1.0, 0.0, 0.5, 1.0])


def test_make_feature_range_mapping():
    rng = np.random.default_rng(0)
    for _ in range(50):
        acc = rng.uniform(50, 80)
        delay = rng.uniform(0.2, 0.6)
        fv = make_feature(_task(acc, delay), 0.3, 0.5, max_delay_req=0.6)
        assert 0.5 <= fv.accuracy_req <= 0.8
        assert 1 / 3 - 1e-12 <= fv.delay_req <= 1.0


def test_make_feature_nonfinite():
    with pytest.raises(RangeError):
        make_feature(_task(), complexity_scaled=float("nan"), t_index=0.0)


# -- lstm_step -------------------------------------------------------------------

def test_zero_params_half_gates():
    params = LstmLayerParams(hidden=3, input_size=2)
    state = LstmState.zeros(3)
    new = lstm_step(params, state, np.array([0.5, -0.5]))
    assert np.allclose(new.Q, 0.0)
    assert np.allclose(new.h, 0.0)


def test_forget_gate_saturation():
    params = LstmLayerParams(hidden=2, input_size=2)
    params.W_f[:] = 50.0   # large positive weights, positive inputs -> f ~ 1
    state = LstmState(h=np.zeros(2), Q=np.array([0.7, -0.4]))
    x = np.array([1.0, 1.0])
    new = lstm_step(params, state, x)
    # with v = 0.5 and Q~ = 0, Q' -> Q exactly
    assert np.allclose(new.Q, state.Q, atol=1e-12)


def test_step_matches_straight_line_oracle():
    rng = np.random.default_rng(9)
    H, I = 4, 3
    params = LstmLayerParams(H, I, rng)
    h = rng.uniform(-0.5, 0.5, H)
    Q = rng.uniform(-0.5, 0.5, H)
    x = rng.uniform(-1, 1, I)
    new = lstm_step(params, LstmState(h=h.copy(), Q=Q.copy()), x)

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    z = list(h) + list(x)
    for i in range(H):
        a_f = sum(params.W_f[i][j] * z[j] for j in range(H + I)) + params.b_f[i]
        a_v = sum(params.W_v[i][j] * z[j] for j in range(H + I)) + params.b_v[i]
        a_q = sum(params.W_Q[i][j] * z[j] for j in range(H + I)) + params.b_Q[i]
        a_o = sum(params.W_o[i][j] * z[j] for j in range(H + I)) + params.b_o[i]
        q_new = sig(a_f) * Q[i] + sig(a_v) * math.tanh(a_q)
        h_new = sig(a_o) * math.tanh(q_new)
        assert new.Q[i] == pytest.approx(q_new, abs=1e-12)
        assert new.h[i] == pytest.approx(h_new, abs=1e-12)


def test_step_shape_error():
    params = LstmLayerParams(hidden=3, input_size=2)
    with pytest.raises(ShapeError):
        lstm_step(params, LstmState.zeros(3), np.zeros(4))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_hidden_state_bounded(seed):
    rng = np.random.default_rng(seed)
    params = LstmLayerParams(4, 4, rng)
    # exaggerate weights; |h| <= 1 must still hold
    params.W_o *= 40.0
    state = LstmState.zeros(4)
    for _ in range(12):
        state = lstm_step(params, state, rng.uniform(-1, 1, 4))
        assert np.all(np.abs(state.h) <= 1.0 + 1e-12)


# -- forward ---------------------------------------------------------------------

def test_forward_zero_params_half():
    pred = PreferencePredictor(hidden=4, n_layers=2, seq_len=3)
    window = np.zeros((3, 4))
    window[:, 2] = 0.9
    assert forward(pred, window) == pytest.approx(0.5)


def test_forward_single_layer_equals_step_composition():
    pred = PreferencePredictor(hidden=5, n_layers=1, seq_len=4, seed=12)
    rng = np.random.default_rng(3)
    window = rng.uniform(0, 1, (4, 4))
    state = LstmState.zeros(5)
    for t in range(4):
        state = lstm_step(pred.layers[0], state, window[t])
    expected = 1.0 / (1.0 + math.exp(-(state.h @ pred.head_w + pred.head_b)))
    assert forward(pred, window) == pytest.approx(expected, abs=1e-12)


def test_forward_pure_function():
    pred = PreferencePredictor(seed=5)
    window = np.random.default_rng(1).uniform(0, 1, (8, 4))
    assert forward(pred, window) == forward(pred, window)


def test_forward_wrong_window_shape():
    pred = PreferencePredictor(seq_len=8)
    with pytest.raises(ShapeError):
        forward(pred, np.zeros((5, 4)))


# -- bce -------------------------------------------------------------------------

def test_bce_half():
    assert bce_loss([1.0], [0.5]) == pytest.approx(math.log(2.0), abs=1e-12)


def test_bce_perfect():
    assert bce_loss([1.0, 0.0], [1.0 - 1e-7, 1e-7]) == pytest.approx(0.0, abs=1e-6)


def test_bce_hand_value():
    want = -(math.log(0.9) + math.log(0.8) + math.log(1 - 0.3)) / 3.0
    assert bce_loss([1, 1, 0], [0.9, 0.8, 0.3]) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(0.2284, abs=1e-4)


def test_bce_clamps_exact_zero_one():
    val = bce_loss([1.0, 0.0], [1.0, 0.0])
    assert math.isfinite(val) and val == pytest.approx(0.0, abs=1e-6)


def test_bce_nonnegative_random():
    rng = np.random.default_rng(2)
    for _ in range(100):
        g = rng.integers(0, 2, 5).astype(float)
        p = rng.uniform(0, 1, 5)
        assert bce_loss(g, p) >= 0.0


# -- gradients ---------------------------------------------------------------------

def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    pred = PreferencePredictor(hidden=4, n_layers=2, seq_len=4, seed=21)
    X = rng.uniform(0, 1, (3, 4, 4))
    y = np.array([1.0, 0.0, 1.0])
    _, grads = loss_and_gradients(pred, X, y)
    h = 1e-5
    worst = 0.0
    for name, arr in pred.parameter_arrays():
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = arr[idx]
            arr[idx] = keep + h
            lp, _ = loss_and_gradients(pred, X, y)
            arr[idx] = keep - h
            lm, _ = loss_and_gradients(pred, X, y)
            arr[idx] = keep
            num = (lp - lm) / (2 * h)
            rel = abs(grads[name][idx] - num) / max(abs(num), abs(grads[name][idx]), 1e-6)
            worst = max(worst, rel)
    assert worst < 1e-4


# -- training ----------------------------------------------------------------------

def _separable_dataset(n, seq_len=6, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        window = rng.uniform(0, 1, (seq_len, 4))
        out.append(LabeledWindow(window, int(window[-1, 2] > 0.65)))
    return out


def test_train_constant_labels():
    data = _separable_dataset(40, seed=3)
    for w in data:
        w.label = 1
    pred = PreferencePredictor(hidden=6, n_layers=2, seq_len=6)
    report = train(pred, data, epochs=60, lr=0.5, seed=11)
    assert report.final_accuracy == 1.0
    assert report.losses[-1] < 0.1


def test_train_separable_heldout():
    data = _separable_dataset(240, seed=5)
    pred = PreferencePredictor(hidden=16, n_layers=2, seq_len=6)
    train(pred, data[:180], epochs=200, lr=2.0, seed=1)
    assert accuracy_on(pred, data[180:]) >= 0.9


def test_train_deterministic():
    data = _separable_dataset(60, seed=8)
    p1 = PreferencePredictor(hidden=5, n_layers=2, seq_len=6)
    p2 = PreferencePredictor(hidden=5, n_layers=2, seq_len=6)
    train(p1, data, epochs=25, lr=0.1, seed=42)
    train(p2, data, epochs=25, lr=0.1, seed=42)
    for (n1, a1), (n2, a2) in zip(p1.parameter_arrays(), p2.parameter_arrays()):
        assert n1 == n2
        assert np.array_equal(a1, a2)
    assert p1.head_b == p2.head_b


# -- predict_preference --------------------------------------------------------------

def test_predict_thresholds():
    pred = PreferencePredictor(hidden=4, n_layers=1, seq_len=2)
    window = np.zeros((2, 4))
    # all-zero parameters give exactly 0.5 -> compute by the tie rule
    assert predict_preference(pred, window) is Preference.COMPUTE
    pred.head_b = 3.0
    assert predict_preference(pred, window) is Preference.COMPUTE
    pred.head_b = -3.0
    assert predict_preference(pred, window) is Preference.BANDWIDTH


# -- serialization ---------------------------------------------------------------------

def test_weights_round_trip(tmp_path):
    pred = PreferencePredictor(hidden=5, n_layers=2, seq_len=4, seed=33)
    pred.head_b = 0.125
    path = tmp_path / "weights.json"
    save_weights(pred, path)
    loaded = load_weights(path)
    window = np.random.default_rng(0).uniform(0, 1, (4, 4))
    assert forward(loaded, window) == forward(pred, window)
    for (n1, a1), (n2, a2) in zip(pred.parameter_arrays(), loaded.parameter_arrays()):
        assert np.array_equal(a1, a2)


def test_training_report_csv(tmp_path):
    report_path = tmp_path / "curve.csv"
    data = _separable_dataset(20, seed=2)
    pred = PreferencePredictor(hidden=4, n_layers=1, seq_len=6)
    report = train(pred, data, epochs=5, lr=0.1, seed=0)
    report.write_csv(report_path)
    lines = report_path.read_text().strip().splitlines()
    assert lines[0] == "epoch,loss,accuracy"
    assert len(lines) == 6
