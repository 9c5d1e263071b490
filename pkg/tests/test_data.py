import numpy as np
import pytest

from pmgc.core.errors import DataError, ShapeError
from pmgc.core.models import AnomalySpec, AutoAnomalies, SynthSpec
from pmgc.core.services.data import (
    NormalizationStats,
    RawSeries,
    downsample_median,
    has_label_column,
    load_csv,
    load_synth_spec,
    make_windows,
    normalize_channels,
    synth_generate,
    window_array,
    write_csv,
)
from pmgc.core.types import AnomalyKind, Normalization


def _write(tmp_path, text: str, name: str = "series.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv(tmp_path):
    series = load_csv(_write(tmp_path, "a,b,label\n1,2,0\n3, 4,1\n5,6,0\n"), has_labels=True)
    assert series.channels == ["a", "b"]
    assert np.array_equal(series.values, [[1.0, 3.0, 5.0], [2.0, 4.0, 6.0]])
    assert series.labels.tolist() == [0, 1, 0]
    assert series.length == 3


def test_label_column_is_a_channel_unless_requested(tmp_path):
    path = _write(tmp_path, "a,label\n1,0\n2,1\n")
    assert has_label_column(path)
    assert load_csv(path).channels == ["a", "label"]
    assert not has_label_column(_write(tmp_path, "a,b\n1,2\n", "plain.csv"))


@pytest.mark.parametrize(
    ("text", "message"),
    [
        ("", "empty"),
        ("a,b\n", "no data rows"),
        ("a,b\n1,2\n3\n", "fewer fields"),
        ("a,b\n1,x\n", "non-numeric value 'x' at line 2"),
        ("a,b\n1,2\n,4\n", "missing value at line 3"),
        ("a,b\n1,inf\n", "non-finite"),
    ],
)
def test_load_csv_errors(tmp_path, text, message):
    with pytest.raises(DataError, match=message):
        load_csv(_write(tmp_path, text))


def test_load_csv_label_errors(tmp_path):
    with pytest.raises(DataError, match="no 'label' column"):
        load_csv(_write(tmp_path, "a\n1\n"), has_labels=True)
    with pytest.raises(DataError, match="0 or 1"):
        load_csv(_write(tmp_path, "a,label\n1,2\n"), has_labels=True)
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "missing.csv")


def test_forward_fill(tmp_path):
    path = _write(tmp_path, "a,b\n1,2\nNaN,3\n,4\n5,\n")
    series = load_csv(path, fill_missing=True)
    assert np.array_equal(series.values, [[1.0, 1.0, 1.0, 5.0], [2.0, 3.0, 4.0, 4.0]])
    with pytest.raises(DataError, match="starts with missing"):
        load_csv(_write(tmp_path, "a,b\n,1\n2,3\n", "leading.csv"), fill_missing=True)


def test_csv_round_trip(tmp_path, synth_pair):
    _, test = synth_pair
    path = tmp_path / "test.csv"
    write_csv(test, path)
    loaded = load_csv(path, has_labels=True)
    assert loaded.channels == test.channels
    assert np.array_equal(loaded.values, test.values)
    assert np.array_equal(loaded.labels, test.labels)


def test_minmax_normalization():
    train = RawSeries(values=np.array([[0.0, 2.0, 4.0], [5.0, 5.0, 5.0]]), channels=["a", "b"])
    stats = NormalizationStats.fit(train)
    normalized = normalize_channels(train, stats)
    assert np.array_equal(normalized.values, [[0.0, 0.5, 1.0], [0.0, 0.0, 0.0]])
    test = RawSeries(values=np.array([[8.0], [7.0]]), channels=["a", "b"])
    assert np.array_equal(normalize_channels(test, stats).values, [[2.0], [0.0]])
    restored = NormalizationStats.from_record(stats.to_record())
    assert restored.method is Normalization.MINMAX
    assert np.array_equal(restored.center, stats.center)
    assert np.array_equal(restored.scale, stats.scale)
    with pytest.raises(ShapeError):
        normalize_channels(RawSeries(values=np.zeros((3, 2)), channels=["a", "b", "c"]), stats)


def test_zscore_normalization(rng):
    train = RawSeries(values=rng.normal(3.0, 2.0, size=(2, 500)), channels=["a", "b"])
    normalized = normalize_channels(train, NormalizationStats.fit(train, Normalization.ZSCORE))
    assert np.allclose(normalized.values.mean(axis=1), 0.0)
    assert np.allclose(normalized.values.std(axis=1), 1.0)


def test_windows():
    values = np.arange(20.0).reshape(2, 10)
    stacked = window_array(values, 4)
    assert stacked.shape == (7, 2, 4)
    assert np.array_equal(stacked[2], values[:, 2:6])
    samples = make_windows(values, 4, 1)
    assert len(samples) == 7
    assert [s.end_tick for s in samples] == list(range(3, 10))
    assert np.array_equal(samples[-1].target, values[:, 9:])
    with pytest.raises(ShapeError):
        window_array(values, 11)
    with pytest.raises(ShapeError):
        make_windows(values, 4, 4)


def test_downsample_median():
    series = RawSeries(
        values=np.array([[1.0, 5.0, 3.0, 2.0, 2.0, 9.0, 7.0]]),
        channels=["a"],
        labels=np.array([0, 0, 0, 0, 1, 0, 1]),
    )
    down = downsample_median(series, 3)
    assert np.array_equal(down.values, [[3.0, 2.0]])
    assert down.labels.tolist() == [0, 1]
    assert downsample_median(series, 1) is series
    with pytest.raises(DataError):
        downsample_median(series, 8)
    with pytest.raises(DataError):
        downsample_median(series, 0)


def test_synth_is_deterministic(synth_spec, synth_pair):
    train, test = synth_pair
    again_train, again_test = synth_generate(synth_spec)
    assert np.array_equal(train.values, again_train.values)
    assert np.array_equal(test.values, again_test.values)
    assert train.values.shape == (4, 240)
    assert test.values.shape == (4, 120)
    assert train.labels is None
    assert test.labels.tolist().count(1) == 6
    assert test.labels[40] == 1
    assert test.labels[80:85].tolist() == [1] * 5

    other = synth_generate(synth_spec.model_copy(update={"seed": 8}))[0]
    assert not np.array_equal(train.values, other.values)


def test_synth_anomaly_magnitude(synth_spec):
    clean_spec = synth_spec.model_copy(update={"anomalies": []})
    _, clean = synth_generate(clean_spec)
    _, spiked = synth_generate(synth_spec)
    diff = spiked.values - clean.values
    assert np.count_nonzero(diff) == 6
    assert diff[1, 40] > 0
    assert np.allclose(diff[2, 80:85], diff[2, 80])


def test_synth_correlation_break_keeps_the_scale():
    spec = SynthSpec(
        n_channels=3,
        t_train=400,
        t_test=200,
        seed=1,
        anomalies=[AnomalySpec(kind=AnomalyKind.CORRELATION_BREAK, start=50, duration=100, channel=0)],
    )
    train, test = synth_generate(spec)
    broken = test.values[0, 50:150]
    assert abs(broken.mean() - train.values[0].mean()) < 1.5 * train.values[0].std()
    assert test.labels.sum() == 100


def test_synth_rejects_out_of_range_anomalies(synth_spec):
    late = synth_spec.model_copy(update={"anomalies": [AnomalySpec(kind=AnomalyKind.SPIKE, start=119, duration=2)]})
    with pytest.raises(DataError, match="exceeds test length"):
        synth_generate(late)
    bad_channel = synth_spec.model_copy(update={"anomalies": [AnomalySpec(kind=AnomalyKind.SPIKE, start=3, channel=4)]})
    with pytest.raises(DataError, match="out of range"):
        synth_generate(bad_channel)


def test_auto_anomalies_do_not_overlap():
    spec = SynthSpec(
        n_channels=3,
        t_train=100,
        t_test=500,
        seed=4,
        auto_anomalies=AutoAnomalies(kind=AnomalyKind.SPIKE, count=10, duration=3),
    )
    _, test = synth_generate(spec)
    assert test.labels.sum() == 30
    edges = np.diff(np.concatenate(([0], test.labels, [0])))
    assert np.count_nonzero(edges == 1) == 10
    with pytest.raises(DataError, match="do not fit"):
        synth_generate(spec.model_copy(update={"auto_anomalies": AutoAnomalies(kind=AnomalyKind.SPIKE, count=10, duration=60)}))


def test_load_synth_spec(tmp_path):
    path = _write(
        tmp_path,
        'n_channels = 2\nt_train = 50\nt_test = 30\nseed = 3\n\n[[anomalies]]\nkind = "spike"\nstart = 10\n',
        "spec.toml",
    )
    spec = load_synth_spec(path)
    assert spec.anomalies[0].kind is AnomalyKind.SPIKE
    assert spec.anomalies[0].magnitude == 6.0
    with pytest.raises(DataError, match="invalid synth spec"):
        load_synth_spec(_write(tmp_path, "n_channel = 2\n", "typo.toml"))


def test_synth_correlation_break_keeps_the_spread():
    long_break = SynthSpec(
        n_channels=3,
        t_train=400,
        t_test=500,
        seed=2,
        anomalies=[AnomalySpec(kind=AnomalyKind.CORRELATION_BREAK, start=50, duration=400, channel=1)],
    )
    train, test = synth_generate(long_break)
    baseline = train.values[1].std()
    assert baseline / 3 < test.values[1, 50:450].std() < 3 * baseline

    for seed in range(5):
        channel = seed % 3
        anomaly = AnomalySpec(kind=AnomalyKind.CORRELATION_BREAK, start=100, duration=20, channel=channel)
        train, test = synth_generate(long_break.model_copy(update={"seed": seed, "anomalies": [anomaly]}))
        assert test.values[channel, 100:120].std() < 3 * train.values[channel].std()
