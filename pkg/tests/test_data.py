import numpy as np
import pytest

from kinnet.data import (Dataset, ProteinPanel, TimeCourse, dataset_to_json,
                         gradient_match, gradient_samples, load_dataset,
                         normalize, write_dataset)
from kinnet.errors import DataError


def _course(times, u, p, condition="c0", inhibited=frozenset()):
    return TimeCourse(np.asarray(times, float), np.asarray(u, float),
                      np.asarray(p, float), condition, inhibited)


def _toy_dataset():
    t = np.array([0.0, 0.5, 1.0])
    u = np.array([[1.0, 2.0], [0.8, 1.9], [0.6, 1.7]])
    p = np.array([[0.2, 0.1], [0.4, 0.2], [0.6, 0.4]])
    return Dataset(ProteinPanel(("A", "B")), (_course(t, u, p),))


def test_panel_validation():
    with pytest.raises(DataError):
        ProteinPanel(("A",))          # p >= 2
    with pytest.raises(DataError):
        ProteinPanel(("A", "A"))      # unique names
    panel = ProteinPanel(("A", "B", "C"))
    assert panel.p == 3
    assert panel.index("C") == 2


def test_course_state_layout():
    d = _toy_dataset()
    c = d.courses[0]
    s = c.state(1)
    assert s.shape == (4,)
    np.testing.assert_allclose(s, [0.8, 1.9, 0.4, 0.2])  # u block then p block
    with pytest.raises((IndexError, DataError)):
        c.state(5)


def test_csv_round_trip(tmp_path):
    d = _toy_dataset()
    path = tmp_path / "data.csv"
    write_dataset(d, path)
    back = load_dataset(path)
    assert back.panel.names == d.panel.names
    np.testing.assert_allclose(back.courses[0].u, d.courses[0].u)
    np.testing.assert_allclose(back.courses[0].p, d.courses[0].p)
    np.testing.assert_allclose(back.courses[0].times, d.courses[0].times)
    assert not back.normalized


def test_inhibited_column_round_trip(tmp_path):
    t = np.array([0.0, 1.0])
    u = np.ones((2, 2))
    p = np.full((2, 2), 0.5)
    d = Dataset(ProteinPanel(("A", "B")),
                (_course(t, u, p, "ctrl"),
                 _course(t, u, p, "blockB", frozenset({1}))))
    path = tmp_path / "data.csv"
    write_dataset(d, path)
    back = load_dataset(path)
    assert back.courses[0].inhibited == frozenset()
    assert back.courses[1].inhibited == frozenset({1})


def test_load_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("course,time,protein,channel,value\n"
                    "c0,0.0,A,u,1.0\n"
                    "c0,zero,A,p,1.0\n")
    with pytest.raises(DataError, match=r"bad\.csv:3.*bad time"):
        load_dataset(path)

    path.write_text("course,time,protein,channel,value\n"
                    "c0,0.0,A,u,1.0\n"
                    "c0,0.0,A,u,2.0\n")
    with pytest.raises(DataError, match="duplicate cell"):
        load_dataset(path)

    path.write_text("course,time,protein,channel,value\n"
                    "c0,1.0,A,u,1.0\n"
                    "c0,0.5,A,u,1.0\n")
    with pytest.raises(DataError, match="non-increasing times"):
        load_dataset(path)

    path.write_text("course,time,protein,channel,value\n"
                    "c0,0.0,A,u,1.0\nc0,0.0,A,p,0.1\n"
                    "c0,0.0,B,u,1.0\nc0,0.0,B,p,0.1\n"
                    "c0,1.0,A,u,1.0\nc0,1.0,A,p,0.1\n"
                    "c0,1.0,B,u,1.0\n")
    with pytest.raises(DataError, match="missing cell"):
        load_dataset(path)

    path.write_text("course,time,protein,channel,value\n"
                    "c0,0.0,A,u,-1.0\n")
    with pytest.raises(DataError, match="negative abundance"):
        load_dataset(path)


def test_inconsistent_inhibited_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("course,time,protein,channel,value,inhibited\n"
                    "c0,0.0,A,u,1.0,B\n"
                    "c0,0.0,A,p,1.0,\n")
    with pytest.raises(DataError, match="inhibited set differs"):
        load_dataset(path)


def test_normalize_pooled_unit_means_and_scale():
    d = _toy_dataset()
    nd = normalize(d, "pooled")
    u = np.concatenate([c.u for c in nd.courses])
    p = np.concatenate([c.p for c in nd.courses])
    np.testing.assert_allclose(u.mean(axis=0), 1.0)
    np.testing.assert_allclose(p.mean(axis=0), 1.0)
    scale = np.asarray(nd.scale)
    raw = np.concatenate([c.u for c in d.courses])
    np.testing.assert_allclose(scale[:2], raw.mean(axis=0))
    # scale maps raw data to normalized data exactly
    np.testing.assert_allclose(d.courses[0].u / scale[:2], nd.courses[0].u)


def test_normalize_per_course_has_no_global_scale():
    d = _toy_dataset()
    nd = normalize(d, "per-course")
    assert nd.scale is None
    np.testing.assert_allclose(nd.courses[0].u.mean(axis=0), 1.0)


def test_normalize_guards():
    d = _toy_dataset()
    nd = normalize(d)
    with pytest.raises(DataError, match="already normalized"):
        normalize(nd)
    t = np.array([0.0, 1.0])
    zero = Dataset(ProteinPanel(("A", "B")),
                   (_course(t, np.ones((2, 2)), np.array([[0.0, 0.5], [0.0, 0.5]])),))
    with pytest.raises(DataError, match="zero-mean channel"):
        normalize(zero)
    with pytest.raises(DataError, match="unknown normalization"):
        normalize(d, "global")


def test_gradient_match_values_and_points():
    d = _toy_dataset()
    c = d.courses[0]
    left = gradient_match(c, 0, "left")
    assert len(left) == 2
    # z = (p[j+1] - p[j]) / dt on substrate 0's phospho channel
    assert left[0].z == pytest.approx((0.4 - 0.2) / 0.5)
    assert left[1].z == pytest.approx((0.6 - 0.4) / 0.5)
    np.testing.assert_allclose(left[0].state, c.state(0))
    right = gradient_match(c, 0, "right")
    np.testing.assert_allclose(right[0].state, c.state(1))
    mid = gradient_match(c, 0, "midpoint")
    np.testing.assert_allclose(mid[0].state, 0.5 * (c.state(0) + c.state(1)))
    with pytest.raises(DataError):
        gradient_match(c, 0, "center")
    with pytest.raises(DataError):
        gradient_match(c, 7)


def test_gradient_samples_requires_normalization():
    d = _toy_dataset()
    with pytest.raises(DataError, match="normalize"):
        gradient_samples(d, 0)
    samples = gradient_samples(normalize(d), 0)
    assert len(samples) == d.n_samples == 2
    assert all(s.substrate == 0 for s in samples)


def test_gradient_samples_carry_intervention():
    t = np.array([0.0, 1.0, 2.0])
    u = np.ones((3, 2))
    p = np.array([[0.1, 0.2], [0.2, 0.3], [0.3, 0.4]])
    d = Dataset(ProteinPanel(("A", "B")),
                (_course(t, u, p, "blockA", frozenset({0})),))
    samples = gradient_samples(normalize(d), 1)
    assert all(s.inhibited == frozenset({0}) for s in samples)


def test_json_export_mentions_scale():
    nd = normalize(_toy_dataset())
    doc = dataset_to_json(nd)
    assert '"channels_normalized": "separately"' in doc
    assert '"scale"' in doc
