import json

import numpy as np
import pytest

from errorcalc import rng
from errorcalc.errors import PreconditionError, StructureError, UnsupportedSamplingError
from errorcalc.structure import (
    ErrorStructure,
    FullSigma,
    Frame,
    Gaussians,
    Grid1D,
    UniformBox,
    base_frame,
    check_psd,
    diag_structure,
    psd_sqrt,
    sample_base,
    sigma_at,
    sigma_batch,
    structure_from_config,
    structure_to_config,
)


def test_diag_identity():
    s = diag_structure(["x", "y"], [1, 1])
    np.testing.assert_array_equal(sigma_at(s, [5.0, -2.0]), np.eye(2))


def test_expression_field_value():
    s = structure_from_config({"vars": ["x"], "sigma": {"kind": "exprs", "entries": [["x^2"]]}})
    np.testing.assert_array_equal(sigma_at(s, [2.0]), [[4.0]])


def test_expression_field_mirrored_and_full_rows():
    doc = {"vars": ["x", "y"], "sigma": {"kind": "exprs", "entries": [["1 + x^2", "0.5"], ["ignored", "2"]]}}
    m = sigma_at(structure_from_config(doc), [1.0, 0.0])
    np.testing.assert_array_equal(m, [[2.0, 0.5], [0.5, 2.0]])
    assert np.array_equal(m, m.T)


def test_indefinite_full_matrix():
    s = ErrorStructure(("x", "y"), FullSigma(np.array([[1.0, 2.0], [2.0, 1.0]])))
    with pytest.raises(StructureError) as info:
        sigma_at(s, [0.0, 0.0])
    assert info.value.min_eigenvalue == pytest.approx(-1.0)


def test_psd_clipping_within_tolerance():
    m = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-11]])
    clipped, clip = check_psd(m)
    assert 0.0 < clip <= 1e-10
    assert np.linalg.eigvalsh(clipped).min() >= -1e-15


def test_psd_sqrt_of_singular():
    m = np.array([[1.0, 1.0], [1.0, 1.0]])
    r = psd_sqrt(m)
    np.testing.assert_allclose(r @ r, m, atol=1e-14)


def test_expression_field_not_psd_is_an_error():
    doc = {"vars": ["x", "y"], "sigma": {"kind": "exprs", "entries": [["1", "x"], ["1"]]}}
    s = structure_from_config(doc)
    base_frame(s, [0.5, 0.0])
    with pytest.raises(StructureError):
        base_frame(s, [3.0, 0.0])
    with pytest.raises(StructureError):
        sigma_batch(s, np.array([[0.0, 0.0], [3.0, 0.0]]))


def test_base_frame_examples():
    f = base_frame(diag_structure(["x", "y"], [0.01, 0.04]), [2.0, 3.0])
    np.testing.assert_array_equal(f.point, [2.0, 3.0])
    np.testing.assert_array_equal(f.gamma, [[0.01, 0.0], [0.0, 0.04]])
    np.testing.assert_array_equal(f.bias, [0.0, 0.0])
    f = base_frame(diag_structure(["x"], [1.0]), [0.5])
    assert f.gamma.tolist() == [[1.0]] and f.bias.tolist() == [0.0]


def test_frame_is_immutable():
    f = base_frame(diag_structure(["x"], [1.0]), [0.5])
    with pytest.raises(ValueError):
        f.point[0] = 1.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(point=[0.0], gamma=[[1.0, 0.0]], bias=[0.0]),
        dict(point=[0.0, 0.0], gamma=[[1.0, 0.5], [0.0, 1.0]], bias=[0.0, 0.0]),
        dict(point=[np.nan], gamma=[[1.0]], bias=[0.0]),
        dict(point=[0.0], gamma=[[-1.0]], bias=[0.0]),
    ],
)
def test_bad_frames(kwargs):
    with pytest.raises(StructureError):
        Frame(**kwargs)


@pytest.mark.parametrize(
    "doc",
    [
        {"vars": ["x", "x"], "sigma": {"kind": "diag", "values": [1, 1]}},
        {"vars": ["x"], "sigma": {"kind": "diag", "values": [-1]}},
        {"vars": ["x"], "sigma": {"kind": "diag", "values": [1, 2]}},
        {"vars": ["x"], "sigma": {"kind": "triangular"}},
        {"vars": ["x"]},
        {"vars": ["x"], "sigma": {"kind": "diag", "values": [1]}, "law": {"kind": "uniform", "bounds": [[1, 0]]}},
        {"vars": ["x", "y"], "sigma": {"kind": "diag", "values": [1, 1]}, "law": {"kind": "grid", "interval": [0, 1]}},
        {"vars": ["x"], "sigma": {"kind": "diag", "values": [1]}, "law": {"kind": "gauss", "mean": [0], "sd": [0]}},
    ],
)
def test_invalid_configs(doc):
    with pytest.raises(StructureError):
        structure_from_config(doc)


@pytest.mark.parametrize(
    "doc",
    [
        {"vars": ["x", "y"], "sigma": {"kind": "diag", "values": [0.01, 0.04]}},
        {"vars": ["a"], "sigma": {"kind": "full", "matrix": [[2.0]]}, "law": {"kind": "grid", "interval": [0.0, 3.0]}},
        {
            "vars": ["x", "y"],
            "sigma": {"kind": "exprs", "entries": [["1 + x^2", "0"], ["exp(y)"]]},
            "law": {"kind": "uniform", "bounds": [[0.0, 1.0], [-1.0, 1.0]]},
        },
        {"vars": ["x"], "sigma": {"kind": "diag", "values": [1.0]}, "law": {"kind": "gauss", "mean": [1.0], "sd": [2.0]}},
    ],
)
def test_config_round_trip(doc):
    s = structure_from_config(doc)
    again = structure_to_config(structure_from_config(json.loads(json.dumps(structure_to_config(s)))))
    assert again == structure_to_config(s)


# -- sampling --------------------------------------------------------------------


def test_uniform_samples_are_reproducible():
    s = diag_structure(["x"], [1.0], UniformBox(np.array([[0.0, 1.0]])))
    a = sample_base(s, 4, 42)
    b = sample_base(s, 4, 42)
    assert a.shape == (4, 1)
    assert np.all((0.0 <= a) & (a <= 1.0))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_base(s, 4, 43))


def test_zero_samples():
    s = diag_structure(["x"], [1.0], UniformBox(np.array([[0.0, 1.0]])))
    assert sample_base(s, 0, 1).shape == (0, 1)


def test_sampling_independent_of_workers():
    s = diag_structure(["x", "y"], [1.0, 1.0], Gaussians(np.zeros(2), np.ones(2)))
    count = 3 * rng.CHUNK + 17
    np.testing.assert_array_equal(sample_base(s, count, 9, workers=1), sample_base(s, count, 9, workers=4))


def test_gaussian_sample_mean_clt_bound():
    s = diag_structure(["x"], [1.0], Gaussians(np.zeros(1), np.ones(1)))
    draws = sample_base(s, 10**6, 2024)[:, 0]
    assert abs(draws.mean()) < 4 / np.sqrt(10**6)
    assert abs(draws.var() - 1.0) < 0.01


def test_grid_law_refuses_sampling():
    s = diag_structure(["x"], [1.0], Grid1D(0.0, 1.0))
    with pytest.raises(UnsupportedSamplingError):
        sample_base(s, 10, 0)
    np.testing.assert_allclose(s.law.points(4)[:, 0], [0.125, 0.375, 0.625, 0.875])


def test_no_law_refuses_sampling():
    with pytest.raises(UnsupportedSamplingError):
        sample_base(diag_structure(["x"], [1.0]), 10, 0)


def test_wrong_point_length():
    with pytest.raises(PreconditionError):
        sigma_at(diag_structure(["x"], [1.0]), [1.0, 2.0])


# -- generator --------------------------------------------------------------------


def test_philox_known_answer():
    # Random123 kat_vectors, philox4x64_10 with zero counter and zero key.
    # numpy increments the counter before each block, so starting from
    # all-ones makes the first block use the all-zero counter.
    import numpy.random as npr

    bitgen = npr.Philox(counter=[2**64 - 1] * 4, key=[0, 0])
    words = [int(w) for w in bitgen.random_raw(4)]
    assert words == [
        0x16554D9ECA36314C,
        0xDB20FE9D672D0FDC,
        0xD7E772CEE186176B,
        0x7E68B68AEC7BA23B,
    ]


def test_stream_layout():
    assert rng.raw(0, 0, 4).tolist() == [
        0x2F4BA6408E4D89B,
        0x3DD62B0B9CA8C5B2,
        0x1C8667A55D902E79,
        0x907D7A052FD5B4DC,
    ]
    assert rng.stream_id(rng.PURPOSE_BITS, 5) == (3 << 48) | 5
    with pytest.raises(ValueError):
        rng.stream_id(1, 1 << 48)


def test_bits_are_msb_first():
    words = rng.raw(3, 7, 2)
    b = rng.bits(3, 7, 128)
    expected = [(int(words[k]) >> (63 - j)) & 1 for k in range(2) for j in range(64)]
    assert b.tolist() == expected


def test_uniform_and_normal_ranges():
    u = rng.uniforms(1, 2, 10000)
    assert u.min() >= 0.0 and u.max() < 1.0
    z = rng.normals(1, 2, 10001)
    assert len(z) == 10001 and np.all(np.isfinite(z))
