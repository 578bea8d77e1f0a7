import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nscert.errors import ConfigError
from nscert.fieldio import (
    HEADER,
    decode_binary,
    decode_json,
    encode_binary,
    encode_json,
    half_space_count,
    load_field,
    save_field,
)
from nscert.forcing import (
    ConstantForcing,
    DifferenceForcing,
    ModalForcing,
    SnapshotForcing,
    ZeroForcing,
    as_forcing,
)
from nscert.spectral import BoxSpec, SpectralField, hs_norm_sq

from conftest import random_field


@given(seed=st.integers(0, 2**31), m=st.integers(1, 4))
@settings(max_examples=20, deadline=None)
def test_binary_round_trip_is_exact(seed, m):
    rng = np.random.default_rng(seed)
    u = random_field(rng, m, box=BoxSpec(L=3.7))
    data = encode_binary(u)
    assert len(data) == HEADER.size + half_space_count(m) * 48
    v = decode_binary(data)
    assert np.array_equal(v.coeffs, u.coeffs)
    assert v.box.L == 3.7 and v.divfree


def test_binary_header_layout():
    u = SpectralField.from_modes(BoxSpec(), 1, {(0, 0, 1): [1.0, 2.0, 0.0]}, divfree=True)
    data = encode_binary(u)
    magic, version, L, m, flags = struct.unpack_from("<4sIdII", data)
    assert (magic, version, m, flags) == (b"NSCF", 1, 1, 1)
    assert L == 2 * math.pi
    # the first half-space entry in lexicographic order is k = (0, 0, 1)
    first = np.frombuffer(data, "<c16", count=3, offset=HEADER.size)
    assert first.tolist() == [1.0, 2.0, 0.0]


def test_corrupt_binary_rejected(rng):
    data = encode_binary(random_field(rng, 2))
    with pytest.raises(ConfigError):
        decode_binary(b"XXXX" + data[4:])
    with pytest.raises(ConfigError):
        decode_binary(data[:-16])
    with pytest.raises(ConfigError):
        decode_binary(data[:10])


def test_json_round_trip(rng):
    u = random_field(rng, 2, full=False)
    text = encode_json(u)
    doc = json.loads(text)
    assert doc["format"] == "NSCF-json"
    assert all(tuple(e["k"]) > (0, 0, 0) for e in doc["modes"])
    v = decode_json(text)
    assert np.array_equal(v.coeffs, u.coeffs)


def test_malformed_json_rejected():
    with pytest.raises(ConfigError):
        decode_json('{"format": "NSCF-json", "m": 1}')
    with pytest.raises(ConfigError):
        decode_json('{"format": "other"}')


def test_save_and_load_autodetect(tmp_path, rng):
    u = random_field(rng, 2)
    save_field(tmp_path / "a.nscf", u)
    save_field(tmp_path / "a.json", u)
    for name in ("a.nscf", "a.json"):
        v = load_field(tmp_path / name)
        assert np.array_equal(v.coeffs, u.coeffs)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.json", "a.nscf"]


def test_zero_forcing():
    f = ZeroForcing()
    assert f.is_zero
    assert f.integrate_hs_norm_sq(-0.5, 3.0) == 0.0
    assert not np.any(f.at(0.3, 2))


def test_constant_forcing_integral(rng):
    F = random_field(rng, 2)
    f = ConstantForcing(F)
    assert f.integrate_hs_norm_sq(-0.5, 2.0) == pytest.approx(2.0 * hs_norm_sq(F, -0.5), rel=1e-14)
    assert as_forcing(F).integrate_hs_norm_sq(0.0, 1.0) == pytest.approx(hs_norm_sq(F, 0.0))


def test_modal_forcing_polynomial_integral(rng):
    F = random_field(rng, 2)
    # |f(t)|^2 = (1 + 2t)^2 |F|^2, integral over [0, 1] is 13/3 |F|^2
    f = ModalForcing([(F, [1.0, 2.0])])
    assert f.integrate_hs_norm_sq(-0.5, 1.0) == pytest.approx(13 / 3 * hs_norm_sq(F, -0.5), rel=1e-10)


def test_snapshot_forcing_interpolates(rng):
    F = random_field(rng, 2)
    f = SnapshotForcing([0.0, 1.0], [F * 0.0, F])
    assert np.allclose(f.at(0.25, 2), 0.25 * F.coeffs)
    assert np.allclose(f.at(5.0, 2), F.coeffs)
    # |f(t)|^2 = t^2 |F|^2 on [0, 1], then constant
    assert f.integrate_hs_norm_sq(0.0, 2.0) == pytest.approx((1 / 3 + 1) * hs_norm_sq(F, 0.0), rel=1e-10)
    with pytest.raises(ConfigError):
        SnapshotForcing([1.0, 0.0], [F, F])


def test_difference_forcing(rng):
    F, G = random_field(rng, 2), random_field(rng, 2)
    f = ConstantForcing(F)
    assert DifferenceForcing(f, f).is_zero
    h = DifferenceForcing(f, ConstantForcing(G))
    assert h.integrate_hs_norm_sq(0.0, 1.0) == pytest.approx(hs_norm_sq(F - G, 0.0), rel=1e-10)
    with pytest.raises(ConfigError):
        as_forcing("not a forcing")
