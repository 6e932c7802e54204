import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from utda import container
from utda.errors import FormatError, InvalidArgument
from utda.gaincal import gaincal_init
from utda.modelio import load_model, model_bytes, model_from_bytes, save_model
from utda.na_lista import CsProblem, lista_init
from utda.numcore import rng_stream, sample_matrix
from utda.phaseret import PrProblem, pr_init


def _cs():
    return CsProblem.from_matrix(sample_matrix(rng_stream(0), 12, 30, column_normalize=True))


def _pr():
    rng = rng_stream(1)
    return PrProblem(sample_matrix(rng, 40, 30), sample_matrix(rng, 10, 30, "standard_cauchy"))


def _models():
    cs, pr = _cs(), _pr()
    return [lista_init(cs, 3, "fixed"), lista_init(cs, 3, "ptda", rng=rng_stream(2)),
            lista_init(cs, 3, "ddtda", rng=rng_stream(3)), gaincal_init(cs, 3, "learned"),
            gaincal_init(cs, 3, "ptda", rng_stream(4)), pr_init(pr, 4, "given"),
            pr_init(pr, 4, "fixed", L=3), pr_init(pr, 4, "estimator", rng=rng_stream(5)),
            pr_init(pr, 4, "direct", rng=rng_stream(6))]


@pytest.mark.parametrize("index", range(9))
def test_round_trip_bitwise(tmp_path, index):
    model = _models()[index]
    for v in model.params.values():
        v += 0.01 * rng_stream(index).standard_normal(v.shape)
    path = tmp_path / "m.utda"
    save_model(path, model)
    back = load_model(path)
    assert back.meta() == model.meta()
    assert set(back.params) == set(model.params)
    for k in model.params:
        assert back.params[k].tobytes() == model.params[k].tobytes()
    assert model_bytes(back) == path.read_bytes()


def test_round_trip_outputs_identical():
    cs = _cs()
    model = gaincal_init(cs, 3, "ddtda", rng_stream(7))
    back = model_from_bytes(model_bytes(model))
    Y = rng_stream(8).standard_normal((6, 12))
    assert back.forward(Y)[0].tobytes() == model.forward(Y)[0].tobytes()


def test_rejects_unknown_objects():
    with pytest.raises(InvalidArgument):
        model_bytes(object())


def test_corrupt_model_files():
    data = model_bytes(lista_init(_cs(), 3, "fixed"))
    with pytest.raises(FormatError, match="magic"):
        model_from_bytes(b"UTDS" + data[4:])
    for cut in (0, 5, 12, len(data) - 4, len(data) - 1):
        with pytest.raises(FormatError):
            model_from_bytes(data[:cut])
    bad = bytearray(data)
    bad[4:6] = struct.pack("<H", 9999)
    with pytest.raises(FormatError, match="version"):
        model_from_bytes(bytes(bad))
    bad = bytearray(data)
    bad[-10] ^= 1
    with pytest.raises(FormatError, match="checksum"):
        model_from_bytes(bytes(bad))
    with pytest.raises(FormatError, match="trailing"):
        model_from_bytes(data + b"\0")


def test_header_kind_must_match_metadata():
    model = lista_init(_cs(), 3, "fixed")
    params = {k: v for k, v in model.params.items()}
    header = struct.pack("<BQ", 2, sum(v.size for v in params.values()))
    data = container.encode(b"UTDA", 1, header, model.meta(), dict(sorted(params.items())))
    with pytest.raises(FormatError):
        model_from_bytes(data)


def test_missing_block_is_format_error():
    model = lista_init(_cs(), 3, "fixed")
    params = dict(sorted(model.params.items()))
    del params["beta"]
    header = struct.pack("<BQ", 0, sum(v.size for v in params.values()))
    with pytest.raises(FormatError):
        model_from_bytes(container.encode(b"UTDA", 1, header, model.meta(), params))


@given(st.dictionaries(st.text("abcxyz", min_size=1, max_size=6),
                       st.lists(st.integers(-2 ** 40, 2 ** 40), max_size=12), max_size=4),
       st.binary(max_size=16))
def test_container_round_trip(arrays, header):
    blocks = {k: np.array(v, dtype=np.int64) for k, v in arrays.items()}
    blocks["f"] = np.linspace(-1, 1, 7).reshape(7, 1)
    meta = {"keys": sorted(arrays)}
    data = container.encode(b"TEST", 3, header, meta, blocks)
    version, h, m, back = container.decode(data, b"TEST", 3)
    assert version == 3 and h == header and m == meta
    assert set(back) == set(blocks)
    for k, v in blocks.items():
        assert back[k].dtype == v.dtype and back[k].tobytes() == v.tobytes()
        assert back[k].shape == v.shape


def test_container_truncation_offsets():
    data = container.encode(b"TEST", 1, b"hdr", {"a": 1}, {"x": np.arange(5.0)})
    for cut in range(len(data)):
        with pytest.raises(FormatError) as exc:
            container.decode(data[:cut], b"TEST", 1)
        assert 0 <= exc.value.offset <= cut
