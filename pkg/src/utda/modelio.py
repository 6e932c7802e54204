"""Model persistence in the UTDA container (one f64 block per named parameter)."""

import struct

import numpy as np

from . import container
from .errors import FormatError, InvalidArgument
from .gaincal import GainCalModel
from .na_lista import ListaModel
from .phaseret import PrModel

UTDA_MAGIC = b"UTDA"
UTDA_VERSION = 1
_KINDS = {"lista": ListaModel, "gaincal": GainCalModel, "pr": PrModel}
_KIND_CODES = {name: i for i, name in enumerate(_KINDS)}


def model_bytes(model):
    kind = getattr(model, "kind", None)
    if kind not in _KINDS:
        raise InvalidArgument(f"cannot serialize {type(model).__name__}")
    params = model.params
    blocks = {name: np.asarray(params[name], dtype=np.float64) for name in sorted(params)}
    header = struct.pack("<BQ", _KIND_CODES[kind], sum(a.size for a in blocks.values()))
    return container.encode(UTDA_MAGIC, UTDA_VERSION, header, model.meta(), blocks)


def model_from_bytes(data):
    _, header, meta, blocks = container.decode(data, UTDA_MAGIC, UTDA_VERSION)
    if len(header) != 9:
        raise FormatError("model header has the wrong size", offset=10)
    code, count = struct.unpack("<BQ", header)
    names = list(_KINDS)
    if code >= len(names) or meta.get("model") != names[code]:
        raise FormatError(f"unknown or inconsistent model kind code {code}", offset=10)
    if sum(a.size for a in blocks.values()) != count:
        raise FormatError("parameter count disagrees with the header", offset=10)
    try:
        return _KINDS[names[code]].from_meta(meta, {k: v.copy() for k, v in blocks.items()})
    except (InvalidArgument, KeyError) as exc:
        raise FormatError(f"model blocks do not match metadata: {exc}", offset=10) from None


def save_model(path, model):
    container.write_file(path, model_bytes(model))


def load_model(path):
    return model_from_bytes(container.read_file(path))
