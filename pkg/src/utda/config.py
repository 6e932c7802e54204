"""INI configuration with documented defaults, full-scale overlays and dotted overrides.

Every key below can be changed in a user file passed with ``--config`` or on the
command line with ``--set section.key=value``. A section ``<name>.full``
overlays ``<name>`` when full-scale mode is on.
"""

import configparser
import hashlib

from .errors import InvalidArgument

DEFAULT_INI = """\
[general]
# base seed for every random stream of a run
seed = 0
deterministic = false
full_scale = false

[train]
epochs = 100
batch_size = 128
lr = 0.001
patience = 10

[na]
nx = 100
ny = 30
L = 3
K = 16
n_per_domain = 4000
hidden = 64, 32
sigmas_broad = 0.1, 0.03, 0.005
sigmas_narrow = 0.12, 0.06, 0.035
# average SNR (dB) of the six generalization domains; mixed models train on 1, 3, 5
snrs_generalization = 4, 10, 15, 20, 26, 32
# also run the retrained-DNN baseline inside na_broad_snr
staged_dnn = false
dnn_hidden = 256, 512, 256
# relative cut for the alpha/beta split proposal
split_rel = 0.75

[na.full]
n_per_domain = 43000

[gain]
nx = 100
ny = 30
L = 3
K = 16
sigma = 0.01
n_per_domain = 4000
n_domains = 3
gen_train_domains = 45
gen_test_domains = 5
gen_n_per_domain = 120
gen_pt_n_per_domain = 600

[gain.full]
gen_n_per_domain = 10000
gen_pt_n_per_domain = 50000

[pr]
nx = 400
ny = 300
nyc = 100
L = 3, 5, 8
K = 10
sigma = 0.01
n_per_domain = 1500
epochs = 30
patience = 5
estimator_epochs = 300
estimator_patience = 20

[pr.full]
nx = 1700
ny = 1200
nyc = 400
L = 10, 7, 4
n_per_domain = 2000

[mnist]
images =
labels =
test_images =
test_labels =
m = 500
K = 15
n_train = 5000
n_test = 2000
snrs = -10, -5, 0, 5, 10
hidden_ddtda = 750, 375, 125, 64
epochs = 20
batch_size = 100

[mnist.full]
n_train = 50000
n_test = 10000
epochs = 150
"""


class Config:
    def __init__(self, parser=None, full_scale=None):
        self.parser = parser or _parse(DEFAULT_INI)
        if full_scale is not None:
            self.parser.set("general", "full_scale", "true" if full_scale else "false")

    @classmethod
    def load(cls, path=None, overrides=(), full_scale=None):
        parser = _parse(DEFAULT_INI)
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    parser.read_file(fh)
            except configparser.Error as exc:
                raise InvalidArgument(f"bad config file {path}: {exc}") from None
        cfg = cls(parser, full_scale)
        for item in overrides:
            cfg.override(item)
        return cfg

    def override(self, item):
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().rpartition(".")
        if not sep or not dot or not name:
            raise InvalidArgument(f"override must look like section.key=value, got {item!r}")
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser.set(section, name, value.strip())

    @property
    def full_scale(self):
        return self.parser.getboolean("general", "full_scale")

    def _raw(self, section, key):
        full = f"{section}.full"
        if self.full_scale and self.parser.has_option(full, key):
            return self.parser.get(full, key)
        if not self.parser.has_option(section, key):
            raise InvalidArgument(f"missing config key {section}.{key}")
        return self.parser.get(section, key)

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def get(self, section, key):
        return self._raw(section, key).strip()

    def int(self, section, key):
        return _convert(int, self._raw(section, key), section, key)

    def float(self, section, key):
        return _convert(float, self._raw(section, key), section, key)

    def bool(self, section, key):
        value = self._raw(section, key).strip().lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        raise InvalidArgument(f"{section}.{key} must be a boolean, got {value!r}")

    def ints(self, section, key):
        return [_convert(int, v, section, key) for v in _split(self._raw(section, key))]

    def floats(self, section, key):
        return [_convert(float, v, section, key) for v in _split(self._raw(section, key))]

    def text(self):
        lines = []
        for section in sorted(self.parser.sections()):
            for key in sorted(self.parser.options(section)):
                lines.append(f"{section}.{key}={self.parser.get(section, key).strip()}")
        return "\n".join(lines)

    def hash(self):
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()[:16]


def _parse(text):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string(text)
    return parser


def _split(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def _convert(fn, value, section, key):
    try:
        return fn(value.strip())
    except ValueError:
        raise InvalidArgument(f"{section}.{key}: cannot parse {value!r}") from None
