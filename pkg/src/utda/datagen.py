"""Synthetic domain datasets, MNIST ingestion, deterministic splits and the UTDS file format."""

import gzip
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import FormatError, InvalidArgument
from .gaincal import gen_gain
from .phaseret import pr_measure

KINDS = ("noise_cs", "gain_cs", "phase_retrieval", "mnist_cs")
SPLITS = ("train", "val", "test")
CS_SPLITS = (0.56, 0.24, 0.20)
PR_SPLITS = (0.80, 0.15, 0.05)

UTDS_MAGIC = b"UTDS"
UTDS_VERSION = 1
_HEADER = struct.Struct("<BIIIQI3dQ")

IDX_IMAGES = 2051
IDX_LABELS = 2049


def config_hash(cfg):
    """Short stable hash of a JSON-serializable configuration."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class SparseSignalSpec:
    nx: int
    L: int
    amplitudes: str = "gaussian"  # or "pm_one"

    def __post_init__(self):
        if not 0 < self.L <= self.nx:
            raise InvalidArgument(f"need 0 < L <= Nx, got L={self.L}, Nx={self.nx}")
        if self.amplitudes not in ("gaussian", "pm_one"):
            raise InvalidArgument(f"unknown amplitude law {self.amplitudes!r}")


def sample_supports(rng, n, nx, L):
    """``n`` uniform L-subsets of ``range(nx)`` by a partial Fisher-Yates shuffle."""
    perm = np.tile(np.arange(nx, dtype=np.int64), (n, 1))
    rows = np.arange(n)
    for i in range(L):
        j = i + rng.integers(0, nx - i, size=n)
        perm[rows, i], perm[rows, j] = perm[rows, j], perm[rows, i].copy()
    return perm[:, :L]


def sample_sparse(rng, spec, n):
    S = sample_supports(rng, n, spec.nx, spec.L)
    if spec.amplitudes == "gaussian":
        vals = rng.standard_normal((n, spec.L))
    else:
        vals = rng.choice(np.array([-1.0, 1.0]), size=(n, spec.L))
    X = np.zeros((n, spec.nx))
    np.put_along_axis(X, S, vals, axis=1)
    return X


def split_labels(rng, n, fractions):
    """Exact-count split labels (0 train, 1 val, 2 test) in a random order."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise InvalidArgument(f"split fractions must be three values summing to 1, got {fractions}")
    n_train = int(round(fr[0] * n))
    n_val = int(round(fr[1] * n))
    n_val = min(n_val, n - n_train)
    labels = np.full(n, 2, dtype=np.uint8)
    labels[:n_train] = 0
    labels[n_train:n_train + n_val] = 1
    return labels[rng.permutation(n)]


@dataclass
class DomainDataset:
    kind: str
    X: np.ndarray
    Y: np.ndarray
    domain: np.ndarray              # domain index per sample
    split: np.ndarray               # 0/1/2 per sample
    sigma: np.ndarray               # noise std per sample
    theta: np.ndarray               # domain parameter per domain (sigma, SNR dB, L, or gain index)
    A: np.ndarray
    Yc: np.ndarray = None
    Ac: np.ndarray = None
    gains: np.ndarray = None        # (J, Ny) for gain domains
    fractions: tuple = CS_SPLITS
    seed: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown dataset kind {self.kind!r}")
        n = len(self.X)
        for name in ("Y", "domain", "split", "sigma"):
            if len(getattr(self, name)) != n:
                raise InvalidArgument(f"{name} has {len(getattr(self, name))} rows, expected {n}")
        if self.Yc is not None and len(self.Yc) != n:
            raise InvalidArgument("Yc row count does not match X")

    @property
    def n(self):
        return len(self.X)

    @property
    def nx(self):
        return self.X.shape[1]

    @property
    def ny(self):
        return self.Y.shape[1]

    @property
    def n_domains(self):
        return len(self.theta)

    @property
    def config_hash(self):
        return self.provenance.get("config_hash", "")

    def side_info(self, idx=None):
        """Per-sample domain parameter as fed to a parametric predictor."""
        idx = slice(None) if idx is None else idx
        if self.kind == "gain_cs":
            return self.gains[self.domain[idx]]
        if self.kind == "phase_retrieval":
            return self.theta[self.domain[idx]].astype(np.int64)
        return self.sigma[idx]

    def select(self, split=None, domain=None):
        mask = np.ones(self.n, dtype=bool)
        if split is not None:
            mask &= self.split == SPLITS.index(split)
        if domain is not None:
            mask &= np.isin(self.domain, np.atleast_1d(domain))
        return self.subset(np.flatnonzero(mask))

    def subset(self, idx):
        def take(a):
            return None if a is None else a[idx]
        return DomainDataset(self.kind, self.X[idx], self.Y[idx], self.domain[idx],
                             self.split[idx], self.sigma[idx], self.theta, self.A,
                             take(self.Yc), self.Ac, self.gains, self.fractions, self.seed,
                             self.provenance)


def _assemble(rng, kind, X, Y, dom, sigma, theta, A, fractions, seed, prov, n_per, **extra):
    # splits are drawn per domain so each domain keeps the requested proportions
    split = np.empty(len(X), dtype=np.uint8)
    for j in range(len(theta)):
        rows = np.flatnonzero(dom == j)
        split[rows] = split_labels(rng, len(rows), fractions)
    prov = dict(prov, n_per_domain=n_per, fractions=list(fractions), seed=seed)
    prov["config_hash"] = config_hash(prov)
    return DomainDataset(kind, X, Y, dom, split, sigma, np.asarray(theta, dtype=np.float64), A,
                         fractions=tuple(fractions), seed=seed, provenance=prov, **extra)


def gen_noise_domains(rng, A, spec, sigmas=None, snrs_db=None, n_per_domain=4000,
                      fractions=CS_SPLITS, seed=0, signals=None, kind="noise_cs"):
    """Noisy linear measurements ``y = A x + sigma * eta``, one domain per noise level.

    Pass ``sigmas`` for a fixed std per domain or ``snrs_db`` for a per-sample std
    ``||A x|| / sqrt(Ny * 10^(SNR/10))``. ``signals`` optionally supplies the
    clean signals (``n_per_domain`` rows per domain) instead of sampling them.
    """
    if (sigmas is None) == (snrs_db is None):
        raise InvalidArgument("give exactly one of sigmas or snrs_db")
    levels = list(sigmas if sigmas is not None else snrs_db)
    if not levels:
        raise InvalidArgument("empty domain list")
    if sigmas is not None and any(s < 0 for s in levels):
        raise InvalidArgument("noise std must be nonnegative")
    A = np.asarray(A, dtype=np.float64)
    ny = A.shape[0]
    Xs, Ys, doms, sigs = [], [], [], []
    for j, level in enumerate(levels):
        if signals is None:
            X = sample_sparse(rng, spec, n_per_domain)
        else:
            X = np.asarray(signals[j * n_per_domain:(j + 1) * n_per_domain], dtype=np.float64)
            if len(X) != n_per_domain:
                raise InvalidArgument("not enough supplied signals for every domain")
        clean = X @ A.T
        if sigmas is not None:
            sig = np.full(n_per_domain, float(level))
        else:
            sig = np.linalg.norm(clean, axis=1) / np.sqrt(ny * 10.0 ** (level / 10.0))
        Y = clean + sig[:, None] * rng.standard_normal(clean.shape)
        Xs.append(X)
        Ys.append(Y)
        doms.append(np.full(n_per_domain, j, dtype=np.int64))
        sigs.append(sig)
    prov = {"generator": kind, "mode": "sigma" if sigmas is not None else "snr_db",
            "levels": [float(v) for v in levels],
            "spec": None if spec is None else [spec.nx, spec.L, spec.amplitudes]}
    return _assemble(rng, kind, np.concatenate(Xs), np.concatenate(Ys), np.concatenate(doms),
                     np.concatenate(sigs), levels, A, fractions, seed, prov, n_per_domain)


def gen_gain_domains(rng, A, spec, gain_kinds, sigma=0.01, n_per_domain=4000,
                     fractions=CS_SPLITS, seed=0, gain_info=None):
    """``y = diag(c_j) A x + sigma * eta`` with one gain vector per domain.

    ``gain_kinds`` entries are ``"structured"``, ``"random"`` or an explicit vector.
    ``gain_info`` optionally supplies the provenance record of each explicit vector.
    """
    if not gain_kinds:
        raise InvalidArgument("empty domain list")
    A = np.asarray(A, dtype=np.float64)
    ny = A.shape[0]
    gains, info = [], []
    for g in gain_kinds:
        if isinstance(g, str):
            c, meta = gen_gain(rng, g, ny)
        else:
            c = np.asarray(g, dtype=np.float64)
            if c.shape != (ny,):
                raise InvalidArgument("explicit gain vector must have length Ny")
            meta = {"kind": "explicit"}
            if gain_info is not None:
                meta = gain_info[len(gains)]
        gains.append(c)
        info.append({k: (float(v) if not isinstance(v, str) else v) for k, v in meta.items()})
    Xs, Ys, doms = [], [], []
    for j, c in enumerate(gains):
        X = sample_sparse(rng, spec, n_per_domain)
        Y = (X @ A.T) * c + sigma * rng.standard_normal((n_per_domain, ny))
        Xs.append(X)
        Ys.append(Y)
        doms.append(np.full(n_per_domain, j, dtype=np.int64))
    n = n_per_domain * len(gains)
    prov = {"generator": "gain_cs", "sigma": float(sigma), "gains": info,
            "spec": [spec.nx, spec.L, spec.amplitudes]}
    return _assemble(rng, "gain_cs", np.concatenate(Xs), np.concatenate(Ys), np.concatenate(doms),
                     np.full(n, float(sigma)), np.arange(len(gains)), A, fractions, seed, prov,
                     n_per_domain, gains=np.stack(gains))


def gen_pr_domains(rng, prob, L_list, n_per_domain=1500, fractions=PR_SPLITS, seed=0):
    """Phase-retrieval domains indexed by sparsity, with +-1 nonzero amplitudes."""
    if not L_list:
        raise InvalidArgument("empty domain list")
    Xs, Ys, Ycs, doms = [], [], [], []
    for j, L in enumerate(L_list):
        X = sample_sparse(rng, SparseSignalSpec(prob.nx, int(L), "pm_one"), n_per_domain)
        Y, Yc = pr_measure(prob, X, rng)
        Xs.append(X)
        Ys.append(Y)
        Ycs.append(Yc)
        doms.append(np.full(n_per_domain, j, dtype=np.int64))
    n = n_per_domain * len(L_list)
    prov = {"generator": "phase_retrieval", "sigma": float(prob.sigma),
            "L": [int(v) for v in L_list], "dims": [prob.nx, prob.ny, prob.nyc]}
    return _assemble(rng, "phase_retrieval", np.concatenate(Xs), np.concatenate(Ys),
                     np.concatenate(doms), np.full(n, float(prob.sigma)),
                     [float(v) for v in L_list], prob.A, fractions, seed, prov, n_per_domain,
                     Yc=np.concatenate(Ycs), Ac=prob.Ac)


# --------------------------------------------------------------------------
# MNIST IDX
# --------------------------------------------------------------------------

def _read_maybe_gz(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx(data, expected_magic):
    """Parse an IDX buffer (big-endian) into a uint8 array."""
    if len(data) < 4:
        raise FormatError("truncated IDX header", offset=len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise FormatError(f"bad IDX magic {magic:#010x}, expected {expected_magic:#010x}", offset=0)
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    if len(data) < hdr:
        raise FormatError("truncated IDX dimensions", offset=len(data))
    dims = struct.unpack(f">{ndim}I", data[4:hdr])
    size = int(np.prod(dims, dtype=np.int64))
    if len(data) < hdr + size:
        raise FormatError(f"truncated IDX payload: need {size} bytes", offset=len(data))
    if len(data) > hdr + size:
        raise FormatError("trailing bytes after IDX payload", offset=hdr + size)
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=hdr).reshape(dims)


def load_mnist_idx(images_path, labels_path=None):
    """Images as rows of ``[0, 1]`` floats (784 per 28x28 image) and optional labels."""
    imgs = parse_idx(_read_maybe_gz(images_path), IDX_IMAGES)
    X = imgs.reshape(len(imgs), -1).astype(np.float64) / 255.0
    if labels_path is None:
        return X, None
    labels = parse_idx(_read_maybe_gz(labels_path), IDX_LABELS).astype(np.int64)
    if len(labels) != len(X):
        raise FormatError(f"{len(labels)} labels for {len(X)} images", offset=4)
    return X, labels


def gen_mnist_domains(rng, images, A, snrs_db=(-10, -5, 0, 5, 10), n_per_domain=1000,
                      fractions=CS_SPLITS, seed=0):
    """Disjoint image subsets, one per target SNR, measured with ``A``."""
    need = n_per_domain * len(snrs_db)
    if len(images) < need:
        raise InvalidArgument(f"need {need} images, have {len(images)}")
    order = rng.permutation(len(images))[:need]
    return gen_noise_domains(rng, A, None, snrs_db=snrs_db, n_per_domain=n_per_domain,
                             fractions=fractions, seed=seed, signals=images[order],
                             kind="mnist_cs")


# --------------------------------------------------------------------------
# UTDS persistence
# --------------------------------------------------------------------------

def dataset_bytes(ds):
    nyc = 0 if ds.Yc is None else ds.Yc.shape[1]
    header = _HEADER.pack(KINDS.index(ds.kind), ds.nx, ds.ny, nyc, ds.n, ds.n_domains,
                          *ds.fractions, ds.seed)
    blocks = {"X": ds.X, "Y": ds.Y, "domain": ds.domain.astype(np.int64),
              "split": ds.split.astype(np.uint8), "sigma": ds.sigma, "theta": ds.theta, "A": ds.A}
    for name in ("Yc", "Ac", "gains"):
        if getattr(ds, name) is not None:
            blocks[name] = getattr(ds, name)
    return container.encode(UTDS_MAGIC, UTDS_VERSION, header, ds.provenance, blocks)


def dataset_from_bytes(data):
    _, header, meta, blocks = container.decode(data, UTDS_MAGIC, UTDS_VERSION)
    if len(header) != _HEADER.size:
        raise FormatError(f"dataset header is {len(header)} bytes, expected {_HEADER.size}",
                          offset=10)
    kind, nx, ny, nyc, n, n_dom, f0, f1, f2, seed = _HEADER.unpack(header)
    if kind >= len(KINDS):
        raise FormatError(f"unknown dataset kind code {kind}", offset=10)
    for name in ("X", "Y", "domain", "split", "sigma", "theta", "A"):
        if name not in blocks:
            raise FormatError(f"missing block {name!r}", offset=len(data))
    if blocks["X"].shape != (n, nx) or blocks["Y"].shape != (n, ny) or len(blocks["theta"]) != n_dom:
        raise FormatError("block shapes disagree with the header", offset=10)
    if nyc and blocks.get("Yc", np.empty((0, 0))).shape != (n, nyc):
        raise FormatError("Yc block disagrees with the header", offset=10)
    try:
        return DomainDataset(KINDS[kind], blocks["X"], blocks["Y"], blocks["domain"], blocks["split"],
                             blocks["sigma"], blocks["theta"], blocks["A"], blocks.get("Yc"),
                             blocks.get("Ac"), blocks.get("gains"), (f0, f1, f2), seed, meta)
    except InvalidArgument as exc:
        raise FormatError(str(exc), offset=10) from None


def save_dataset(path, ds):
    container.write_file(path, dataset_bytes(ds))


def load_dataset(path):
    return dataset_from_bytes(container.read_file(path))
