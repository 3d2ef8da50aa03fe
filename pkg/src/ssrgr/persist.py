"""Run configuration files and the binary model container.

Model file layout (all integers little-endian)::

    magic      8 bytes   b"SSRGRMDL"
    version    uint32    currently 1
    mode       uint32    0 = linear, 1 = kernel
    count      uint32    number of matrices
    reserved   uint32    0
    count x [ name: 16 bytes ASCII, NUL padded | rows: uint64 | cols: uint64 ]
    payloads   float64, row-major, in header order
    echo_len   uint64
    echo       UTF-8 JSON (hyperparameters, kernel settings, seed, trace)
    crc32      uint32 over every preceding byte
"""
import configparser
import json
import os
import struct
import tempfile
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import SplitSpec
from .errors import InvalidConfigError, ModelFileError
from .graphs import GraphConfig
from .kernel import KernelConfig, KernelModel
from .linear import HyperParams, SsrgrModel
from .sparse_solvers import AdmmConfig

MAGIC = b"SSRGRMDL"
VERSION = 1
MODES = ("linear", "kernel")
_HEAD = struct.Struct("<8sIIII")
_DIM = struct.Struct("<16sQQ")

LINEAR_MATRICES = ("dictionary", "codes", "classifier", "labels_pred", "features")
KERNEL_MATRICES = ("coeffs", "codes", "classifier", "labels_pred", "gram", "features")


# -- run configuration ---------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    mode: str = "linear"
    dataset: str = None
    format: str = "text"
    out: str = "run"
    split: SplitSpec = field(default_factory=SplitSpec)
    hyper: HyperParams = field(default_factory=HyperParams)
    kernel: KernelConfig = field(default_factory=KernelConfig)

    @property
    def seed(self):
        return self.hyper.seed

    def with_seed(self, seed):
        return replace(self, hyper=replace(self.hyper, seed=seed),
                       split=replace(self.split, seed=seed))

    def echo(self):
        return {
            "mode": self.mode, "dataset": self.dataset, "format": self.format,
            "split": asdict(self.split), "hyper": hyper_to_dict(self.hyper),
            "kernel": asdict(self.kernel),
        }


_MODEL_KEYS = {
    "lambda": ("lam", float), "alpha": ("alpha", float),
    "gamma": ("label_consistency_weight", float),
    "beta1": ("beta1", float), "beta2": ("beta2", float), "beta3": ("beta3", float),
    "ridge_mu": ("ridge_mu", float), "dict_size": ("dict_size", int),
    "outer_iters": ("outer_iters", int), "stop_tol": ("stop_tol", float),
    "normalize": ("normalize", "bool"), "init_iters": ("init_iters", int),
    "init_admm_iters": ("init_admm_iters", int), "code_admm_iters": ("code_admm_iters", int),
}
_GRAPH_KEYS = {"num_neighbors": int, "beta_w": float, "beta_b": float,
               "propagation_mixing": float, "delta": float}
_ADMM_KEYS = {"rho": float, "max_iters": int, "tol": float}


def _get(section, key, kind):
    try:
        if kind == "bool":
            return section.getboolean(key)
        return kind(section[key])
    except ValueError as e:
        raise InvalidConfigError(f"[{section.name}] {key}: {e}") from None


def _check_keys(section, allowed):
    unknown = set(section) - set(allowed)
    if unknown:
        raise InvalidConfigError(f"[{section.name}] unknown keys: {', '.join(sorted(unknown))}")


def parse_config(text, base_dir=None, mode=None, seed=None):
    """Parse an INI-style run configuration.

    ``mode`` and ``seed`` override the file. The model defaults for lambda,
    alpha and gamma depend on the mode.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise InvalidConfigError(f"config parse error: {e}") from None
    known = {"run", "split", "model", "graph", "admm", "kernel"}
    extra = set(cp.sections()) - known
    if extra:
        raise InvalidConfigError(f"unknown config sections: {', '.join(sorted(extra))}")
    run = cp["run"] if cp.has_section("run") else {}
    if cp.has_section("run"):
        _check_keys(run, {"mode", "dataset", "format", "seed", "out"})
    mode = mode or run.get("mode", "linear")
    if mode not in MODES:
        raise InvalidConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if seed is None:
        seed = int(run.get("seed", 0)) if run else 0
    dataset = run.get("dataset") if run else None
    if dataset and base_dir is not None and not os.path.isabs(dataset):
        dataset = str(Path(base_dir) / dataset)

    kw = {}
    if cp.has_section("model"):
        sec = cp["model"]
        _check_keys(sec, _MODEL_KEYS)
        for key, (attr, kind) in _MODEL_KEYS.items():
            if key in sec:
                kw[attr] = _get(sec, key, kind)
    gkw, akw = {}, {}
    if cp.has_section("graph"):
        _check_keys(cp["graph"], _GRAPH_KEYS)
        gkw = {k: _get(cp["graph"], k, t) for k, t in _GRAPH_KEYS.items() if k in cp["graph"]}
    if cp.has_section("admm"):
        _check_keys(cp["admm"], _ADMM_KEYS)
        akw = {k: _get(cp["admm"], k, t) for k, t in _ADMM_KEYS.items() if k in cp["admm"]}
    make = HyperParams.kernel_defaults if mode == "kernel" else HyperParams.linear_defaults
    hyper = make(graph=GraphConfig(**gkw), admm=AdmmConfig(**akw), seed=seed, **kw)
    hyper.validate()
    hyper.graph.validate()

    skw = {}
    if cp.has_section("split"):
        sec = cp["split"]
        _check_keys(sec, {"labeled_per_class", "shuffle"})
        if "labeled_per_class" in sec:
            skw["labeled_per_class"] = _get(sec, "labeled_per_class", int)
        if "shuffle" in sec:
            skw["shuffle"] = _get(sec, "shuffle", "bool")
    kkw = {}
    if cp.has_section("kernel"):
        sec = cp["kernel"]
        _check_keys(sec, {"kind", "sigma"})
        if "kind" in sec:
            kkw["kind"] = sec["kind"]
        if "sigma" in sec:
            kkw["sigma"] = _get(sec, "sigma", float)
    kcfg = KernelConfig(**kkw)
    kcfg.validate()
    return RunConfig(mode=mode, dataset=dataset, format=run.get("format", "text") if run else "text",
                     out=run.get("out", "run") if run else "run",
                     split=SplitSpec(seed=seed, **skw), hyper=hyper, kernel=kcfg)


def load_config(path, mode=None, seed=None):
    path = Path(path)
    if not path.exists():
        raise InvalidConfigError(f"{path}: no such config file")
    return parse_config(path.read_text(), base_dir=path.parent, mode=mode, seed=seed)


def hyper_to_dict(hp):
    d = {f.name: getattr(hp, f.name) for f in fields(hp) if f.name not in ("graph", "admm")}
    d["graph"] = asdict(hp.graph)
    d["admm"] = asdict(hp.admm)
    return d


def hyper_from_dict(d):
    d = dict(d)
    graph = GraphConfig(**d.pop("graph"))
    admm = AdmmConfig(**d.pop("admm"))
    return HyperParams(graph=graph, admm=admm, **d)


# -- atomic writes -------------------------------------------------------------

def write_atomic(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- model container -----------------------------------------------------------

def _matrix(a):
    a = np.zeros((0, 0)) if a is None else np.asarray(a, dtype=float)
    return a if a.ndim == 2 else a.reshape(1, -1)


def model_to_bytes(model, hyper, kernel=None, class_count=None):
    if isinstance(model, KernelModel):
        mode, names = 1, KERNEL_MATRICES
        echo = {"kernel": {"kind": model.kind, "sigma": model.sigma}}
    else:
        mode, names = 0, LINEAR_MATRICES
        echo = {}
    echo.update(hyper=hyper_to_dict(hyper), seed=hyper.seed, trace=list(model.trace),
                class_count=class_count)
    mats = [_matrix(getattr(model, n)) for n in names]
    parts = [_HEAD.pack(MAGIC, VERSION, mode, len(mats), 0)]
    for name, m in zip(names, mats):
        parts.append(_DIM.pack(name.encode("ascii"), m.shape[0], m.shape[1]))
    for m in mats:
        parts.append(np.ascontiguousarray(m, dtype="<f8").tobytes())
    blob = json.dumps(echo, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<Q", len(blob)))
    parts.append(blob)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def model_from_bytes(data):
    """Returns ``(model, hyper, echo)``."""
    if len(data) < _HEAD.size + 4:
        raise ModelFileError("model file truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFileError("model file checksum mismatch (corrupted)")
    magic, version, mode, count, _ = _HEAD.unpack_from(body)
    if magic != MAGIC:
        raise ModelFileError(f"not a model file (magic {magic!r})")
    if version != VERSION:
        raise ModelFileError(f"unsupported model file version {version}")
    if mode not in (0, 1):
        raise ModelFileError(f"unknown model mode {mode}")
    off = _HEAD.size
    dims = []
    for _ in range(count):
        name, r, c = _DIM.unpack_from(body, off)
        off += _DIM.size
        dims.append((name.rstrip(b"\0").decode("ascii"), r, c))
    mats = {}
    for name, r, c in dims:
        nbytes = 8 * r * c
        if off + nbytes > len(body):
            raise ModelFileError("model file truncated in matrix payload")
        mats[name] = np.frombuffer(body, dtype="<f8", count=r * c, offset=off).reshape(r, c).copy()
        off += nbytes
    (elen,) = struct.unpack_from("<Q", body, off)
    off += 8
    try:
        echo = json.loads(body[off:off + elen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFileError(f"bad config echo: {e}") from None
    hyper = hyper_from_dict(echo["hyper"])
    trace = tuple(echo.get("trace", ()))
    feats = mats.get("features")
    feats = None if feats is None or feats.size == 0 else feats
    expected = KERNEL_MATRICES if mode else LINEAR_MATRICES
    if [d[0] for d in dims] != list(expected):
        raise ModelFileError(f"unexpected matrix set {[d[0] for d in dims]}")
    if mode == 0:
        model = SsrgrModel(mats["dictionary"], mats["codes"], mats["classifier"],
                           mats["labels_pred"], trace, feats)
    else:
        k = echo["kernel"]
        model = KernelModel(mats["coeffs"], mats["codes"], mats["classifier"],
                            mats["labels_pred"], mats["gram"], trace=trace, features=feats,
                            kind=k["kind"], sigma=k["sigma"])
    return model, hyper, echo


def save_model(path, model, hyper, class_count=None):
    write_atomic(path, model_to_bytes(model, hyper, class_count=class_count))


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"{path}: no such model file")
    try:
        return model_from_bytes(path.read_bytes())
    except (struct.error, KeyError, TypeError, ValueError) as e:
        if isinstance(e, ModelFileError):
            raise
        raise ModelFileError(f"{path}: malformed model file ({e})") from None
