"""Checkpoint serialization, dataset ingestion, and image dumps.

Checkpoint = ``<name>.manifest.json`` + ``<name>.weights.bin``.  The
manifest carries the graph topology (tensor roles/shapes/names, op nodes
with attrs) plus an array table; the blob is the little-endian float64
arrays concatenated in manifest order at the recorded byte offsets.
Tensor ids are densified on save, so save -> load -> save is
byte-identical.

MNIST IDX files are big-endian with magics 0x00000803 (images) and
0x00000801 (labels); images come out as N x 28 x 28 x 1 doubles in [0, 1].
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, ConfigError, DataFormatError
from .graph import Graph
from .tensor import OpKind

CHECKPOINT_FORMAT = "zonotrain-checkpoint"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    classes: int
    data_range: tuple = (0.0, 1.0)
    name: str = ""

    @property
    def inputs(self):
        return self.x_train

    @property
    def labels(self):
        return self.y_train

    def validate(self):
        for y in (self.y_train, self.y_test):
            if y.size and (y.min() < 0 or y.max() >= self.classes):
                raise ConfigError(
                    f"labels outside [0, {self.classes}): "
                    f"min {y.min()}, max {y.max()}")
        if len(self.x_train) != len(self.y_train) or len(self.x_test) != len(self.y_test):
            raise ConfigError("inputs and labels disagree on example count")
        return self


def _read_exact(raw, offset, n, path, what):
    if len(raw) < offset + n:
        raise DataFormatError(
            f"{path}: truncated while reading {what} "
            f"(need {offset + n} bytes, file has {len(raw)})")
    return raw[offset:offset + n]


def _read_idx_images(path):
    with open(path, "rb") as f:
        raw = f.read()
    magic, n, rows, cols = struct.unpack(">IIII", _read_exact(raw, 0, 16, path, "header"))
    if magic != 0x00000803:
        raise DataFormatError(f"{path}: bad IDX image magic {magic:#010x}, want 0x00000803")
    body = _read_exact(raw, 16, n * rows * cols, path, f"{n} images")
    if len(raw) != 16 + n * rows * cols:
        raise DataFormatError(f"{path}: {len(raw) - 16 - n * rows * cols} trailing bytes")
    imgs = np.frombuffer(body, dtype=np.uint8).reshape(n, rows, cols, 1)
    return imgs.astype(np.float64) / 255.0


def _read_idx_labels(path):
    with open(path, "rb") as f:
        raw = f.read()
    magic, n = struct.unpack(">II", _read_exact(raw, 0, 8, path, "header"))
    if magic != 0x00000801:
        raise DataFormatError(f"{path}: bad IDX label magic {magic:#010x}, want 0x00000801")
    body = _read_exact(raw, 8, n, path, f"{n} labels")
    if len(raw) != 8 + n:
        raise DataFormatError(f"{path}: {len(raw) - 8 - n} trailing bytes")
    return np.frombuffer(body, dtype=np.uint8).astype(np.int64)


def load_mnist_idx(images_path, labels_path):
    """One IDX image/label pair as a Dataset (test split left empty)."""
    x = _read_idx_images(images_path)
    y = _read_idx_labels(labels_path)
    if len(x) != len(y):
        raise DataFormatError(
            f"image/label count mismatch: {len(x)} images vs {len(y)} labels")
    empty_x = x[:0]
    empty_y = y[:0]
    return Dataset(x, y, empty_x, empty_y, classes=10,
                   data_range=(0.0, 1.0), name="mnist-idx").validate()


def mnist_dataset(train_images, train_labels, test_images, test_labels,
                  train_limit=None, test_limit=None):
    """Full train/test dataset from two IDX pairs, optionally truncated."""
    tr = load_mnist_idx(train_images, train_labels)
    te = load_mnist_idx(test_images, test_labels)
    sl_tr = slice(None, train_limit)
    sl_te = slice(None, test_limit)
    return Dataset(tr.x_train[sl_tr], tr.y_train[sl_tr],
                   te.x_train[sl_te], te.y_train[sl_te],
                   classes=10, data_range=(0.0, 1.0), name="mnist").validate()


def synth_blobs(seed, n_per_class, classes, dim, separation):
    """Gaussian clusters at fixed random centers; deterministic per seed."""
    if separation <= 0:
        raise ConfigError("separation must be positive")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((classes, dim))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    xs, ys = [], []
    for c in range(classes):
        xs.append(centers[c] + rng.standard_normal((n_per_class, dim)))
        ys.append(np.full(n_per_class, c, dtype=np.int64))
    X = np.concatenate(xs)
    y = np.concatenate(ys)
    n_test_pc = max(1, n_per_class // 5)
    tr_idx, te_idx = [], []
    for c in range(classes):
        base = c * n_per_class
        te_idx.extend(range(base, base + n_test_pc))
        tr_idx.extend(range(base + n_test_pc, base + n_per_class))
    perm = rng.permutation(len(tr_idx))
    tr = np.asarray(tr_idx)[perm]
    te = np.asarray(te_idx)
    return Dataset(X[tr], y[tr], X[te], y[te], classes=classes,
                   data_range=None, name="blobs").validate()


def load_digits_dataset(train_limit=None, test_limit=500, upscale=1, seed=0):
    """The bundled 8x8 handwritten-digit set as a Dataset.

    Stand-in substrate for desk-scale runs when no IDX files are on disk:
    1797 examples, pixel values scaled to [0, 1], optional integer
    nearest-neighbor upscale.
    """
    from sklearn.datasets import load_digits
    bundle = load_digits()
    X = bundle.images / 16.0
    if upscale > 1:
        X = np.kron(X, np.ones((1, upscale, upscale)))
    X = X[..., None]
    y = bundle.target.astype(np.int64)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    X, y = X[perm], y[perm]
    te = slice(0, test_limit)
    tr = slice(test_limit, None if train_limit is None else test_limit + train_limit)
    return Dataset(X[tr], y[tr], X[te], y[te], classes=10,
                   data_range=(0.0, 1.0), name="digits").validate()


def write_pgm(path, image, maxval=255):
    """Binary (P5) PGM dump of a single 2-d image scaled from [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    img = img.reshape(img.shape[0], -1) if img.ndim > 2 else img
    pix = np.clip(np.rint(img * maxval), 0, maxval).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n{maxval}\n".encode())
        f.write(pix.tobytes())


# ---------------------------------------------------------------------------
# checkpoints


def _ancestor_slice(g, outputs):
    """Tensor ids and node indices on which ``outputs`` depend."""
    keep_t, keep_n = set(outputs), set()
    stack = list(outputs)
    while stack:
        t = stack.pop()
        if t in g.producer:
            n = g.producer[t]
            if n in keep_n:
                continue
            keep_n.add(n)
            keep_t.update(g.nodes[n].outputs)
            for s in g.nodes[n].inputs:
                if s not in keep_t:
                    keep_t.add(s)
                    stack.append(s)
    return keep_t, keep_n


def _attrs_to_json(attrs):
    out = {}
    for k, v in attrs.items():
        if isinstance(v, tuple):
            v = list(v)
        if isinstance(v, list):
            v = [None if x is None else int(x) for x in v]
        elif isinstance(v, (np.integer, int)) and not isinstance(v, bool):
            v = int(v)
        out[k] = v
    return out


def save_checkpoint(g, weights, path, outputs=None, meta=None, meta_tensors=None):
    """Write ``path``.manifest.json + ``path``.weights.bin.

    ``weights`` maps variable name -> array and overrides the graph's
    stored values; pass None to save the graph's current values.  When
    ``outputs`` is given, only their ancestor slice is saved (tensor ids
    densified, relative order kept).  ``meta_tensors`` names tensor ids
    (e.g. the input and logits) and is stored remapped.
    """
    weights = dict(weights or {})
    unknown = set(weights) - set(g.variables)
    if unknown:
        raise CheckpointError(f"weights for unknown variables: {sorted(unknown)}")
    if outputs is None:
        keep_t, keep_n = set(g.infos), set(range(len(g.nodes)))
    else:
        keep_t, keep_n = _ancestor_slice(g, outputs)
    remap = {old: new for new, old in enumerate(sorted(keep_t))}

    tensors = []
    arrays = []
    blob = bytearray()
    for old in sorted(keep_t):
        info = g.infos[old]
        entry = {"id": remap[old], "role": info.role,
                 "shape": None if info.shape is None else [int(s) for s in info.shape],
                 "name": info.name}
        tensors.append(entry)
        if info.role in ("constant", "variable"):
            if info.role == "variable" and info.name in weights:
                val = np.asarray(weights[info.name], dtype=np.float64)
            else:
                val = g.values[old]
            raw = np.ascontiguousarray(val, dtype="<f8").tobytes()
            arrays.append({"id": remap[old], "role": info.role, "name": info.name,
                           "shape": [int(s) for s in val.shape],
                           "offset": len(blob), "nbytes": len(raw)})
            blob.extend(raw)
    ops_json = [{"kind": g.nodes[n].kind.value,
                 "inputs": [remap[t] for t in g.nodes[n].inputs],
                 "outputs": [remap[t] for t in g.nodes[n].outputs],
                 "attrs": _attrs_to_json(g.nodes[n].attrs)}
                for n in sorted(keep_n)]
    for key, tid in (meta_tensors or {}).items():
        if tid not in remap:
            raise CheckpointError(f"meta tensor {key}={tid} not in the saved slice")
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "tensors": tensors,
        "ops": ops_json,
        "variables": {name: remap[tid] for name, tid in g.variables.items()
                      if tid in keep_t},
        "arrays": arrays,
        "blob_nbytes": len(blob),
        "meta": meta or {},
        "meta_tensors": {k: remap[t] for k, t in (meta_tensors or {}).items()},
    }
    man_path, bin_path = f"{path}.manifest.json", f"{path}.weights.bin"
    with open(man_path, "w") as f:
        json.dump(manifest, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")
    with open(bin_path, "wb") as f:
        f.write(bytes(blob))
    return man_path, bin_path


def load_checkpoint(path):
    """Rebuild (Graph, weights dict) from a checkpoint prefix."""
    g, weights, _ = _load_checkpoint_full(path)
    return g, weights


def _load_checkpoint_full(path):
    try:
        with open(f"{path}.manifest.json") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read manifest {path}.manifest.json: {exc}")
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"not a checkpoint manifest: format={manifest.get('format')!r}")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')!r}")
    with open(f"{path}.weights.bin", "rb") as f:
        blob = f.read()
    if len(blob) != manifest["blob_nbytes"]:
        raise CheckpointError(
            f"weights blob is {len(blob)} bytes, manifest says {manifest['blob_nbytes']}")

    values = {}
    expected_off = 0
    for a in manifest["arrays"]:
        n = int(np.prod(a["shape"], dtype=np.int64)) * 8
        if n != a["nbytes"]:
            raise CheckpointError(
                f"array {a['name'] or a['id']!r}: shape {a['shape']} x 8 bytes "
                f"!= recorded nbytes {a['nbytes']}")
        if a["offset"] != expected_off:
            raise CheckpointError(
                f"array {a['name'] or a['id']!r}: offset {a['offset']} "
                f"(expected byte {expected_off})")
        if a["offset"] + n > len(blob):
            raise CheckpointError(
                f"array {a['name'] or a['id']!r}: bytes {a['offset']}:{a['offset'] + n} "
                f"past end of blob ({len(blob)} bytes)")
        values[a["id"]] = np.frombuffer(
            blob, dtype="<f8", count=n // 8, offset=a["offset"]
        ).reshape(a["shape"]).copy()
        expected_off += n
    if expected_off != len(blob):
        raise CheckpointError(f"{len(blob) - expected_off} unclaimed bytes at blob tail")

    op_of_output = {}
    for op in manifest["ops"]:
        for t in op["outputs"]:
            op_of_output[t] = op

    g = Graph()
    added = set()
    for entry in sorted(manifest["tensors"], key=lambda e: e["id"]):
        tid = entry["id"]
        if tid in g.infos:
            continue   # created as an op output below
        role = entry["role"]
        shape = None if entry["shape"] is None else tuple(entry["shape"])
        if role == "placeholder":
            new = g.placeholder(shape, entry["name"])
        elif role == "constant":
            new = g.constant(values[tid], entry["name"])
        elif role == "variable":
            new = g.variable(entry["name"], values[tid])
        elif role == "op_output":
            op = op_of_output.get(tid)
            if op is None:
                raise CheckpointError(f"tensor {tid} has role op_output but no producing op")
            outs = g.add_op(OpKind(op["kind"]), op["inputs"],
                            {k: tuple(v) if isinstance(v, list) else v
                             for k, v in op["attrs"].items()},
                            n_outputs=len(op["outputs"]))
            if outs != op["outputs"]:
                raise CheckpointError(
                    f"op {op['kind']} output ids {outs} != manifest {op['outputs']}")
            added.add(id(op))
            continue
        else:
            raise CheckpointError(f"tensor {tid}: unknown role {role!r}")
        if new != tid:
            raise CheckpointError(f"tensor id {tid} reconstructed as {new}; manifest not dense")
    for op in manifest["ops"]:
        if id(op) not in added:
            raise CheckpointError(f"op {op['kind']} outputs {op['outputs']} never reconstructed")
    weights = {name: values[tid] for name, tid in manifest["variables"].items()}
    return g, weights, manifest


def save_model(model, path):
    """Checkpoint a model bundle: the ancestor slice of its logits."""
    meta = {"classes": int(model.classes),
            "input_shape": [int(s) for s in model.input_shape],
            "name": model.name}
    return save_checkpoint(model.graph, None, path, outputs=[model.logits],
                           meta=meta,
                           meta_tensors={"x": model.x, "logits": model.logits})


def load_model(path):
    """Rebuild a model bundle saved with save_model."""
    from .architectures import Model
    g, _, manifest = _load_checkpoint_full(path)
    mt, meta = manifest.get("meta_tensors", {}), manifest.get("meta", {})
    for key in ("x", "logits"):
        if key not in mt:
            raise CheckpointError(f"manifest lacks meta tensor {key!r}; not a model checkpoint")
    return Model(graph=g, x=mt["x"], logits=mt["logits"],
                 classes=int(meta.get("classes", 0)),
                 input_shape=tuple(meta.get("input_shape", ())),
                 name=meta.get("name", ""))
