"""Single-file parameter container.

Text header, one item per line, ending with ``END``::

    CONDA-CKPT-1
    dtype float32
    input_size 64
    step 300
    config_hash 1a2b...
    config {...json...}
    entries 3
    entry <name> <d0,d1,...> <byte offset> <byte length>
    END

The raw little-endian row-major payloads follow the header; offsets count
from the first byte after ``END\\n``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .params import Params
from .pipeline import CondaModel, init_params
from .tensor import ShapeError, Tensor

MAGIC = "CONDA-CKPT-1"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    params: Params
    input_size: int
    step: int = 0

    def model(self) -> CondaModel:
        return CondaModel(self.config, self.input_size, params=self.params)


def save_checkpoint(path: str | Path, model: CondaModel, step: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dtypes = {p.dtype for p in model.params.values()}
    if len(dtypes) != 1:
        raise CheckpointError(f"mixed parameter dtypes {dtypes}")
    dtype = np.dtype(dtypes.pop()).newbyteorder("<")
    lines = [MAGIC, f"dtype {dtype.name}", f"input_size {model.input_size}", f"step {step}",
             f"config_hash {model.cfg.hash()}", f"config {model.cfg.to_json()}",
             f"entries {len(model.params)}"]
    payloads, offset = [], 0
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name].data, dtype=dtype)
        shape = ",".join(str(d) for d in arr.shape) or "-"
        lines.append(f"entry {name} {shape} {offset} {arr.nbytes}")
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    lines.append("END")
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode())
        for chunk in payloads:
            fh.write(chunk)
    tmp.replace(path)
    return path


def _parse_header(raw: bytes) -> tuple[dict, list[tuple[str, tuple[int, ...], int, int]], int]:
    marker = b"\nEND\n"
    end = raw.find(marker)
    if not raw.startswith(MAGIC.encode() + b"\n") or end < 0:
        raise CheckpointError("not a CONDA-CKPT-1 file")
    meta: dict[str, str] = {}
    entries = []
    for line in raw[:end].decode().split("\n")[1:]:
        key, _, rest = line.partition(" ")
        if key == "entry":
            name, shape, off, nbytes = rest.split(" ")
            dims = () if shape == "-" else tuple(int(d) for d in shape.split(","))
            entries.append((name, dims, int(off), int(nbytes)))
        else:
            meta[key] = rest
    if int(meta.get("entries", -1)) != len(entries):
        raise CheckpointError("entry count does not match header")
    return meta, entries, end + len(marker)


def load_checkpoint(path: str | Path, config: RunConfig | None = None) -> Checkpoint:
    """Read a checkpoint and validate every tensor against the config's parameter shapes.

    ``config`` defaults to the embedded one; passing a different config whose
    model sections disagree with the stored tensors raises ``ShapeError``.
    """
    raw = Path(path).read_bytes()
    meta, entries, start = _parse_header(raw)
    stored_cfg = RunConfig.from_dict(json.loads(meta["config"]))
    if stored_cfg.hash() != meta.get("config_hash"):
        raise CheckpointError("embedded config does not match its recorded hash")
    cfg = config or stored_cfg
    dtype = np.dtype(meta["dtype"]).newbyteorder("<")
    input_size = int(meta["input_size"])
    expected = init_params(cfg, input_size, 0, np.float64)
    params: Params = {}
    for name, dims, off, nbytes in entries:
        if name not in expected:
            raise ShapeError(f"checkpoint tensor {name!r} is not part of this model config")
        if expected[name].shape != dims:
            raise ShapeError(f"{name}: checkpoint shape {dims} != config shape {expected[name].shape}")
        if start + off + nbytes > len(raw) or nbytes != int(np.prod(dims, dtype=np.int64)) * dtype.itemsize:
            raise CheckpointError(f"{name}: truncated or inconsistent payload")
        arr = np.frombuffer(raw, dtype=dtype, count=nbytes // dtype.itemsize, offset=start + off)
        params[name] = Tensor(arr.reshape(dims).astype(dtype.newbyteorder("="), copy=True),
                              requires_grad=True)
    missing = set(expected) - set(params)
    if missing:
        raise ShapeError(f"checkpoint lacks tensors {sorted(missing)}")
    return Checkpoint(cfg, params, input_size, int(meta.get("step", 0)))
