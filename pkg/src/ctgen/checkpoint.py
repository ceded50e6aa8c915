"""Checkpoint directory format.

A checkpoint is a directory holding ``manifest.json`` plus ``params.bin``.
The manifest lists the config echo, step counter, PRNG state, optimizer
metadata, the in-progress epoch order/position, and one entry per stored
array (name, kind, shape, byte offset/length). The blob is every array's
float64 little-endian bytes concatenated in manifest order, so identical
training states serialize to identical bytes. Writes go to a temp
directory that is renamed into place.
"""

import json
import os
import shutil

import numpy as np

from ctgen.errors import DimensionError, FormatError

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "params.bin"
FORMAT_TAG = "ctgen-checkpoint-v1"


def _array_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(path, state):
    """Serialize a TrainState into directory ``path`` (atomic replace)."""
    entries = []
    blob = bytearray()

    def put(name, kind, arr, **extra):
        data = _array_bytes(arr)
        entries.append({
            "name": name, "kind": kind, "shape": list(np.shape(arr)),
            "offset": len(blob), "length": len(data), **extra,
        })
        blob.extend(data)

    for net in (state.disc, state.gen):
        for p in net.params.values():
            put(p.name, "param", p.value, role=p.role)
    for net in (state.disc, state.gen):
        for layer, bn in net.bn_states.items():
            put(f"{net.name}/{layer}/running_mean", "buffer", bn.running_mean)
            put(f"{net.name}/{layer}/running_var", "buffer", bn.running_var)
    for tag, opt in (("opt_d", state.d_opt), ("opt_g", state.g_opt)):
        for name, slot, arr in opt.state_entries():
            put(name, tag, arr, slot=slot)

    manifest = {
        "format": FORMAT_TAG,
        "step": state.step,
        "config": state.cfg.to_dict(),
        "prng": state.rng.bit_generator.state,
        "optimizers": {
            "d": {"kind": state.d_opt.kind, "t": state.d_opt.t},
            "g": {"kind": state.g_opt.kind, "t": state.g_opt.t},
        },
        "data_order": [int(i) for i in state.order],
        "data_pos": int(state.pos),
        "entries": entries,
    }

    tmp = f"{path}.tmp-{os.getpid()}"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    with open(os.path.join(tmp, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    with open(os.path.join(tmp, BLOB_NAME), "wb") as fh:
        fh.write(bytes(blob))
    if os.path.exists(path):
        shutil.rmtree(path)
    os.rename(tmp, path)


def read_manifest(path):
    manifest_path = os.path.join(path, MANIFEST_NAME)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT_TAG:
        raise FormatError(f"{manifest_path}: unrecognized checkpoint format")
    return manifest


def load_arrays(path, manifest):
    """Decode every manifest entry from the blob; returns the entry list with
    an ``array`` field attached."""
    with open(os.path.join(path, BLOB_NAME), "rb") as fh:
        blob = fh.read()
    out = []
    for e in manifest["entries"]:
        raw = blob[e["offset"]:e["offset"] + e["length"]]
        if len(raw) != e["length"]:
            raise FormatError(f"checkpoint blob truncated at entry {e['name']}")
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(e["shape"])
        out.append({**e, "array": arr})
    return out


def restore_into(state, path):
    """Load checkpoint ``path`` into a freshly built TrainState in place."""
    manifest = read_manifest(path)
    arrays = load_arrays(path, manifest)

    params = {**state.disc.params, **state.gen.params}
    buffers = {}
    for net in (state.disc, state.gen):
        for layer, bn in net.bn_states.items():
            buffers[f"{net.name}/{layer}/running_mean"] = (bn, "running_mean")
            buffers[f"{net.name}/{layer}/running_var"] = (bn, "running_var")

    opt_entries = {"opt_d": [], "opt_g": []}
    for e in arrays:
        if e["kind"] == "param":
            p = params.get(e["name"])
            if p is None:
                raise DimensionError(f"checkpoint parameter {e['name']} not in model")
            if tuple(p.value.shape) != tuple(e["array"].shape):
                raise DimensionError(
                    f"checkpoint parameter {e['name']} has shape {e['array'].shape}, "
                    f"model expects {tuple(p.value.shape)}"
                )
            p.value = e["array"]
        elif e["kind"] == "buffer":
            bn, attr = buffers[e["name"]]
            setattr(bn, attr, e["array"])
        elif e["kind"] in opt_entries:
            opt_entries[e["kind"]].append((e["name"], e["slot"], e["array"]))
        else:
            raise FormatError(f"unknown checkpoint entry kind {e['kind']!r}")

    state.d_opt.load_state(opt_entries["opt_d"], manifest["optimizers"]["d"]["t"])
    state.g_opt.load_state(opt_entries["opt_g"], manifest["optimizers"]["g"]["t"])
    state.rng.bit_generator.state = manifest["prng"]
    state.step = manifest["step"]
    state.order = np.asarray(manifest["data_order"], dtype=np.int64)
    state.pos = manifest["data_pos"]
    return manifest
