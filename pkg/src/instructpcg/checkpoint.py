"""Binary checkpoints for one or more dense networks.

Layout (all integers little-endian)::

    b"IPCGCKPT"            magic
    u32                    format version
    u16 + utf-8            model kind tag ("encoder", "policy", ...)
    u32 + utf-8 JSON       header: per-net name, layer sizes, activations; free-form metadata
    float64 LE payload     for each net in header order: W0, b0, W1, b1, ... (row-major),
                           then each extra named array listed in the header
    32 bytes               SHA-256 of everything above
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .neural import DenseNet

MAGIC = b"IPCGCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(kind: str, nets: dict, meta: dict | None = None, arrays: dict | None = None) -> bytes:
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in (arrays or {}).items()}
    header = {
        "nets": [{"name": name, "sizes": list(net.sizes), "hidden": net.hidden, "output": net.output}
                 for name, net in nets.items()],
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    kbytes = kind.encode()
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<H", len(kbytes)), kbytes,
             struct.pack("<I", len(hbytes)), hbytes]
    for net in nets.values():
        for p in net.params:
            parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    for v in arrays.values():
        parts.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def loads(data: bytes):
    """Parse checkpoint bytes; returns (kind, {name: DenseNet}, meta, {name: array})."""
    if len(data) < len(MAGIC) + 32 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (klen,) = struct.unpack_from("<H", body, off)
    off += 2
    kind = body[off:off + klen].decode()
    off += klen
    (hlen,) = struct.unpack_from("<I", body, off)
    off += 4
    header = json.loads(body[off:off + hlen])
    off += hlen

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        if off + 8 * count > len(body):
            raise CheckpointError("truncated checkpoint payload")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
        off += 8 * count
        return arr

    nets = {}
    for spec in header["nets"]:
        sizes = spec["sizes"]
        params = []
        for n_in, n_out in zip(sizes, sizes[1:]):
            params += [take((n_in, n_out)), take((n_out,))]
        nets[spec["name"]] = DenseNet(tuple(sizes), params, spec["hidden"], spec["output"])
    arrays = {spec["name"]: take(tuple(spec["shape"])) for spec in header.get("arrays", [])}
    if off != len(body):
        raise CheckpointError("trailing bytes in checkpoint payload")
    return kind, nets, header["meta"], arrays


def save(path, kind: str, nets: dict, meta: dict | None = None, arrays: dict | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps(kind, nets, meta, arrays))


def load(path):
    return loads(Path(path).read_bytes())


def to_jsonable(obj):
    """Dataclass/enum/tuple tree -> JSON-compatible structure."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if hasattr(obj, "value") and hasattr(obj, "name"):
        return obj.value
    return obj


# --- model-level helpers -----------------------------------------------------

def save_encoder(path, model, extra: dict | None = None) -> None:
    meta = {"config": to_jsonable(model.config), **(extra or {})}
    save(path, "encoder", {"E": model.E, "C": model.C, "D": model.D}, meta)


def load_encoder(path):
    from .encoder import EncoderConfig, EncoderModel
    kind, nets, meta, _ = load(path)
    if kind != "encoder":
        raise CheckpointError(f"{path}: expected an encoder checkpoint, got {kind!r}")
    cfg = meta["config"]
    for k in ("e_hidden", "c_hidden", "d_hidden"):
        cfg[k] = tuple(cfg[k])
    return EncoderModel(nets["E"], nets["C"], nets["D"], EncoderConfig(**cfg)), meta


def save_policy(path, policy, extra: dict | None = None) -> None:
    meta = {"env": to_jsonable(policy.env), "ppo": to_jsonable(policy.ppo), **(extra or {})}
    arrays = {}
    if policy.obs_norm is not None:
        norm = policy.obs_norm
        arrays = {"obs_mean": norm.mean, "obs_var": norm.var, "obs_count": np.array([norm.count])}
    save(path, "policy", {"actor": policy.actor, "critic": policy.critic}, meta, arrays)


def load_policy(path):
    from .env_rl import EnvConfig, ObsNormalizer, PolicyBundle, PPOConfig, RewardWeights
    kind, nets, meta, arrays = load(path)
    if kind != "policy":
        raise CheckpointError(f"{path}: expected a policy checkpoint, got {kind!r}")
    env = dict(meta["env"])
    env["probs"] = tuple(env["probs"])
    env["weights"] = RewardWeights(**env["weights"])
    ppo = dict(meta["ppo"])
    ppo["hidden"] = tuple(ppo["hidden"])
    norm = None
    if "obs_mean" in arrays:
        norm = ObsNormalizer(len(arrays["obs_mean"]), arrays["obs_mean"], arrays["obs_var"], arrays["obs_count"][0])
    return PolicyBundle(nets["actor"], nets["critic"], PPOConfig(**ppo), EnvConfig(**env), obs_norm=norm), meta
