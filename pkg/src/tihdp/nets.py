"""Actor and critic networks, action distributions, and checkpoint files.

All four networks are plain tanh MLPs; the allocation actor additionally runs
an LSTM cell after its last hidden layer. Parameters are float32 torch
tensors and every initialization is driven by an explicit seed.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .obs import LOW_OBS_DIM, LayoutMismatch

VARIANTS = ("tihdp-with-com", "tihdp-without-com", "two-layered-global", "two-layered-local")

CHECKPOINT_MAGIC = b"TIHDPCKPT\x01"


@dataclass(frozen=True)
class NetLayout:
    """Everything needed to rebuild the networks of one variant."""

    variant: str
    obs_tag: str
    hi_obs_dim: int
    global_dim: int
    n_robots: int
    n_objects: int
    K: int
    hidden: tuple = (256, 128, 64)
    low_obs_dim: int = LOW_OBS_DIM

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def rnn_width(self) -> int:
        return self.hidden[-1]

    @property
    def hi_kind(self) -> str:
        return "bernoulli" if self.variant.startswith("tihdp") else "categorical"

    @property
    def hi_outputs(self) -> int:
        if self.variant == "tihdp-with-com":
            return self.K + 2
        if self.variant == "tihdp-without-com":
            return self.K
        if self.variant == "two-layered-global":
            return self.n_objects
        return self.K

    @property
    def lo_critic_dim(self) -> int:
        return self.global_dim + self.n_robots + self.n_objects

    @property
    def local_actors(self) -> bool:
        return self.variant != "two-layered-global"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetLayout":
        return cls(**{**d, "hidden": tuple(d["hidden"])})


def mlp(in_dim: int, hidden: Sequence[int]) -> nn.Sequential:
    layers, prev = [], in_dim
    for h in hidden:
        layers += [nn.Linear(prev, h), nn.Tanh()]
        prev = h
    return nn.Sequential(*layers)


def _check_dim(x: torch.Tensor, dim: int, what: str) -> None:
    if x.shape[-1] != dim:
        raise LayoutMismatch(f"{what} has dimension {x.shape[-1]}, network expects {dim}")


class HiActor(nn.Module):
    def __init__(self, layout: NetLayout):
        super().__init__()
        self.in_dim = layout.hi_obs_dim
        self.body = mlp(layout.hi_obs_dim, layout.hidden)
        self.rnn = nn.LSTMCell(layout.hidden[-1], layout.rnn_width)
        self.head = nn.Linear(layout.rnn_width, layout.hi_outputs)

    def forward(self, obs: torch.Tensor, state):
        _check_dim(obs, self.in_dim, "high-level observation")
        h, c = self.rnn(self.body(obs), state)
        return self.head(h), (h, c)

    def forward_sequence(self, obs: torch.Tensor, state, starts: torch.Tensor):
        """Unroll over a (T, B, D) chunk, zeroing the state where ``starts`` is set."""
        h, c = state
        logits = []
        feats = self.body(obs)
        for t in range(obs.shape[0]):
            keep = (1.0 - starts[t].to(feats.dtype)).unsqueeze(-1)
            h, c = self.rnn(feats[t], (h * keep, c * keep))
            logits.append(self.head(h))
        return torch.stack(logits), (h, c)


class LoActor(nn.Module):
    def __init__(self, layout: NetLayout):
        super().__init__()
        self.in_dim = layout.low_obs_dim
        self.body = mlp(layout.low_obs_dim, layout.hidden)
        self.move = nn.Linear(layout.hidden[-1], 3)
        self.turn = nn.Linear(layout.hidden[-1], 3)

    def forward(self, obs: torch.Tensor):
        _check_dim(obs, self.in_dim, "low-level observation")
        z = self.body(obs)
        return torch.stack([self.move(z), self.turn(z)], dim=-2)


class Critic(nn.Module):
    def __init__(self, in_dim: int, hidden: Sequence[int]):
        super().__init__()
        self.in_dim = in_dim
        self.body = mlp(in_dim, hidden)
        self.head = nn.Linear(hidden[-1], 1)

    def forward(self, x: torch.Tensor):
        _check_dim(x, self.in_dim, "critic input")
        return self.head(self.body(x)).squeeze(-1)


class PolicyNets(nn.Module):
    """Shared actors and centralized critics for one variant."""

    def __init__(self, layout: NetLayout):
        super().__init__()
        self.layout = layout
        self.hi_actor = HiActor(layout)
        self.lo_actor = LoActor(layout)
        self.hi_critic = Critic(layout.global_dim, layout.hidden)
        self.lo_critic = Critic(layout.lo_critic_dim, layout.hidden)

    def zero_state(self, batch: int):
        w = self.layout.rnn_width
        z = torch.zeros(batch, w, dtype=self.hi_actor.head.weight.dtype)
        return z, z.clone()

    def actor_parameters(self):
        return list(self.hi_actor.parameters()) + list(self.lo_actor.parameters())


def init_params(layout: NetLayout, seed: int, head_gain: float = 0.01) -> PolicyNets:
    """Orthogonal weights (gain sqrt(2) hidden, ``head_gain`` for actor heads), zero biases."""
    nets = PolicyNets(layout)
    gen = torch.Generator().manual_seed(int(seed))
    heads = {"hi_actor.head.weight", "lo_actor.move.weight", "lo_actor.turn.weight"}
    with torch.no_grad():
        for name, p in nets.named_parameters():
            if "bias" in name.rsplit(".", 1)[-1]:
                p.zero_()
            elif name in heads:
                if head_gain == 0.0:
                    p.zero_()
                else:
                    nn.init.orthogonal_(p, gain=head_gain, generator=gen)
            elif name.endswith("head.weight"):
                nn.init.orthogonal_(p, gain=1.0, generator=gen)
            elif name.startswith("hi_actor.rnn.weight"):
                for block in p.view(4, layout.rnn_width, -1):
                    nn.init.orthogonal_(block, gain=1.0, generator=gen)
            else:
                nn.init.orthogonal_(p, gain=math.sqrt(2.0), generator=gen)
    return nets


# -- distributions -----------------------------------------------------------


@dataclass
class ActionDistribution:
    """Factorized distribution over one robot's (batched) action.

    ``kind`` is ``bernoulli`` (independent binary outputs), ``pair`` (two
    3-way categoricals for move/turn), or ``categorical`` (one choice among
    ``logits.shape[-1]`` options, optionally masked).
    """

    kind: str
    logits: torch.Tensor
    mask: Optional[torch.Tensor] = None

    def __post_init__(self):
        if self.kind == "categorical" and self.mask is not None:
            self.logits = self.logits.masked_fill(~self.mask, -1e9)

    @property
    def probs(self) -> torch.Tensor:
        if self.kind == "bernoulli":
            return torch.sigmoid(self.logits)
        return torch.softmax(self.logits, dim=-1)

    def log_prob(self, action: torch.Tensor) -> torch.Tensor:
        action = torch.as_tensor(action)
        if self.kind == "bernoulli":
            if not torch.all((action == 0) | (action == 1)):
                raise ValueError("Bernoulli actions must be 0 or 1")
            a = action.to(self.logits.dtype)
            lp = a * nn.functional.logsigmoid(self.logits) + (1 - a) * nn.functional.logsigmoid(-self.logits)
            return lp.sum(-1)
        n = self.logits.shape[-1]
        a = action.long()
        if torch.any((a < 0) | (a >= n)):
            raise ValueError(f"categorical action outside [0, {n})")
        logp = torch.log_softmax(self.logits, dim=-1)
        if self.kind == "categorical" and self.mask is not None:
            if not torch.all(torch.gather(self.mask, -1, a.unsqueeze(-1))):
                raise ValueError("categorical action selects a masked option")
        lp = torch.gather(logp, -1, a.unsqueeze(-1)).squeeze(-1)
        return lp.sum(-1) if self.kind == "pair" else lp

    def entropy(self) -> torch.Tensor:
        if self.kind == "bernoulli":
            p = torch.sigmoid(self.logits)
            ent = -(p * nn.functional.logsigmoid(self.logits) + (1 - p) * nn.functional.logsigmoid(-self.logits))
            return ent.sum(-1)
        logp = torch.log_softmax(self.logits, dim=-1)
        ent = -(logp.exp() * logp)
        if self.mask is not None:
            ent = ent * self.mask
        ent = ent.sum(-1)
        return ent.sum(-1) if self.kind == "pair" else ent

    def sample(self, generator: torch.Generator) -> torch.Tensor:
        probs = self.probs.detach()
        u = torch.rand(probs.shape[:-1] + ((probs.shape[-1],) if self.kind == "bernoulli" else (1,)),
                       generator=generator, dtype=probs.dtype)
        if self.kind == "bernoulli":
            return (u < probs).long()
        cdf = torch.cumsum(probs, dim=-1)
        idx = (u > cdf).sum(-1)
        return idx.clamp(max=probs.shape[-1] - 1)

    def mode(self) -> torch.Tensor:
        if self.kind == "bernoulli":
            return (self.logits > 0).long()
        return torch.argmax(self.logits, dim=-1)


def logprob_entropy(dist: ActionDistribution, action):
    return dist.log_prob(action), dist.entropy()


def hi_actor_forward(nets: PolicyNets, obs, state, mask=None):
    obs = torch.as_tensor(obs, dtype=nets.hi_actor.head.weight.dtype)
    logits, new_state = nets.hi_actor(obs, state)
    return ActionDistribution(nets.layout.hi_kind, logits, mask), new_state


def lo_actor_forward(nets: PolicyNets, obs) -> ActionDistribution:
    obs = torch.as_tensor(obs, dtype=nets.lo_actor.move.weight.dtype)
    return ActionDistribution("pair", nets.lo_actor(obs))


def critic_forward(nets: PolicyNets, gstate, extra=None) -> torch.Tensor:
    """Hi-critic value of ``gstate``, or lo-critic value when ``extra`` is given.

    ``extra`` is the robot one-hot followed by the target one-hot.
    """
    dtype = nets.hi_critic.head.weight.dtype
    x = torch.as_tensor(gstate, dtype=dtype)
    if extra is None:
        return nets.hi_critic(x)
    return nets.lo_critic(torch.cat([x, torch.as_tensor(extra, dtype=dtype)], dim=-1))


def lo_critic_extra(robot: int, target: Optional[int], n_robots: int, n_objects: int) -> np.ndarray:
    out = np.zeros(n_robots + n_objects)
    out[robot] = 1.0
    if target is not None:
        out[n_robots + target] = 1.0
    return out


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(path, nets: PolicyNets, meta: Optional[dict] = None, extra_tensors: Optional[dict] = None) -> None:
    """Write a manifest followed by named little-endian float32 tensors."""
    tensors = {f"params/{k}": v for k, v in nets.state_dict().items()}
    tensors.update({k: v for k, v in (extra_tensors or {}).items()})
    entries, blobs, offset = [], [], 0
    for name in tensors:
        arr = tensors[name].detach().cpu().numpy().astype("<f4", copy=False)
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format": "tihdp-checkpoint/1",
        "layout": nets.layout.to_dict(),
        "tensors": entries,
        "meta": meta or {},
    }
    header = json.dumps(manifest, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)


def read_checkpoint(path):
    """Return ``(manifest, {name: float32 tensor})``."""
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path} is not a checkpoint file")
    pos = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    manifest = json.loads(data[pos:pos + hlen])
    base = pos + hlen
    tensors = {}
    for e in manifest["tensors"]:
        buf = data[base + e["offset"]: base + e["offset"] + e["nbytes"]]
        arr = np.frombuffer(buf, dtype="<f4").reshape(e["shape"]).copy()
        tensors[e["name"]] = torch.from_numpy(arr)
    return manifest, tensors


def load_checkpoint(path):
    """Rebuild the networks stored in ``path``; returns ``(nets, manifest, tensors)``."""
    manifest, tensors = read_checkpoint(path)
    layout = NetLayout.from_dict(manifest["layout"])
    nets = PolicyNets(layout)
    params = {k[len("params/"):]: v for k, v in tensors.items() if k.startswith("params/")}
    nets.load_state_dict(params)
    return nets, manifest, tensors
