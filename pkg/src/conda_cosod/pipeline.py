"""Progressive association generation, decoder fusion and the full model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .aggregation import AssociationFeature, aggregate, init_aggregation
from .cac import CorrespondenceField, cac_pass, init_offset_head, stage_k
from .config import RunConfig
from .encoder import PAG_STAGES, FeaturePyramid, encode, init_encoder, stage_size
from .hyperassociation import compute_hac
from .params import Params, conv_params
from .tensor import ShapeError, Tensor


@dataclass
class SaliencyPrediction:
    logits: Tensor  # [N,H,W,1]
    prob: Tensor
    features: dict[int, AssociationFeature] = field(default_factory=dict)
    fields: dict[int, CorrespondenceField] = field(default_factory=dict)


def enhance_features(layers: list[Tensor], assoc_feature: Tensor, params: Params,
                     stage: int) -> list[Tensor]:
    """Upsample the coarser association feature, add it to every layer, then conv."""
    h, w = layers[0].shape[1:3]
    fa = assoc_feature
    proj = f"enh.s{stage}.proj"
    if f"{proj}.w" in params:
        fa = ops.conv2d(fa, params[f"{proj}.w"], params[f"{proj}.b"])
    if fa.shape[-1] != layers[0].shape[-1]:
        raise ShapeError(f"association channels {fa.shape[-1]} != feature channels {layers[0].shape[-1]}")
    up = ops.bilinear_resize(fa, h, w)
    return [
        ops.conv2d(ops.add(f, up), params[f"enh.s{stage}.l{l}.w"], params[f"enh.s{stage}.l{l}.b"])
        for l, f in enumerate(layers, 1)
    ]


def run_pag(pyr: FeaturePyramid, cfg: RunConfig, params: Params
            ) -> tuple[dict[int, AssociationFeature], dict[int, CorrespondenceField]]:
    """Stage 5 -> 3: hyperassociation, (condensation,) aggregation, enhancement of the next stage."""
    pc = cfg.pipeline
    feats: dict[int, AssociationFeature] = {}
    fields: dict[int, CorrespondenceField] = {}
    for s in sorted(PAG_STAGES, reverse=True):
        layers = pyr.pag[s]
        if s < max(PAG_STAGES) and pc.variant == "pag":
            layers = enhance_features(layers, feats[s + 1].pooled, params, s)
        assoc = compute_hac(layers, s, pc.zero_self_pairs)
        if pc.mode == "full":
            feats[s] = aggregate(assoc.values, cfg.aggregation, params, f"agg.s{s}", condensed=False)
        else:
            k = stage_k(pc.k, *assoc.target_size)
            _, feats[s], fields[s] = cac_pass(
                assoc, cfg.aggregation, params, s, k, pc.mode, pc.share_agg_passes, pc.offset_bound
            )
    return feats, fields


def fuse_and_decode(pyr: FeaturePyramid, feats: dict[int, AssociationFeature], params: Params,
                    out_size: tuple[int, int]) -> tuple[Tensor, Tensor]:
    """Add conv(F_s^A) to decoder features of stages 3-5, then a top-down FPN decode."""
    dec = dict(pyr.dec)
    for s, feat in feats.items():
        dec[s] = ops.add(dec[s], ops.conv2d(feat.pooled, params[f"phi.s{s}.w"], params[f"phi.s{s}.b"]))
    p = None
    for s in range(5, 0, -1):
        x = ops.conv2d(dec[s], params[f"fpn.lat.s{s}.w"], params[f"fpn.lat.s{s}.b"])
        if p is not None:
            x = ops.add(x, ops.bilinear_resize(p, x.shape[1], x.shape[2]))
        p = ops.relu(ops.conv2d(x, params[f"fpn.smooth.s{s}.w"], params[f"fpn.smooth.s{s}.b"]))
    logits = ops.conv2d(p, params["head.w"], params["head.b"])
    if logits.shape[1:3] != tuple(out_size):
        logits = ops.bilinear_resize(logits, *out_size)
    return logits, ops.sigmoid(logits)


def init_params(cfg: RunConfig, input_size: int, seed: int = 0, dtype=np.float64) -> Params:
    rng = np.random.default_rng(seed)
    ec, pc = cfg.encoder, cfg.pipeline
    params = init_encoder(ec, rng, dtype)
    ch = dict(zip(range(1, 6), ec.channels))
    nl = dict(zip(range(1, 6), ec.layers))
    if pc.mode != "off":
        for s in PAG_STAGES:
            hs = stage_size(input_size, s)
            condensed = pc.mode in ("sac", "cac")
            k = stage_k(pc.k, hs, hs)
            target = (k, k) if condensed else (hs, hs)
            params.update(init_aggregation(f"agg.s{s}", cfg.aggregation, target, nl[s], ch[s],
                                           condensed, rng, dtype))
            if pc.mode == "cac":
                params.update(init_offset_head(f"off.s{s}", ch[s], k, dtype))
                if not pc.share_agg_passes:
                    params.update(init_aggregation(f"agg2.s{s}", cfg.aggregation, target, nl[s],
                                                   ch[s], True, rng, dtype))
            conv_params(params, f"phi.s{s}", rng, 3, 3, ch[s], ch[s], dtype)
        if pc.variant == "pag":
            for s in PAG_STAGES[:-1]:
                if ch[s + 1] != ch[s]:
                    conv_params(params, f"enh.s{s}.proj", rng, 1, 1, ch[s + 1], ch[s], dtype)
                for l in range(1, nl[s] + 1):
                    conv_params(params, f"enh.s{s}.l{l}", rng, 3, 3, ch[s], ch[s], dtype)
    d = pc.decoder_channels
    for s in range(1, 6):
        conv_params(params, f"fpn.lat.s{s}", rng, 1, 1, ch[s], d, dtype)
        conv_params(params, f"fpn.smooth.s{s}", rng, 3, 3, d, d, dtype)
    conv_params(params, "head", rng, 1, 1, d, 1, dtype)
    return params


class CondaModel:
    """Parameters plus the configuration that fixes their shapes."""

    def __init__(self, cfg: RunConfig, input_size: int | None = None, params: Params | None = None,
                 seed: int | None = None, dtype=None):
        self.cfg = cfg
        self.input_size = int(input_size or cfg.data.size)
        dtype = np.dtype(dtype or cfg.train.dtype)
        if params is None:
            params = init_params(cfg, self.input_size, cfg.train.seed if seed is None else seed, dtype)
        self.params = params

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def __call__(self, images: Tensor | np.ndarray) -> SaliencyPrediction:
        return self.forward(images)

    def forward(self, images: Tensor | np.ndarray) -> SaliencyPrediction:
        if not isinstance(images, Tensor):
            images = Tensor(np.asarray(images, dtype=self.dtype))
        elif images.dtype != self.dtype:
            images = Tensor(images.data.astype(self.dtype))
        pyr = encode(images, self.cfg.encoder, self.params)
        feats, fields = ({}, {}) if self.cfg.pipeline.mode == "off" else run_pag(pyr, self.cfg, self.params)
        logits, prob = fuse_and_decode(pyr, feats, self.params, images.shape[1:3])
        return SaliencyPrediction(logits, prob, feats, fields)
