"""Closed-form multiply-accumulate counts for one forward pass over a group.

Conventions (shared with the tracing counter in ``tensor.count_macs``):
a conv contributes ``out_pixels * kh * kw * cin * cout``, a matmul/linear
``rows * inner * cols``, and bilinear resampling four MACs per output element
(identity resizes are free).  Normalisation, activations and data movement
are not counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .aggregation import plan
from .cac import stage_k
from .config import RunConfig
from .encoder import PAG_STAGES, stage_size

MODULES = ("encoder", "hac", "condensation", "aggregation", "enhancement", "decoder")


@dataclass
class MacReport:
    mode: str
    n: int
    size: int
    k: int
    modules: dict[str, int] = field(default_factory=dict)
    per_stage: dict[int, dict[str, int]] = field(default_factory=dict)
    hac_bytes: dict[int, int] = field(default_factory=dict)  # float64 storage per stage

    @property
    def total(self) -> int:
        return sum(self.modules.values())

    @property
    def association(self) -> int:
        """Aggregation plus condensation overhead (gathers and the offset head)."""
        return self.modules.get("aggregation", 0) + self.modules.get("condensation", 0)


def hac_bytes(n: int, hs: int, ws: int, layers: int, itemsize: int = 8) -> int:
    """Memory of one full-pixel hyperassociation ``[N,H,W,N,H,W,L]``."""
    return n * n * hs * hs * ws * ws * layers * itemsize


def _conv(pixels: int, k: int, cin: int, cout: int) -> int:
    return pixels * k * k * cin * cout


def _resize(lead: int, out_h: int, out_w: int, c: int, in_h: int, in_w: int) -> int:
    return 0 if (in_h, in_w) == (out_h, out_w) else 4 * lead * out_h * out_w * c


def aggregation_macs(cfg: RunConfig, n: int, hs: int, target: int, in_ch: int, out_ch: int,
                     condensed: bool) -> int:
    """One aggregation pass over ``[n, hs, hs, n, target, target, in_ch]``."""
    slices = n * hs * hs * n
    total = 0
    for lp in plan(cfg.aggregation, (target, target), in_ch, out_ch, condensed):
        if lp.target_padding == "valid":
            t_out = (lp.in_size[0] - lp.target_kernel + 1, lp.in_size[1] - lp.target_kernel + 1)
        else:
            t_out = lp.in_size
        total += _conv(slices * t_out[0] * t_out[1], lp.target_kernel, lp.cin, lp.cout)
        if lp.target_padding == "same" and lp.out_size != lp.in_size:
            total += _resize(slices, *lp.out_size, lp.cout, *lp.in_size)
        total += _conv(n * n * lp.out_size[0] * lp.out_size[1] * hs * hs, 3, lp.cout, lp.cout)
    return total


def count(cfg: RunConfig, n: int | None = None, size: int | None = None,
          mode: str | None = None, k: int | None = None) -> MacReport:
    """MACs of ``CondaModel.forward`` on ``n`` images of ``size x size``; no execution."""
    n = cfg.data.n if n is None else n
    size = cfg.data.size if size is None else size
    mode = cfg.pipeline.mode if mode is None else mode
    k = cfg.pipeline.k if k is None else k
    ec, pc = cfg.encoder, cfg.pipeline
    ch = dict(zip(range(1, 6), ec.channels))
    nl = dict(zip(range(1, 6), ec.layers))
    mods = dict.fromkeys(MODULES, 0)
    per_stage: dict[int, dict[str, int]] = {}
    hac_mem: dict[int, int] = {}

    cin = 3
    for s in range(1, 6):
        hs = stage_size(size, s)
        for _ in range(nl[s]):
            mods["encoder"] += _conv(n * hs * hs, 3, cin, ch[s])
            cin = ch[s]

    if mode != "off":
        for s in sorted(PAG_STAGES, reverse=True):
            hs, c, layers = stage_size(size, s), ch[s], nl[s]
            st = dict.fromkeys(("hac", "condensation", "aggregation", "enhancement"), 0)
            if s < max(PAG_STAGES) and pc.variant == "pag":
                prev = s + 1
                if ch[prev] != c:
                    st["enhancement"] += _conv(n * stage_size(size, prev) ** 2, 1, ch[prev], c)
                st["enhancement"] += _resize(n, hs, hs, c, stage_size(size, prev), stage_size(size, prev))
                st["enhancement"] += layers * _conv(n * hs * hs, 3, c, c)
            st["hac"] = layers * (n * hs * hs) ** 2 * c
            hac_mem[s] = hac_bytes(n, hs, hs, layers)
            if mode == "full":
                st["aggregation"] = aggregation_macs(cfg, n, hs, hs, layers, c, condensed=False)
            else:
                ks = stage_k(k, hs, hs)
                one_pass = aggregation_macs(cfg, n, hs, ks, layers, c, condensed=True)
                gather = 4 * n * hs * hs * n * ks * ks * layers
                passes = 2 if mode == "cac" else 1
                st["aggregation"] = passes * one_pass
                st["condensation"] = passes * gather
                if mode == "cac":
                    st["condensation"] += n * hs * hs * n * c * ks * ks * 2
            per_stage[s] = st
            for key, v in st.items():
                mods[key] += v
            mods["decoder"] += _conv(n * hs * hs, 3, c, c)  # phi

    d = pc.decoder_channels
    prev_size = None
    for s in range(5, 0, -1):
        hs = stage_size(size, s)
        mods["decoder"] += _conv(n * hs * hs, 1, ch[s], d)
        if prev_size is not None:
            mods["decoder"] += _resize(n, hs, hs, d, prev_size, prev_size)
        mods["decoder"] += _conv(n * hs * hs, 3, d, d)
        prev_size = hs
    mods["decoder"] += _conv(n * size * size, 1, d, 1)
    return MacReport(mode=mode, n=n, size=size, k=k, modules=mods, per_stage=per_stage,
                     hac_bytes=hac_mem)


def compare(cfg: RunConfig, n: int | None = None, size: int | None = None,
            ks=(3, 5, 9), mode: str = "cac") -> dict:
    """Full-pixel vs condensed association cost at matched config and geometry."""
    full = count(cfg, n, size, "full")
    rows = {}
    for k in ks:
        cond = count(cfg, n, size, mode, k)
        rows[k] = {"report": cond, "association_ratio": cond.association / full.association,
                   "total_ratio": cond.total / full.total}
    return {"full": full, "condensed": rows}


def format_table(result: dict) -> str:
    full = result["full"]
    lines = ["mode,k," + ",".join(MODULES) + ",association,total,association_ratio,total_ratio"]

    def line(rep, k, ar, tr):
        vals = ",".join(str(rep.modules[m]) for m in MODULES)
        return f"{rep.mode},{k},{vals},{rep.association},{rep.total},{ar:.6f},{tr:.6f}"

    lines.append(line(full, "-", 1.0, 1.0))
    for k, row in result["condensed"].items():
        lines.append(line(row["report"], k, row["association_ratio"], row["total_ratio"]))
    return "\n".join(lines)
