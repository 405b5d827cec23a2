"""Contextual sentence encoder: embedding lookup plus a one-layer BiLSTM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class LstmDirection:
    """Fused gate weights in i, f, g, o order."""

    w_x: Tensor  # (d_in, 4*d_h)
    w_h: Tensor  # (d_h, 4*d_h)
    b: Tensor    # (4*d_h,)


@dataclass
class EncoderParams:
    fwd: LstmDirection
    bwd: LstmDirection
    hidden: int

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for tag, direction in (("fwd", self.fwd), ("bwd", self.bwd)):
            out += [(f"encoder.{tag}.w_x", direction.w_x),
                    (f"encoder.{tag}.w_h", direction.w_h),
                    (f"encoder.{tag}.b", direction.b)]
        return out


def init_encoder(rng: np.random.Generator, d_in: int, d_h: int,
                 init_scale: float = 0.1) -> EncoderParams:
    def direction() -> LstmDirection:
        w_x = Tensor(rng.uniform(-init_scale, init_scale, (d_in, 4 * d_h)),
                     requires_grad=True)
        w_h = Tensor(rng.uniform(-init_scale, init_scale, (d_h, 4 * d_h)),
                     requires_grad=True)
        b = np.zeros(4 * d_h)
        b[d_h:2 * d_h] = 1.0  # forget-gate bias
        return LstmDirection(w_x=w_x, w_h=w_h, b=Tensor(b, requires_grad=True))

    return EncoderParams(fwd=direction(), bwd=direction(), hidden=d_h)


def _lstm_run(xs: list[Tensor], direction: LstmDirection, d_h: int) -> list[Tensor]:
    h = Tensor(np.zeros(d_h))
    c = Tensor(np.zeros(d_h))
    states = []
    for x in xs:
        z = ad.add(ad.add(ad.matmul(x, direction.w_x), ad.matmul(h, direction.w_h)),
                   direction.b)
        i = ad.sigmoid(ad.slice_axis0(z, 0, d_h))
        f = ad.sigmoid(ad.slice_axis0(z, d_h, 2 * d_h))
        g = ad.tanh(ad.slice_axis0(z, 2 * d_h, 3 * d_h))
        o = ad.sigmoid(ad.slice_axis0(z, 3 * d_h, 4 * d_h))
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        states.append(h)
    return states


def encode(token_ids: list[int], embeddings: Tensor, params: EncoderParams) -> Tensor:
    """Hidden states (n, 2*d_h): forward then backward halves per token."""
    if not token_ids:
        raise ValueError("encode: empty token sequence")
    xs = [ad.row(embeddings, tid) for tid in token_ids]
    fwd = _lstm_run(xs, params.fwd, params.hidden)
    bwd = list(reversed(_lstm_run(list(reversed(xs)), params.bwd, params.hidden)))
    return ad.concat_last([ad.stack_rows(fwd), ad.stack_rows(bwd)])
