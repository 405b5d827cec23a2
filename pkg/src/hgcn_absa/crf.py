"""Linear-chain CRF over {B, I, O}: log-space forward NLL and Viterbi decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

TAGS = ("B", "I", "O")
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}
_B, _I, _O = 0, 1, 2


@dataclass
class CrfParams:
    emission_w: Tensor   # (input_dim, 3)
    emission_b: Tensor   # (3,)
    transitions: Tensor  # (3, 3), transitions[a][b] scores a -> b
    start: Tensor        # (3,)
    end: Tensor          # (3,)
    hard_bio: bool = False

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [("crf.emission_w", self.emission_w), ("crf.emission_b", self.emission_b),
                ("crf.transitions", self.transitions), ("crf.start", self.start),
                ("crf.end", self.end)]


def init_crf(rng: np.random.Generator, input_dim: int, hard_bio: bool = False,
             init_scale: float = 0.1) -> CrfParams:
    def u(shape):
        return Tensor(rng.uniform(-init_scale, init_scale, shape), requires_grad=True)

    return CrfParams(
        emission_w=u((input_dim, 3)),
        emission_b=Tensor(np.zeros(3), requires_grad=True),
        transitions=u((3, 3)),
        start=u((3,)),
        end=u((3,)),
        hard_bio=hard_bio,
    )


def _hard_masks() -> tuple[np.ndarray, np.ndarray]:
    trans = np.zeros((3, 3))
    trans[_O, _I] = -np.inf  # O -> I forbidden
    start = np.zeros(3)
    start[_I] = -np.inf      # sequences cannot open with I
    return trans, start


def _effective_scores(params: CrfParams) -> tuple[Tensor, Tensor]:
    if not params.hard_bio:
        return params.transitions, params.start
    trans_mask, start_mask = _hard_masks()
    return ad.add(params.transitions, Tensor(trans_mask)), \
        ad.add(params.start, Tensor(start_mask))


def crf_emissions(h: Tensor, params: CrfParams) -> Tensor:
    """(n, 3) tag scores from per-token features."""
    return ad.add(ad.matmul(h, params.emission_w), params.emission_b)


def crf_nll(emissions: Tensor, gold: list[str], params: CrfParams) -> Tensor:
    """Negative log-likelihood of a gold BIO sequence under the chain."""
    n = emissions.shape[0]
    if n == 0:
        raise ValueError("crf_nll: empty sequence")
    if len(gold) != n:
        raise ValueError(f"crf_nll: {len(gold)} gold tags for {n} positions")
    tags = [TAG_INDEX[t] for t in gold]
    trans, start = _effective_scores(params)

    # log Z by the forward recursion.
    alpha = ad.add(start, ad.row(emissions, 0))
    for t in range(1, n):
        # pair[i][j] = alpha[i] + trans[i][j], built with leading-axis
        # broadcasting plus transposes.
        pair = ad.transpose(ad.add(ad.transpose(trans), alpha))
        alpha = ad.add(ad.logsumexp(pair, axis=0), ad.row(emissions, t))
    log_z = ad.logsumexp(ad.add(alpha, params.end), axis=0)

    # Score of the gold path via flat gathers.
    flat_emissions = ad.reshape(emissions, (3 * n,))
    picks = ad.gather_rows(flat_emissions, [3 * t + y for t, y in enumerate(tags)])
    score = ad.add(ad.tsum(picks),
                   ad.add(ad.tsum(ad.gather_rows(start, [tags[0]])),
                          ad.tsum(ad.gather_rows(params.end, [tags[-1]]))))
    if n > 1:
        flat_trans = ad.reshape(trans, (9,))
        moves = ad.gather_rows(flat_trans, [3 * a + b for a, b in zip(tags, tags[1:])])
        score = ad.add(score, ad.tsum(moves))
    return ad.add(log_z, ad.scale(score, -1.0))


def viterbi_decode(emissions: np.ndarray, params: CrfParams) -> tuple[list[str], float]:
    """Highest-scoring tag sequence; ties break toward the lower tag index."""
    e = np.asarray(emissions, dtype=np.float64)
    n = e.shape[0]
    if n == 0:
        raise ValueError("viterbi_decode: empty sequence")
    trans = np.array(params.transitions.data)
    start = np.array(params.start.data)
    end = np.array(params.end.data)
    if params.hard_bio:
        trans_mask, start_mask = _hard_masks()
        trans = trans + trans_mask
        start = start + start_mask

    trellis = np.empty((n, 3))
    backptr = np.zeros((n, 3), dtype=int)
    trellis[0] = start + e[0]
    for t in range(1, n):
        moves = trellis[t - 1][:, None] + trans
        backptr[t] = np.argmax(moves, axis=0)
        trellis[t] = e[t] + np.max(moves, axis=0)
    final = trellis[-1] + end
    best = int(np.argmax(final))
    path = [best]
    for t in range(n - 1, 0, -1):
        path.append(int(backptr[t][path[-1]]))
    path.reverse()
    return [TAGS[i] for i in path], float(final[best])


def enumerate_nll(emissions: np.ndarray, gold: list[str], params: CrfParams) -> float:
    """Brute-force NLL over all 3^n sequences (test oracle; n must be small)."""
    from itertools import product

    e = np.asarray(emissions, dtype=np.float64)
    n = e.shape[0]
    trans = np.array(params.transitions.data)
    start = np.array(params.start.data)
    end = np.array(params.end.data)
    if params.hard_bio:
        trans_mask, start_mask = _hard_masks()
        trans = trans + trans_mask
        start = start + start_mask

    def score(seq) -> float:
        s = start[seq[0]] + end[seq[-1]] + sum(e[t][y] for t, y in enumerate(seq))
        s += sum(trans[a][b] for a, b in zip(seq, seq[1:]))
        return s

    scores = np.array([score(seq) for seq in product(range(3), repeat=n)])
    finite = scores[np.isfinite(scores)]
    m = finite.max()
    log_z = m + np.log(np.exp(finite - m).sum())
    return float(log_z - score([TAG_INDEX[t] for t in gold]))
