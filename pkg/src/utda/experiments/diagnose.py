"""Tunable-subset diagnostic: rank parameter blocks by cross-domain deviation."""

from dataclasses import dataclass

from ..errors import InvalidArgument
from ..metrics import delta_m

ZERO_TOL = 1e-9


@dataclass
class SplitReport:
    scores: dict        # block -> delta
    ranking: list       # blocks, largest deviation first
    beta: list          # proposed tunable blocks
    alpha: list         # proposed shared blocks
    cut: float

    def lines(self):
        out = [f"{name:>12s}  {self.scores[name]:.6g}  {'beta' if name in self.beta else 'alpha'}"
               for name in self.ranking]
        return [f"cut = {self.cut:.6g}"] + out


def diagnose_beta_split(models, threshold=None, rel=0.75, eps=1e-12):
    """Score every block of domain-specialist models and propose an alpha/beta split.

    ``models`` are parameter dicts or objects with a ``params`` dict. Blocks with a
    score at or above ``threshold`` are tunable; without a threshold the cut is
    ``rel`` times the largest score. If every score is numerically zero all blocks
    are shared.
    """
    blocks = [m if isinstance(m, dict) else m.params for m in models]
    if len(blocks) < 2:
        raise InvalidArgument("the diagnostic needs at least two domain models")
    scores = delta_m(blocks, eps)
    ranking = sorted(scores, key=lambda k: (-scores[k], k))
    top = scores[ranking[0]]
    cut = threshold if threshold is not None else rel * top
    if top <= ZERO_TOL:
        beta = []
    else:
        beta = [k for k in ranking if scores[k] >= cut and scores[k] > ZERO_TOL]
    alpha = [k for k in ranking if k not in beta]
    return SplitReport(scores, ranking, beta, alpha, cut)
