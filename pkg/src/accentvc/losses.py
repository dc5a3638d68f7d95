"""Training objectives.

Every function accepts plain arrays or tape tensors and returns a scalar
tape tensor (call ``.item()`` for the float).  ``weights`` is the per-frame
validity mask of a padded batch; padded rows must carry weight zero so they
contribute nothing to any objective.
"""

from __future__ import annotations

from . import autodiff as ad


def loss_recons(pre, post, target, weights=None) -> ad.Tensor:
    """Equal-weight sum of the pre-postnet and post-postnet MSE against the
    target frames.  Identical pre and a post off by 1.0 everywhere gives 1.0.
    """
    return ad.mse_loss(pre, target, weights) + ad.mse_loss(post, target, weights)


def loss_adv(probs, weights=None) -> ad.Tensor:
    """Mean over frames of the squared L2 distance between the classifier's
    posterior row and the uniform distribution.  Zero iff every row is
    uniform; a one-hot row contributes (N-1)/N.  Rows that do not sum to 1
    within 1e-6 are rejected.
    """
    return ad.uniform_distance_loss(probs, weights, validate=True)


def loss_D(probs, labels, weights=None) -> ad.Tensor:
    """Mean per-frame cross-entropy of the speaker classifier."""
    return ad.nll_rows(probs, labels, weights)


def loss_G(recons, adv, beta: float) -> ad.Tensor:
    """Generator objective: reconstruction plus beta times the adversarial
    uniformity term."""
    if not isinstance(adv, ad.Tensor):
        adv = ad.tensor(adv)
    return recons + float(beta) * adv
