"""Joint voice and accent conversion on a synthetic factor-controlled corpus.

The package trains recognition-synthesis conversion systems whose content
features either carry or are normalized of accent, with an optional
adversarial speaker classifier on the conversion model's hidden states,
and evaluates speaker identity, accentedness, and content preservation
with linear probes against the known generative factors.
"""

__version__ = "0.1.0"
