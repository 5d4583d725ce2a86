"""Plan-aware concept-to-text generation toolkit.

Builds ordered concept plans for a pluggable text generator, evaluates
generations (coverage, BLEU, ROUGE, CIDEr, diversity), and analyzes how
input permutations affect outputs, encoder attention, and hidden states.
"""

__version__ = "0.1.0"
