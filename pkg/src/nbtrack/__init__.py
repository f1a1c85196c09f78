"""nbtrack: neural belief tracking for task-oriented dialogue.

A small numpy library implementing per-slot binary slot-value decoders over
fixed pre-trained word vectors (dense and convolutional utterance encoders,
semantic decoding, context gating), the rule-based cross-turn belief update,
a delexicalisation baseline, and training/evaluation tooling.
"""

__version__ = "0.1.0"
