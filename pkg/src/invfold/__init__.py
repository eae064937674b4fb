"""Structure-conditioned protein sequence design.

A small, self-contained inverse-folding stack: a message-passing backbone
encoder, a bidirectional masked language model with rotary embeddings, and a
cross-attention adapter that injects structure into the (optionally frozen)
LM. Training is conditional masked language modeling; decoding is iterative
refinement with temperature control.
"""

__version__ = "0.1.0"

CHECKPOINT_FORMAT_VERSION = 1
