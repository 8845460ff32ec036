"""Certified randomness from random circuit sampling.

Modules: ``stats`` (XEB distributions), ``circuits`` (challenge generation
and text format), ``simulator`` (state vectors and samplers), ``security``
(entropy and rate bounds), ``extractor`` (Toeplitz hashing), ``protocol``
(client, servers, verification) and ``cli``.
"""

__version__ = "0.1.0"
