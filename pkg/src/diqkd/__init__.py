"""Classical post-processing toolkit for device-independent QKD.

Subpackages and modules:

- ``model``: honest two-party device statistics (CHSH test rounds, key
  rounds) and the completeness threshold.
- ``ecc``: spatially-coupled LDPC codes for one-way Slepian-Wolf
  reconciliation, belief-propagation decoding, and finite-size overhead
  bounds.
- ``hashing``: 64-bit almost-universal hashing with Wegman-Carter
  one-time-pad encryption, and the pre-shared key layout.
- ``trevisan``: quantum-proof strong randomness extractor (block weak
  design over a Reed-Solomon/Hadamard one-bit extractor).
- ``keylen``: finite-size secure key length with term-by-term breakdown
  and heuristic parameter optimization.
- ``protocol``: two-party protocol engine over a framed message channel.
- ``cli``: command-line front end.
"""

__version__ = "0.1.0"
