"""Encrypted biometric verification with quantized log-likelihood-ratio
lookup tables over (2,2)-threshold additive ElGamal, in two flavors: a
semi-honest protocol and a malicious-model protocol hardened with
non-interactive proofs, plus the scripted attacks that separate them."""

__version__ = "0.1.0"
