"""
Cached CKKS batch encryption: a single-prime CKKS implementation, the
precompute / reconstruct / randomize batch encryptor, baseline encryptors, a
federated averaging harness and benchmark drivers.
"""

__version__ = "0.1.0"
