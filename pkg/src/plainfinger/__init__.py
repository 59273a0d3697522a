"""Classical fingerprint minutiae extraction built from convolutional operators."""
__version__ = "0.1.0"
