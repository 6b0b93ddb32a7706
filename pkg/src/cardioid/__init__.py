"""PPG biometrics: adaptive harmonic filtering, multi-morphology fiducial features,
identification and authentication back-ends, and an evaluation harness."""

__version__ = "0.1.0"
