from .synthetic import SegSample, SyntheticSpec, generate_synthetic  # noqa: F401
