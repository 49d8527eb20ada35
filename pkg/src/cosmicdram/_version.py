from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("cosmicdram")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"
