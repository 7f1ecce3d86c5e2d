try:
    import importlib.metadata as metadata
except ModuleNotFoundError:
    import importlib_metadata as metadata

try:
    VERSION = metadata.version("hho-afem")
except metadata.PackageNotFoundError:
    # Source checkout without an installed distribution.
    VERSION = "0.0.0"
