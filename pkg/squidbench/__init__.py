import warnings

__version__ = "1.0.0"

warnings.filterwarnings("ignore", category=UserWarning, module="matplotlib")
