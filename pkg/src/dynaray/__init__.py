"""Dynamic X-ray tomography with known motion: forward model, FBP-type
reconstruction and microlocal visibility and artifact prediction."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.1.0"

from .core import GridSpec, ImageGrid, Sinogram, SinoSpec  # noqa: E402
from .motion import MotionModel, get_model, model_names  # noqa: E402

__all__ = ["GridSpec", "ImageGrid", "MotionModel", "Sinogram", "SinoSpec", "get_model", "model_names",
           "__version__"]
