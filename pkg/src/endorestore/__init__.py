"""Synthetic endoscopy degradations, classical and learned restoration, and benchmarking."""

from endorestore.image import Image, Kernel2D, load_image, save_image

__version__ = "0.1.0"

__all__ = ["Image", "Kernel2D", "load_image", "save_image", "__version__"]
