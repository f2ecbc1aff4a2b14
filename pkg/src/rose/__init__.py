"""Object removal with side effects: synthetic paired video data, a small
reference-conditioned video diffusion transformer, and its benchmark."""

__version__ = "0.1.0"

CATEGORIES = ("common", "shadow", "light_source", "reflection", "mirror", "translucent")
