"""structmix : mélanges finis de lois de position-échelle à paramètre structurel."""

__version__ = "0.1.0"
