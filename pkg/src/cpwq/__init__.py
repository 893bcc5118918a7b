"""Quality factors of coplanar-waveguide resonators from conformal mapping and
transmission-line network analysis."""

__version__ = "0.1.0"
