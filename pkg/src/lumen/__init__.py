"""lumen: HDR panoramic environment-map prediction from partial reflectance maps.

A numpy library covering the full pipeline: lat-long sphere geometry,
color/HDR imaging, synthetic data generation (procedural shapes, analytic
materials, image-based lighting), reflectance-map extraction, a small
reverse-mode tensor engine, the fusion network, and the DSSIM-based
evaluation protocol with its baseline family.
"""

__version__ = "0.1.0"
