"""Controlled development of Bayer mosaics into JPEG tile corpora."""

from . import dataset, develop, jpeg, paramsample, rawio
from .develop import develop_image, tile16, to_grey
from .jpeg import decode_jpeg, encode_jpeg, estimate_qf, std_quant_matrix
from .paramsample import DevRecipe, SeedSpec, sample_recipe
from .rawio import BayerPattern, CfaImage, read_cfa, write_cfa

__version__ = "0.1.0"
