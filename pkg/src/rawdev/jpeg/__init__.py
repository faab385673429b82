from .codec import (
    JpegCorruptError,
    JpegError,
    JpegFormatError,
    JpegStructure,
    JpegTruncatedError,
    JpegUnsupportedError,
    decode_jpeg,
    decode_unrounded,
    encode_coefficients,
    encode_jpeg,
    encode_tiles,
    parse_jpeg,
    quantize_image,
    read_coefficients,
)
from .forensics import (
    QfEstimate,
    estimate_qf,
    extract_quant_tables,
    nonstandard_target,
    recompress,
)
from .tables import std_quant_matrix

__all__ = [
    "JpegCorruptError",
    "JpegError",
    "JpegFormatError",
    "JpegStructure",
    "JpegTruncatedError",
    "JpegUnsupportedError",
    "QfEstimate",
    "decode_jpeg",
    "decode_unrounded",
    "encode_coefficients",
    "encode_jpeg",
    "encode_tiles",
    "estimate_qf",
    "extract_quant_tables",
    "nonstandard_target",
    "parse_jpeg",
    "quantize_image",
    "read_coefficients",
    "recompress",
    "std_quant_matrix",
]
