from dusss.app.data.augment import augment, augment_arrays
from dusss.app.data.pgm import decode_pgm, encode_pgm, load_pgm, quantize, save_pgm
from dusss.app.data.synthetic import gen_synthetic, quadrant_of
from dusss.app.data.text import build_vocab, caption_position, caption_variants, tokenize, tokenize_batch

__all__ = [
    "augment",
    "augment_arrays",
    "build_vocab",
    "caption_position",
    "caption_variants",
    "decode_pgm",
    "encode_pgm",
    "gen_synthetic",
    "load_pgm",
    "quadrant_of",
    "quantize",
    "save_pgm",
    "tokenize",
    "tokenize_batch",
]
