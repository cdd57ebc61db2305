from .encoding import (  # noqa
    CodecError,
    CodecOverflowError,
    CodecRangeError,
    FixedPointCodec,
    fixed_product,
    row_bound,
)
from .paillier import (  # noqa
    Ciphertext,
    HexFormatError,
    InvalidCiphertextError,
    InvalidKeyError,
    KeyFileError,
    KeyGenerationError,
    KeyMismatchError,
    PaillierError,
    PaillierKeypair,
    PlaintextRangeError,
    PrimeSearchError,
    PrivateKey,
    PublicKey,
    add_cipher,
    add_plain,
    decrypt,
    encrypt,
    from_hex,
    keygen,
    load_key,
    load_private_key,
    load_public_key,
    save_key,
    scalar_mul,
    to_hex,
)
