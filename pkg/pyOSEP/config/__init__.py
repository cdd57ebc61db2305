from .configs import (  # noqa
    SECURE_MASK_BITS,
    ConfigError,
    Configurable,
    Dict,
    ProtocolConfig,
    SecurityProfile,
    load_config,
)
