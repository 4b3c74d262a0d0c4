"""Error taxonomy for the fine-tuning glue."""


class FinetuneError(Exception):
    """Base class for all fine-tuning errors."""


class ConfigMismatch(FinetuneError):
    """Training configuration is invalid or conflicts with an override."""


class MissingAdapter(FinetuneError):
    """Adapter directory is absent or not loadable."""


class OutOfMemory(FinetuneError):
    """Training ran out of memory; shrink the base model or batch size."""
