"""Minimum-feedback collision-free scheduling codes for massive random access."""

from cfsched.core import (
    ActivityPattern,
    CodeParams,
    FeedbackMessage,
    InvalidParams,
    MalformedFile,
    Partition,
    PartitionFamily,
    Schedule,
    deserialize_family,
    serialize_family,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ActivityPattern",
    "CodeParams",
    "FeedbackMessage",
    "InvalidParams",
    "MalformedFile",
    "Partition",
    "PartitionFamily",
    "Schedule",
    "deserialize_family",
    "serialize_family",
    "validate",
]
