"""On-line gait stability prediction from fused CoM and gait tracks."""

__version__ = "0.1.0"
