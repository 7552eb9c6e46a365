"""Instrumentation client for DRL training loops.

Streams rldx wire-format trace events to a file or pipe so a live
``rldx watch`` (or an offline ``rldx check``) can diagnose the run.
"""

from rldx_client.client import ClientError, DebuggerClient
from rldx_client.summary import summarize, tensor_digest

__version__ = "0.1.0"
