"""Emulated function-as-a-service runtime"""
from wrenlet.runtime.context import InvocationContext, Scratch
from wrenlet.runtime.executor import Runtime
from wrenlet.runtime.limits import (
    ColdStartModel,
    CrashPoint,
    FaultPlan,
    ResourceLimits,
    TokenBucket,
    sample_cold_start,
)
from wrenlet.runtime.registry import FunctionDescriptor, FunctionRegistry

__all__ = [
    "ColdStartModel",
    "CrashPoint",
    "FaultPlan",
    "FunctionDescriptor",
    "FunctionRegistry",
    "InvocationContext",
    "ResourceLimits",
    "Runtime",
    "Scratch",
    "TokenBucket",
    "sample_cold_start",
]
