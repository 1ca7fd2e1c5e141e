"""ktune: a kernel autotuning engine with offline, dynamic and replay-driven search."""
from .errors import (ConstraintSyntaxError, EvaluationError, ExecutionError, KtuneError,
                     SpaceError, TraceError)
from .executors import (ArgumentDescriptor, CallableExecutor, CommandExecutor, ExecutionResult,
                        KernelDefinition, ReferenceSpec, ReplayExecutor, validate_output)
from .model import (DEVICES, DeviceSpec, WorkloadSpec, amortization_report, efficiency,
                    invocations_to_amortize, portability, portability_matrix,
                    relative_performance, steps_for_probability)
from .search import Measurement, SearcherKind, Status, next_configuration
from .space import (Configuration, Constraint, ParameterDomain, TuningSpace, enumerate_space,
                    load_space, parse_space_definition, space_cardinality)
from .trace import Trace, TraceRow, read_trace
from .tuner import (AnyOf, ConfigBudget, Exhaustive, PerformanceThreshold, TimeBudget, Tuner,
                    create_session)

__version__ = "0.1.0"

__all__ = [
    "ConstraintSyntaxError",
    "EvaluationError",
    "ExecutionError",
    "KtuneError",
    "SpaceError",
    "TraceError",
    "ArgumentDescriptor",
    "CallableExecutor",
    "CommandExecutor",
    "ExecutionResult",
    "KernelDefinition",
    "ReferenceSpec",
    "ReplayExecutor",
    "validate_output",
    "DEVICES",
    "DeviceSpec",
    "WorkloadSpec",
    "amortization_report",
    "efficiency",
    "invocations_to_amortize",
    "portability",
    "portability_matrix",
    "relative_performance",
    "steps_for_probability",
    "Measurement",
    "SearcherKind",
    "Status",
    "next_configuration",
    "Configuration",
    "Constraint",
    "ParameterDomain",
    "TuningSpace",
    "enumerate_space",
    "load_space",
    "parse_space_definition",
    "space_cardinality",
    "Trace",
    "TraceRow",
    "read_trace",
    "AnyOf",
    "ConfigBudget",
    "Exhaustive",
    "PerformanceThreshold",
    "TimeBudget",
    "Tuner",
    "create_session",
]
