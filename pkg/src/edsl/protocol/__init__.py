"""Master/worker round protocol: schedules, transports, wire format."""
from .edsl import (EdslMaster, RoundRecord, RunTrace, edsl_init, edsl_round,
                   make_master, payload_bytes_per_round, run_edsl)
from .schedule import (BoundEval, LambdaContext, LambdaSchedule, bound_rhs,
                       default_constant, lambda_at, practical_lambda,
                       theoretical_lambda)
from .transport import (Exchange, InProcessTransport, TcpMasterTransport,
                        Worker, serve_worker)
from .wire import MessageKind, RoundMessage, decode, encode

__all__ = [
    "EdslMaster", "RoundRecord", "RunTrace", "edsl_init", "edsl_round",
    "make_master", "payload_bytes_per_round", "run_edsl",
    "BoundEval", "LambdaContext", "LambdaSchedule", "bound_rhs",
    "default_constant", "lambda_at", "practical_lambda", "theoretical_lambda",
    "Exchange", "InProcessTransport", "TcpMasterTransport", "Worker",
    "serve_worker", "MessageKind", "RoundMessage", "decode", "encode",
]
