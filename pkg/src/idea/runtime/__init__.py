from .executor import Cluster, Inbox, JobInstance, JobResult, NodeContext, build_job, run_job
from .frames import FRAME_BYTES, FRAME_RECORDS, Frame, FrameAppender, eof_frame
from .job import (
    CompiledJob,
    ConnectorDescriptor,
    ConnectorKind,
    JobSpec,
    OperatorDescriptor,
    OperatorRuntime,
    broadcast,
    compile_spec,
    hash_partition,
    one_to_one,
    round_robin,
    spread,
)
from .connectors import route
