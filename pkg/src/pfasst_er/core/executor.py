"""Message-passing executor for the step x node worker grid.

Logical step-workers own contiguous ranges of the time-steps in a block and
exchange iteration-tagged messages through ordered channels. Coarse sweeps
form a pipeline (step ``l`` waits for the value of step ``l - 1``), fine
sweeps run concurrently and node tasks of one Quasi-Newton step are spread
over node-groups. Concurrency uses thread pools; results never depend on it,
only the message counters describe the layout.
"""

import logging
import queue
import threading
from collections import defaultdict
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)


class MessageKind(Enum):
    """Kinds of messages exchanged between workers."""
    COARSE_FORWARD = "coarse-forward"
    FINE_FORWARD = "fine-forward"
    CONVERGED_FLAG = "converged-flag"
    NODE_GATHER = "node-gather"


@dataclass(frozen=True)
class Message:
    """A payload travelling from one step to the next."""
    kind: MessageKind
    source: int
    target: int
    iteration: int
    payload: Any = field(default=None, repr=False, compare=False)


def map_nodes_to_groups(M: int, p_nodes: int) -> Dict[int, int]:
    """Round-robin assignment of nodes ``1..M`` to groups ``0..p_nodes-1``.

    Raises:
        LayoutError: If ``p_nodes`` is not in ``1..M``.
    """
    if p_nodes < 1 or p_nodes > M:
        raise LayoutError(f"Number of node-workers must be in 1..{M}, got {p_nodes}")
    return {m: (m - 1) % p_nodes for m in range(1, M + 1)}


@dataclass(frozen=True)
class WorkerGrid:
    """Layout of ``p_steps`` step-workers times ``p_nodes`` node-workers."""
    p_steps: int
    p_nodes: int
    num_nodes: int

    def __post_init__(self):
        if self.p_steps < 1:
            raise LayoutError(f"Number of step-workers must be positive, got {self.p_steps}")
        map_nodes_to_groups(self.num_nodes, self.p_nodes)

    @property
    def node_groups(self) -> Dict[int, int]:
        return map_nodes_to_groups(self.num_nodes, self.p_nodes)

    @property
    def cores(self) -> int:
        return self.p_steps * self.p_nodes

    def groups(self) -> List[List[int]]:
        """Zero-based node indices of every group."""
        members: List[List[int]] = [[] for _ in range(self.p_nodes)]
        for node, group in self.node_groups.items():
            members[group].append(node - 1)
        return members

    def worker_of(self, step: int, block_size: int) -> int:
        """Step-worker owning ``step`` of a block of ``block_size`` steps."""
        if block_size % self.p_steps:
            raise LayoutError(
                f"Block size {block_size} is not a multiple of {self.p_steps} step-workers"
            )
        return step * self.p_steps // block_size


class Channel:
    """Ordered, iteration-tagged message queue from one step to another."""

    def __init__(self, kind: MessageKind, source: int, target: int):
        self.kind = kind
        self.source = source
        self.target = target
        self._queue: "queue.Queue[Message]" = queue.Queue()

    def send(self, message: Message) -> None:
        self._queue.put(message)

    def receive(self, iteration: int, timeout: float) -> Message:
        """Block until the next message arrives and check its iteration tag.

        Raises:
            queue.Empty: If nothing arrives within ``timeout`` seconds.
            SchedulingError: If the message carries another iteration.
        """
        message = self._queue.get(timeout=timeout)
        if message.iteration != iteration:
            raise SchedulingError(
                f"{self.kind.value} message {self.source}->{self.target} is tagged with "
                f"iteration {message.iteration}, expected {iteration}"
            )
        return message

    def pending(self) -> List[Message]:
        with self._queue.mutex:
            return list(self._queue.queue)


PipelineTask = Callable[[Any], Tuple[Any, Any]]

_ABORTED = object()


@dataclass
class IterationPlan:
    """Tasks of one outer iteration of a block.

    Attributes:
        coarse: Per-step pipeline tasks. Task ``l`` receives the payload of
            step ``l - 1`` (``initial`` for the first step) and returns
            ``(result, payload)``.
        fine: Per-step tasks without mutual dependencies.
        initial: Payload received by the first step.
    """
    coarse: List[PipelineTask] = field(default_factory=list)
    fine: List[Callable[[], Any]] = field(default_factory=list)
    initial: Any = None


@dataclass
class Counters:
    """Message counters of one executor."""
    by_kind: Dict[MessageKind, int] = field(default_factory=lambda: defaultdict(int))
    sent: Dict[int, int] = field(default_factory=lambda: defaultdict(int))
    received: Dict[int, int] = field(default_factory=lambda: defaultdict(int))

    @property
    def total(self) -> int:
        return sum(self.by_kind.values())

    def as_dict(self) -> Dict[str, int]:
        return {kind.value: self.by_kind.get(kind, 0) for kind in MessageKind}


class Executor:
    """Runs pipelines, concurrent step tasks and node tasks on a WorkerGrid."""

    def __init__(
        self,
        grid: WorkerGrid,
        block_size: Optional[int] = None,
        progress_timeout: float = 300.0
    ):
        """Initialize the executor.

        Args:
            grid: Worker layout.
            block_size: Steps per block, defaults to ``grid.p_steps``.
            progress_timeout: Seconds a worker may wait for a message before
                the run is declared stuck.
        """
        self.grid = grid
        self.block_size = block_size or grid.p_steps
        self.progress_timeout = progress_timeout
        self.counters = Counters()
        self._lock = threading.Lock()
        self._channels: Dict[Tuple[MessageKind, int, int], Channel] = {}
        self._workers = [grid.worker_of(step, self.block_size) for step in range(self.block_size)]
        self._step_pool = ThreadPoolExecutor(grid.p_steps) if grid.p_steps > 1 else None
        self._node_pool = ThreadPoolExecutor(grid.cores) if grid.p_nodes > 1 else None

    def __enter__(self) -> "Executor":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()

    def shutdown(self) -> None:
        for pool in (self._step_pool, self._node_pool):
            if pool is not None:
                pool.shutdown(wait=True)

    def worker(self, step: int) -> int:
        return self._workers[step]

    def channel(self, kind: MessageKind, source: int, target: int) -> Channel:
        key = (kind, source, target)
        with self._lock:
            if key not in self._channels:
                self._channels[key] = Channel(kind, source, target)
            return self._channels[key]

    def _count(self, kind: MessageKind, source: int, target: int, amount: int = 1) -> None:
        with self._lock:
            self.counters.by_kind[kind] += amount
            self.counters.sent[source] += amount
            self.counters.received[target] += amount

    def send(self, message: Message) -> None:
        """Deliver ``message``; it is counted when it crosses step-workers."""
        if self.worker(message.source) != self.worker(message.target):
            self._count(message.kind, message.source, message.target)
        self.channel(message.kind, message.source, message.target).send(message)

    def receive(self, kind: MessageKind, source: int, target: int, iteration: int) -> Any:
        """Payload of the next message on a channel.

        Raises:
            SchedulingError: If no message arrives within the progress timeout.
        """
        try:
            return self.channel(kind, source, target).receive(iteration, self.progress_timeout).payload
        except queue.Empty:
            raise SchedulingError(
                f"No {kind.value} message from step {source} to {target} in iteration "
                f"{iteration} after {self.progress_timeout}s; pending: {self.pending()}"
            )

    def pending(self) -> List[Message]:
        with self._lock:
            channels = list(self._channels.values())
        return [message for channel in channels for message in channel.pending()]

    def notify(self, kind: MessageKind, source: int, iteration: int) -> None:
        """Send a payload-free message from ``source`` to its right neighbour."""
        if source + 1 < self.block_size:
            self.send(Message(kind, source, source + 1, iteration))
            self.receive(kind, source, source + 1, iteration)

    def forward(self, kind: MessageKind, payloads: Sequence[Any], iteration: int) -> List[Any]:
        """Send every step's payload to its right neighbour.

        Returns:
            The received payloads, ``None`` for the first step.
        """
        for step in range(len(payloads) - 1):
            self.send(Message(kind, step, step + 1, iteration, payloads[step]))
        received = [None]
        for step in range(1, len(payloads)):
            received.append(self.receive(kind, step - 1, step, iteration))
        return received

    def pipeline(self, tasks: Sequence[PipelineTask], initial: Any, iteration: int) -> List[Any]:
        """Run step tasks in a chain, each consuming its predecessor's payload."""
        def run_step(step: int) -> Any:
            last = step + 1 == len(tasks)
            try:
                if step == 0:
                    incoming = initial
                else:
                    incoming = self.receive(MessageKind.COARSE_FORWARD, step - 1, step, iteration)
                    if incoming is _ABORTED:
                        raise SchedulingError(f"Step {step - 1} failed in iteration {iteration}")
                result, payload = tasks[step](incoming)
            except Exception as error:
                logger.debug("Step %d aborted in iteration %d: %s", step, iteration, error)
                # unblock the successor without counting a message
                if not last:
                    self.channel(MessageKind.COARSE_FORWARD, step, step + 1).send(
                        Message(MessageKind.COARSE_FORWARD, step, step + 1, iteration, _ABORTED)
                    )
                raise
            if not last:
                self.send(Message(MessageKind.COARSE_FORWARD, step, step + 1, iteration, payload))
            return result

        return self._run_on_steps(run_step, len(tasks))

    def parallel_map(self, tasks: Sequence[Callable[[], Any]]) -> List[Any]:
        """Run independent step tasks concurrently, results in step order."""
        return self._run_on_steps(lambda step: tasks[step](), len(tasks))

    def _run_on_steps(self, job: Callable[[int], Any], count: int) -> List[Any]:
        if self._step_pool is None:
            return [job(step) for step in range(count)]
        # FIFO submission keeps every predecessor of a running step scheduled
        futures: List[Future] = [self._step_pool.submit(job, step) for step in range(count)]
        return [future.result() for future in futures]

    def map_nodes(self, step: int, tasks: Sequence[Callable[[], Any]]) -> List[Any]:
        """Run the node tasks of one step, group by group.

        With more than one node-group the scatter and the gather around the
        node solves are counted as two messages.
        """
        if self._node_pool is None:
            return [task() for task in tasks]
        groups = [[m for m in group if m < len(tasks)] for group in self.grid.groups()]

        def run_group(members: List[int]) -> List[Tuple[int, Any]]:
            return [(m, tasks[m]()) for m in members]

        futures = [self._node_pool.submit(run_group, members) for members in groups if members]
        results: Dict[int, Any] = {}
        for future in futures:
            results.update(future.result())
        self._count(MessageKind.NODE_GATHER, step, step, 2)
        return [results[m] for m in range(len(tasks))]

    def node_runner(self, step: int) -> Callable[[Sequence[Callable[[], Any]]], List[Any]]:
        """Node runner bound to ``step`` for the Quasi-Newton sweep."""
        return lambda tasks: self.map_nodes(step, tasks)

    def execute(self, plan: IterationPlan, iteration: int) -> Tuple[List[Any], List[Any]]:
        """Run the coarse pipeline, then the concurrent fine tasks, of one iteration."""
        coarse = self.pipeline(plan.coarse, plan.initial, iteration) if plan.coarse else []
        fine = self.parallel_map(plan.fine)
        return coarse, fine


def execute(
    plan: IterationPlan,
    grid: WorkerGrid,
    block_size: Optional[int] = None,
    iteration: int = 0
) -> Tuple[List[Any], List[Any], Counters]:
    """Run one plan on a fresh executor and return its results and counters."""
    with Executor(grid, block_size or max(len(plan.coarse), len(plan.fine), 1)) as executor:
        coarse, fine = executor.execute(plan, iteration)
        return coarse, fine, executor.counters


class SchedulingError(Exception):
    """Exception raised when workers stop making progress or messages are mismatched."""
    pass


class LayoutError(ValueError):
    """Exception raised for an inadmissible worker layout."""
    pass
