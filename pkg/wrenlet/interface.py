"""
Abstract executor with the map primitive, used by the patterns.
"""
import abc
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

from wrenlet.job import JobConfig, TaskFuture
from wrenlet.types import JobId


class WaitMode(Enum):
    """Conditions wait() can block for (an int k means "at least k done")"""

    ALL = "ALL"
    ANY = "ANY"


WaitCondition = Union[WaitMode, int]


class Executor(abc.ABC):
    """
    User facing methods of a map executor
    """

    @abc.abstractmethod
    def map(
        self,
        function_id: str,
        inputs: Sequence[bytes],
        config: Optional[JobConfig] = None,
    ) -> List[TaskFuture]:
        """
        Launches one invocation of `function_id` per input and returns
        one future per input without waiting for any of them.
        """

    @abc.abstractmethod
    def wait(
        self,
        futures: Sequence[TaskFuture],
        mode: WaitCondition = WaitMode.ALL,
        timeout: Optional[float] = None,
    ) -> Tuple[List[TaskFuture], List[TaskFuture]]:
        """
        Blocks until `mode` holds and returns (done, pending).
        Raises WaitTimeout once `timeout` seconds have elapsed.
        """

    @abc.abstractmethod
    def fetch_result(self, future: TaskFuture) -> bytes:
        """Output payload of a SUCCEEDED future"""

    @abc.abstractmethod
    def cleanup(self, job: JobId) -> int:
        """Deletes every key of a finished job; returns how many"""
