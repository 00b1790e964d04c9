"""Isolated execution of generated programs with resource limits.

Two interchangeable backends: a container runner (docker-style CLI) and a
restricted subprocess for hosts without a container daemon. Both disable
networking, cap wall-clock time and memory, and always return a result;
execution failures are data, not exceptions.
"""

from __future__ import annotations

import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
import uuid
from dataclasses import dataclass

STREAM_CAP = 64 * 1024
DEFAULT_TIME_LIMIT = 10.0
DEFAULT_MEMORY_LIMIT = 512 * 1024 * 1024
KILL_GRACE = 2.0

# Runs inside the child before any generated code: applies the address-space
# limit and blocks socket creation, then executes the program file.
_LAUNCHER = """\
import resource, socket, sys

memory_limit = int(sys.argv[2])
if memory_limit > 0:
    try:
        resource.setrlimit(resource.RLIMIT_AS, (memory_limit, memory_limit))
    except (ValueError, OSError):
        pass

def _denied(*args, **kwargs):
    raise OSError("network access is disabled in this sandbox")

socket.socket = _denied
socket.socketpair = _denied
socket.create_connection = _denied
socket.getaddrinfo = _denied

with open(sys.argv[1], encoding="utf-8") as handle:
    source = handle.read()
sys.argv = [sys.argv[1]]
exec(compile(source, "program.py", "exec"), {"__name__": "__main__"})
"""


@dataclass(frozen=True)
class ExecutionRequest:
    source: str
    interpreter: str = sys.executable
    time_limit: float = DEFAULT_TIME_LIMIT
    memory_limit: int = DEFAULT_MEMORY_LIMIT
    network_disabled: bool = True

    def __post_init__(self):
        if self.time_limit <= 0 or self.memory_limit <= 0:
            raise ValueError("time and memory limits must be positive")
        if not self.network_disabled:
            raise ValueError("network access cannot be enabled")


@dataclass(frozen=True)
class ExecutionResult:
    status: str  # ok | nonzero_exit | timeout | spawn_failure
    exit_code: int | None
    stdout: str
    stderr: str
    duration: float


def _truncate(text: str) -> str:
    if len(text) <= STREAM_CAP:
        return text
    return text[:STREAM_CAP] + "\n... [truncated]"


class SubprocessSandbox:
    """Restricted-subprocess backend: rlimits plus an in-process socket block.

    Each run gets a fresh scratch directory as its working directory and a
    stripped environment, so nothing persists between executions.
    """

    def __init__(self, interpreter: str | None = None):
        self.interpreter = interpreter or sys.executable

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        start = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="graphsolve-run-") as workdir:
            program = os.path.join(workdir, "program.py")
            launcher = os.path.join(workdir, "launcher.py")
            with open(program, "w", encoding="utf-8") as fh:
                fh.write(request.source)
            with open(launcher, "w", encoding="utf-8") as fh:
                fh.write(_LAUNCHER)
            interpreter = request.interpreter or self.interpreter
            cmd = [interpreter, "-I", launcher, program, str(request.memory_limit)]
            env = {"PATH": os.environ.get("PATH", ""), "HOME": workdir}
            try:
                proc = subprocess.Popen(
                    cmd,
                    cwd=workdir,
                    env=env,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    text=True,
                    start_new_session=True,
                )
            except OSError as exc:
                return ExecutionResult(
                    status="spawn_failure",
                    exit_code=None,
                    stdout="",
                    stderr=f"failed to start interpreter {interpreter!r}: {exc}",
                    duration=time.monotonic() - start,
                )
            try:
                stdout, stderr = proc.communicate(timeout=request.time_limit)
            except subprocess.TimeoutExpired:
                _kill_group(proc)
                stdout, stderr = proc.communicate()
                return ExecutionResult(
                    status="timeout",
                    exit_code=None,
                    stdout=_truncate(stdout or ""),
                    stderr=_truncate(stderr or ""),
                    duration=time.monotonic() - start,
                )
            duration = time.monotonic() - start
            status = "ok" if proc.returncode == 0 else "nonzero_exit"
            return ExecutionResult(
                status=status,
                exit_code=proc.returncode,
                stdout=_truncate(stdout),
                stderr=_truncate(stderr),
                duration=duration,
            )


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        proc.kill()


class ContainerSandbox:
    """Container backend: network disabled, read-only program mount, limits
    mapped to the runtime's flags. The image must provide the interpreter
    and the math library the programs import.
    """

    def __init__(self, image: str, runtime: str = "docker", interpreter: str = "python3"):
        self.image = image
        self.runtime = runtime
        self.interpreter = interpreter

    def command(self, request: ExecutionRequest, workdir: str, name: str) -> list[str]:
        return [
            self.runtime,
            "run",
            "--rm",
            f"--name={name}",
            "--network=none",
            f"--memory={request.memory_limit}",
            "--cpus=1",
            "-v",
            f"{workdir}:/work:ro",
            "-w",
            "/work",
            self.image,
            self.interpreter,
            "/work/program.py",
        ]

    def execute(self, request: ExecutionRequest) -> ExecutionResult:
        start = time.monotonic()
        if shutil.which(self.runtime) is None:
            return ExecutionResult(
                status="spawn_failure",
                exit_code=None,
                stdout="",
                stderr=f"container runtime {self.runtime!r} not found",
                duration=time.monotonic() - start,
            )
        name = f"graphsolve-{uuid.uuid4().hex[:12]}"
        with tempfile.TemporaryDirectory(prefix="graphsolve-run-") as workdir:
            with open(os.path.join(workdir, "program.py"), "w", encoding="utf-8") as fh:
                fh.write(request.source)
            try:
                proc = subprocess.run(
                    self.command(request, workdir, name),
                    capture_output=True,
                    text=True,
                    timeout=request.time_limit,
                )
            except subprocess.TimeoutExpired as exc:
                subprocess.run(
                    [self.runtime, "kill", name], capture_output=True, text=True, check=False
                )
                stdout = exc.stdout or b""
                stderr = exc.stderr or b""
                if isinstance(stdout, bytes):
                    stdout = stdout.decode("utf-8", "replace")
                if isinstance(stderr, bytes):
                    stderr = stderr.decode("utf-8", "replace")
                return ExecutionResult(
                    status="timeout",
                    exit_code=None,
                    stdout=_truncate(stdout),
                    stderr=_truncate(stderr),
                    duration=time.monotonic() - start,
                )
            except OSError as exc:
                return ExecutionResult(
                    status="spawn_failure",
                    exit_code=None,
                    stdout="",
                    stderr=str(exc),
                    duration=time.monotonic() - start,
                )
            duration = time.monotonic() - start
            status = "ok" if proc.returncode == 0 else "nonzero_exit"
            return ExecutionResult(
                status=status,
                exit_code=proc.returncode,
                stdout=_truncate(proc.stdout),
                stderr=_truncate(proc.stderr),
                duration=duration,
            )


def execute(request: ExecutionRequest, backend=None) -> ExecutionResult:
    """Run one program through the configured backend (subprocess default)."""
    backend = backend or SubprocessSandbox()
    return backend.execute(request)
