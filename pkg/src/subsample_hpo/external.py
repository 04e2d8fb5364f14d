"""Line-delimited JSON protocol for out-of-process trainers.

One process per trial. The parent writes a single request line to the
child's stdin::

    {"config": {...}, "rows_path": "...", "valid_path": "...", "task": "...", "metric": "..."}

and reads a single response line from its stdout, either
``{"score": <real>, "train_seconds": <real>}`` or ``{"error": "<message>"}``.
"""
from __future__ import annotations

import json
import math
import shlex
import subprocess
from typing import Sequence


class ExternalTrainerError(RuntimeError):
    pass


class TrainerTimeout(ExternalTrainerError):
    pass


class MalformedResponse(ExternalTrainerError):
    pass


class NonzeroExit(ExternalTrainerError):
    pass


class TrainerReportedError(ExternalTrainerError):
    pass


def _argv(command: str | Sequence[str]) -> list[str]:
    return shlex.split(command) if isinstance(command, str) else list(command)


def parse_response(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"response is not JSON: {exc}") from None
    if not isinstance(msg, dict):
        raise MalformedResponse("response is not a JSON object")
    if "error" in msg:
        raise TrainerReportedError(str(msg["error"]))
    for name in ("score", "train_seconds"):
        if name not in msg:
            raise MalformedResponse(f"response missing field {name!r}")
        v = msg[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise MalformedResponse(f"response field {name!r} is not a finite number")
    if msg["train_seconds"] < 0:
        raise MalformedResponse("response field 'train_seconds' is negative")
    return {"score": float(msg["score"]), "train_seconds": float(msg["train_seconds"])}


def external_trainer_roundtrip(command: str | Sequence[str], request: dict,
                               timeout: float | None = None) -> dict:
    """Spawn ``command``, send ``request``, return the parsed response.

    The child is killed if it outlives ``timeout`` seconds.
    """
    payload = json.dumps(request, sort_keys=True) + "\n"
    try:
        proc = subprocess.run(_argv(command), input=payload, capture_output=True, text=True,
                              timeout=timeout)
    except subprocess.TimeoutExpired:
        # subprocess.run kills the child before re-raising
        raise TrainerTimeout(f"trainer exceeded {timeout} s timeout") from None
    except OSError as exc:
        raise ExternalTrainerError(f"cannot start trainer: {exc}") from None
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-1:] or [""]
        raise NonzeroExit(f"exit status {proc.returncode}: {tail[0]}")
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    if not lines:
        raise MalformedResponse("trainer produced no response line")
    return parse_response(lines[0])
