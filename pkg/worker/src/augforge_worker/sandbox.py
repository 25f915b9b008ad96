"""Structural guards around candidate code execution.

Candidates are machine-generated Python defining one ``transform()``
function. Before execution the source is parsed and every import (module
level or nested) is checked against ALLOWED_IMPORTS; ``__import__`` is also
wrapped so dynamic imports hit the same list. This is cooperative
containment for generated code, not a security boundary: the code still
runs in-process, so deploy the worker inside an OS-level sandbox when the
generator is untrusted.

Failures are reported as CandidateFailure carrying one of the protocol
error classes: syntax_error for anything structurally wrong (unparseable
source, disallowed import, missing transform), runtime_error for exceptions
raised by the candidate, timeout when a budget expires.
"""

from __future__ import annotations

import ast
import builtins
import threading

ALLOWED_IMPORTS = frozenset({"torch", "torchvision", "PIL", "numpy", "random", "math"})

SYNTAX_ERROR = "syntax_error"
RUNTIME_ERROR = "runtime_error"
TIMEOUT = "timeout"


class CandidateFailure(Exception):
    """A classified candidate failure, mapped 1:1 onto the wire format."""

    def __init__(self, error_class: str, detail: str):
        super().__init__(f"{error_class}: {detail}")
        self.error_class = error_class
        self.detail = detail


def _root_module(name: str) -> str:
    return name.split(".", 1)[0]


def _scan_imports(tree: ast.AST) -> None:
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                if _root_module(alias.name) not in ALLOWED_IMPORTS:
                    raise CandidateFailure(
                        SYNTAX_ERROR, f"import of {alias.name!r} is not allowed"
                    )
        elif isinstance(node, ast.ImportFrom):
            if node.level or node.module is None:
                raise CandidateFailure(SYNTAX_ERROR, "relative imports are not allowed")
            if _root_module(node.module) not in ALLOWED_IMPORTS:
                raise CandidateFailure(
                    SYNTAX_ERROR, f"import from {node.module!r} is not allowed"
                )


def _guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    if level or _root_module(name) not in ALLOWED_IMPORTS:
        raise ImportError(f"import of {name!r} is not allowed in candidate code")
    return builtins.__import__(name, globals, locals, fromlist, level)


def load_transform(code: str):
    """Parse, check, and execute candidate source; return its transform().

    Raises CandidateFailure with error_class syntax_error when the source
    does not parse, imports outside the allow list, or defines no callable
    named ``transform``; runtime_error when executing the module body raises.
    """
    if not code or not code.strip():
        raise CandidateFailure(SYNTAX_ERROR, "empty candidate")
    try:
        tree = ast.parse(code)
    except SyntaxError as exc:
        raise CandidateFailure(SYNTAX_ERROR, f"does not parse: {exc.msg}") from exc
    _scan_imports(tree)

    guarded = dict(vars(builtins))
    guarded["__import__"] = _guarded_import
    namespace = {"__builtins__": guarded, "__name__": "candidate"}
    try:
        exec(compile(tree, "<candidate>", "exec"), namespace)
    except CandidateFailure:
        raise
    except ImportError as exc:
        raise CandidateFailure(SYNTAX_ERROR, str(exc)) from exc
    except Exception as exc:
        raise CandidateFailure(RUNTIME_ERROR, f"module body raised {exc!r}") from exc

    fn = namespace.get("transform")
    if not callable(fn):
        raise CandidateFailure(SYNTAX_ERROR, "no callable named 'transform'")
    return fn


def build_pipeline(code: str):
    """Load candidate code and call transform() to obtain the pipeline."""
    fn = load_transform(code)
    try:
        pipeline = fn()
    except ImportError as exc:
        raise CandidateFailure(SYNTAX_ERROR, str(exc)) from exc
    except Exception as exc:
        raise CandidateFailure(RUNTIME_ERROR, f"transform() raised {exc!r}") from exc
    if pipeline is None:
        raise CandidateFailure(RUNTIME_ERROR, "transform() returned None")
    return pipeline


def run_with_timeout(fn, timeout_s: float):
    """Run fn() on a helper thread, stopping the wait after timeout_s.

    Python offers no safe preemption, so on expiry the helper thread is
    abandoned (daemonized) and a timeout failure is raised; the thread may
    keep consuming CPU until fn returns on its own. Acceptable for a worker
    that owns the whole device per job.
    """
    outcome: dict = {}

    def _call():
        try:
            outcome["value"] = fn()
        except BaseException as exc:  # carried to the caller, see below
            outcome["error"] = exc

    thread = threading.Thread(target=_call, daemon=True)
    thread.start()
    thread.join(timeout_s)
    if thread.is_alive():
        raise CandidateFailure(TIMEOUT, f"no result within {timeout_s}s")
    if "error" in outcome:
        raise outcome["error"]
    return outcome["value"]
