import time

import pytest

from augforge_worker.sandbox import (
    CandidateFailure,
    build_pipeline,
    load_transform,
    run_with_timeout,
)


def failure_class(code: str) -> str:
    with pytest.raises(CandidateFailure) as exc:
        build_pipeline(code)
    return exc.value.error_class


class TestLoading:
    def test_valid_candidate_builds_pipeline(self, fixed_tail_candidate):
        pipeline = build_pipeline(fixed_tail_candidate)
        assert callable(pipeline)

    def test_transform_must_exist(self):
        assert failure_class("x = 1\n") == "syntax_error"

    def test_transform_must_be_callable(self):
        assert failure_class("transform = 3\n") == "syntax_error"

    def test_unparseable_source(self):
        assert failure_class("def transform(:\n    pass\n") == "syntax_error"

    def test_empty_source(self):
        assert failure_class("   \n") == "syntax_error"


class TestImportPolicy:
    def test_disallowed_module_import(self):
        assert failure_class("import os\n\ndef transform():\n    return os\n") == "syntax_error"

    def test_disallowed_from_import(self):
        code = "from subprocess import run\n\ndef transform():\n    return run\n"
        assert failure_class(code) == "syntax_error"

    def test_disallowed_import_inside_function(self):
        # imports are structural wherever they sit, including call time
        code = "def transform():\n    import socket\n    return socket\n"
        assert failure_class(code) == "syntax_error"

    def test_relative_import(self):
        assert failure_class("from . import x\n\ndef transform():\n    return x\n") == "syntax_error"

    def test_dynamic_import_blocked_at_runtime(self):
        code = "def transform():\n    return __import__('os')\n"
        assert failure_class(code) == "syntax_error"

    def test_dotted_allowed_import(self):
        code = (
            "import torchvision.transforms as T\n\n"
            "def transform():\n    return T.Compose([T.ToTensor()])\n"
        )
        assert callable(build_pipeline(code))

    @pytest.mark.parametrize("module", ["math", "random", "numpy", "PIL"])
    def test_allow_list_members(self, module):
        code = f"import {module}\n\ndef transform():\n    return lambda image: image\n"
        assert callable(build_pipeline(code))


class TestRuntimeFailures:
    def test_module_body_raises(self):
        assert failure_class("raise ValueError('boom')\n\ndef transform():\n    pass\n") == "runtime_error"

    def test_transform_call_raises(self):
        assert failure_class("def transform():\n    raise RuntimeError('nope')\n") == "runtime_error"

    def test_transform_returns_none(self):
        assert failure_class("def transform():\n    return None\n") == "runtime_error"


class TestTimeout:
    def test_returns_value(self):
        assert run_with_timeout(lambda: 41 + 1, timeout_s=1.0) == 42

    def test_propagates_exception(self):
        def boom():
            raise KeyError("inner")

        with pytest.raises(KeyError):
            run_with_timeout(boom, timeout_s=1.0)

    def test_expiry_is_classified(self):
        def slow():
            # bounded busy work so the abandoned thread exits on its own
            deadline = time.monotonic() + 0.6
            while time.monotonic() < deadline:
                pass
            return "late"

        with pytest.raises(CandidateFailure) as exc:
            run_with_timeout(slow, timeout_s=0.05)
        assert exc.value.error_class == "timeout"
