import dataclasses
import importlib
import inspect
import typing

import pytest

from utils import PhaseTimer, clean_filename, env_setting, format_percent, format_score, next_odd


def module_functions(module_name):
    module = importlib.import_module(module_name)
    for name, obj in inspect.getmembers(module):
        if getattr(obj, "__module__", None) != module_name or name.startswith("__"):
            continue
        if inspect.isfunction(obj):
            yield f"{module_name}.{name}", obj
        elif inspect.isclass(obj):
            for method_name, method in inspect.getmembers(obj, inspect.isfunction):
                if dataclasses.is_dataclass(obj) and method_name == "__init__":
                    continue
                if method.__qualname__.startswith(obj.__name__) and (
                        method_name == "__init__" or not method_name.startswith("__")):
                    yield f"{module_name}.{name}.{method_name}", method


class TestEnvSetting:
    def test_default_when_unset(self, monkeypatch):
        monkeypatch.delenv("ONDAT_SOMETHING", raising=False)
        assert env_setting("SOMETHING", 7, int) == 7

    def test_cast(self, monkeypatch):
        monkeypatch.setenv("ONDAT_SOMETHING", "0.25")
        assert env_setting("SOMETHING", 1.0, float) == 0.25

    def test_malformed_value_names_variable(self, monkeypatch):
        monkeypatch.setenv("ONDAT_SOMETHING", "many")
        with pytest.raises(ValueError, match="ONDAT_SOMETHING"):
            env_setting("SOMETHING", cast=int)


class TestFormatting:
    def test_next_odd(self):
        assert [next_odd(v) for v in (3, 4, 4.2, 19.5)] == [3, 5, 5, 21]

    def test_clean_filename(self):
        assert clean_filename("S1#syn2") == "S1_syn2"
        assert clean_filename("a b/c") == "a_bc"
        assert clean_filename("") == "series"

    def test_scores_and_percents(self):
        assert format_score(0.123456) == "0.12346"
        assert format_score(None) == "N/A"
        assert format_percent(12.5) == "+12.500%"
        assert format_percent(-3) == "-3.000%"


class TestPhaseTimer:
    def test_accumulates_per_phase(self):
        timer = PhaseTimer()
        for _ in range(2):
            with timer.phase("augment"):
                pass
        with timer.phase("validation"):
            pass
        assert set(timer.as_dict()) == {"augment", "validation"}
        assert timer.total() == pytest.approx(sum(timer.as_dict().values()))

    def test_records_phase_that_raises(self):
        timer = PhaseTimer()
        with pytest.raises(RuntimeError), timer.phase("augment"):
            raise RuntimeError("boom")
        assert "augment" in timer.as_dict()


@pytest.mark.parametrize("module_name", ["app", "batch_processor", "scoring_engine", "utils"])
def test_public_signatures_are_annotated(module_name):
    for qualified, fn in module_functions(module_name):
        hints = typing.get_type_hints(fn)
        assert "return" in hints, f"{qualified} has no return annotation"
        missing = [p for p in inspect.signature(fn).parameters
                   if p not in ("self", "cls") and p not in hints]
        assert not missing, f"{qualified} leaves {missing} unannotated"
