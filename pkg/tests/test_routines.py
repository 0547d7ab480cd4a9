"""The routine interpreter: schemas, templates, execution, persistence."""

import json

import pytest

from agentmesh import catalog
from agentmesh.documents import compute_hash
from agentmesh.routines import (RoutineExecutionError,
                                RoutineInputError, RoutineSpecError,
                                execute_routine, load_routine, resolve_template,
                                routine_from_spec, save_routine, validate_input)

WEATHER_HASH = compute_hash(catalog.WEATHER_PD_TEXT)


@pytest.fixture
def receiver_routine():
    task = catalog.CATALOG["weather"]
    return routine_from_spec(catalog.receiver_routine_spec(task, WEATHER_HASH))


@pytest.fixture
def sender_routine():
    task = catalog.CATALOG["weather"]
    return routine_from_spec(catalog.sender_routine_spec(task, WEATHER_HASH))


class TestSpecParsing:
    def test_round_trip(self, receiver_routine):
        again = routine_from_spec(receiver_routine.to_json())
        assert again == receiver_routine

    def test_bad_side(self):
        with pytest.raises(RoutineSpecError):
            routine_from_spec({"protocol_hash": "x", "side": "middle"})

    def test_missing_field(self):
        with pytest.raises(RoutineSpecError):
            routine_from_spec({"side": "sender"})

    def test_not_json(self):
        with pytest.raises(RoutineSpecError):
            routine_from_spec("not json at all")


class TestValidateInput:
    SCHEMA = {"required": ["date", "location"],
              "properties": {"date": {"type": "string"}, "location": {"type": "string"}}}

    def test_accepts_valid(self):
        validate_input(self.SCHEMA, {"date": "2023-10-01", "location": "New York"})

    def test_missing_required(self):
        with pytest.raises(RoutineInputError, match="date"):
            validate_input(self.SCHEMA, {"location": "New York"})

    def test_wrong_type(self):
        with pytest.raises(RoutineInputError, match="location"):
            validate_input(self.SCHEMA, {"date": "x", "location": 7})

    def test_bool_is_not_number(self):
        with pytest.raises(RoutineInputError):
            validate_input({"properties": {"n": {"type": "number"}}, "required": []},
                           {"n": True})


class TestTemplates:
    def test_nested_lookup(self):
        assert resolve_template("$a.b.c", {"a": {"b": {"c": 5}}}) == 5

    def test_literal_passthrough(self):
        assert resolve_template({"x": "plain", "n": 3}, {}) == {"x": "plain", "n": 3}

    def test_dollar_escape(self):
        assert resolve_template("$$literal", {}) == "$literal"

    def test_unknown_binding(self):
        with pytest.raises(RoutineExecutionError):
            resolve_template("$nope.x", {"input": {}})

    def test_missing_field(self):
        with pytest.raises(RoutineExecutionError):
            resolve_template("$input.absent", {"input": {}})


class TestExecution:
    def test_weather_receiver_maps_example(self, receiver_routine):
        body = json.dumps({"date": "2023-10-01", "location": "New York"})
        out = execute_routine(receiver_routine, body, catalog.MOCK_TOOLS)
        assert json.loads(out) == {"temperature": 22.5, "precipitation": 5.0,
                                   "weatherCondition": "cloudy"}

    def test_weather_sender_serializes_payload(self, sender_routine):
        body = json.dumps({"date": "2024-09-27", "location": "London, UK"})
        out = execute_routine(sender_routine, body, {})
        assert json.loads(out) == {"date": "2024-09-27", "location": "London, UK"}

    def test_missing_date_raises_input_error(self, receiver_routine):
        with pytest.raises(RoutineInputError):
            execute_routine(receiver_routine, json.dumps({"location": "New York"}),
                            catalog.MOCK_TOOLS)

    def test_non_json_body_raises_input_error(self, receiver_routine):
        with pytest.raises(RoutineInputError):
            execute_routine(receiver_routine, "what is the weather?", catalog.MOCK_TOOLS)

    def test_unknown_tool(self, receiver_routine):
        with pytest.raises(RoutineExecutionError, match="weather_db"):
            execute_routine(receiver_routine,
                            json.dumps({"date": "2023-10-01", "location": "New York"}), {})

    def test_same_input_same_output(self, receiver_routine):
        body = json.dumps({"date": "2024-10-14", "location": "Berlin"})
        outputs = {execute_routine(receiver_routine, body, catalog.MOCK_TOOLS)
                   for _ in range(10)}
        assert len(outputs) == 1


class TestPersistence:
    def test_save_load(self, tmp_path, receiver_routine):
        path = save_routine(receiver_routine, str(tmp_path))
        assert path.endswith(f"{WEATHER_HASH}.receiver.routine")
        assert load_routine(path) == receiver_routine


class TestCatalogSpecsValidateEverywhere:
    """Every catalog task's routines must reproduce its worked example."""

    @pytest.mark.parametrize("name", [n for n in catalog.CATALOG
                                      if n not in ("food_order", "delivery")])
    def test_receiver_reproduces_example(self, name):
        task = catalog.CATALOG[name]
        routine = routine_from_spec(catalog.receiver_routine_spec(task, "0" * 40))
        out = execute_routine(routine, json.dumps(task.example_input), catalog.MOCK_TOOLS)
        assert json.loads(out) == task.example_output

    @pytest.mark.parametrize("name", list(catalog.CATALOG))
    def test_sender_reproduces_example_input(self, name):
        task = catalog.CATALOG[name]
        routine = routine_from_spec(catalog.sender_routine_spec(task, "0" * 40))
        out = execute_routine(routine, json.dumps(task.example_input), {})
        assert json.loads(out) == task.example_input
