"""
DRF serializers validating every file format the runtime reads, plus the
run configuration assembled from settings and command-line flags.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, List, Tuple, Type, Union

from rest_framework import serializers

from .exceptions import ConfigurationError, DemoLoadError

logger = logging.getLogger(__name__)

IDENTIFIER = r"^[A-Za-z_][A-Za-z0-9_]*$"
ENV_KINDS = ("minishop", "counter", "transcript")
DEMO_KINDS = ("code", "output", "obs", "error")


def first_error_path(errors: Any, path: str = "") -> Tuple[str, str]:
    """Walk DRF ``errors`` and return (path, message) of the first leaf error."""
    if isinstance(errors, dict):
        for key, value in errors.items():
            if isinstance(key, int):
                step = f"{path}[{key}]"
            elif key == "non_field_errors":
                step = path
            else:
                step = f"{path}.{key}" if path else str(key)
            if value:
                return first_error_path(value, step)
    elif isinstance(errors, list):
        for index, value in enumerate(errors):
            if isinstance(value, (dict, list)):
                if value:
                    return first_error_path(value, f"{path}[{index}]")
            else:
                return path, str(value)
    return path, str(errors)


class TextField(serializers.CharField):
    """CharField that keeps whitespace and accepts empty text."""

    def __init__(self, **kwargs):
        kwargs.setdefault("allow_blank", True)
        kwargs.setdefault("trim_whitespace", False)
        super().__init__(**kwargs)


# Demo files


class DemoEntrySerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=DEMO_KINDS)
    text = TextField()


class DemoReplSerializer(serializers.Serializer):
    name = serializers.RegexField(IDENTIFIER)
    task = TextField()
    entries = DemoEntrySerializer(many=True)


class DemoFileSerializer(serializers.Serializer):
    repls = DemoReplSerializer(many=True)

    def validate_repls(self, value):
        seen = set()
        for repl in value:
            if repl["name"] in seen:
                raise serializers.ValidationError(f"duplicate REPL name '{repl['name']}'")
            seen.add(repl["name"])
        return value


class BugPatchSerializer(serializers.Serializer):
    """One demo patch: replace entry ``entry`` of REPL ``repl`` with ``text``."""

    repl = serializers.RegexField(IDENTIFIER)
    entry = serializers.IntegerField(min_value=0)
    text = TextField()


# Playbooks


class PlaybookTurnSerializer(serializers.Serializer):
    expect_prefix = TextField(required=False, allow_null=True, default=None)
    completion = TextField()


class PlaybookTurnField(serializers.Field):
    """A playbook turn given either as a bare completion string or as an object."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            return {"expect_prefix": None, "completion": data}
        turn = PlaybookTurnSerializer(data=data)
        turn.is_valid(raise_exception=True)
        return dict(turn.validated_data)

    def to_representation(self, value):
        return value


class PlaybookSerializer(serializers.Serializer):
    """``{"<repl-name>": [turn, ...]}``"""

    queues = serializers.DictField(child=serializers.ListField(child=PlaybookTurnField()))

    def validate_queues(self, value):
        for name in value:
            if not re.match(IDENTIFIER, name):
                raise serializers.ValidationError(f"invalid REPL name '{name}'")
        return value


# Environments


class CatalogItemSerializer(serializers.Serializer):
    id = serializers.CharField()
    title = serializers.CharField()
    price = serializers.FloatField()
    attributes = serializers.ListField(child=serializers.CharField(), default=list)
    options = serializers.DictField(
        child=serializers.ListField(child=serializers.CharField()), default=dict
    )
    description = TextField(default="")
    features = TextField(default="")
    reviews = TextField(default="")

    def validate_price(self, value):
        if value <= 0:
            raise serializers.ValidationError("price must be positive")
        return value


class CatalogSerializer(serializers.ListSerializer):
    child = CatalogItemSerializer()

    def validate(self, attrs):
        ids = [item["id"] for item in attrs]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise serializers.ValidationError(f"duplicate item ids: {', '.join(duplicates)}")
        return attrs


class ShopTaskSerializer(serializers.Serializer):
    instruction = serializers.CharField()
    required_attributes = serializers.ListField(child=serializers.CharField(), default=list)
    max_price = serializers.FloatField()
    required_options = serializers.DictField(child=serializers.CharField(), default=dict)
    target_ids = serializers.ListField(child=serializers.CharField(), min_length=1)


class TranscriptStepSerializer(serializers.Serializer):
    obs = TextField()
    action = serializers.CharField()


# Run configuration


class RunConfigSerializer(serializers.Serializer):
    env = serializers.ChoiceField(choices=ENV_KINDS, default="minishop")
    catalog = serializers.CharField(required=False, allow_null=True, default=None)
    tasks = serializers.CharField(required=False, allow_null=True, default=None)
    demos = serializers.CharField(required=False, allow_null=True, default=None)
    playbook = serializers.CharField(required=False, allow_null=True, default=None)
    http_base = serializers.CharField(required=False, allow_null=True, default=None)
    model = serializers.CharField(required=False, allow_null=True, default=None)
    temperature = serializers.FloatField(
        required=False, allow_null=True, default=None, min_value=0
    )
    no_subtask_repls = serializers.BooleanField(default=False)
    drop_repls = serializers.ListField(child=serializers.RegexField(IDENTIFIER), default=list)
    inject_bugs = serializers.CharField(required=False, allow_null=True, default=None)
    max_env_steps = serializers.IntegerField(min_value=1)
    max_llm_calls = serializers.IntegerField(min_value=1)
    max_depth = serializers.IntegerField(min_value=1)
    step_budget = serializers.IntegerField(min_value=1)
    results_per_page = serializers.IntegerField(min_value=1)
    workers = serializers.IntegerField(min_value=1, default=1)
    out = serializers.CharField(required=False, allow_null=True, default=None)
    assert_sr = serializers.FloatField(
        required=False, allow_null=True, default=None, min_value=0, max_value=1
    )
    limit = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=1)
    seed = serializers.IntegerField(default=0)

    def validate(self, attrs):
        if attrs.get("playbook") and attrs.get("http_base"):
            raise serializers.ValidationError(
                "choose exactly one provider: --playbook or --http-base"
            )
        for key in ("catalog", "tasks", "demos", "playbook", "inject_bugs"):
            path = attrs.get(key)
            if path and not Path(path).exists():
                raise serializers.ValidationError({key: f"file not found: {path}"})
        if attrs["env"] == "transcript" and not attrs.get("tasks"):
            raise serializers.ValidationError(
                {"tasks": "--tasks must name the transcript file for --env transcript"}
            )
        return attrs


def read_json(path: Union[str, Path], what: str = "file") -> Any:
    """Read a JSON document, turning I/O and decode failures into ConfigurationError."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as error:
        raise ConfigurationError(
            f"{what} {path} is not valid JSON: {error}",
            context={"path": str(path), "line": error.lineno},
        ) from None


def validate_data(
    data: Any,
    serializer_class: Type[serializers.BaseSerializer],
    what: str,
    many: bool = False,
    error_class: Type[ConfigurationError] = ConfigurationError,
) -> Any:
    """
    Validate already-decoded data and return the validated payload.

    Raises:
        ConfigurationError (or ``error_class``) naming the first offending entry
    """
    if serializer_class is CatalogSerializer:
        serializer = CatalogSerializer(data=data)
    else:
        serializer = serializer_class(data=data, many=many)
    if not serializer.is_valid():
        path, message = first_error_path(serializer.errors)
        detail = f"{what}: {path}: {message}" if path else f"{what}: {message}"
        if error_class is DemoLoadError:
            raise DemoLoadError(detail, entry=path)
        raise error_class(detail, context={"errors": serializer.errors})
    return serializer.validated_data


def load_demo_file(path: Union[str, Path]) -> List[dict]:
    data = read_json(path, "demo file")
    if data in ({}, []):
        return []
    validated = validate_data(data, DemoFileSerializer, f"demo file {path}", error_class=DemoLoadError)
    return [dict(repl) for repl in validated["repls"]]


def load_bug_patches(path: Union[str, Path]) -> List[dict]:
    data = read_json(path, "bug patch file")
    validated = validate_data(data, BugPatchSerializer, f"bug patch file {path}", many=True)
    return [dict(patch) for patch in validated]


def load_playbooks(path: Union[str, Path]) -> Union[dict, List[dict]]:
    """Load a playbook, or a list of per-task playbooks."""
    data = read_json(path, "playbook")
    if isinstance(data, list):
        return [_playbook(item, f"playbook {path}[{i}]") for i, item in enumerate(data)]
    return _playbook(data, f"playbook {path}")


def _playbook(data: Any, what: str) -> dict:
    validated = validate_data({"queues": data}, PlaybookSerializer, what)
    return {name: list(turns) for name, turns in validated["queues"].items()}


def load_catalog(path: Union[str, Path]) -> List[dict]:
    data = read_json(path, "catalog")
    return [dict(item) for item in validate_data(data, CatalogSerializer, f"catalog {path}")]


def load_tasks(path: Union[str, Path]) -> List[dict]:
    data = read_json(path, "task file")
    return [dict(task) for task in validate_data(data, ShopTaskSerializer, f"task file {path}", many=True)]


def load_transcript(path: Union[str, Path]) -> List[dict]:
    data = read_json(path, "transcript")
    return [
        dict(step)
        for step in validate_data(data, TranscriptStepSerializer, f"transcript {path}", many=True)
    ]


def validate_run_config(data: dict) -> dict:
    return dict(validate_data(data, RunConfigSerializer, "run configuration"))
