"""JSON Schemas for every structured agent response, plus the registry."""

from __future__ import annotations

import threading

import jsonschema

from ..cohort import NOTE_KINDS


class SchemaRegistryError(ValueError):
    pass


class SchemaRegistry:
    def __init__(self):
        self._schemas: dict[str, dict] = {}
        self._validators: dict[str, jsonschema.protocols.Validator] = {}
        self._lock = threading.Lock()

    def register(self, schema_id: str, schema: dict) -> None:
        cls = jsonschema.validators.validator_for(schema, default=jsonschema.Draft202012Validator)
        try:
            cls.check_schema(schema)
        except jsonschema.SchemaError as exc:
            raise SchemaRegistryError(f"schema {schema_id!r} is invalid: {exc.message}") from exc
        with self._lock:
            if schema_id in self._schemas:
                raise SchemaRegistryError(f"schema {schema_id!r} already registered")
            self._schemas[schema_id] = schema
            self._validators[schema_id] = cls(schema)

    def __contains__(self, schema_id: str) -> bool:
        return schema_id in self._schemas

    def schema(self, schema_id: str) -> dict:
        return self._schemas[schema_id]

    def errors(self, schema_id: str, payload) -> list[str]:
        """Validation messages for ``payload``; empty when it conforms."""
        if schema_id not in self._validators:
            raise SchemaRegistryError(f"schema {schema_id!r} is not registered")
        errs = sorted(self._validators[schema_id].iter_errors(payload), key=lambda e: list(e.absolute_path))
        return [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errs]


_nullable_num = {"type": ["number", "null"]}

DISCOVERY = {
    "type": "object",
    "required": ["features"],
    "properties": {
        "features": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "description", "instructions", "aggregated"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "description": {"type": "string"},
                    "instructions": {"type": "string"},
                    "subgroups": {"type": "array", "items": {"type": "string"}},
                    "aggregated": {"type": "boolean"},
                    "aggregation_sources": {"type": "array", "items": {"type": "string"}},
                    "note_kinds": {"type": "array", "items": {"enum": list(NOTE_KINDS)}},
                    "value_kind": {"enum": ["number", "binary", "count", "percentage"]},
                },
            },
        }
    },
}

EXTRACTION = {
    "type": "object",
    "required": ["values"],
    "properties": {
        "values": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["subgroup", "value"],
                "properties": {
                    "subgroup": {"type": ["string", "null"]},
                    "value": {"type": ["number", "string", "null"]},
                },
            },
        }
    },
}

VALIDATION = {
    "type": "object",
    "required": ["verdict", "rationale"],
    "properties": {
        "verdict": {"enum": ["proceed", "remove", "re_extract", "post_process"]},
        "revised_instructions": {"type": ["string", "null"]},
        "rationale": {"type": "string"},
    },
    "if": {"properties": {"verdict": {"enum": ["re_extract", "post_process"]}}},
    "then": {
        "required": ["revised_instructions"],
        "properties": {"revised_instructions": {"type": "string", "minLength": 1}},
    },
    "else": {"properties": {"revised_instructions": {"type": "null"}}},
}

POST_PROCESS = {
    "type": "object",
    "required": ["operations"],
    "properties": {
        "operations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["op"],
                "properties": {
                    "op": {"enum": ["identity", "relabel", "scale", "length_to_percent", "clip", "bin", "set"]},
                    "note_id": {"type": "string"},
                    "subgroup": {"type": ["string", "null"]},
                    "mapping": {"type": "object", "additionalProperties": {"type": "string"}},
                    "factor": {"type": "number"},
                    "core_length_mm": {"type": "number", "exclusiveMinimum": 0},
                    "lo": {"type": "number"},
                    "hi": {"type": "number"},
                    "edges": {"type": "array", "items": {"type": "number"}},
                    "value": _nullable_num,
                    "where_gt": {"type": "number"},
                },
            },
        }
    },
}

AGGREGATION = {
    "type": "object",
    "required": ["program"],
    "properties": {"program": {"type": "string", "minLength": 1}},
}

CLFG_EXTRACTION = {
    "type": "object",
    "required": ["regions"],
    "properties": {
        "regions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["region", "cancer_present"],
                "properties": {
                    "region": {"type": "string"},
                    "cancer_present": {"enum": [0, 1, None]},
                    "gleason_primary": {"type": ["integer", "null"], "minimum": 0, "maximum": 5},
                    "gleason_secondary": {"type": ["integer", "null"], "minimum": 0, "maximum": 5},
                    "percent_involved": {"type": ["number", "null"], "minimum": 0, "maximum": 100},
                },
            },
        }
    },
}

BUILTIN = {
    "discovery": DISCOVERY,
    "extraction": EXTRACTION,
    "validation": VALIDATION,
    "post_process": POST_PROCESS,
    "aggregation": AGGREGATION,
    "clfg_extraction": CLFG_EXTRACTION,
}


def default_registry() -> SchemaRegistry:
    reg = SchemaRegistry()
    for sid, schema in BUILTIN.items():
        reg.register(sid, schema)
    return reg
