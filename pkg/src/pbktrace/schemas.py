"""JSON Schemas for the records the CLI emits."""

_NUM = {"type": "number"}
_INT = {"type": "integer"}

GEOMETRIC_SIDE_RESULT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "GeometricSideResult",
    "type": "object",
    "required": ["kind", "m1", "m2", "value", "diagonal_term", "tail_majorant", "c_max"],
    "properties": {
        "kind": {"type": "string", "enum": ["petersson2", "bk-opposite"]},
        "m1": _INT,
        "m2": _INT,
        "value": _NUM,
        "diagonal_term": _NUM,
        "tail_majorant": {"type": "number", "minimum": 0},
        "c_max": {"type": "integer", "minimum": 1},
        "partial_terms": {
            "type": "array",
            "description": "rows [c, H(m1, m2, c), kernel factor, term]",
            "items": {"type": "array", "prefixItems": [_INT, _NUM, _NUM, _NUM], "minItems": 4, "maxItems": 4},
        },
    },
    "additionalProperties": False,
}

VERIFICATION_REPORT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "VerificationReport",
    "type": "object",
    "required": ["rows", "g11", "g11_tail_majorant", "c_max", "tolerance", "tail_shrink_factor", "passed"],
    "properties": {
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["m", "lambda_computed", "lambda_oracle", "abs_error", "tail_majorant",
                             "ratio_error_bound", "passed"],
                "properties": {
                    "m": _INT,
                    "lambda_computed": _NUM,
                    "lambda_oracle": _NUM,
                    "abs_error": {"type": "number", "minimum": 0},
                    "tail_majorant": {"type": "number", "minimum": 0},
                    "ratio_error_bound": _NUM,
                    "passed": {"type": "boolean"},
                },
                "additionalProperties": False,
            },
        },
        "g11": _NUM,
        "g11_tail_majorant": {"type": "number", "minimum": 0},
        "c_max": {"type": "integer", "minimum": 11},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "tail_shrink_factor": _NUM,
        "passed": {"type": "boolean"},
        "notes": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}

SCHEMAS = {"GeometricSideResult": GEOMETRIC_SIDE_RESULT, "VerificationReport": VERIFICATION_REPORT}
