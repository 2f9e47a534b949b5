"""JSON Schemas for every JSON artifact the CLI writes."""

from __future__ import annotations

_CHANGEPOINT = {
    "type": "object",
    "required": ["t", "slope_change", "sign", "dual_margin"],
    "properties": {
        "t": {"type": "integer", "minimum": 1},
        "slope_change": {"type": "number"},
        "sign": {"enum": [-1, 1]},
        "cluster_size": {"type": "integer", "minimum": 1},
        "dual_margin": {"type": "number"},
    },
}

CHANGEPOINTS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["points", "alternating", "staircase_segments"],
    "properties": {
        "points": {"type": "array", "items": _CHANGEPOINT},
        "alternating": {"type": "boolean"},
        "staircase_segments": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "integer", "minimum": 0},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "status": {"type": "string"},
        "manifest_hash": {"type": "string"},
    },
}

KKT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["passed", "lambda", "max_tube_violation", "boundary_residuals"],
    "properties": {
        "passed": {"type": "boolean"},
        "lambda": {"type": "number", "minimum": 0},
        "order": {"enum": [1, 2]},
        "max_tube_violation": {"type": "number"},
        "boundary_residuals": {
            "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2,
        },
        "sign_violations": {"type": "array", "items": {"type": "integer"}},
        "interior_active": {"type": "array", "items": {"type": "integer"}},
        "status": {"type": "string"},
        "manifest_hash": {"type": "string"},
    },
}

TRACE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["rounds", "final_points"],
    "properties": {
        "rounds": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["segment", "lambda", "report", "accepted"],
                "properties": {
                    "segment": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 1},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                    "lambda": {"type": "number", "exclusiveMinimum": 0},
                    "report": CHANGEPOINTS_SCHEMA,
                    "accepted": {"type": "array", "items": _CHANGEPOINT},
                },
            },
        },
        "final_points": {"type": "array", "items": _CHANGEPOINT},
        "monitor": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["t", "margin", "lambda", "round"],
                "properties": {
                    "t": {"type": "integer", "minimum": 1},
                    "margin": {"type": "number"},
                    "lambda": {"type": "number"},
                    "round": {"type": "integer", "minimum": 0},
                },
            },
        },
        "status": {"type": "string"},
        "manifest_hash": {"type": "string"},
    },
}

SPEC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["n", "knots", "sigma", "seed"],
    "properties": {
        "n": {"type": "integer", "minimum": 3},
        "knots": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "array",
                "prefixItems": [{"type": "integer", "minimum": 1}, {"type": "number"}],
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "sigma": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
    },
}

LAMBDA_MAX_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["lambda_max", "order"],
    "properties": {
        "lambda_max": {"type": "number", "minimum": 0},
        "order": {"enum": [1, 2]},
        "manifest_hash": {"type": "string"},
    },
}

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["subcommand", "parameters", "parameter_hash", "status"],
    "properties": {
        "subcommand": {"type": "string"},
        "parameters": {"type": "object"},
        "parameter_hash": {"type": "string", "pattern": "^[0-9a-f]{16}$"},
        "status": {"type": "string"},
        "package_version": {"type": "string"},
        "noise_generator": {"type": "string"},
    },
}
