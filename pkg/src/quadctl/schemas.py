"""JSON schemas for the command-line inputs."""

NUMBER = {"type": "number"}
POS = {"type": "number", "exclusiveMinimum": 0}
VECTOR = {"type": "array", "items": NUMBER, "minItems": 1}
DENSE = {"type": "array", "items": VECTOR, "minItems": 1}
COO = {
    "type": "object",
    "properties": {
        "coo": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [
                    {"type": "integer", "minimum": 0},
                    {"type": "integer", "minimum": 0},
                    NUMBER,
                ],
                "minItems": 3,
                "maxItems": 3,
            },
        }
    },
    "required": ["coo"],
    "additionalProperties": False,
}
MATRIX = {"oneOf": [DENSE, COO]}
MATRIX_OR_SCALAR = {"oneOf": [NUMBER, VECTOR, DENSE]}
EPS = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
BASIS = {"enum": ["X", "Y", "Z", "YTILDE"]}

SYSTEM_PROPS = {
    "d": {"type": "integer", "minimum": 1},
    "masses": {"type": "array", "items": NUMBER, "minItems": 1},
    "potential": MATRIX,
    "damping": MATRIX,
    "forcing": VECTOR,
    "springs": {
        "type": "array",
        "items": {
            "type": "array",
            "prefixItems": [
                {"type": "integer", "minimum": 0},
                {"type": "integer", "minimum": 0},
                NUMBER,
            ],
            "minItems": 3,
            "maxItems": 3,
        },
    },
    "q0": VECTOR,
    "qdot0": VECTOR,
    "basis": BASIS,
    "seed": {"type": "integer", "minimum": 0},
}
_SYSTEM_REQ = {"required": ["masses"], "anyOf": [{"required": ["potential"]}, {"required": ["springs"]}]}


def _obj(props, required, **extra):
    out = {"type": "object", "properties": props, "required": required, "additionalProperties": False}
    out.update(extra)
    return out


SIMULATE = _obj(
    {**SYSTEM_PROPS, "T": {"type": "number", "minimum": 0}, "epsilon": EPS},
    ["masses", "q0", "qdot0", "T"],
    anyOf=_SYSTEM_REQ["anyOf"],
)

ENERGY = _obj(
    {
        **SYSTEM_PROPS,
        "T": {"type": "number", "minimum": 0},
        "epsilon": EPS,
        "gamma": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "noise": {"enum": ["worst", "random"]},
    },
    ["masses", "q0", "qdot0", "T"],
    anyOf=_SYSTEM_REQ["anyOf"],
)

HARDNESS = _obj(
    {
        **SYSTEM_PROPS,
        "t": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}]},
    },
    ["masses", "t"],
    anyOf=_SYSTEM_REQ["anyOf"],
)

RICCATI = _obj(
    {
        "F0": MATRIX_OR_SCALAR,
        "F1": MATRIX_OR_SCALAR,
        "F2": MATRIX_OR_SCALAR,
        "F3": MATRIX_OR_SCALAR,
        "y0": MATRIX_OR_SCALAR,
        "w": MATRIX_OR_SCALAR,
        "T": {"type": "number", "minimum": 0},
        "mode": {"enum": ["ivp", "bvp"]},
        "convention": {"enum": ["minus", "plus"]},
        "epsilon": EPS,
        "seed": {"type": "integer", "minimum": 0},
    },
    ["F0", "F1", "F2", "F3", "y0", "T"],
)

LQR = _obj(
    {
        "F": DENSE,
        "G": {"oneOf": [VECTOR, DENSE]},
        "Q": DENSE,
        "R": {"oneOf": [NUMBER, DENSE]},
        "Pf": DENSE,
        "tf": POS,
        "x0": VECTOR,
        "two_pass": {"type": "boolean"},
        "refine": {"type": "integer", "minimum": 1},
        "epsilon": EPS,
        "seed": {"type": "integer", "minimum": 0},
    },
    ["F", "G", "Q", "R", "Pf", "tf", "x0"],
)

CONJUGATE = _obj(
    {
        "Lqq": MATRIX_OR_SCALAR,
        "Lqdq": MATRIX_OR_SCALAR,
        "Lqdqd": MATRIX_OR_SCALAR,
        "interval": {"type": "array", "items": NUMBER, "minItems": 2, "maxItems": 2},
    },
    ["Lqq", "Lqdq", "Lqdqd", "interval"],
)

THEOREMS = ["ham_canon", "qpe_variant", "oscillators", "vector_riccati", "hjb", "matrix_riccati_pipeline"]

RESOURCE_PARAMS = {"type": "object", "additionalProperties": {"oneOf": [NUMBER, {"type": "object"}]}}

RESOURCES = _obj(
    {"theorem": {"enum": THEOREMS}, "params": RESOURCE_PARAMS},
    ["theorem", "params"],
)

BY_COMMAND = {
    "simulate": SIMULATE,
    "energy": ENERGY,
    "hardness": HARDNESS,
    "riccati": RICCATI,
    "lqr": LQR,
    "conjugate": CONJUGATE,
    "resources": RESOURCES,
}
