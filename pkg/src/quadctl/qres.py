"""Leading-order resource estimates for block-encoding constructions.

A block encoding is tracked as a triple ``(alpha, a, eps)`` (subnormalization,
ancilla count, error) together with symbolic gate and query costs. Every
``O(.)`` constant is 1, every logarithm is base 2 and floored at 1, and
polylog factors are expanded as the product of the listed logs. Numbers
produced here are in leading-order units, not absolute gate counts.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import KappaTooSmall, MissingParameter


def lg(x):
    """``max(1, log2 x)`` as a sympy expression (infinite for infinite ``x``)."""
    x = sp.sympify(x)
    if x in (sp.zoo, sp.oo):
        return sp.oo
    if x.is_number:
        return sp.Integer(1) if x <= 2 else sp.log(x, 2)
    return sp.Max(sp.Integer(1), sp.log(x, 2))


def _num(x):
    return sp.nsimplify(x) if isinstance(x, int) else sp.sympify(x)


@dataclass(frozen=True)
class BETriple:
    """``(alpha, a, eps)`` block-encoding parameters with cost expressions."""

    alpha: sp.Expr
    a: sp.Expr
    eps: sp.Expr
    gate_cost: sp.Expr = sp.Integer(0)
    query_cost: sp.Expr = sp.Integer(1)
    notes: tuple = ()

    def __post_init__(self):
        for name in ("alpha", "a", "eps", "gate_cost", "query_cost"):
            object.__setattr__(self, name, _num(getattr(self, name)))
        if self.alpha.is_number and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.eps.is_number and self.eps < 0:
            raise ValueError("eps must be nonnegative")

    def as_tuple(self):
        return (self.alpha, self.a, self.eps)

    def evaluate(self):
        """Floats of every field."""
        return {k: float(getattr(self, k)) for k in ("alpha", "a", "eps", "gate_cost", "query_cost")}


def sparse_encode(s_r, s_c, a, eps):
    """Single-query encoding of a sparse matrix: ``(sqrt(s_r s_c), a + 3, eps)``."""
    if s_r < 1 or s_c < 1:
        raise ValueError("sparsities must be at least 1")
    s_r, s_c, a, eps = map(_num, (s_r, s_c, a, eps))
    gates = a + lg(s_r * s_c / eps) ** sp.Rational(5, 2) if eps != 0 else a
    return BETriple(sp.sqrt(s_r * s_c), a + 3, eps, gates, sp.Integer(1))


def add(t1, t2):
    """Sum: ``(alpha + beta, a + b, beta eps + alpha delta)``."""
    return BETriple(
        t1.alpha + t2.alpha,
        t1.a + t2.a,
        t2.alpha * t1.eps + t1.alpha * t2.eps,
        t1.gate_cost + t2.gate_cost,
        t1.query_cost + t2.query_cost,
    )


def multiply(t1, t2):
    """Product: ``(alpha beta, a + b, alpha delta + beta eps)``."""
    return BETriple(
        t1.alpha * t2.alpha,
        t1.a + t2.a,
        t1.alpha * t2.eps + t2.alpha * t1.eps,
        t1.gate_cost + t2.gate_cost,
        t1.query_cost + t2.query_cost,
    )


def complement(t):
    """One extra ancilla, same subnormalization and error."""
    return BETriple(t.alpha, t.a + 1, t.eps, t.gate_cost, t.query_cost)


def inversion_delta(kappa, eps):
    """Largest input error the inversion tolerates: ``eps / (kappa^2 log^3(kappa^2/eps))``."""
    kappa, eps = _num(kappa), _num(eps)
    return eps / (kappa**2 * lg(kappa**2 / eps) ** 3)


def invert(t, kappa, eps, check_kappa=True):
    """Encoding of the inverse of a matrix with condition number ``kappa``.

    Output ``(2 kappa, a + ceil(log2(kappa^2 log2(1/eps))), eps)``, gate cost
    ``alpha kappa (a + T_U) log^2(kappa^2/eps)``. An input error above
    :func:`inversion_delta` only triggers a warning.
    """
    if check_kappa and kappa < 2:
        raise KappaTooSmall(f"kappa must be at least 2, got {kappa}")
    kappa, eps = _num(kappa), _num(eps)
    extra = sp.ceiling(lg(kappa**2 * lg(1 / eps)))
    gates = t.alpha * kappa * (t.a + t.gate_cost) * lg(kappa**2 / eps) ** 2
    delta = inversion_delta(kappa, eps)
    notes = (f"requires input error <= {sp.N(delta, 6)}",)
    if t.eps.is_number and delta.is_number and t.eps > delta:
        warnings.warn(
            f"input error {float(t.eps):.3g} exceeds the inversion requirement {float(delta):.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return BETriple(2 * kappa, t.a + extra, eps, gates, t.query_cost * kappa, notes)


def qlsa_cost(kappa, eps):
    """Oracle calls of the linear-system solver: ``kappa log2(1/eps)``, at least 1."""
    return max(1.0, float(kappa) * max(1.0, math.log2(1.0 / eps)))


def norm_est_cost(kappa, gamma, s, d, T_b=1):
    """Gates to estimate ``|A^-1 b|`` to relative error ``gamma``."""
    r = kappa / gamma
    T_U = lg(d) + lg(s * r * lg(r)) ** sp.Rational(5, 2)
    expr = r * (s * T_U * lg(r) ** 2 + T_b) * lg(kappa) ** 3 * lg(lg(kappa))
    return float(expr)


@dataclass
class CostReport:
    """Evaluated leading-order costs and the formulas that produced them."""

    theorem: str
    params: dict
    query: float
    gate: float
    query_formula: str
    gate_formula: str
    derived: dict = field(default_factory=dict)
    units: str = "leading-order units"

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "params": {k: _jsonable(v) for k, v in sorted(self.params.items())},
            "query": self.query,
            "gate": self.gate,
            "query_formula": self.query_formula,
            "gate_formula": self.gate_formula,
            "derived": {k: _jsonable(v) for k, v in sorted(self.derived.items())},
            "units": self.units,
        }


def _jsonable(v):
    if isinstance(v, sp.Basic):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def pipeline_matrix_riccati(s, kappaL, kappaV, N, M, eps, m=1):
    """Compose the six block-encoding steps that output ``y(T)``.

    ``L`` is encoded sparsely and inverted, multiplied by the sparse
    ``z_in``, shifted by the unit-norm ``w``, and multiplied by the inverse
    of its ``v`` block. The final subnormalization is
    ``2 kappaV (2 kappaL s + 1)``.
    """
    s, kappaL, kappaV, N, M, eps = map(_num, (s, kappaL, kappaV, N, M, eps))
    reg = sp.ceiling(lg(m * (N + M)))
    zero = sp.Integer(0)
    # kappa < 2 is allowed here so degenerate inputs still compose
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        L = sparse_encode(s, s, reg, zero)
        t1 = invert(L, kappaL, eps, check_kappa=False)
        t2 = sparse_encode(s, s, reg, zero)
        t3 = multiply(t1, t2)
        w = sparse_encode(1, 1, reg, zero)
        t4 = add(t3, w)
        t5 = invert(t4, kappaV, eps, check_kappa=False)
        t6 = multiply(t5, t4)
    expected = 2 * kappaV * (2 * kappaL * s + 1)
    if sp.simplify(t6.alpha - expected) != 0:
        raise AssertionError("composed subnormalization disagrees with 2 kappaV (2 kappaL s + 1)")
    query = s * kappaV * kappaL * lg(1 / eps) * lg(s) * lg(kappaV) * lg(kappaL) * lg(M + N)
    return CostReport(
        theorem="matrix_riccati_pipeline",
        params={"s": s, "kappa_L": kappaL, "kappa_V": kappaV, "N": N, "M": M, "epsilon": eps, "m": m},
        query=float(query),
        gate=float(t6.gate_cost),
        query_formula="s*kappa_V*kappa_L*lg(1/eps)*lg(s)*lg(kappa_V)*lg(kappa_L)*lg(M+N)",
        gate_formula=str(t6.gate_cost),
        derived={
            "alpha": t6.alpha,
            "ancillas": t6.a,
            "eps": t6.eps,
            "triple": [t6.alpha, t6.a, t6.eps],
            "warnings": [str(w.message) for w in caught],
        },
    )


# theorem formulas over named symbols; lg is the floored base-2 log
_S = {name: sp.Symbol(name, positive=True) for name in (
    "T", "normA", "C_A", "g", "s", "d", "epsilon", "f_norm", "xT_norm", "kappa_L", "kappa_V", "N",
    "R_max", "S_max", "M_min", "M_max", "b_norm", "A_max", "sqrt_inv_norm",
)}


def _need(params, names):
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise MissingParameter(f"missing parameter(s): {', '.join(missing)}")


def _fill_derived(params):
    """Delegate ``C_A`` / ``normA`` to the mechanics module when a system is given."""
    from . import mechsys

    p = dict(params)
    if p.get("C_A") is None or p.get("normA") is None:
        if "riccati_blocks" in p:
            b = p["riccati_blocks"]
            blocks = mechsys.RiccatiBlocks(b["F0"], b["F1"], b["F2"], b["F3"], p.get("T", 1.0))
            p.setdefault("C_A", mechsys.c_of_a_bound(blocks))
            if p.get("normA") is None:
                p["normA"] = float(np.linalg.norm(blocks.A(), 2))
        elif "system" in p:
            sy = p["system"]
            system = mechsys.MechanicalSystem(
                sy["masses"],
                potential=sy.get("potential"),
                damping=sy.get("damping"),
                springs=sy.get("springs"),
            )
            if p.get("C_A") is None:
                p["C_A"] = mechsys.c_of_a_bound(system)
            if p.get("normA") is None:
                p["normA"] = mechsys.norm_bound_A(system).bound
    p.pop("riccati_blocks", None)
    p.pop("system", None)
    return p


def _k_log(m_expr, T, f_norm, xT_norm):
    return sp.ceiling(lg(m_expr * (1 + T * f_norm / xT_norm)))


def theorem_costs(which, params):
    """Leading-order query and gate counts of a headline theorem.

    ``which`` is one of ``ham_canon``, ``qpe_variant``, ``oscillators``,
    ``vector_riccati`` or ``hjb``. Optional ``f_norm`` defaults to 0 (and
    ``xT_norm`` to 1), which drops the forcing term from ``k``.
    """
    if which not in _THEOREMS:
        raise MissingParameter(f"unknown theorem {which!r}; choose from {sorted(_THEOREMS)}")
    p = _fill_derived(params)
    p.setdefault("f_norm", 0.0)
    p.setdefault("xT_norm", 1.0)
    p.setdefault("b_norm", 0.0)
    if which == "hjb" and p.get("kappa_L") is None and all(p.get(n) is not None for n in ("C_A", "T", "normA")):
        p["kappa_L"] = p["C_A"] * p["T"] * p["normA"]
    required, build = _THEOREMS[which]
    _need(p, required)
    S = _S
    query, gate, derived = build(S)
    derived = {k: v for k, v in derived.items() if v.free_symbols <= {S[n] for n in p if n in S}}
    subs = {S[k]: sp.nsimplify(v) if isinstance(v, int) else sp.Float(v, 30) for k, v in p.items() if k in S}
    q_val = float(query.subs(subs))
    g_val = float(gate.subs(subs))
    derived_vals = {k: float(v.subs(subs)) for k, v in derived.items()}
    return CostReport(
        theorem=which,
        params={k: v for k, v in p.items() if k in S},
        query=q_val,
        gate=g_val,
        query_formula=str(query),
        gate_formula=str(gate),
        derived=derived_vals,
    )


def _ham_canon(S):
    kL = S["T"] * S["normA"] * S["C_A"]
    k = _k_log(S["T"] * S["normA"], S["T"], S["f_norm"], S["xT_norm"])
    poly = S["s"] * k * lg(S["d"]) * lg(1 / S["epsilon"])
    TQ = S["g"] * kL * lg(kL) * poly
    TG = TQ * k * lg(1 / S["epsilon"]) * lg(S["normA"] * S["T"])
    TK = kL / S["epsilon"] * lg(kL) * S["s"] * k * lg(S["d"])
    return TQ, TG, {"kappa_L": kL, "k": k, "kinetic_query": TK,
                    "kinetic_gate": TK * lg(1 / S["epsilon"]) * lg(S["T"] * S["normA"]) * k}


def _qpe_variant(S):
    m = S["T"] * S["normA"]
    k = _k_log(m, S["T"], S["f_norm"], S["xT_norm"])
    TQ = m / S["epsilon"] ** 2 * lg(m) * S["s"] * k * lg(S["d"])
    TG = TQ * k * lg(1 / S["epsilon"]) * lg(m)
    # square-root encoding cost; reported only when A_max and sqrt_inv_norm are given
    sqrt_q = S["A_max"] * S["s"] * lg(1 / S["epsilon"]) / S["epsilon"] * sp.Min(S["sqrt_inv_norm"], 1 / S["epsilon"])
    return TQ, TG, {"m": m, "k": k, "sqrt_query": sqrt_q}


def _oscillators(S):
    m = S["T"] * S["s"] * sp.Max(S["R_max"] / S["M_min"], sp.sqrt(S["S_max"] / S["M_min"]))
    k = _k_log(m, S["T"], S["f_norm"], S["xT_norm"])
    TQ = m / S["epsilon"] * k * lg(1 / S["epsilon"]) * lg(m)
    TG = TQ * lg(m) * lg(1 / S["epsilon"]) * lg(S["d"]) * lg(S["M_max"] / S["M_min"])
    return TQ, TG, {"m": m, "k": k}


def _vector_riccati(S):
    kL = S["T"] * S["normA"] * S["C_A"]
    k = sp.ceiling(lg(1 + S["b_norm"] * S["T"] * sp.E**2 / S["xT_norm"]))
    base = S["g"] * kL * S["s"] * k
    TQ = base * lg(k) * lg(1 / S["epsilon"]) * lg(kL)
    TG = TQ * lg(S["d"])
    return TQ, TG, {"kappa_L": kL, "k": k}


def _hjb(S):
    kL = S["kappa_L"]
    TQ = S["s"] * S["kappa_V"] * kL * lg(1 / S["epsilon"]) * lg(S["s"]) * lg(S["kappa_V"]) * lg(kL) * lg(S["N"])
    return TQ, TQ, {"kappa_L": kL}


_THEOREMS = {
    "ham_canon": (("T", "normA", "C_A", "g", "s", "d", "epsilon"), _ham_canon),
    "qpe_variant": (("T", "normA", "s", "d", "epsilon"), _qpe_variant),
    "oscillators": (("T", "s", "R_max", "S_max", "M_min", "M_max", "d", "epsilon"), _oscillators),
    "vector_riccati": (("T", "normA", "C_A", "g", "s", "d", "epsilon"), _vector_riccati),
    "hjb": (("s", "kappa_V", "kappa_L", "N", "epsilon"), _hjb),
}
