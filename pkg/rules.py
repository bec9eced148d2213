"""
Reglas atómicas incorporadas.

Cada regla decide un hecho a partir de la vista `Query`; todas leen las
mismas entradas sea cual sea el valor de las variables, de modo que el
registro del modo exacto ve siempre las mismas claves.
"""
import logging
from fractions import Fraction
from typing import Callable, Dict, List, Optional

import numpy as np

from config import settings
from equiv import EQ, Handle, handle_leq, in_domain
from errors import RuleError
from hierarchy import encode_bits
from relstruct import Signature
from sampler import Query, Tup, TypeRule

logger = logging.getLogger(__name__)

HALF = Fraction(1, 2)
UNARY_P = Signature.of(("P", 1))


def _class_handles(q: Query, x: int) -> List[Handle]:
    """Handles de clase de x: relaciones infinitas de longitud 1 cuyo dominio contiene a x."""
    S = q.ambient
    return [
        q.handle(d.id, x) for d in q.K.infinite_eqrels()
        if d.length == 1 and in_domain(d, S, x)
    ]


def _minimal(q: Query, handles: List[Handle]) -> List[Handle]:
    """Se queda con los handles sin otro estrictamente más fino."""
    S = q.ambient
    return [h for h in handles if not any(g != h and handle_leq(g, h, S, q.K) for g in handles)]


# ---------------------------------------------------------------------------
# Una clase al azar
# ---------------------------------------------------------------------------

def _classcoin(name: str, tup: Tup, q: Query) -> np.ndarray:
    x = tup[0]
    handles = _class_handles(q, x)
    h = handles[0] if handles else Handle(EQ, x)
    return q.xi(q.blur(h)) <= HALF


def _first_finite(q: Query):
    finite = q.K.finite_eqrels()
    if not finite:
        raise RuleError(f"{q.K.name} no tiene relaciones de cuenta finita")
    return finite[0]


def _twoclass_pick(name: str, tup: Tup, q: Query) -> np.ndarray:
    decl = _first_finite(q)
    if not in_domain(decl, q.ambient, tup[0]):
        return np.zeros(q.size, dtype=bool)
    label = q.eta(decl.id, tup)
    low = q.xi(q.blur()) <= HALF
    return ((label == 1) & low) | ((label == 2) & ~low)


def _twoclass_pick_bad(name: str, tup: Tup, q: Query) -> np.ndarray:
    decl = _first_finite(q)
    if not in_domain(decl, q.ambient, tup[0]):
        return np.zeros(q.size, dtype=bool)
    return q.eta(decl.id, tup) == 1


def _twoclass_pick_labeled(name: str, tup: Tup, q: Query) -> np.ndarray:
    """Igual que twoclass_pick pero sobre la clase con las etiquetas como predicados."""
    local = q.local
    for symbol in ("R_r_1", "R_r_2"):
        if symbol not in local.sig:
            raise RuleError(f"Falta el predicado de etiqueta {symbol}")
    low = q.xi(q.blur()) <= HALF
    first = local.holds("R_r_1", tup)
    second = local.holds("R_r_2", tup)
    return (first & low) | (second & ~low)


# ---------------------------------------------------------------------------
# Dos relaciones
# ---------------------------------------------------------------------------

def _two_eq_demo(name: str, tup: Tup, q: Query) -> np.ndarray:
    x = tup[0]
    handles = _minimal(q, _class_handles(q, x)[:2]) or [Handle(EQ, x)]
    return q.xi(q.blur(*handles)) <= HALF


def _tournament(name: str, tup: Tup, q: Query) -> np.ndarray:
    x, y = tup
    if x == y:
        return np.zeros(q.size, dtype=bool)
    b = q.blur(Handle(EQ, x), Handle(EQ, y))
    return q.precedes(b, Handle(EQ, x), Handle(EQ, y))


# ---------------------------------------------------------------------------
# Reglas triviales y plantadas
# ---------------------------------------------------------------------------

def _constant_empty(name: str, tup: Tup, q: Query) -> np.ndarray:
    return np.zeros(q.size, dtype=bool)


def _elem_one(name: str, tup: Tup, q: Query) -> np.ndarray:
    # lee la identidad del elemento
    return np.full(q.size, tup[0] == 1)


# ---------------------------------------------------------------------------
# Sobre la clase con puntos de clase
# ---------------------------------------------------------------------------

def _classcoin_doubled(name: str, tup: Tup, q: Query) -> np.ndarray:
    """(x, y) ∈ P según la moneda del punto de clase y, o la de x si y no es de clase."""
    x, y = tup
    if "C" not in q.local.sig:
        raise RuleError("Falta el predicado de puntos de clase C")
    z = y if q.local.holds("C", (y,)) else x
    return q.xi(q.blur(Handle(EQ, z))) <= HALF


# ---------------------------------------------------------------------------
# Predicados U_i de un valor real
# ---------------------------------------------------------------------------

def ap_array_rule(p: Optional[int] = None) -> TypeRule:
    """U_i(x) es el bit i de la media de ξ sobre los blurs de {x} sin handles de igualdad.

    Sin relaciones declaradas, o si no queda ninguno, se usan todos los blurs.
    """
    p = settings.AP_PRECISION if p is None else p
    target = Signature.of(*((f"U{i}", 1) for i in range(1, p + 1)))

    def decide(name: str, tup: Tup, q: Query) -> np.ndarray:
        blurs = [b for b in q.blurs if all(h.kind != EQ for h in b)] if q.K.eqrels else []
        value = np.mean(np.stack([q.xi(b) for b in blurs or q.blurs]), axis=0)
        return encode_bits(value, p)[:, int(name[1:]) - 1]

    return TypeRule(
        name="ap_array", target=target, decide=decide,
        description=f"bits 1..{p} de la media de las variables de los blurs",
    )


# ---------------------------------------------------------------------------
# Registro
# ---------------------------------------------------------------------------

RULES: Dict[str, Callable[[], TypeRule]] = {
    "classcoin": lambda: TypeRule(
        "classcoin", UNARY_P, _classcoin, (HALF,), "cada clase entra en P con probabilidad 1/2",
    ),
    "twoclass_pick": lambda: TypeRule(
        "twoclass_pick", UNARY_P, _twoclass_pick, (HALF,), "una de las dos clases, elegida con ξ_∅",
    ),
    "twoclass_pick_bad": lambda: TypeRule(
        "twoclass_pick_bad", UNARY_P, _twoclass_pick_bad, (), "la clase con etiqueta 1",
    ),
    "twoclass_pick_labeled": lambda: TypeRule(
        "twoclass_pick_labeled", UNARY_P, _twoclass_pick_labeled, (HALF,),
        "twoclass_pick leyendo R_r_1 y R_r_2 del tipo local",
    ),
    "two_eq_demo": lambda: TypeRule(
        "two_eq_demo", UNARY_P, _two_eq_demo, (HALF,), "moneda del blur de las dos clases de x",
    ),
    "tournament": lambda: TypeRule(
        "tournament", Signature.of(("T", 2)), _tournament, (), "T(x, y) si x precede a y en el orden del blur",
    ),
    "constant_empty": lambda: TypeRule("constant_empty", UNARY_P, _constant_empty, (), "P vacío"),
    "elem_one": lambda: TypeRule("elem_one", UNARY_P, _elem_one, (), "P = {1}; no es intercambiable"),
    "classcoin_doubled": lambda: TypeRule(
        "classcoin_doubled", Signature.of(("P", 2)), _classcoin_doubled, (HALF,),
        "classcoin sobre los puntos de clase",
    ),
    "ap_array": ap_array_rule,
}


def builtin_rules(name: str) -> TypeRule:
    if name not in RULES:
        raise RuleError(f"Regla desconocida: {name}. Disponibles: {', '.join(sorted(RULES))}")
    rule = RULES[name]()
    logger.debug(f"📦 Regla {rule.name} sobre {rule.target.names}")
    return rule
