"""
Motor de compleción: dado un conjunto de átomos fijos y una lista ordenada de
átomos libres, enumera todas las asignaciones que satisfacen las instancias
terrestres de las restricciones universales.

Las restricciones se usan por duck typing: cada una expone `variables` y un
cuerpo con `eval3(env, lookup)` (lógica de Kleene, None = desconocido) y
`atoms(env)`.
"""
import logging
from itertools import product
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from relstruct import Signature, Structure

logger = logging.getLogger(__name__)

Atom = Tuple[str, Tuple[int, ...]]
Checkpoint = Callable[[FrozenSet[Atom]], bool]


def all_atoms(sig: Signature, universe: Sequence[int]) -> List[Atom]:
    """Todos los átomos sobre el universo, ordenados por máximo elemento y luego por símbolo y tupla."""
    atoms = [
        (sym.name, tup)
        for sym in sig.symbols
        for tup in product(universe, repeat=sym.arity)
    ]
    return sorted(atoms, key=lambda a: (max(a[1]), a[0], a[1]))


class Completion:
    def __init__(
        self,
        sig: Signature,
        universe: Iterable[int],
        fixed: Mapping[Atom, bool],
        free: Sequence[Atom],
        constraints: Sequence,
        checkpoints: Optional[Mapping[int, Checkpoint]] = None,
        propagate: bool = True,
    ):
        self.sig = sig
        self.universe = tuple(sorted(set(universe)))
        self.free = list(free)
        self.position = {a: i for i, a in enumerate(self.free)}
        self.fixed = {a: v for a, v in fixed.items() if a not in self.position}
        self.checkpoints = dict(checkpoints or {})
        self.propagate = propagate
        self.values: Dict[Atom, bool] = {}
        self._instances: List[Tuple[object, Dict[str, int]]] = []
        self._touching: Dict[Atom, List[int]] = {a: [] for a in self.free}
        self._ground(constraints)

    # Instanciación de las restricciones
    def _ground(self, constraints: Sequence) -> None:
        for constraint in constraints:
            names = constraint.variables
            for values in product(self.universe, repeat=len(names)):
                env = dict(zip(names, values))
                touched = {a for a in constraint.body.atoms(env) if a in self.position}
                index = len(self._instances)
                self._instances.append((constraint.body, env))
                for atom in touched:
                    self._touching[atom].append(index)
        logger.debug(f"🔍 {len(self._instances)} instancias, {len(self.free)} átomos libres")

    def lookup(self, name: str, tup: Tuple[int, ...]) -> Optional[bool]:
        atom = (name, tup)
        if atom in self.values:
            return self.values[atom]
        if atom in self.position:
            return None
        return self.fixed.get(atom, False)

    def _eval(self, index: int) -> Optional[bool]:
        body, env = self._instances[index]
        return body.eval3(env, self.lookup)

    def _unknown_atoms(self, index: int) -> List[Atom]:
        body, env = self._instances[index]
        return [a for a in set(body.atoms(env)) if a in self.position and a not in self.values]

    def _assign(self, atom: Atom, value: bool, trail: List[Atom]) -> bool:
        """Asigna y propaga. Devuelve False ante un conflicto; `trail` acumula lo asignado."""
        queue = [(atom, value)]
        while queue:
            current, val = queue.pop()
            if current in self.values:
                if self.values[current] != val:
                    return False
                continue
            self.values[current] = val
            trail.append(current)
            for index in self._touching[current]:
                result = self._eval(index)
                if result is False:
                    return False
                if result is None and self.propagate:
                    unknown = self._unknown_atoms(index)
                    if len(unknown) == 1:
                        forced = self._forced_value(index, unknown[0])
                        if forced is False:
                            return False
                        if forced is not None:
                            queue.append((unknown[0], forced[0]))
        return True

    def _forced_value(self, index: int, atom: Atom):
        """(valor,) si solo un valor de `atom` deja viva la instancia, False si ninguno, None si ambos."""
        alive = []
        for candidate in (False, True):
            self.values[atom] = candidate
            if self._eval(index) is not False:
                alive.append(candidate)
            del self.values[atom]
        if not alive:
            return False
        if len(alive) == 1:
            return (alive[0],)
        return None

    def _undo(self, trail: List[Atom]) -> None:
        for atom in trail:
            del self.values[atom]

    def _frontier(self, start: int) -> int:
        i = start
        while i < len(self.free) and self.free[i] in self.values:
            i += 1
        return i

    def true_atoms(self) -> FrozenSet[Atom]:
        fixed = [a for a, v in self.fixed.items() if v]
        return frozenset(fixed + [a for a, v in self.values.items() if v])

    def _checkpoints_pass(self, low: int, high: int) -> bool:
        for key in range(low, high + 1):
            check = self.checkpoints.get(key)
            if check is not None and not check(self.true_atoms()):
                return False
        return True

    def _initial(self, trail: List[Atom]) -> bool:
        for index in range(len(self._instances)):
            result = self._eval(index)
            if result is False:
                return False
            if result is None and self.propagate:
                unknown = self._unknown_atoms(index)
                if len(unknown) == 1:
                    forced = self._forced_value(index, unknown[0])
                    if forced is False:
                        return False
                    if forced is not None and not self._assign(unknown[0], forced[0], trail):
                        return False
        return True

    def _structure(self) -> Structure:
        return Structure.build(self.sig, self.universe, sorted(self.true_atoms()))

    def solutions(self) -> Iterator[Structure]:
        """Soluciones en orden lexicográfico de los átomos libres (False antes que True)."""
        self.values = {}
        trail: List[Atom] = []
        if not self._initial(trail):
            self._undo(trail)
            return
        frontier = self._frontier(0)
        if self._checkpoints_pass(0, frontier):
            yield from self._search(frontier)
        self._undo(trail)

    def _search(self, position: int) -> Iterator[Structure]:
        if position == len(self.free):
            yield self._structure()
            return
        atom = self.free[position]
        for value in (False, True):
            trail: List[Atom] = []
            if self._assign(atom, value, trail):
                frontier = self._frontier(position)
                if self._checkpoints_pass(position + 1, frontier):
                    yield from self._search(frontier)
            self._undo(trail)

    def first(self) -> Optional[Structure]:
        return next(self.solutions(), None)
