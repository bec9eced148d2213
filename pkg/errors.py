"""Excepciones del kit. La CLI traduce cualquier ExchKitError a código de salida 2."""


class ExchKitError(Exception):
    """Error base de la librería."""


class SignatureError(ExchKitError):
    pass


class StructureError(ExchKitError):
    pass


class ElementNotInUniverse(StructureError):
    def __init__(self, elements):
        self.elements = sorted(elements)
        super().__init__(f"Elementos fuera del universo: {self.elements}")


class InjectionError(StructureError):
    pass


class SpecParseError(ExchKitError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{message} (línea {line}, columna {column})")


class SpecValidationError(ExchKitError):
    pass


class CapExceeded(ExchKitError):
    pass


class PlanError(ExchKitError):
    pass


class LabelingError(ExchKitError):
    pass


class EquivalenceError(ExchKitError):
    pass


class RuleError(ExchKitError):
    pass


class MissingProfileError(RuleError):
    pass


class EliminationError(ExchKitError):
    pass


class SideTagIndeterminate(EliminationError):
    pass


class MembershipIndeterminate(EliminationError):
    pass


class SaturationError(EliminationError):
    pass


class HierarchyError(ExchKitError):
    pass


class StatsError(ExchKitError):
    pass
