from enum import Enum


class Method(str, Enum):
    SHRINK = "shrink"
    PLS = "pls"
    RIDGE = "ridge"
    LASSO = "lasso"
    ADALASSO = "adalasso"

    @property
    def is_sparse(self) -> bool:
        """Sparse methods select edges by nonzero estimates; the others need fdr testing."""
        return self in (Method.LASSO, Method.ADALASSO)

    @property
    def is_regression(self) -> bool:
        return self is not Method.SHRINK


ALL_METHODS = tuple(Method)


def parse_methods(text: str) -> list[Method]:
    names = [part.strip().lower() for part in text.split(",") if part.strip()]
    if not names:
        raise ValueError("at least one method is required")
    methods = []
    for name in names:
        try:
            method = Method(name)
        except ValueError:
            raise ValueError(f"unknown method {name!r}; choose from {', '.join(m.value for m in Method)}") from None
        if method not in methods:
            methods.append(method)
    return methods
