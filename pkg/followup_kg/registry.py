"""Decorator-based registry of named component factories."""

from typing import Any, Callable, Dict, List, Optional


class FactoryRegistry:
    """Collects factories under short names, e.g. the CLI's ``--agent`` choices."""

    def __init__(self, kind: str):
        self.kind = kind
        self._factories: Dict[str, Callable[..., Any]] = {}

    def register(
        self,
        name: str,
        *,
        summary: str,
        needs_network: bool = False,
    ) -> Callable:
        """
        Decorator registering a factory under ``name``.

        Args:
            name: Registry key
            summary: One-line description shown in CLI help
            needs_network: Whether building the component requires an endpoint

        Returns:
            The factory, unchanged apart from attached metadata
        """

        def decorator(factory: Callable[..., Any]) -> Callable[..., Any]:
            if name in self._factories:
                raise ValueError(f"{self.kind} {name!r} is already registered")
            factory._registry_meta = {"name": name, "summary": summary, "needs_network": needs_network}
            self._factories[name] = factory
            return factory

        return decorator

    def names(self) -> List[str]:
        return sorted(self._factories)

    def meta(self, name: str) -> Dict[str, Any]:
        return self.get(name)._registry_meta

    def get(self, name: str) -> Callable[..., Any]:
        try:
            return self._factories[name]
        except KeyError:
            raise KeyError(f"unknown {self.kind} {name!r}; choose from {', '.join(self.names())}") from None

    def create(self, name: str, *args: Any, **kwargs: Any) -> Any:
        return self.get(name)(*args, **kwargs)

    def help_text(self, only: Optional[List[str]] = None) -> str:
        names = only if only is not None else self.names()
        return "; ".join(f"{n}: {self.meta(n)['summary']}" for n in names)
