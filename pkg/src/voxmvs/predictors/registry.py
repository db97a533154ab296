"""
Predictor registry for looking up, discovering and listing surface predictors.

Built-in predictors are always registered. Additional predictors are loaded
from plugin directories: every public *.py file is imported and each
SurfacePredictor subclass it defines is registered under its metadata name.
"""

import importlib.util
import inspect
import logging
import sys
from pathlib import Path

from rich.console import Console
from rich.table import Table

from voxmvs.core.config import PredictorSpec
from voxmvs.core.exceptions import UnknownPredictorError
from voxmvs.predictors.base import ProbabilityCube, SurfacePredictor
from voxmvs.predictors.constant import ConstantHalfPredictor
from voxmvs.predictors.zncc import ZnccPredictor
from voxmvs.stereo.cvc import CvcVolume

logger = logging.getLogger(__name__)

BUILTIN_PREDICTORS: tuple[type[SurfacePredictor], ...] = (ZnccPredictor, ConstantHalfPredictor)


class PredictorRegistry:
    """
    Maps predictor names to predictor instances.

    The registry handles:
    - Registration of built-in predictors
    - Dynamic discovery of predictor plugins from directories
    - Lookup by the name used in pipeline configuration
    """

    def __init__(self, plugin_dirs: list[Path] | None = None) -> None:
        """
        Initialize the registry.

        Args:
            plugin_dirs: Directories searched for predictor plugins
        """
        self.plugin_dirs = plugin_dirs or []
        self._predictors: dict[str, SurfacePredictor] = {}
        self._sources: dict[str, str] = {}

        for predictor_class in BUILTIN_PREDICTORS:
            self.register(predictor_class, source="built-in")

    def register(self, predictor_class: type[SurfacePredictor], source: str = "plugin") -> str:
        """
        Instantiate and register a predictor class.

        Returns:
            str: Name the predictor was registered under
        """
        predictor = predictor_class()
        name = predictor.metadata.name
        if name in self._predictors:
            logger.warning(f"Predictor '{name}' from {source} replaces an earlier registration")
        self._predictors[name] = predictor
        self._sources[name] = source
        return name

    def discover(self) -> list[str]:
        """
        Discover predictor plugins in the configured directories.

        Returns:
            list: Names of the newly registered predictors
        """
        registered: list[str] = []
        for plugin_dir in self.plugin_dirs:
            if not plugin_dir.exists():
                logger.warning(f"Predictor plugin directory not found: {plugin_dir}")
                continue

            logger.info(f"Scanning for predictors in: {plugin_dir}")
            for plugin_file in sorted(plugin_dir.glob("*.py")):
                if plugin_file.name.startswith("_"):
                    continue

                try:
                    for predictor_class in self._load_predictors_from_file(plugin_file):
                        registered.append(self.register(predictor_class, source=plugin_file.name))
                except Exception as e:
                    logger.error(f"Failed to load predictor plugin {plugin_file}: {e}")

        return registered

    def _load_predictors_from_file(self, filepath: Path) -> list[type[SurfacePredictor]]:
        """Import a plugin file and return the SurfacePredictor subclasses it defines."""
        module_name = f"voxmvs.plugins.{filepath.stem}"
        spec = importlib.util.spec_from_file_location(module_name, filepath)
        if spec is None or spec.loader is None:
            return []

        module = importlib.util.module_from_spec(spec)
        sys.modules[module_name] = module
        spec.loader.exec_module(module)

        return [
            obj
            for _name, obj in inspect.getmembers(module, inspect.isclass)
            if issubclass(obj, SurfacePredictor)
            and not inspect.isabstract(obj)
            and obj.__module__ == module_name
        ]

    def get(self, kind: str) -> SurfacePredictor:
        """
        Look up a predictor by name.

        Raises:
            UnknownPredictorError: If no predictor is registered under kind
        """
        try:
            return self._predictors[kind]
        except KeyError:
            raise UnknownPredictorError(
                f"Unknown predictor '{kind}'. Registered: {', '.join(self.names())}"
            ) from None

    def names(self) -> list[str]:
        return sorted(self._predictors)

    def list_predictors(self, console: Console) -> None:
        """Print a table of registered predictors."""
        table = Table(title="Registered Predictors")
        table.add_column("Name", style="cyan", no_wrap=True)
        table.add_column("Version", style="magenta")
        table.add_column("Source", style="yellow")
        table.add_column("Description", style="white")

        for name in self.names():
            metadata = self._predictors[name].metadata
            table.add_row(
                metadata.name, metadata.version, self._sources[name], metadata.description
            )

        console.print(table)


_default_registry: PredictorRegistry | None = None


def default_registry() -> PredictorRegistry:
    """Registry holding only the built-in predictors."""
    global _default_registry
    if _default_registry is None:
        _default_registry = PredictorRegistry()
    return _default_registry


def predictor_registry_lookup(kind: str) -> SurfacePredictor:
    """Look up a built-in predictor by name."""
    return default_registry().get(kind)


def predict_pair(
    cvc_i: CvcVolume,
    cvc_j: CvcVolume,
    spec: PredictorSpec,
    registry: PredictorRegistry | None = None,
) -> ProbabilityCube:
    """Run the predictor named by spec.kind on a view pair."""
    predictor = (registry or default_registry()).get(spec.kind)
    return predictor.predict(cvc_i, cvc_j, spec)
