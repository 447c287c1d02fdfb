from .models import EchoModel, ModelError, TorchScriptModel, TranslationModel
from .server import ServerConfig, build_model, create_app, serve

__version__ = "0.1.0"

__all__ = [
    "EchoModel",
    "ModelError",
    "TorchScriptModel",
    "TranslationModel",
    "ServerConfig",
    "build_model",
    "create_app",
    "serve",
    "__version__",
]
