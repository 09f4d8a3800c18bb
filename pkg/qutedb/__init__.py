"""qutedb: a hybrid quantum-classical SQL engine on a built-in statevector simulator"""

__version__ = "1.0.0"
