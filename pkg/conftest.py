# Keeps the repository root on sys.path so tests import config and modules directly.
