"""Shared pytest setup for the cliquelab tests"""


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: large clique sizes (deselect with -m 'not slow')")
