import time

import pytest

from lpspec.construction import BuildConfig, iterate


@pytest.fixture(scope="session")
def desk_ledger():
    """The default two-stage desk construction, built once per session."""
    t0 = time.monotonic()
    ledger = iterate(BuildConfig(), 2)
    ledger.build_seconds = time.monotonic() - t0  # stashed for the runtime criterion
    return ledger
