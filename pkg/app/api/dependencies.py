"""
FastAPI dependencies.
"""
from functools import lru_cache

from fastapi import HTTPException

from app.config import COST_TABLE_PATH
from app.errors import ConfigurationError
from app.services.cost import CostTable, load_cost_table


@lru_cache(maxsize=1)
def _configured_table() -> CostTable:
    return load_cost_table(COST_TABLE_PATH or None)


def get_cost_table() -> CostTable:
    """
    Dependency that provides the service's cost table.

    Uses GABORNET_COST_TABLE when set, the defaults otherwise.
    """
    try:
        return _configured_table()
    except ConfigurationError as e:
        raise HTTPException(status_code=500, detail=str(e))
