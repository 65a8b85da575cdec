from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from diel.ast_nodes import ColumnDef

FLIGHT_COLUMNS = [
    ColumnDef("origin", "TEXT"),
    ColumnDef("destination", "TEXT"),
    ColumnDef("flight_year", "INT"),
    ColumnDef("delay", "INT"),
    ColumnDef("distance", "INT"),
]

TWEET_COLUMNS = [
    ColumnDef("tId", "TEXT"),
    ColumnDef("uId", "TEXT"),
    ColumnDef("content", "TEXT"),
    ColumnDef("lat", "REAL"),
    ColumnDef("lon", "REAL"),
]

BASE_SCHEMAS = {
    "flights": FLIGHT_COLUMNS,
    "tweets": TWEET_COLUMNS,
    "follows": [ColumnDef("uId", "TEXT"), ColumnDef("followerId", "TEXT")],
    "users": [ColumnDef("id", "TEXT"), ColumnDef("age", "INT")],
    "countries": [
        ColumnDef("country", "TEXT"),
        ColumnDef("centroidLat", "REAL"),
        ColumnDef("centroidLon", "REAL"),
    ],
}


@pytest.fixture
def base_schemas():
    return {name: list(cols) for name, cols in BASE_SCHEMAS.items()}
