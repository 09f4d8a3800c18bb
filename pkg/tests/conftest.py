"""Shared fixtures: devices, small catalogs and a ready engine"""

import numpy as np
import pytest

from qutedb.config import Settings
from qutedb.models import DeviceModel
from qutedb.services.executor import Engine
from qutedb.services.storage import Catalog, ColumnDef, ColumnType, Table, TableDef


@pytest.fixture
def device() -> DeviceModel:
    return DeviceModel()


@pytest.fixture
def noiseless_device() -> DeviceModel:
    return DeviceModel.noiseless()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def people_table() -> Table:
    """16 rows; UINT age/dept, TEXT name, BOOL active"""
    definition = TableDef(name="people", columns=[
        ColumnDef(name="id", type=ColumnType.UINT, bits=8),
        ColumnDef(name="age", type=ColumnType.UINT, bits=8),
        ColumnDef(name="dept", type=ColumnType.UINT, bits=4),
        ColumnDef(name="name", type=ColumnType.TEXT),
        ColumnDef(name="active", type=ColumnType.BOOL, bits=1),
    ])
    table = Table(definition)
    names = ["ada", "bob", "cy", "dee", "eve", "fay", "gus", "hal",
             "ivy", "jo", "kim", "lou", "max", "ned", "oli", "pat"]
    ages = [23, 35, 41, 29, 52, 33, 61, 19, 45, 38, 27, 56, 31, 48, 22, 40]
    table.insert([[i, ages[i], i % 4, names[i], i % 3 != 0] for i in range(16)])
    return table


@pytest.fixture
def catalog(people_table) -> Catalog:
    catalog = Catalog()
    catalog.add_table(people_table)
    depts = Table(TableDef(name="depts", columns=[
        ColumnDef(name="dept", type=ColumnType.UINT, bits=4),
        ColumnDef(name="budget", type=ColumnType.UINT, bits=8),
    ]))
    depts.insert([[0, 200], [1, 90], [2, 150], [3, 40]])
    catalog.add_table(depts)
    return catalog


@pytest.fixture
def settings() -> Settings:
    return Settings(seed=7, noise=False)


@pytest.fixture
def engine(tmp_path, noiseless_device, settings) -> Engine:
    return Engine(device=noiseless_device, config=settings, data_dir=tmp_path)
