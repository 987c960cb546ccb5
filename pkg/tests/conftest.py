from __future__ import annotations

import os
import random

import pytest

from visanno import Hierarchy, parse_hierarchy

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def data_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


def load_hierarchy(name: str) -> Hierarchy:
    with open(data_path(name), "r", encoding="utf-8") as fh:
        return parse_hierarchy(fh.read())


@pytest.fixture(scope="session")
def goldfinch() -> Hierarchy:
    return load_hierarchy("goldfinch.json")


@pytest.fixture(scope="session")
def twelve() -> Hierarchy:
    return load_hierarchy("twelve.json")


def random_hierarchy_document(rng: random.Random, max_depth: int = 3, max_children: int = 3) -> dict:
    """A small random hierarchy document with position-consistent ids."""

    def build(prefix: tuple[int, ...], depth: int) -> dict:
        node_id = "-".join(str(p) for p in prefix)
        children = []
        if depth < max_depth and rng.random() < 0.6:
            for i in range(1, rng.randint(1, max_children) + 1):
                children.append(build(prefix + (i,), depth + 1))
        return {
            "id": node_id,
            "name": f"Category {node_id}",
            "genus": "" if len(prefix) == 1 else f"shared traits of {node_id[:-2]}",
            "differentia": f"distinguishing marks of {node_id}",
            "children": children,
        }

    roots = [build((i,), 1) for i in range(1, rng.randint(1, max_children) + 1)]
    return {"roots": roots}
