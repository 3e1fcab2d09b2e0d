import numpy as np
import pytest

from subsim.world import DynamicEntity, VoxelWorld


def make_world(dims=(16, 16, 8), cell_size=1.0, boxes=(), entities=(),
               floor=True, border=True, turbidity=0.0, current=(0, 0, 0)):
    nx, ny, nz = dims
    occ = np.zeros(dims, dtype=bool)
    if floor:
        occ[:, :, nz - 1] = True
    if border:
        occ[0, :, :] = occ[-1, :, :] = True
        occ[:, 0, :] = occ[:, -1, :] = True
    for x0, y0, z0, x1, y1, z1 in boxes:
        occ[x0:x1, y0:y1, z0:z1] = True
    return VoxelWorld(dims=dims, cell_size=cell_size, static_occ=occ,
                      entities=list(entities), turbidity=turbidity,
                      current=np.array(current, dtype=float))


def make_entity(center, radius=1.0, waypoints=(), speed=0.0, eid=0):
    return DynamicEntity(id=eid, center=np.array(center, dtype=float),
                         radius=radius,
                         waypoints=[np.array(w, dtype=float) for w in waypoints],
                         speed=speed)


@pytest.fixture
def empty_world():
    return make_world(boxes=(), floor=False, border=False)


@pytest.fixture
def walled_world():
    return make_world()
