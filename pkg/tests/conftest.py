import numpy as np
import pytest

from nestedtomo.geometry import coprime_array, nested_array, uniform_array
from nestedtomo.model import ElevationGrid, ImagingGeometry, build_steering_matrix, \
    rayleigh_resolution, wavelength_from_frequency

FC = 14.25e9
RANGE = 1220.0
D = 0.08
WAVELENGTH = wavelength_from_frequency(FC)
RHO = rayleigh_resolution(WAVELENGTH, RANGE, 9 * D)

REFERENCE_ARRAYS = {
    "uniform": uniform_array(10, D),
    "coprime3x4": coprime_array(3, 4, D),
    "nested4x2": nested_array(4, 2, D),
    "nested3x3": nested_array(3, 3, D),
}


def geometry_for(array):
    return ImagingGeometry(WAVELENGTH, RANGE, array)


@pytest.fixture(params=list(REFERENCE_ARRAYS))
def ref_array(request):
    return REFERENCE_ARRAYS[request.param]


@pytest.fixture
def grid():
    return ElevationGrid.centered(RHO)


@pytest.fixture
def nested42_phi(grid):
    return build_steering_matrix(geometry_for(REFERENCE_ARRAYS["nested4x2"]), grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
