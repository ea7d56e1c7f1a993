import numpy as np
import pytest

from fusiondet.neuralnet import build_network, parse_table

TINY_TABLE = """
conv1   conv    in=3 out=4 kernel=3x3 stride=2 pad=0 init=he
relu1   relu
norm1   lrn     local_size=3 alpha=1e-4 beta=0.75 k=2
pool1   maxpool kernel=2x2 stride=2
conv2   conv    in=4 out=6 kernel=3x3 stride=1 pad=1 init=he
relu2   relu
roi     roipool grid=3x3
fc6     fc      in=54 out=16 init=he
relu6   relu
drop6   dropout rate=0.5
cls     fc      in=16 out=2
bbox    fc      in=16 out=8
"""


def make_tiny_network(seed=0, dtype=np.float32):
    return build_network(parse_table(TINY_TABLE), seed=seed, dtype=dtype)


@pytest.fixture
def tiny_network():
    return make_tiny_network()


def central_diff_grad(f, x, eps=1e-4):
    """Dense central-difference gradient of scalar f w.r.t. array x (f64)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * eps)
        it.iternext()
    return grad


def assert_grad_close(analytic, numeric, rtol=1e-3, atol=1e-6):
    """Elementwise |a - n| <= rtol*max(|a|,|n|) + atol."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    bound = rtol * np.maximum(np.abs(a), np.abs(n)) + atol
    worst = np.abs(a - n) - bound
    assert np.all(worst <= 0), f"gradient mismatch: worst excess {worst.max():.3e}"
