import numpy as np
import pytest

from svgd_forecast.data import SeriesFrame
from svgd_forecast.model import ArchConfig


def hourly_series(n, start="2017-01-02T00", values=None, holidays=None, seed=0):
    ts = np.datetime64(start, "h") + np.arange(n) * np.timedelta64(1, "h")
    if values is None:
        values = np.random.default_rng(seed).uniform(1.0, 100.0, n)
    flags = np.zeros(n, dtype=bool) if holidays is None else np.asarray(holidays, dtype=bool)
    return SeriesFrame(ts, values, flags)


@pytest.fixture
def small_arch():
    return ArchConfig(
        n_channels=3,
        n_calendar=4,
        input_length=20,
        conv_specs=((3, 4, 2), (2, 3, 1)),
        encoder_dim=5,
        recon_dim=4,
        decoder_hidden=(6,),
        horizon=3,
    )


def random_small_arch(rng):
    """A random tiny architecture (float64 finite-difference friendly)."""
    n_conv = int(rng.integers(1, 3))
    specs = tuple((int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 3))) for _ in range(n_conv))
    return ArchConfig(
        n_channels=int(rng.integers(1, 4)),
        n_calendar=int(rng.integers(1, 4)),
        input_length=int(rng.integers(12, 20)),
        conv_specs=specs,
        encoder_dim=int(rng.integers(2, 5)),
        recon_dim=int(rng.integers(2, 4)),
        decoder_hidden=tuple(int(rng.integers(2, 5)) for _ in range(int(rng.integers(1, 3)))),
        horizon=int(rng.integers(1, 4)),
    )


def random_batch(arch, b, rng):
    from svgd_forecast.posterior import Batch

    return Batch(
        inputs=rng.normal(size=(b, arch.n_channels, arch.input_length)),
        target_calendar=rng.normal(size=(b, arch.horizon, arch.n_calendar)),
        targets=rng.normal(size=(b, arch.horizon)),
        n_total=3 * b,
    )


def central_differences(fn, theta, index=None, step=1e-5):
    """Central finite-difference gradient of scalar ``fn`` at ``theta`` (float64)."""
    theta = np.array(theta, dtype=np.float64)
    index = range(theta.size) if index is None else index
    out = np.zeros(theta.size)
    for i in index:
        orig = theta[i]
        theta[i] = orig + step
        fp = fn(theta)
        theta[i] = orig - step
        fm = fn(theta)
        theta[i] = orig
        out[i] = (fp - fm) / (2 * step)
    return out


def block_relative_errors(layout, grad, fd):
    """Relative L2 error of ``grad`` against ``fd`` for every layout block."""
    errs = {}
    for b in layout.blocks:
        g, f = grad[b.slice], fd[b.slice]
        scale = max(np.linalg.norm(f), np.linalg.norm(g))
        errs[b.name] = 0.0 if scale < 1e-10 else float(np.linalg.norm(g - f) / scale)
    return errs


# acceptance results, one (criterion, passed, detail) tuple per criterion
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
