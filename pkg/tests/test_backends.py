import os
import subprocess
import sys

import numpy as np
import pytest

from adasa import _kernels
from adasa.driver import SyntheticOracleSpec, run_amsgrad, run_asa
from adasa.preconditioners import PreconditionerState
from adasa.problems import default_quadratic
from adasa.schedules import PowerSchedule

_FIELDS = ("v_gap", "grad_norm_sq", "step", "bias_norm", "a_lmin", "a_lmax")


def _subprocess_backend(env_value):
    env = dict(os.environ, ADASA_BACKEND=env_value)
    return subprocess.run(
        [sys.executable, "-c", "import adasa; print(adasa.BACKEND)"],
        capture_output=True,
        text=True,
        env=env,
    )


def test_env_var_forces_python_backend():
    out = _subprocess_backend("python")
    assert out.returncode == 0
    assert out.stdout.strip() == "python"


def test_env_var_rejects_unknown_backend():
    out = _subprocess_backend("turbo")
    assert out.returncode != 0
    assert "ADASA_BACKEND" in out.stderr


def test_load_backend_rejects_unknown_name():
    with pytest.raises(ValueError, match="unknown backend"):
        _kernels.load_backend("turbo")


def _run(kind):
    p = default_quadratic(dim=4, seed=2)
    oracle = SyntheticOracleSpec(sigma=0.1, bias=PowerSchedule(0.5, 0.25), direction="toward_gradient")
    gamma = PowerSchedule(0.05, 0.5)
    if kind == "amsgrad":
        pre = PreconditionerState(kind="amsgrad", dim=4, delta=0.05, rho1=0.9, rho2=0.999)
        return run_amsgrad(p, oracle, pre, gamma, 3000, seed=11)
    pre = PreconditionerState(kind=kind, dim=4, delta=0.05, rho=0.9)
    clip = PowerSchedule(2.0, 0.1, direction="increasing")
    return run_asa(p, oracle, pre, gamma, 3000, seed=11, clip=clip)


@pytest.mark.skipif(_kernels.BACKEND != "compiled", reason="compiled extension not built")
@pytest.mark.parametrize("kind", ["identity", "adagrad", "rmsprop", "amsgrad"])
def test_backends_are_bit_identical(kind):
    try:
        _kernels.load_backend("python")
        assert _kernels.BACKEND == "python"
        slow = _run(kind)
        _kernels.load_backend("compiled")
        assert _kernels.BACKEND == "compiled"
        fast = _run(kind)
    finally:
        _kernels.load_backend("auto")
    for field in _FIELDS:
        np.testing.assert_array_equal(getattr(fast, field), getattr(slow, field), err_msg=field)
    np.testing.assert_array_equal(fast.final_theta, slow.final_theta)
    np.testing.assert_array_equal(fast.m_obs, slow.m_obs)


def test_load_backend_auto_restores_preference():
    try:
        _kernels.load_backend("python")
    finally:
        _kernels.load_backend("auto")
    expected = "compiled" if _kernels._compiled_impl is not None else "python"
    assert _kernels.BACKEND == expected
