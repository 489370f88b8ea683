"""Kernel backend selection.

The compiled extension is used when it imports; set ``RTNLOOP_PURE_PYTHON=1``
to force the Python reference kernels.
"""
import importlib
import os

_FORCE_PYTHON = os.environ.get("RTNLOOP_PURE_PYTHON", "").strip() not in ("", "0")


def load(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "cython":
        return importlib.import_module("rtnloop._ckernels")
    if name == "python":
        return importlib.import_module("rtnloop._pykernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


if _FORCE_PYTHON:
    BACKEND = "python"
else:
    BACKEND = available()[0]

_impl = load(BACKEND)
echo_phases = _impl.echo_phases
lab_frame = _impl.lab_frame
