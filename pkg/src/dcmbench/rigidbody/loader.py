"""Model file loader.

The model file is YAML with top-level keys ``name``, ``base``, ``foot``,
``roles``, ``links``, ``joints`` and ``frames``.  Every validation error is
reported with the 1-based line of the offending block.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .model import FootGeometry, Frame, Joint, Link, ModelError, RobotModel
from .spatial import homogeneous, rpy

_LINE = "__line__"


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = loader.construct_mapping(node, deep=deep)
    mapping[_LINE] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _vec(block, key, size, line, default=None):
    if key not in block:
        if default is not None:
            return np.asarray(default, dtype=float)
        raise ModelError(f"missing key {key!r}", line)
    try:
        v = np.asarray(block[key], dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ModelError(f"{key!r} must be a list of {size} numbers", line) from None
    if v.size != size or not np.all(np.isfinite(v)):
        raise ModelError(f"{key!r} must be a list of {size} finite numbers", line)
    return v


def _scalar(block, key, line, default=None):
    if key not in block:
        if default is not None:
            return float(default)
        raise ModelError(f"missing key {key!r}", line)
    try:
        return float(block[key])
    except (TypeError, ValueError):
        raise ModelError(f"{key!r} must be a number", line) from None


def _origin(block, line):
    o = block.get("origin", {}) or {}
    ol = o.get(_LINE, line) if isinstance(o, dict) else line
    if not isinstance(o, dict):
        raise ModelError("'origin' must be a mapping with 'xyz' and 'rpy'", line)
    xyz = _vec(o, "xyz", 3, ol, default=np.zeros(3))
    r = _vec(o, "rpy", 3, ol, default=np.zeros(3))
    return homogeneous(rpy(*r), xyz)


def parse_model(data: dict) -> RobotModel:
    if not isinstance(data, dict):
        raise ModelError("model file must be a mapping", 1)
    top = data.get(_LINE, 1)
    links, joints, frames = [], [], []
    for b in data.get("links") or []:
        ln = b.get(_LINE)
        if "name" not in b:
            raise ModelError("link without 'name'", ln)
        mass = _scalar(b, "mass", ln)
        if not mass > 0:
            raise ModelError(f"link {b['name']!r}: mass must be positive", ln)
        ii = _vec(b, "inertia", 6, ln)
        ixx, iyy, izz, ixy, ixz, iyz = ii
        I = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
        if np.linalg.eigvalsh(I)[0] <= 0:
            raise ModelError(f"link {b['name']!r}: inertia must be positive definite", ln)
        links.append(Link(str(b["name"]), mass, I, _vec(b, "com", 3, ln, default=np.zeros(3))))
    for b in data.get("joints") or []:
        ln = b.get(_LINE)
        for key in ("name", "parent", "child", "axis"):
            if key not in b:
                raise ModelError(f"joint without {key!r}", ln)
        jtype = b.get("type", "revolute")
        if jtype != "revolute":
            raise ModelError(f"joint {b['name']!r}: unsupported type {jtype!r}", ln)
        axis = _vec(b, "axis", 3, ln)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ModelError(f"joint {b['name']!r}: axis must have unit norm", ln)
        lim = b.get("limits", {}) or {}
        ll = lim.get(_LINE, ln)
        pos = _vec(lim, "position", 2, ll, default=[-np.inf, np.inf])
        if not pos[0] < pos[1]:
            raise ModelError(f"joint {b['name']!r}: position limits must satisfy lower < upper", ll)
        vel = _scalar(lim, "velocity", ll, default=np.inf)
        tau = _scalar(lim, "torque", ll, default=np.inf)
        if not (vel > 0 and tau > 0):
            raise ModelError(f"joint {b['name']!r}: velocity and torque limits must be positive", ll)
        joints.append(Joint(str(b["name"]), str(b["parent"]), str(b["child"]), axis,
                            _origin(b, ln), (float(pos[0]), float(pos[1])), vel, tau))
    for b in data.get("frames") or []:
        ln = b.get(_LINE)
        if "name" not in b or "link" not in b:
            raise ModelError("frame needs 'name' and 'link'", ln)
        frames.append(Frame(str(b["name"]), str(b["link"]), _origin(b, ln)))
    foot = None
    if "foot" in data:
        fb = data["foot"]
        fl = fb.get(_LINE, top)
        foot = FootGeometry(_scalar(fb, "length", fl), _scalar(fb, "width", fl))
        if not (foot.length > 0 and foot.width > 0):
            raise ModelError("foot dimensions must be positive", fl)
    roles = {k: str(v) for k, v in (data.get("roles") or {}).items() if k != _LINE}
    if "base" not in data:
        raise ModelError("missing key 'base'", top)
    # topology errors are anchored to the joints block
    try:
        return RobotModel(links, joints, str(data["base"]), frames, foot, roles,
                          str(data.get("name", "robot")))
    except ModelError as e:
        if e.line is not None:
            raise
        blocks = {j.name: jb.get(_LINE) for j, jb in zip(joints, data.get("joints") or [])}
        blocks.update({l.name: lb.get(_LINE) for l, lb in zip(links, data.get("links") or [])})
        line = next((v for k, v in blocks.items() if repr(k) in str(e)), top)
        raise ModelError(str(e), line) from None


def loads_model(text: str) -> RobotModel:
    try:
        data = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise ModelError(f"syntax error: {e.problem}", mark.line + 1 if mark else None) from None
    return parse_model(data)


def load_model(path) -> RobotModel:
    return loads_model(Path(path).read_text())


def mini_biped() -> RobotModel:
    """The shipped 15-joint, 33 kg test biped."""
    text = resources.files("dcmbench.rigidbody").joinpath("data/mini_biped.yaml").read_text()
    return loads_model(text)
