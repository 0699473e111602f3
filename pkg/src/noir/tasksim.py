"""Deterministic symbolic tabletop world with parameterized skills.

Objects have coarse positions and boolean attributes; skills are
transactional state transitions (a failed precondition returns the
original state with a reason). Goals are first-order formulas over a
small predicate vocabulary, evaluated against the world.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

ARM_SKILLS = (
    "Reaching", "Picking", "Placing", "Pushing", "Wiping",
    "Drawing", "Pouring", "Pulling", "Grating",
)
MOBILE_SKILLS = ("Navigating", "Picking", "Placing", "Pouring", "Dropping")

# Categorical parameter arities, per skill (orientation / axis / direction)
ORIENTATION_CHOICES = {"Picking": 4, "Placing": 3, "Pouring": 3, "Pulling": 2}
AXIS_CHOICES = 3
DIRECTION_CHOICES = 2

TASK_NAMES = ("WipeSpill", "MakePasta", "SetTable", "CleanBook", "CutBanana", "TrashDisposal")

# Coarse geometry constants (px-equivalent units)
CAPTURE_RADIUS = 20.0
NEXTTO_RADIUS = 40.0
PUSH_DISTANCE = 30.0
TABLE_EDGE_X = 330.0

PREDICATES = ("ontop", "inside", "nextto", "open", "sliced", "clean", "filled", "at")


class TaskError(ValueError):
    pass


@dataclass
class ObjectState:
    position: tuple[float, float, float]
    attrs: set[str] = field(default_factory=set)
    ontop: str | None = None
    inside: str | None = None
    location: str | None = None  # named place, mobile tasks only


@dataclass
class WorldState:
    objects: dict[str, ObjectState]
    gripper: str | None = None
    robot_base: str = "home"
    locations: tuple[str, ...] = ()

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def held(self) -> str | None:
        return self.gripper


@dataclass(frozen=True)
class SkillCall:
    skill: str
    position: tuple[float, float, float] | None = None
    orientation: int | None = None
    axis: int | None = None
    direction: int | None = None
    target: str | None = None  # object or location id (mobile skills)

    def validate(self, robot: str):
        table = ARM_SKILLS if robot == "franka" else MOBILE_SKILLS
        if self.skill not in table:
            raise TaskError(f"skill {self.skill!r} unknown for robot {robot!r}")
        if robot == "franka":
            if self.skill != "Reaching" and self.position is None:
                raise TaskError(f"{self.skill} requires a position parameter")
            if self.skill in ORIENTATION_CHOICES:
                n = ORIENTATION_CHOICES[self.skill]
                if self.orientation is None or not 0 <= self.orientation < n:
                    raise TaskError(f"{self.skill} orientation must be in [0, {n})")
            if self.skill == "Pushing" and (self.axis is None or not 0 <= self.axis < AXIS_CHOICES):
                raise TaskError("Pushing requires an axis in [0, 3)")
            if self.skill == "Pulling" and (
                self.direction is None or not 0 <= self.direction < DIRECTION_CHOICES
            ):
                raise TaskError("Pulling requires a direction in [0, 2)")
        else:
            if self.target is None:
                raise TaskError(f"{self.skill} requires a target id")


@dataclass(frozen=True)
class SkillResult:
    state: WorldState
    success: bool
    reason: str | None = None


@dataclass(frozen=True)
class TaskSpec:
    name: str
    robot: str
    roster: tuple[str, ...]
    selectables: tuple[str, ...]  # candidate objects for the What stage
    skills_menu: tuple[str, ...]  # candidate skills for the How stage
    init: list
    goal: dict
    plan: list[SkillCall]
    plan_targets: tuple[str, ...]  # intended object per plan step
    horizon: int


def _dist_xy(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def _snap(state: WorldState, pos, exclude: set[str]) -> str | None:
    """Nearest object within the capture radius of pos, else None.

    Objects inside a container are occluded and never snapped to.
    """
    best, best_d = None, CAPTURE_RADIUS
    for oid, obj in state.objects.items():
        if oid in exclude or obj.position is None or obj.inside is not None:
            continue
        d = _dist_xy(obj.position, pos)
        if d < best_d or (d == best_d and best is not None and oid < best):
            best, best_d = oid, d
    return best


def _contents(state: WorldState, container: str) -> list[str]:
    return [oid for oid, o in state.objects.items() if o.inside == container]


def _fail(state: WorldState, reason: str) -> SkillResult:
    return SkillResult(state=state, success=False, reason=reason)


def apply_skill(state: WorldState, call: SkillCall, robot: str = "franka") -> SkillResult:
    """Deterministic transition; failures leave the state untouched."""
    call.validate(robot)
    if robot == "franka":
        return _apply_arm(state, call)
    return _apply_mobile(state, call)


def _apply_arm(state: WorldState, call: SkillCall) -> SkillResult:
    s = state.copy()
    held = s.gripper
    skill = call.skill

    if skill == "Reaching":
        return SkillResult(state=s, success=True)

    target = _snap(s, call.position, exclude={held} if held else set())

    if skill == "Picking":
        if held is not None:
            return _fail(state, "gripper not empty")
        if target is None:
            return _fail(state, "nothing to pick at that position")
        obj = s.objects[target]
        if "fixed" in obj.attrs:
            return _fail(state, f"{target} cannot be picked up")
        if "flush" in obj.attrs and "graspable_from_side" not in obj.attrs:
            return _fail(state, f"{target} is flush with the surface and cannot be grasped")
        obj.ontop = None
        obj.inside = None
        s.gripper = target
        return SkillResult(state=s, success=True)

    if skill == "Placing":
        if held is None:
            return _fail(state, "not holding anything")
        obj = s.objects[held]
        if target is not None:
            dest = s.objects[target]
            if "container" in dest.attrs:
                if "openable" in dest.attrs and "open" not in dest.attrs:
                    return _fail(state, f"{target} is closed")
                obj.inside = target
                obj.ontop = None
                obj.position = dest.position
            else:
                obj.ontop = target
                obj.inside = None
                if "centering" in dest.attrs:
                    # slotted surface: the object settles at the dest center
                    obj.position = dest.position
                else:
                    obj.position = (call.position[0], call.position[1], dest.position[2])
        else:
            obj.ontop = "table" if "table" in s.objects else None
            obj.inside = None
            obj.position = tuple(call.position)
        for inner in _contents(s, held):
            s.objects[inner].position = obj.position
        s.gripper = None
        return SkillResult(state=s, success=True)

    if skill == "Pushing":
        if target is None:
            return SkillResult(state=s, success=True)  # pushed empty space
        obj = s.objects[target]
        if held is not None and "blade" in s.objects[held].attrs and "sliceable" in obj.attrs:
            obj.attrs.add("sliced")
            return SkillResult(state=s, success=True)
        if "fixed" in obj.attrs:
            return _fail(state, f"{target} cannot be pushed")
        delta = [0.0, 0.0, 0.0]
        delta[call.axis] = PUSH_DISTANCE
        new_pos = tuple(p + d for p, d in zip(obj.position, delta))
        obj.position = new_pos
        for inner in _contents(s, target):
            s.objects[inner].position = new_pos
        if "flush" in obj.attrs and new_pos[0] >= TABLE_EDGE_X:
            obj.attrs.add("graspable_from_side")
        return SkillResult(state=s, success=True)

    if skill == "Wiping":
        if held is None or "wiper" not in s.objects[held].attrs:
            return _fail(state, "not holding a wiping tool")
        if target is not None and "dirty" in s.objects[target].attrs:
            s.objects[target].attrs.discard("dirty")
            s.objects[target].attrs.add("clean")
        return SkillResult(state=s, success=True)

    if skill == "Drawing":
        if held is None or "marker" not in s.objects[held].attrs:
            return _fail(state, "not holding a marker")
        if target is not None:
            s.objects[target].attrs.add("drawn")
        return SkillResult(state=s, success=True)

    if skill == "Pouring":
        if held is None or "filled" not in s.objects[held].attrs:
            return _fail(state, "not holding a filled container")
        if target is None or "container" not in s.objects[target].attrs:
            return _fail(state, "no container to pour into")
        s.objects[held].attrs.discard("filled")
        s.objects[target].attrs.add("filled")
        return SkillResult(state=s, success=True)

    if skill == "Pulling":
        if target is None:
            return _fail(state, "nothing to pull")
        obj = s.objects[target]
        if "openable" in obj.attrs:
            obj.attrs.add("open")
            return SkillResult(state=s, success=True)
        if "fixed" in obj.attrs:
            return _fail(state, f"{target} cannot be pulled")
        sign = 1.0 if call.direction == 0 else -1.0
        obj.position = (obj.position[0], obj.position[1] + sign * PUSH_DISTANCE, obj.position[2])
        return SkillResult(state=s, success=True)

    if skill == "Grating":
        if held is None or "grater" not in s.objects[held].attrs:
            return _fail(state, "not holding a grater")
        if target is None or "gratable" not in s.objects[target].attrs:
            return _fail(state, "nothing to grate")
        s.objects[target].attrs.add("grated")
        return SkillResult(state=s, success=True)

    raise TaskError(f"unhandled skill {skill!r}")


def _apply_mobile(state: WorldState, call: SkillCall) -> SkillResult:
    s = state.copy()
    skill, target = call.skill, call.target

    if skill == "Navigating":
        if target not in s.locations:
            return _fail(state, f"unknown location {target!r}")
        s.robot_base = target
        return SkillResult(state=s, success=True)

    if target not in s.objects:
        return _fail(state, f"unknown object {target!r}")
    obj = s.objects[target]

    if skill == "Picking":
        if s.gripper is not None:
            return _fail(state, "gripper not empty")
        if obj.location != s.robot_base:
            return _fail(state, f"{target} is not at the robot's location")
        if "fixed" in obj.attrs:
            return _fail(state, f"{target} cannot be picked up")
        obj.ontop = None
        obj.inside = None
        s.gripper = target
        return SkillResult(state=s, success=True)

    if s.gripper is None and skill in ("Placing", "Pouring", "Dropping"):
        if skill == "Pouring":
            return _fail(state, "not holding a filled container")
        return _fail(state, "not holding anything")

    if obj.location != s.robot_base:
        return _fail(state, f"{target} is not at the robot's location")

    if skill == "Placing":
        held = s.objects[s.gripper]
        held.ontop = target
        held.inside = None
        held.location = obj.location
        held.position = obj.position
        s.gripper = None
        return SkillResult(state=s, success=True)

    if skill == "Pouring":
        held = s.objects[s.gripper]
        if "filled" not in held.attrs:
            return _fail(state, "not holding a filled container")
        if "container" not in obj.attrs:
            return _fail(state, f"{target} is not a container")
        held.attrs.discard("filled")
        obj.attrs.add("filled")
        return SkillResult(state=s, success=True)

    if skill == "Dropping":
        if "container" not in obj.attrs:
            return _fail(state, f"{target} is not a container")
        held = s.objects[s.gripper]
        held.inside = target
        held.ontop = None
        held.location = obj.location
        held.position = obj.position
        s.gripper = None
        return SkillResult(state=s, success=True)

    raise TaskError(f"unhandled skill {skill!r}")


# ---------------------------------------------------------------------------
# Goal evaluation
# ---------------------------------------------------------------------------

def _eval_atom(state: WorldState, pred: str, args: list[str]) -> bool:
    if pred not in PREDICATES:
        raise TaskError(f"unknown predicate {pred!r}")
    for a in args:
        if a != "robot" and a not in state.objects and a not in state.locations:
            raise TaskError(f"unknown object {a!r}")
    if pred == "ontop":
        return state.objects[args[0]].ontop == args[1]
    if pred == "inside":
        return state.objects[args[0]].inside == args[1]
    if pred == "nextto":
        a, b = state.objects[args[0]], state.objects[args[1]]
        if state.gripper in args:
            return False
        return _dist_xy(a.position, b.position) <= NEXTTO_RADIUS
    if pred == "at":
        if args[0] == "robot":
            return state.robot_base == args[1]
        return state.objects[args[0]].location == args[1]
    # unary attribute predicates
    return pred in state.objects[args[0]].attrs


def eval_goal(state: WorldState, formula, roster: tuple[str, ...] | None = None) -> bool:
    """Standard first-order semantics; quantifiers range over the roster."""
    roster = roster if roster is not None else tuple(state.objects)

    def ev(f, bindings):
        if "pred" in f:
            pred, *args = f["pred"]
            args = [bindings.get(a, a) for a in args]
            return _eval_atom(state, pred, args)
        if "and" in f:
            return all(ev(g, bindings) for g in f["and"])
        if "or" in f:
            return any(ev(g, bindings) for g in f["or"])
        if "not" in f:
            return not ev(f["not"], bindings)
        if "forall" in f:
            var, body = f["forall"]
            domain = f.get("in", roster)
            return all(ev(body, {**bindings, var: o}) for o in domain)
        if "exists" in f:
            var, body = f["exists"]
            domain = f.get("in", roster)
            return any(ev(body, {**bindings, var: o}) for o in domain)
        raise TaskError(f"malformed formula {f!r}")

    return ev(formula, {})


# ---------------------------------------------------------------------------
# Task registry
# ---------------------------------------------------------------------------

def _call_from_json(doc: dict) -> SkillCall:
    return SkillCall(
        skill=doc["skill"],
        position=tuple(doc["position"]) if "position" in doc else None,
        orientation=doc.get("orientation"),
        axis=doc.get("axis"),
        direction=doc.get("direction"),
        target=doc.get("target"),
    )


def load_task(name: str, task_dir=None) -> tuple[TaskSpec, WorldState]:
    """Load a task fixture; the returned state satisfies the init conditions."""
    if task_dir is None:
        if name not in TASK_NAMES:
            raise TaskError(f"unknown task {name!r}; known: {TASK_NAMES}")
        text = resources.files("noir.tasks").joinpath(f"{name}.json").read_text()
    else:
        text = (task_dir / f"{name}.json").read_text()
    doc = json.loads(text)

    objects = {}
    for oid, o in doc["objects"].items():
        objects[oid] = ObjectState(
            position=tuple(o["position"]),
            attrs=set(o.get("attrs", [])),
            ontop=o.get("ontop"),
            inside=o.get("inside"),
            location=o.get("location"),
        )
    state = WorldState(
        objects=objects,
        gripper=None,
        robot_base=doc.get("robot_base", "home"),
        locations=tuple(doc.get("locations", [])),
    )
    plan = [_call_from_json(c) for c in doc["plan"]]
    spec = TaskSpec(
        name=doc["name"],
        robot=doc["robot"],
        roster=tuple(doc["objects"]),
        selectables=tuple(doc["selectables"]),
        skills_menu=tuple(doc["skills_menu"]),
        init=doc["init"],
        goal=doc["goal"],
        plan=plan,
        plan_targets=tuple(c.get("intended_target", "") for c in doc["plan"]),
        horizon=doc["horizon"],
    )
    for atom in spec.init:
        if not eval_goal(state, {"pred": atom}, spec.roster):
            raise TaskError(f"fixture {name}: initial condition {atom} not satisfied")
    if spec.horizon != len(plan):
        raise TaskError(f"fixture {name}: declared horizon != plan length")
    return spec, state


def replay_plan(spec: TaskSpec, state: WorldState) -> tuple[WorldState, list[SkillResult]]:
    """Apply the reference plan; raises if any step fails."""
    results = []
    for i, call in enumerate(spec.plan):
        res = apply_skill(state, call, robot=spec.robot)
        if not res.success:
            raise TaskError(f"{spec.name} reference plan step {i} failed: {res.reason}")
        results.append(res)
        state = res.state
    return state, results
