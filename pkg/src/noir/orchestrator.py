"""Closed-loop episodes: simulated user + decoders + task simulator.

One episode walks the task's reference plan. Each plan step runs the
three selection stages (object via frequency-tagged decoding, skill via
k-way motor imagery, position via 2-way cursor imagery), each gated by a
muscle-tension confirm window. Optional learning components short-cut
the first two stages (retrieval memory) and the cursor start point
(one-shot parameter matching).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import mi as mi_mod
from .embed import EmbedConfig
from .emg import calibrate_emg, detect_clench
from .memory import MemoryStore, SceneFeaturizer, retrieve_gated, train_memory
from .parammatch import ParamPoint, make_scene_pair, match_point
from .signal import DEFAULT_MONTAGE, Epoch, FilterSpec, select_channels, apply_filter
from .ssvep import build_reference_bank, classify_ssvep
from .synth import (
    ClenchProfile,
    MiProfile,
    SsvepStimulus,
    gen_calibration_session,
    gen_clench_window,
    gen_mi,
    gen_ssvep,
)
from .tasksim import SkillCall, TaskSpec, WorldState, apply_skill, eval_goal, load_task

SSVEP_WINDOW_S = 10.0
MI_WINDOW_S = 5.0
CLENCH_WINDOW_S = 0.5


@dataclass(frozen=True)
class SignalProfiles:
    """Signal difficulty knobs for one run."""

    ssvep: SsvepStimulus = SsvepStimulus(snr_db=float("inf"))
    mi: MiProfile = MiProfile(modulation_db=40.0)
    clench: ClenchProfile = ClenchProfile(rest_var=1.0, clench_var=100.0)
    fs: float = 250.0

    @classmethod
    def noise_free(cls) -> "SignalProfiles":
        return cls()

    @classmethod
    def at_noise(cls, snr_db: float, modulation_db: float) -> "SignalProfiles":
        return cls(
            ssvep=SsvepStimulus(snr_db=snr_db),
            mi=MiProfile(modulation_db=modulation_db),
        )


@dataclass
class DecoderSuite:
    csp4: mi_mod.CspModel
    qda4: mi_mod.QdaModel
    csp2: mi_mod.CspModel
    qda2: mi_mod.QdaModel
    emg_calib: object
    notch: FilterSpec
    mi_classes: tuple[str, ...]


def calibrate_decoders(profiles: SignalProfiles, seed: int) -> DecoderSuite:
    """Fit all decoders from synthetic calibration sessions."""
    fs = profiles.fs
    sess4 = gen_calibration_session(profiles.mi, seed=seed, fs=fs)
    motor4 = [select_channels(e, "motor") for e in sess4]
    csp4 = mi_mod.fit_csp(motor4)
    qda4 = mi_mod.fit_qda(
        [mi_mod.csp_features(csp4, e).f for e in motor4], [e.label for e in motor4]
    )
    prof2 = MiProfile(
        classes=("LeftHand", "RightHand"),
        epoch_s=profiles.mi.epoch_s,
        band=profiles.mi.band,
        modulation_db=profiles.mi.modulation_db,
        noise_floor=profiles.mi.noise_floor,
    )
    sess2 = gen_calibration_session(prof2, seed=seed + 1, fs=fs)
    motor2 = [select_channels(e, "motor") for e in sess2]
    csp2 = mi_mod.fit_csp(motor2)
    qda2 = mi_mod.fit_qda(
        [mi_mod.csp_features(csp2, e).f for e in motor2], [e.label for e in motor2]
    )
    rest = [gen_clench_window(profiles.clench, False, seed=seed + 10 + i, fs=fs) for i in range(3)]
    clench = [gen_clench_window(profiles.clench, True, seed=seed + 20 + i, fs=fs) for i in range(3)]
    return DecoderSuite(
        csp4=csp4,
        qda4=qda4,
        csp2=csp2,
        qda2=qda2,
        emg_calib=calibrate_emg(rest, clench),
        notch=FilterSpec(kind="notch", f_notch=60.0, order=2),
        mi_classes=profiles.mi.classes,
    )


@dataclass
class EpisodeOptions:
    memory: bool = False
    param_learning: bool = False
    error_model: float = 0.0  # per-stage probability of a wrong user intent
    cursor_step_px: float = 10.0
    cursor_tolerance: float = 5.0
    max_attempts: int = 5
    max_stage_retries: int = 8
    max_cursor_decodes: int = 200
    screen: tuple[int, int] = (360, 240)


@dataclass
class StageCounts:
    decodes: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float | None:
        return None if self.decodes == 0 else self.correct / self.decodes


@dataclass
class RunReport:
    task: str
    success: bool = False
    attempts: int = 1
    skills_executed: int = 0
    horizon: int = 0
    memory_skips: int = 0
    cursor_distance: float = 0.0
    ssvep: StageCounts = field(default_factory=StageCounts)
    mi_skill: StageCounts = field(default_factory=StageCounts)
    mi_cursor: StageCounts = field(default_factory=StageCounts)
    clench: StageCounts = field(default_factory=StageCounts)
    confirms: int = 0
    rejects: int = 0
    events: list = field(default_factory=list)

    @property
    def decode_time_s(self) -> float:
        return (
            SSVEP_WINDOW_S * self.ssvep.decodes
            + MI_WINDOW_S * (self.mi_skill.decodes + self.mi_cursor.decodes)
            + CLENCH_WINDOW_S * self.clench.decodes
        )

    def log(self, kind: str, **info):
        self.events.append({"type": kind, **info})

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "success": self.success,
            "attempts": self.attempts,
            "skills_executed": self.skills_executed,
            "horizon": self.horizon,
            "memory_skips": self.memory_skips,
            "cursor_distance": self.cursor_distance,
            "confirms": self.confirms,
            "rejects": self.rejects,
            "decode_time_s": self.decode_time_s,
        }
        for name in ("ssvep", "mi_skill", "mi_cursor", "clench"):
            sc: StageCounts = getattr(self, name)
            d[f"{name}_decodes"] = sc.decodes
            d[f"{name}_accuracy"] = sc.accuracy
        return d


def _states_equivalent(a: WorldState, b: WorldState, pos_tol: float = 12.0) -> bool:
    if a.gripper != b.gripper or a.robot_base != b.robot_base:
        return False
    for oid, oa in a.objects.items():
        ob = b.objects[oid]
        if (oa.attrs, oa.ontop, oa.inside, oa.location) != (
            ob.attrs,
            ob.ontop,
            ob.inside,
            ob.location,
        ):
            return False
        if (
            math.dist(oa.position[:2], ob.position[:2]) > pos_tol
            or abs(oa.position[2] - ob.position[2]) > pos_tol
        ):
            return False
    return True


class _Confirm:
    """Clench-channel confirm/reject of a pending decode."""

    def __init__(self, suite: DecoderSuite, profiles: SignalProfiles, report: RunReport, seeds):
        self.suite = suite
        self.profiles = profiles
        self.report = report
        self.seeds = seeds

    def __call__(self, accept: bool, stage: str) -> bool:
        """User clenches to reject; returns True when the result is accepted."""
        window = gen_clench_window(
            self.profiles.clench, not accept, seed=next(self.seeds), fs=self.profiles.fs
        )
        clenched = detect_clench(self.suite.emg_calib, window)
        self.report.clench.decodes += 1
        self.report.clench.correct += clenched == (not accept)
        accepted = not clenched
        if accepted:
            self.report.confirms += 1
            self.report.log("confirm", stage=stage)
        else:
            self.report.rejects += 1
            self.report.log("reject", stage=stage)
        return accepted


def _seed_stream(seed: int):
    ss = np.random.SeedSequence(seed)
    while True:
        (child,) = ss.spawn(1)
        yield int(child.generate_state(1)[0])


def train_task_memory(
    task: TaskSpec,
    seed: int = 0,
    samples_per_stage: int = 15,
    dim: int = 128,
    config: EmbedConfig | None = None,
) -> tuple[MemoryStore, SceneFeaturizer]:
    """Train a retrieval memory over the task's (object, skill) stages."""
    stages = list(dict.fromkeys(zip(task.plan_targets, (c.skill for c in task.plan))))
    fz = SceneFeaturizer(stages, dim=dim, separation=5.0, seed=seed)
    rng = np.random.default_rng(seed + 1)
    feats, labels = [], []
    for stage in stages:
        for _ in range(samples_per_stage):
            feats.append(fz.sample(stage, "position", rng))
            labels.append(stage)
    if config is None:
        config = EmbedConfig(
            input_dim=dim, hidden_layers=2, hidden_dim=64, output_dim=64, epochs=30
        )
    store = train_memory(np.array(feats), labels, config=config, seed=seed)
    return store, fz


def run_episode(
    task_name: str,
    profiles: SignalProfiles,
    suite: DecoderSuite,
    options: EpisodeOptions,
    seed: int,
    memory_store: MemoryStore | None = None,
    featurizer: SceneFeaturizer | None = None,
) -> RunReport:
    """Run one closed-loop episode and return its report."""
    task, initial_state = load_task(task_name)
    report = RunReport(task=task_name, horizon=task.horizon)
    seeds = _seed_stream(seed)
    user_rng = np.random.default_rng(next(seeds))
    confirm = _Confirm(suite, profiles, report, seeds)

    if options.memory and memory_store is None:
        memory_store, featurizer = train_task_memory(task, seed=next(seeds))

    # Expected state after each reference-plan step, for deviation detection
    expected = []
    st = initial_state
    for call in task.plan:
        st = apply_skill(st, call, robot=task.robot).state
        expected.append(st)

    stim = SsvepStimulus(
        frequencies=profiles.ssvep.frequencies[: len(task.selectables)],
        duration_s=profiles.ssvep.duration_s,
        harmonic_weights=profiles.ssvep.harmonic_weights,
        snr_db=profiles.ssvep.snr_db,
    )
    bank = build_reference_bank(
        stim.frequencies, profiles.fs, round(stim.duration_s * profiles.fs)
    )

    state = initial_state
    step = 0
    while report.attempts <= options.max_attempts:
        if step >= len(task.plan):
            break
        call = task.plan[step]
        true_target = task.plan_targets[step]

        # the user's intent this step (error model may corrupt it)
        intended_obj, intended_skill = true_target, call.skill
        if options.error_model > 0 and user_rng.random() < options.error_model:
            wrong = [o for o in task.selectables if o != true_target]
            intended_obj = wrong[user_rng.integers(len(wrong))]
        if options.error_model > 0 and user_rng.random() < options.error_model:
            wrong = [s for s in task.skills_menu if s != call.skill]
            intended_skill = wrong[user_rng.integers(len(wrong))]

        chosen = _select_object_and_skill(
            task, intended_obj, intended_skill, stim, bank, profiles, suite,
            options, report, seeds, confirm, memory_store, featurizer,
        )
        if chosen is None:
            # every retry rejected; treat as a failed attempt
            report.log("stage_exhausted", step=step)
            report.attempts += 1
            state, step = initial_state, 0
            continue
        obj_choice, skill_choice = chosen

        executed = _build_call(
            task, call, true_target, obj_choice, skill_choice, state, profiles,
            suite, options, report, seeds, confirm,
        )
        if executed is None:
            continue  # parameter stage rejected; retry the whole step

        result = apply_skill(state, executed, robot=task.robot)
        report.log(
            "apply_skill", step=step, skill=executed.skill, success=result.success,
            reason=result.reason,
        )
        if result.success:
            report.skills_executed += 1
            if _states_equivalent(result.state, expected[step]):
                state = result.state
                step += 1
            else:
                # wrong-but-confirmed selection changed the world: reset
                report.log("unrecoverable", step=step)
                report.attempts += 1
                state, step = initial_state, 0
        # failed skills leave the state unchanged; retry the stage

    report.success = step >= len(task.plan) and eval_goal(state, task.goal, task.roster)
    return report


def _select_object_and_skill(
    task, intended_obj, intended_skill, stim, bank, profiles, suite,
    options, report, seeds, confirm, memory_store, featurizer,
):
    """What + How stages, possibly skipped by an accepted memory suggestion."""
    for _ in range(options.max_stage_retries):
        if options.memory and memory_store is not None and featurizer is not None:
            query_rng = np.random.default_rng(next(seeds))
            stage = (intended_obj, intended_skill)
            if stage in featurizer.signatures:
                query = featurizer.sample(stage, "position", query_rng)
                suggestion = retrieve_gated(memory_store, query)
                if suggestion is not None:
                    s_obj, s_skill, dist = suggestion
                    ok = (s_obj, s_skill) == stage
                    report.log("memory_suggestion", object=s_obj, skill=s_skill,
                               distance=dist, correct=ok)
                    if confirm(accept=ok, stage="memory"):
                        report.memory_skips += 1
                        return s_obj, s_skill

        # What: frequency-tagged object selection
        target_idx = task.selectables.index(intended_obj)
        epoch = gen_ssvep(stim, target_idx, seed=next(seeds), fs=profiles.fs)
        vis = apply_filter(select_channels(epoch, "visual"), suite.notch)
        decoded_idx = stim.frequencies.index(classify_ssvep(vis, bank).best)
        obj_choice = task.selectables[decoded_idx]
        report.ssvep.decodes += 1
        report.ssvep.correct += obj_choice == intended_obj
        if not confirm(accept=obj_choice == intended_obj, stage="object"):
            continue

        # How: k-way motor-imagery skill selection
        class_idx = task.skills_menu.index(intended_skill)
        mi_epoch = gen_mi(profiles.mi, class_idx, seed=next(seeds), fs=profiles.fs)
        ranked = mi_mod.classify_mi(suite.csp4, suite.qda4, select_channels(mi_epoch, "motor"))
        decoded_class = ranked[0]
        menu_classes = suite.mi_classes[: len(task.skills_menu)]
        if decoded_class in menu_classes:
            skill_choice = task.skills_menu[menu_classes.index(decoded_class)]
        else:
            skill_choice = None  # decoder picked a class outside the menu
        report.mi_skill.decodes += 1
        report.mi_skill.correct += skill_choice == intended_skill
        if skill_choice is not None and confirm(
            accept=skill_choice == intended_skill, stage="skill"
        ):
            return obj_choice, skill_choice
    return None


def _build_call(
    task, plan_call, true_target, obj_choice, skill_choice, state, profiles,
    suite, options, report, seeds, confirm,
):
    """Where stage: cursor-driven position, then the executable skill call.

    Categorical parameters (orientation/axis/direction) are taken from the
    reference plan: the simulated user supplies them directly.
    """
    if task.robot == "tiago":
        if obj_choice == true_target and skill_choice == plan_call.skill:
            return plan_call
        # deviating selection: act on the chosen object directly
        return SkillCall(skill=skill_choice, target=obj_choice)

    if skill_choice == plan_call.skill and plan_call.position is None:
        return plan_call  # skill takes no position parameter

    if obj_choice == true_target and skill_choice == plan_call.skill:
        intended = plan_call.position
    else:
        # deviating selection: the user drives toward the chosen object
        intended = state.objects[obj_choice].position

    # cursor start: parameter-matching prediction, else screen center
    if options.param_learning:
        pair = make_scene_pair("position", seed=next(seeds), channels=32,
                               grid_h=30, grid_w=45)
        offset_truth = pair.true_test_point
        pred, _, _ = match_point(pair.train_map, pair.train_point, pair.test_map)
        err = (pred.x - offset_truth.x, pred.y - offset_truth.y)
        start = [intended[0] + err[0], intended[1] + err[1], intended[2]]
        report.log("param_prediction", error_px=math.hypot(*err))
    else:
        start = [options.screen[0] / 2.0, options.screen[1] / 2.0, 0.0]

    cursor = list(start)
    for axis_i, axis in enumerate(("x", "y", "z")):
        guard = 0
        while abs(cursor[axis_i] - intended[axis_i]) > options.cursor_tolerance:
            guard += 1
            if guard > options.max_cursor_decodes:
                report.log("cursor_budget_exhausted", axis=axis)
                confirm(accept=False, stage="parameter")
                return None
            want_left = intended[axis_i] < cursor[axis_i]
            class_idx = 0 if want_left else 1
            prof2 = MiProfile(
                classes=("LeftHand", "RightHand"),
                epoch_s=profiles.mi.epoch_s,
                band=profiles.mi.band,
                modulation_db=profiles.mi.modulation_db,
                noise_floor=profiles.mi.noise_floor,
            )
            epoch = gen_mi(prof2, class_idx, seed=next(seeds), fs=profiles.fs)
            step = mi_mod.cursor_step(
                suite.csp2, suite.qda2, select_channels(epoch, "motor"), axis
            )
            report.mi_cursor.decodes += 1
            report.mi_cursor.correct += (step == -1) == want_left
            cursor[axis_i] += step * options.cursor_step_px
            report.cursor_distance += options.cursor_step_px

    if not confirm(accept=True, stage="parameter"):
        return None
    return SkillCall(
        skill=skill_choice,
        position=tuple(cursor),
        orientation=plan_call.orientation if skill_choice == plan_call.skill else 0,
        axis=plan_call.axis if skill_choice == plan_call.skill else 0,
        direction=plan_call.direction if skill_choice == plan_call.skill else 0,
    )


# ---------------------------------------------------------------------------
# Benchmark aggregation
# ---------------------------------------------------------------------------

def run_benchmark(suite_config: dict, seeds: list[int], workers: int = 4) -> dict:
    """Run the configured grid of episodes and aggregate per cell.

    suite_config: {"tasks": [...], "noise_levels": [{"name", "snr_db",
    "modulation_db"}...], "options": [{"name", "memory", "param_learning"}...]}
    Deterministic given the seed list. Episodes are sequential; cells run
    concurrently over a thread pool.
    """
    from concurrent.futures import ThreadPoolExecutor

    cells = []
    for noise in suite_config["noise_levels"]:
        snr = noise.get("snr_db", "inf")
        snr = float("inf") if snr in ("inf", None) else float(snr)
        profiles = SignalProfiles.at_noise(snr, float(noise["modulation_db"]))
        # one calibration per (noise level, seed), shared by every cell
        suites = {seed: calibrate_decoders(profiles, seed=seed) for seed in seeds}
        for task_name in suite_config["tasks"]:
            for opt_cfg in suite_config["options"]:
                cells.append((task_name, noise["name"], profiles, suites, opt_cfg))

    def run_cell(cell):
        task_name, noise_name, profiles, suites, opt_cfg = cell
        options = EpisodeOptions(
            memory=bool(opt_cfg.get("memory", False)),
            param_learning=bool(opt_cfg.get("param_learning", False)),
            error_model=float(opt_cfg.get("error_model", 0.0)),
        )
        reports = [
            run_episode(task_name, profiles, suites[seed], options, seed=seed)
            for seed in seeds
        ]
        return _aggregate_cell(task_name, noise_name, opt_cfg.get("name", "default"), reports)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return {"cells": list(pool.map(run_cell, cells))}


def _mean_ci(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, 0.0
    return mean, float(1.96 * arr.std(ddof=1) / np.sqrt(len(arr)))


def _aggregate_cell(task: str, noise: str, option: str, reports: list[RunReport]) -> dict:
    cell = {"task": task, "noise": noise, "option": option, "n": len(reports)}
    metrics = {
        "success_rate": [float(r.success) for r in reports],
        "attempts": [float(r.attempts) for r in reports],
        "decode_time_s": [r.decode_time_s for r in reports],
        "skills_executed": [float(r.skills_executed) for r in reports],
        "memory_skips": [float(r.memory_skips) for r in reports],
        "cursor_distance": [r.cursor_distance for r in reports],
        "object_skill_decodes": [
            float(r.ssvep.decodes + r.mi_skill.decodes) for r in reports
        ],
        "cursor_decodes": [float(r.mi_cursor.decodes) for r in reports],
    }
    for stage in ("ssvep", "mi_skill", "mi_cursor", "clench"):
        accs = [getattr(r, stage).accuracy for r in reports]
        accs = [a for a in accs if a is not None]
        metrics[f"{stage}_accuracy"] = accs or [1.0]
    for name, values in metrics.items():
        mean, ci = _mean_ci(values)
        cell[f"{name}_mean"] = mean
        cell[f"{name}_ci95"] = ci
    return cell


BENCH_COLUMNS = [
    "task", "noise", "option", "n",
    "success_rate_mean", "attempts_mean", "decode_time_s_mean",
    "skills_executed_mean", "memory_skips_mean", "cursor_distance_mean",
    "object_skill_decodes_mean", "cursor_decodes_mean",
    "ssvep_accuracy_mean", "mi_skill_accuracy_mean",
    "mi_cursor_accuracy_mean", "clench_accuracy_mean",
    "success_rate_ci95", "attempts_ci95", "ssvep_accuracy_ci95",
    "mi_skill_accuracy_ci95", "mi_cursor_accuracy_ci95",
]


def benchmark_csv(results: dict) -> str:
    """Deterministic CSV rendering of run_benchmark output."""
    lines = [",".join(BENCH_COLUMNS)]
    for cell in results["cells"]:
        fields = []
        for col in BENCH_COLUMNS:
            v = cell[col]
            fields.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def write_event_log(path, report: RunReport):
    with open(path, "w") as fh:
        for event in report.events:
            fh.write(json.dumps(event, sort_keys=True) + "\n")


def check_safety_invariant(report: RunReport) -> bool:
    """Every skill application must directly follow a confirm event."""
    last_confirm = False
    for event in report.events:
        if event["type"] == "apply_skill" and not last_confirm:
            return False
        last_confirm = event["type"] == "confirm"
    return True
