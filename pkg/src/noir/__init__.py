"""Desk-scale brain-robot interface pipeline on synthetic signals.

Multichannel epoch handling, synthetic EEG/EMG generation, three-stage
decoding (frequency-tagged object choice, motor-imagery skill choice,
cursor parameter control, muscle-tension confirm), retrieval-based skill
memory, one-shot parameter correspondence, a symbolic tabletop task
simulator, and a closed-loop orchestrator with a simulated user.
"""

from .signal import (
    DEFAULT_MONTAGE,
    Epoch,
    FilterSpec,
    Montage,
    SignalError,
    apply_filter,
    read_epoch,
    select_channels,
    write_epoch,
)
from .synth import (
    ClenchProfile,
    MiProfile,
    SsvepStimulus,
    gen_calibration_session,
    gen_clench_window,
    gen_mi,
    gen_ssvep,
)
from .ssvep import build_reference_bank, cca_max_correlation, classify_ssvep
from .mi import (
    classify_mi,
    cross_validate,
    csp_features,
    cursor_step,
    fit_csp,
    fit_qda,
)
from .emg import calibrate_emg, detect_clench
from .embed import EmbedConfig, EmbeddingNet, train_embedding, triplet_loss
from .memory import (
    MemoryStore,
    SceneFeaturizer,
    retrieve,
    retrieve_gated,
    train_memory,
)
from .parammatch import (
    FeatureMap,
    MatchError,
    ParamPoint,
    baseline_on_objects,
    baseline_pixel_similarity,
    baseline_random,
    cell_to_image,
    evaluate_matching,
    image_to_cell,
    make_match_corpus,
    make_scene_pair,
    match_point,
    matching_report_csv,
    read_feature_map,
    write_feature_map,
)
from .tasksim import (
    TASK_NAMES,
    SkillCall,
    TaskSpec,
    WorldState,
    apply_skill,
    eval_goal,
    load_task,
    replay_plan,
)
from .orchestrator import (
    DecoderSuite,
    EpisodeOptions,
    RunReport,
    SignalProfiles,
    calibrate_decoders,
    run_benchmark,
    run_episode,
)

__version__ = "1.0.0"
