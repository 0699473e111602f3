"""Three-stage neural decoding on synthetic EEG/EMG.

Walks the What/How/Where + confirm stack end to end: frequency-tagged
object selection (CCA over reference sinusoids), k-way motor imagery
(CSP + shrinkage QDA), binary cursor control, and clench detection by
variance thresholding.

Run: python demos/01_decoding_pipeline.py
"""

import numpy as np

from noir.emg import calibrate_emg, detect_clench
from noir.mi import classify_mi, csp_features, cursor_step, fit_csp, fit_qda
from noir.signal import FilterSpec, apply_filter, select_channels
from noir.ssvep import build_reference_bank, classify_ssvep
from noir.synth import (
    ClenchProfile,
    MiProfile,
    SsvepStimulus,
    gen_calibration_session,
    gen_clench_window,
    gen_mi,
    gen_ssvep,
)

FS = 250.0
NOTCH = FilterSpec(kind="notch", f_notch=60.0, order=2)


def what_stage():
    print("== What: SSVEP frequency tagging ==")
    stim = SsvepStimulus(snr_db=0.0)  # signal power equals pink-noise power
    bank = build_reference_bank(stim.frequencies, FS, round(stim.duration_s * FS))
    hits = 0
    for trial in range(40):
        target = trial % 4
        epoch = gen_ssvep(stim, target, seed=trial, fs=FS)
        visual = apply_filter(select_channels(epoch, "visual"), NOTCH)
        result = classify_ssvep(visual, bank)
        hits += result.best == stim.frequencies[target]
        if trial < 4:
            rhos = ", ".join(f"{f:g}Hz:{result.rho[f]:.2f}" for f in stim.frequencies)
            print(f"  trial {trial}: target {stim.frequencies[target]:g}Hz -> "
                  f"{result.best:g}Hz  ({rhos})")
    print(f"  accuracy at 0 dB SNR over 40 trials: {hits / 40:.2f}\n")


def how_stage():
    print("== How: 4-way motor imagery (CSP + QDA) ==")
    session = gen_calibration_session(MiProfile(modulation_db=6.0), seed=0, fs=FS)
    motor = [select_channels(e, "motor") for e in session]
    csp = fit_csp(motor)
    qda = fit_qda([csp_features(csp, e).f for e in motor], [e.label for e in motor])
    profile = MiProfile(modulation_db=6.0)
    hits = 0
    for trial in range(40):
        cls = trial % 4
        epoch = gen_mi(profile, cls, seed=1000 + trial, fs=FS)
        decoded = classify_mi(csp, qda, select_channels(epoch, "motor"))[0]
        hits += decoded == profile.classes[cls]
    print(f"  held-out accuracy at +6 dB modulation over 40 trials: {hits / 40:.2f}\n")


def where_stage():
    print("== Where: 2-way cursor control ==")
    profile = MiProfile(classes=("LeftHand", "RightHand"), modulation_db=6.0)
    session = gen_calibration_session(profile, seed=1, fs=FS)
    motor = [select_channels(e, "motor") for e in session]
    csp = fit_csp(motor)
    qda = fit_qda([csp_features(csp, e).f for e in motor], [e.label for e in motor])
    cursor, target, step_px = 180.0, 120.0, 10.0
    trace = [cursor]
    seed = 0
    while abs(cursor - target) > 5.0 and len(trace) < 30:
        want_left = target < cursor
        epoch = gen_mi(profile, 0 if want_left else 1, seed=2000 + seed, fs=FS)
        seed += 1
        cursor += step_px * cursor_step(csp, qda, select_channels(epoch, "motor"), "x")
        trace.append(cursor)
    print(f"  cursor {trace[0]:.0f} -> {target:.0f}px in {len(trace) - 1} steps: "
          + " ".join(f"{v:.0f}" for v in trace) + "\n")


def confirm_stage():
    print("== Confirm: EMG clench thresholding ==")
    profile = ClenchProfile(rest_var=1.0, clench_var=100.0)
    rest = [gen_clench_window(profile, False, seed=i, fs=FS) for i in range(3)]
    clench = [gen_clench_window(profile, True, seed=100 + i, fs=FS) for i in range(3)]
    calib = calibrate_emg(rest, clench)
    print(f"  threshold between variance regimes: {calib.threshold:.2f}")
    hits = sum(
        detect_clench(calib, gen_clench_window(profile, i % 2 == 1, seed=200 + i, fs=FS))
        == (i % 2 == 1)
        for i in range(100)
    )
    print(f"  held-out detection over 100 windows: {hits / 100:.2f}")


if __name__ == "__main__":
    np.set_printoptions(precision=3)
    what_stage()
    how_stage()
    where_stage()
    confirm_stage()
