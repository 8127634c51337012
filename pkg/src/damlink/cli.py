"""Command-line front end: configure experiments, run sweeps, validate.

Configuration is a single JSON document with a versioned schema; the shipped
preset ``mmwave-128mhz`` carries the default mmWave setup (128 MHz bandwidth,
-174 dBm/Hz noise density, 1 ms coherence time, 5 paths within 312.5 ns,
up to 3 sub-paths over AoDs in [-60 deg, 60 deg], 30 dBm transmit power).
Unknown configuration keys are rejected. Every command writes its CSV outputs
plus a run manifest; re-running the manifest's configuration reproduces the
outputs bitwise (execution is sequential).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__, dam_sc
from .channel import ChannelGenConfig, discretize_delay, generate_channel
from .dam_generic import make_delay_plan, zf_time_matrices
from .dam_ofdm import (
    OfdmConfig,
    ofdm_demodulate,
    ofdm_modulate,
    solve_joint_beamforming,
    transmit_power_analytic,
    water_fill,
)
from .evaluation import (
    ExperimentConfig,
    dam_ofdm_papr_samples,
    papr_ccdf,
    run_experiment,
)

SCHEMA_VERSION = 1

PRESETS = {
    "mmwave-128mhz": {
        "channel": {
            "m_t": 128,
            "num_paths": 5,
            "tau_max": 312.5e-9,
            "bandwidth": 128e6,
            "max_subpaths": 3,
            "aod_range": [-np.pi / 3, np.pi / 3],
            "pdp": "uniform",
            "seed": 0,
        },
        "power_dbm": 30.0,
        "noise_dbm_hz": -174.0,
        "coherence_time": 1e-3,
        "trials": 200,
        "qam_order": 4,
    }
}

TOP_KEYS = {
    "schema_version",
    "preset",
    "channel",
    "power_dbm",
    "noise_dbm_hz",
    "coherence_time",
    "trials",
    "qam_order",
    "se_sweep",
    "ber_sweep",
    "papr",
    "single_carrier",
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None, seed: int | None, trials: int | None) -> dict:
    user = {}
    if path is not None:
        with open(path) as f:
            user = json.load(f)
        if user.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {user['schema_version']} "
                f"(this build reads version {SCHEMA_VERSION})"
            )
        unknown = set(user) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    preset = user.get("preset", "mmwave-128mhz")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
    cfg = _merge(PRESETS[preset], {k: v for k, v in user.items() if k not in ("preset", "schema_version")})
    chan_fields = {f.name for f in dataclasses.fields(ChannelGenConfig)}
    unknown = set(cfg["channel"]) - chan_fields
    if unknown:
        raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
    if seed is not None:
        cfg["channel"]["seed"] = seed
    if trials is not None:
        cfg["trials"] = trials
    cfg["schema_version"] = SCHEMA_VERSION
    cfg["preset"] = preset
    return cfg


def _channel_cfg(cfg: dict) -> ChannelGenConfig:
    kw = dict(cfg["channel"])
    if "aod_range" in kw:
        kw["aod_range"] = tuple(kw["aod_range"])
    return ChannelGenConfig(**kw)


def _scheme_keys(entry: dict, extra=()) -> None:
    allowed = {
        "name",
        "scheme",
        "num_precomp",
        "target_span",
        "num_subcarriers",
        "on_uncovered",
    } | set(extra)
    unknown = set(entry) - allowed
    if unknown:
        raise ConfigError(f"unknown scheme keys: {sorted(unknown)}")
    if entry.get("scheme") not in ("conventional_ofdm", "dam_ofdm", "dam_sc"):
        raise ConfigError(f"unknown scheme {entry.get('scheme')!r}")


def _experiment(cfg: dict, entry: dict, num_subcarriers: int, power_dbm=None, **kw) -> ExperimentConfig:
    chan = _channel_cfg(cfg)
    bound = discretize_delay(chan.tau_max, chan.bandwidth)
    if entry["scheme"] == "conventional_ofdm":
        cp = bound
    else:
        cp = int(entry.get("target_span", 0))
    ofdm = OfdmConfig(
        num_subcarriers=num_subcarriers, cp_len=cp, qam_order=cfg["qam_order"]
    )
    return ExperimentConfig(
        channel=chan,
        power_dbm=cfg["power_dbm"] if power_dbm is None else power_dbm,
        noise_dbm_hz=cfg["noise_dbm_hz"],
        coherence_time=cfg["coherence_time"],
        trials=cfg["trials"],
        scheme=entry["scheme"],
        ofdm=ofdm,
        num_precomp=entry.get("num_precomp"),
        target_span=int(entry.get("target_span", 0)),
        on_uncovered=str(entry.get("on_uncovered", "error")),
        **kw,
    )


def write_manifest(out_dir: str, cfg: dict, outputs: list[str], command: str) -> str:
    manifest = {
        "command": command,
        "artifact_version": __version__,
        "resolved_config": cfg,
        "seed": cfg["channel"]["seed"],
        "outputs": sorted(outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, default=float)
    return path


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def cmd_se_sweep(cfg: dict, out_dir: str) -> list[str]:
    """Average spectral efficiency vs subcarrier count, one CSV per scheme.

    Columns: subcarriers, mean_se_bits_per_sym (bits/s/Hz given unit symbol
    rate), stderr (std error of the per-trial mean).
    """
    section = cfg.get("se_sweep")
    if not section:
        raise ConfigError("config has no se_sweep section")
    sweep = section.get("subcarriers", [])
    if not sweep:
        raise ConfigError("se_sweep.subcarriers is empty")
    outputs = []
    for entry in section.get("schemes", []):
        _scheme_keys(entry)
        rows = []
        for k in sweep:
            rep = run_experiment(_experiment(cfg, entry, int(k)))
            rows.append([int(k), repr(rep.avg_se), repr(rep.se_stderr)])
        path = os.path.join(out_dir, f"se_{entry['name']}.csv")
        _write_csv(path, ["subcarriers", "mean_se_bits_per_sym", "stderr"], rows)
        outputs.append(path)
    return outputs


def cmd_ber_sweep(cfg: dict, out_dir: str) -> list[str]:
    """Analytic uncoded BER vs SNR (P / sigma^2, dB), one CSV per scheme.

    Columns: snr_db, ber.
    """
    section = cfg.get("ber_sweep")
    if not section:
        raise ConfigError("config has no ber_sweep section")
    snrs = section.get("snr_db", [])
    if not snrs:
        raise ConfigError("ber_sweep.snr_db is empty")
    chan = _channel_cfg(cfg)
    noise_dbm = cfg["noise_dbm_hz"] + 10 * np.log10(chan.bandwidth)
    outputs = []
    for entry in section.get("schemes", []):
        _scheme_keys(entry)
        k = int(entry.get("num_subcarriers", section.get("num_subcarriers", 128)))
        rows = []
        for snr_db in snrs:
            rep = run_experiment(
                _experiment(cfg, entry, k, power_dbm=noise_dbm + snr_db)
            )
            rows.append([repr(float(snr_db)), repr(rep.ber)])
        path = os.path.join(out_dir, f"ber_{entry['name']}.csv")
        _write_csv(path, ["snr_db", "ber"], rows)
        outputs.append(path)
    return outputs


def cmd_papr(cfg: dict, out_dir: str, oversample: int) -> list[str]:
    """PAPR CCDF (per antenna, per OFDM symbol), one CSV per scheme.

    Columns: threshold_db, ccdf (exceedance fraction).
    """
    section = cfg.get("papr")
    if not section:
        raise ConfigError("config has no papr section")
    blocks = int(section.get("blocks", 0))
    if blocks < 1:
        raise ConfigError("papr.blocks must be >= 1")
    thresholds = np.asarray(
        section.get("thresholds_db", np.arange(0.0, 12.25, 0.25).tolist()), dtype=float
    )
    outputs = []
    for entry in section.get("schemes", []):
        _scheme_keys(entry)
        k = int(entry.get("num_subcarriers", 128))
        exp = _experiment(
            cfg,
            entry,
            k,
            collect_papr_blocks=blocks,
            papr_oversample=oversample,
        )
        rep = run_experiment(exp)
        ccdf = papr_ccdf(rep.papr_samples_db, thresholds)
        path = os.path.join(out_dir, f"papr_{entry['name']}.csv")
        _write_csv(
            path,
            ["threshold_db", "ccdf"],
            [[repr(float(t)), repr(float(c))] for t, c in zip(thresholds, ccdf)],
        )
        outputs.append(path)
    return outputs


def cmd_single_carrier(cfg: dict, out_dir: str) -> list[str]:
    """Single-carrier perfect-alignment link over the configured trials.

    Columns: trial, snr_db (analytic), se_bits_per_sym (guard-adjusted).
    """
    section = cfg.get("single_carrier", {})
    unknown = set(section) - {"beamformer"}
    if unknown:
        raise ConfigError(f"unknown single_carrier keys: {sorted(unknown)}")
    kind = section.get("beamformer", "zf")
    if kind not in ("zf", "mrt"):
        raise ConfigError("single_carrier.beamformer must be 'zf' or 'mrt'")
    chan = _channel_cfg(cfg)
    power = 10 ** (cfg["power_dbm"] / 10) * 1e-3
    noise = 10 ** (cfg["noise_dbm_hz"] / 10) * 1e-3 * chan.bandwidth
    bound = discretize_delay(chan.tau_max, chan.bandwidth)
    frac = 1.0 - 2 * bound / (chan.bandwidth * cfg["coherence_time"])
    rows = []
    for trial in range(cfg["trials"]):
        ch = generate_channel(chan, trial)
        bf = (dam_sc.zf_beamformers if kind == "zf" else dam_sc.mrt_beamformers)(
            ch, power
        )
        g = dam_sc.sc_snr(bf, ch, noise)
        rows.append(
            [trial, repr(10 * np.log10(g)), repr(frac * np.log2(1.0 + g))]
        )
    path = os.path.join(out_dir, f"single_carrier_{kind}.csv")
    _write_csv(path, ["trial", "snr_db", "se_bits_per_sym"], rows)
    return [path]


def cmd_validate(seed: int) -> int:
    """Randomized small-instance invariant suite; returns a process exit code.

    Setting the environment variable DAMLINK_VALIDATE_PERTURB injects a
    beamformer perturbation so the failure path itself can be exercised.
    """
    rng = np.random.default_rng(seed)
    perturb = bool(os.environ.get("DAMLINK_VALIDATE_PERTURB"))
    print(f"validate: seed={seed}")
    failures = []

    def check(name: str, ok: bool, detail: str = ""):
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
        if not ok:
            failures.append(name)

    for rep in range(5):
        cfg = ChannelGenConfig(
            m_t=int(rng.integers(6, 12)),
            num_paths=int(rng.integers(2, 5)),
            tau_max=10 / 32e6,
            bandwidth=32e6,
            seed=seed,
        )
        ch = generate_channel(cfg, rep)

        bf = dam_sc.zf_beamformers(ch, power=1.0)
        vec = bf.vectors.copy()
        if perturb:
            vec[0] = vec[0] + 1e-3
        cross = ch.gains.conj() @ vec.T
        resid = np.max(np.abs(cross - np.diag(np.diag(cross))))
        check(
            "single-carrier zero-forcing residual",
            resid <= 1e-10 * np.linalg.norm(ch.gains),
            f"max residual {resid:.2e}",
        )

        plan = make_delay_plan(ch, ch.num_paths, 0)
        tbf = zf_time_matrices(ch, plan)
        fb = solve_joint_beamforming(ch, plan, tbf, 1.0, 1e-2, 16)
        actual = transmit_power_analytic(tbf, fb.u, plan, 16)
        check(
            "transmit power identity",
            abs(actual - 1.0) <= 1e-8,
            f"power {actual:.6f}",
        )

        kkt = water_fill(np.abs(rng.standard_normal(8)) + 0.1, 4.0)
        p, level = kkt
        ok = abs(p.sum() - 4.0) <= 1e-9 and np.all(p >= 0)
        check("water-filling budget and positivity", ok)

        ofdm = OfdmConfig(num_subcarriers=16, cp_len=4)
        grid = (rng.standard_normal((3, 16)) + 1j * rng.standard_normal((3, 16))) / np.sqrt(2)
        u = np.tile(np.eye(1, ch.m_t, dtype=complex), (16, 1))
        rt = ofdm_demodulate(ofdm_modulate(grid, u, ofdm)[0], ofdm)
        check(
            "modem round trip",
            np.allclose(rt, grid, atol=1e-12),
        )

    print("validate: " + ("FAIL " + ", ".join(sorted(set(failures))) if failures else "PASS"))
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="damlink",
        description="Delay alignment modulation link-level experiments",
    )
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--seed", type=int, help="override channel seed")
    p.add_argument("--trials", type=int, help="override trial count")
    p.add_argument("--out", default=".", help="output directory for CSV + manifest")
    p.add_argument(
        "--sequential",
        action="store_true",
        help="force sequential trial execution (always on; flag kept for scripts)",
    )
    p.add_argument(
        "--oversample-papr",
        type=int,
        default=1,
        help="PAPR oversampling factor (default 1; 4 exposes inter-sample peaks)",
    )
    p.add_argument(
        "command",
        choices=["se-sweep", "ber-sweep", "papr", "single-carrier", "validate"],
    )
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.seed if args.seed is not None else 0)
        cfg = load_config(args.config, args.seed, args.trials)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "se-sweep":
            outputs = cmd_se_sweep(cfg, args.out)
        elif args.command == "ber-sweep":
            outputs = cmd_ber_sweep(cfg, args.out)
        elif args.command == "papr":
            outputs = cmd_papr(cfg, args.out, args.oversample_papr)
        else:
            outputs = cmd_single_carrier(cfg, args.out)
        manifest = write_manifest(args.out, cfg, outputs, args.command)
        for path in outputs + [manifest]:
            print(path)
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
