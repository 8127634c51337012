"""Acceptance gate: one test per criterion, one printed pass/fail line each.

Independent oracles (brute-force convolution, numeric water-level bisection,
full time-domain link simulation, Monte Carlo bit counting) check the analytic
code paths; tolerances are stated inline next to each check.
"""

import numpy as np
import pytest

from damlink.channel import (
    ChannelGenConfig,
    MultipathChannel,
    array_response,
    broadside_correlation_closed_form,
    generate_channel,
    path_correlation,
)
from damlink.dam_generic import (
    UncoveredPathError,
    achieved_span,
    effective_taps,
    make_delay_plan,
    zf_time_matrices,
)
from damlink.dam_ofdm import (
    OfdmConfig,
    cp_overhead,
    dam_precode_time,
    effective_se,
    guard_overhead,
    ofdm_modulate,
    simulate_ofdm_link,
    solve_joint_beamforming,
    transmit_power_analytic,
)
from damlink.dam_sc import sc_snr, simulate_sc_link, zf_beamformers
from damlink.evaluation import (
    ber_dam_ofdm,
    ber_ofdm,
    ber_ofdm_monte_carlo,
    dam_ofdm_papr_samples,
)

# transmit power and noise level of the default mmWave setup
POWER_W = 1.0  # 30 dBm
NOISE_W = 10 ** (-174 / 10) * 1e-3 * 128e6  # -174 dBm/Hz over 128 MHz


def _line(num, name, ok, detail=""):
    print(f"criterion {num:02d} {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"criterion {num} {name} failed: {detail}"


def _rand_channel(rng, m_t, num_paths, max_delay=10):
    delays = np.sort(rng.choice(max_delay + 1, size=num_paths, replace=False))
    gains = rng.standard_normal((num_paths, m_t)) + 1j * rng.standard_normal(
        (num_paths, m_t)
    )
    return MultipathChannel.from_arrays(gains, delays, bandwidth=32e6)


def test_acceptance_01_cp_overhead_arithmetic():
    checks = [
        (cp_overhead(40, 512) * 100, 7.25, 0.005),
        (cp_overhead(40, 128) * 100, 23.8, 0.05),
        (cp_overhead(40, 64) * 100, 38.5, 0.05),
        (guard_overhead(40, 1.28e5) * 100, 0.031, 0.0005),
    ]
    worst = max(abs(a - b) - tol for a, b, tol in checks)
    _line(1, "cp-overhead-arithmetic", worst <= 0, f"margin {worst:.2e}")


def test_acceptance_02_transmit_power_identity():
    # empirical mean ||q[i]||^2 of a QPSK-driven stream vs the analytic value,
    # 50 random (channel, plan, beamformer) instances, tolerance 1%
    rng = np.random.default_rng(0xA2)
    k = 32
    worst = 0.0
    for _ in range(50):
        ch = _rand_channel(rng, int(rng.integers(4, 9)), int(rng.integers(2, 5)))
        plan = make_delay_plan(ch, ch.num_paths, 0)
        tbf = zf_time_matrices(ch, plan)
        for lp, b in enumerate(tbf.bases):
            r = b.shape[1]
            tbf.inner[lp] = rng.standard_normal((r, ch.m_t)) + 1j * rng.standard_normal(
                (r, ch.m_t)
            )
        u = rng.standard_normal((k, ch.m_t)) + 1j * rng.standard_normal((k, ch.m_t))
        kmax = int(plan.kappas.max())
        cfg = OfdmConfig(num_subcarriers=k, cp_len=kmax)
        grid = np.exp(0.5j * np.pi * rng.integers(0, 4, (400, k)))
        q = dam_precode_time(ofdm_modulate(grid, u, cfg), plan, tbf)
        # drop the trailing precoder tail, then the first kmax samples of each
        # OFDM symbol, whose delayed copies straddle two symbols
        body = q[:, : 400 * cfg.symbol_len].reshape(ch.m_t, 400, cfg.symbol_len)
        body = body[:, :, kmax:]
        assert body.shape[1] * body.shape[2] >= 1e4
        emp = np.mean(np.sum(np.abs(body) ** 2, axis=0))
        ana = transmit_power_analytic(tbf, u, plan, k)
        worst = max(worst, abs(emp - ana) / ana)
    _line(2, "transmit-power-identity", worst <= 0.01, f"worst rel err {worst:.2e}")


def test_acceptance_03_channel_factorization_identity():
    # block-stacked effective frequency channel rebuilt path-by-path equals the
    # structured product route, 50 random instances, tolerance 1e-10 relative
    rng = np.random.default_rng(0xA3)
    k = 16
    worst = 0.0
    for _ in range(50):
        ch = _rand_channel(rng, int(rng.integers(6, 13)), int(rng.integers(2, 5)))
        span = 0 if rng.uniform() < 0.5 else min(2, ch.n_span)
        lp_count = ch.num_paths if span == 0 else max(ch.num_paths - 1, 1)
        try:
            plan = make_delay_plan(ch, lp_count, span)
        except ValueError:
            plan = make_delay_plan(ch, ch.num_paths, 0)
        tbf = zf_time_matrices(ch, plan)
        sigma = 0.3
        start = plan.window[0]
        for kk in range(k):
            # direct route: per-block sums over the paths inside each window
            direct = []
            for lp, kappa in enumerate(plan.kappas):
                blk = np.zeros(tbf.bases[lp].shape[1], dtype=complex)
                for l in plan.inside_sets[lp]:
                    phase = np.exp(
                        2j * np.pi * kk * (ch.delays[l] + kappa - start) / k
                    )
                    blk += phase * (tbf.bases[lp].conj().T @ ch.gains[l]) / sigma
                direct.append(blk)
            direct = np.concatenate(direct)
            # structured route: stacked bases times the whitened channel row
            e_k = np.sum(
                ch.gains
                * np.exp(2j * np.pi * kk * (ch.delays - start) / k)[:, None],
                axis=0,
            ) / sigma
            blocks = [
                np.exp(2j * np.pi * kk * kappa / k) * (b.conj().T @ e_k)
                for b, kappa in zip(tbf.bases, plan.kappas)
            ]
            product = np.concatenate(blocks)
            err = np.linalg.norm(direct - product) / max(np.linalg.norm(direct), 1e-30)
            worst = max(worst, err)
    _line(3, "channel-factorization-identity", worst <= 1e-10, f"worst {worst:.2e}")


def test_acceptance_04_solver_optimality_oracle():
    # small instances: closed form vs numeric water-level bisection with KKT
    # check (tolerance 1e-6) and vs 1e3 random feasible beamformer samples
    rng = np.random.default_rng(0xA4)
    k, m_t, num_paths = 8, 4, 3
    power, noise = 1.0, 0.5
    worst_gap = 0.0
    best_random_excess = -np.inf
    for _ in range(10):
        ch = _rand_channel(rng, m_t, num_paths, max_delay=5)
        plan = make_delay_plan(ch, num_paths, 0)
        tbf = zf_time_matrices(ch, plan)
        fb = solve_joint_beamforming(ch, plan, tbf, power, noise, k)
        obj = np.sum(np.log2(1.0 + fb.gamma))

        # independent per-subcarrier gain: projection of the whitened channel
        # onto the column space of the phased stacked bases, via lstsq
        c = np.hstack(tbf.bases)
        sigma = np.sqrt(noise)
        gains = np.zeros(k)
        e_rows = np.zeros((k, m_t), dtype=complex)
        d_phases = np.zeros((k, c.shape[1]), dtype=complex)
        col = 0
        widths = [b.shape[1] for b in tbf.bases]
        for kk in range(k):
            e_k = np.sum(
                ch.gains
                * np.exp(2j * np.pi * kk * (ch.delays - plan.window[0]) / k)[:, None],
                axis=0,
            ) / sigma
            e_rows[kk] = e_k
            ph = np.concatenate(
                [
                    np.full(w, np.exp(-2j * np.pi * kk * kap / k))
                    for w, kap in zip(widths, plan.kappas)
                ]
            )
            d_phases[kk] = ph
            ck = c * ph[None, :]
            coef, *_ = np.linalg.lstsq(ck, e_k, rcond=None)
            gains[kk] = float(np.real(e_k.conj() @ (ck @ coef)))
        # numeric water-level bisection
        lo, hi = 0.0, k * power + 1.0 / gains.min()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            tot = np.sum(np.maximum(mid - 1.0 / gains, 0.0))
            lo, hi = (mid, hi) if tot < k * power else (lo, mid)
        p = np.maximum(lo - 1.0 / gains, 0.0)
        # KKT: budget met, active carriers at the common level
        assert abs(p.sum() - k * power) < 1e-6
        assert np.all(np.abs(p[p > 0] + 1.0 / gains[p > 0] - lo) < 1e-6)
        obj_ref = np.sum(np.log2(1.0 + p * gains))
        worst_gap = max(worst_gap, abs(obj - obj_ref) / obj_ref)

        # random feasible samples may not beat the closed form
        best = -np.inf
        for _ in range(100):
            w = rng.standard_normal((c.shape[1], k)) + 1j * rng.standard_normal(
                (c.shape[1], k)
            )
            vw = c @ (d_phases.T * w)  # column kk = C D_k w_k
            cur = np.sum(np.abs(vw) ** 2) / k
            vw = vw * np.sqrt(power / cur)
            g = np.abs(np.einsum("ki,ik->k", e_rows.conj(), vw)) ** 2
            best = max(best, np.sum(np.log2(1.0 + g)))
        best_random_excess = max(best_random_excess, best - obj)
    ok = worst_gap <= 1e-6 and best_random_excess <= 1e-9
    _line(
        4,
        "solver-optimality-oracle",
        ok,
        f"gap {worst_gap:.2e}, random excess {best_random_excess:.2e}",
    )


def test_acceptance_05_master_link_oracle():
    # full time-domain chain vs analytic per-subcarrier SNR, tolerance 2%
    rng = np.random.default_rng(0xA5)
    k, frames = 32, 1500  # 48000 symbols
    ch = _rand_channel(rng, 16, 4, max_delay=8)
    worst = 0.0
    for num_precomp, span in [(4, 0), (3, min(2, ch.n_span))]:
        plan = make_delay_plan(ch, num_precomp, span)
        tbf = zf_time_matrices(ch, plan)
        fb = solve_joint_beamforming(ch, plan, tbf, 10.0, 1.0, k)
        cfg = OfdmConfig(num_subcarriers=k, cp_len=max(span, 0))
        link = simulate_ofdm_link(ch, plan, tbf, fb.u, cfg, 1.0, frames, rng)
        worst = max(worst, float(np.max(np.abs(link.snr - fb.gamma) / fb.gamma)))
    _line(5, "master-link-oracle", worst <= 0.02, f"worst rel err {worst:.2e}")


def test_acceptance_06_perfect_single_carrier():
    rng = np.random.default_rng(0xA6)
    ch = generate_channel(
        ChannelGenConfig(m_t=16, num_paths=4, tau_max=10 / 32e6, bandwidth=32e6, seed=6),
        0,
    )
    bf = zf_beamformers(ch, power=1.0)
    cross = ch.gains.conj() @ bf.vectors.T
    resid = np.max(np.abs(cross - np.diag(np.diag(cross)))) / np.linalg.norm(ch.gains)
    s = np.exp(0.5j * np.pi * rng.integers(0, 4, 5000))
    rep = simulate_sc_link(ch, bf, s, noise_power=0.0)
    isi_db = 10 * np.log10(max(rep.isi_power, 1e-300) / rep.desired_power)
    sigma2 = NOISE_W
    snr_sim = np.abs(rep.desired_amplitude) ** 2 / sigma2
    snr_ana = sc_snr(bf, ch, sigma2)
    rel = abs(snr_sim - snr_ana) / snr_ana
    ok = resid <= 1e-10 and isi_db <= -100 and rel <= 1e-9
    _line(
        6,
        "perfect-single-carrier",
        ok,
        f"zf {resid:.1e}, isi {isi_db:.0f} dB, snr rel {rel:.1e}",
    )


def test_acceptance_07_generic_span_instance():
    rng = np.random.default_rng(0xA7)
    gains = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    ch = MultipathChannel.from_arrays(gains, [1, 3, 4, 6], bandwidth=32e6)
    plan = make_delay_plan(ch, 3, 2)
    span = achieved_span(ch, plan, zf_time_matrices(ch, plan))
    ok = np.array_equal(plan.kappas, [3, 2, 0]) and span == 2
    _line(7, "generic-span-instance", ok, f"kappas {plan.kappas.tolist()}, span {span}")


def test_acceptance_08_asymptotic_orthogonality():
    base = np.pi / 2
    rho_256 = broadside_correlation_closed_form(base, base + np.deg2rad(5), 256)
    mono = True
    for dd in (5.0, 10.0, 20.0):
        rhos = [
            broadside_correlation_closed_form(base, base + np.deg2rad(dd), m)
            for m in (16, 64, 256)
        ]
        mono = mono and rhos[0] >= rhos[1] >= rhos[2]
        # closed form agrees with the explicit steering-vector correlation
        for m, r in zip((16, 64, 256), rhos):
            explicit = path_correlation(
                array_response(base, m), array_response(base + np.deg2rad(dd), m)
            )
            assert np.isclose(r, explicit, atol=1e-12)
    ok = rho_256 <= 1e-3 and mono
    _line(8, "asymptotic-orthogonality", ok, f"rho256(5deg)={rho_256:.2e}")


@pytest.fixture(scope="module")
def se_study():
    """200-trial spectral-efficiency study of the default mmWave setup."""
    cfg = ChannelGenConfig()  # m_t=128, 5 paths, 312.5 ns, 128 MHz
    trials = 200
    configs = {
        ("dam", 64): (5, 0),
        ("dam", 128): (5, 0),
        ("dam", 512): (5, 0),
        ("dam_sp5", 64): (4, 5),
        ("ofdm", 64): None,
        ("ofdm", 128): None,
        ("ofdm", 512): None,
    }
    ses = {key: np.zeros(trials) for key in configs}
    for trial in range(trials):
        ch = generate_channel(cfg, trial)
        for (name, k), setup in configs.items():
            if setup is None:
                plan = make_delay_plan(ch, 1, ch.n_span)
                cp = 40
            else:
                # unlucky delay draws can leave the earliest path outside every
                # reduced window; the plan is then not constructible and the
                # draw is excluded (NaN) from that scheme's trace
                try:
                    plan = make_delay_plan(ch, setup[0], setup[1])
                except UncoveredPathError:
                    ses[(name, k)][trial] = np.nan
                    continue
                cp = setup[1]
            tbf = zf_time_matrices(ch, plan)
            fb = solve_joint_beamforming(ch, plan, tbf, POWER_W, NOISE_W, k)
            ses[(name, k)][trial] = effective_se(fb.gamma, k, cp)
    return ses


def test_acceptance_09_figure_trend_spectral_efficiency(se_study):
    se = {key: float(v.mean()) for key, v in se_study.items() if key[0] != "dam_sp5"}
    dam = [se[("dam", k)] for k in (64, 128, 512)]
    var = (max(dam) - min(dam)) / min(dam)
    a = var <= 0.02
    b = se[("ofdm", 512)] > se[("ofdm", 128)] > se[("ofdm", 64)]
    c = all(se[("dam", k)] > se[("ofdm", k)] for k in (64, 128, 512))
    # the reduced-span scheme only exists on draws where every path lands in
    # some window; compare schemes trial-by-trial on those common draws
    sp5 = se_study[("dam_sp5", 64)]
    valid = ~np.isnan(sp5)
    margins = {
        k: float(np.mean(sp5[valid] - se_study[("ofdm", k)][valid]))
        for k in (128, 512)
    }
    d = all(m > 0 for m in margins.values())
    ok = a and b and c and d
    _line(
        9,
        "figure-trend-spectral-efficiency",
        ok,
        f"dam spread {var:.3%}, ofdm {se[('ofdm', 512)]:.2f}/"
        f"{se[('ofdm', 128)]:.2f}/{se[('ofdm', 64)]:.2f}, "
        f"dam {dam[0]:.2f}, reduced-span margins over {int(valid.sum())} "
        f"constructible draws: vs ofdm128 {margins[128]:+.3f}, "
        f"vs ofdm512 {margins[512]:+.2e}",
    )


def test_acceptance_10_ber_ordering():
    rng = np.random.default_rng(0xAA)
    k, order, cp = 128, 256, 40
    snr_db = np.arange(-40, 1, 5, dtype=float)
    trials = 3
    ordering_ok = True
    mc_checked = False
    for m_t in (64, 128, 256):
        cfg = ChannelGenConfig(m_t=m_t)
        dam_curve = np.zeros(len(snr_db))
        ofdm_curve = np.zeros(len(snr_db))
        for trial in range(trials):
            ch = generate_channel(cfg, trial)
            plan = make_delay_plan(ch, 5, 0)
            for i, s in enumerate(snr_db):
                power = 10 ** (s / 10)  # noise power normalized to one
                tbf = zf_time_matrices(ch, plan)
                fb = solve_joint_beamforming(ch, plan, tbf, power, 1.0, k)
                dam_curve[i] += ber_dam_ofdm(fb.gamma, order) / trials
                ofdm_curve[i] += ber_ofdm(ch, k, cp, power, 1.0, order) / trials
        ordering_ok = ordering_ok and np.all(dam_curve <= ofdm_curve + 1e-12)
        if not mc_checked and m_t == 64:
            # Monte Carlo cross-check at a well-sampled point
            for s in snr_db:
                power = 10 ** (s / 10)
                ch = generate_channel(cfg, 0)
                ana = ber_ofdm(ch, k, cp, power, 1.0, order)
                if 1e-3 <= ana <= 0.3:
                    mc, bits = ber_ofdm_monte_carlo(
                        ch, k, cp, power, 1.0, order, rng, min_errors=500
                    )
                    sigma = np.sqrt(ana * (1 - ana) / bits)
                    assert abs(mc - ana) <= 3 * sigma, (
                        f"MC {mc:.4g} vs analytic {ana:.4g}, 3 sigma {3*sigma:.2g}"
                    )
                    mc_checked = True
                    break
    ok = ordering_ok and mc_checked
    _line(10, "ber-ordering", ok, f"mc checked {mc_checked}")


def test_acceptance_11_papr_ordering():
    rng = np.random.default_rng(0xAB)
    cfg = ChannelGenConfig()
    frames = 80  # x 128 antennas = 10240 blocks per configuration
    ch = generate_channel(cfg, 0)

    def samples(num_precomp, span, k, conventional=False):
        if conventional:
            plan = make_delay_plan(ch, 1, ch.n_span)
            cp = 40
        else:
            plan = make_delay_plan(ch, num_precomp, span)
            cp = span
        tbf = zf_time_matrices(ch, plan)
        fb = solve_joint_beamforming(ch, plan, tbf, POWER_W, NOISE_W, k)
        ofdm = OfdmConfig(num_subcarriers=k, cp_len=cp)
        return dam_ofdm_papr_samples(
            ch, plan, tbf, fb.u, ofdm, frames, np.random.default_rng(rng.integers(2**32))
        )

    ofdm512 = samples(None, None, 512, conventional=True)
    q_ofdm = np.quantile(ofdm512, 0.99)
    oks, details = [], []
    for num_precomp, span in [(5, 0), (4, 5)]:
        dam32 = samples(num_precomp, span, 32)
        assert len(dam32) >= 1e4 and len(ofdm512) >= 1e4
        q_dam = np.quantile(dam32, 0.99)
        oks.append(q_dam < q_ofdm)
        details.append(f"span{span}: {q_dam:.2f} dB vs {q_ofdm:.2f} dB")
    _line(11, "papr-ordering", all(oks), "; ".join(details))


def test_acceptance_12_tap_model_equals_convolution():
    rng = np.random.default_rng(0xAC)
    worst = 0.0
    done = 0
    while done < 100:
        ch = _rand_channel(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)))
        num_precomp = int(rng.integers(1, ch.num_paths + 1))
        span = int(rng.integers(0, ch.n_span + 1)) if ch.n_span else 0
        try:
            plan = make_delay_plan(ch, num_precomp, span)
        except ValueError:
            continue
        done += 1
        tbf = zf_time_matrices(ch, plan)
        taps = effective_taps(ch, plan, tbf)
        n = 30
        d = rng.standard_normal((ch.m_t, n)) + 1j * rng.standard_normal((ch.m_t, n))
        y = ch.apply(dam_precode_time(d, plan, tbf))
        ref = np.zeros_like(y)
        start = plan.window[0]
        for t in range(taps.shape[0]):
            ref[start + t : start + t + n] += taps[t] @ d
        scale = max(np.max(np.abs(y)), 1e-30)
        worst = max(worst, float(np.max(np.abs(y - ref)) / scale))
    _line(12, "tap-model-equals-convolution", worst <= 1e-9, f"worst {worst:.2e}")
