use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use nhreal::C64;
use nhreal::calibrate::{calibrate_s, CalibrationRecord, CalibrationRequest};
use nhreal::eig::{eig_full, EigenSystem, PairStatus};
use nhreal::laser::{find_threshold, power_flows, PumpSpec};
use nhreal::linalg::hermitian_eig;
use nhreal::matrix::{collinearity, norm2, Matrix};
use nhreal::mech::{
    dynamical_matrix, eigenfrequencies, hermitian_equivalent_gap, integrate, verify_modes, OscillatorChain, PhaseState,
};
use nhreal::model::{LatticeSpec, Model, SplitMix64};
use nhreal::perturb::{
    compare_with_exact, first_order, log_slope, matrix_elements, nhph_pairs, tracked_derivative, zero_mode_pair_formula,
};
use nhreal::skin::{mode_reports, verify_selective_skin, verify_standard_skin, zero_mode_equality, zero_mode_index, Localization};
use nhreal::spectra::{certify, chain_matches_reference, ep_analyze, ep_location, harmonic_levels, real_support};
use nhreal::suite::{run_suite, Property, SuiteConfig};
use nhreal::Tolerances;

use crate::config::{RunSettings, Scenario};
use crate::report::{Cell, Report, Table};

pub const CALIBRATION_FILE: &str = "calibration.json";

const T: f64 = 1.0;
const ZERO_TOL: f64 = 1e-8;

pub fn run(settings: &RunSettings) -> Result<Report> {
    let mut r = Report::new(settings.config.scenario.name(), settings.seed);
    match settings.config.scenario {
        Scenario::Fig1 => fig1(settings, &mut r)?,
        Scenario::Fig2 => fig2(settings, &mut r)?,
        Scenario::Fig3 => fig3(settings, &mut r)?,
        Scenario::Fig4 => fig4(settings, &mut r)?,
        Scenario::Fig5 => fig5(settings, &mut r)?,
        Scenario::Oscillators => oscillators(settings, &mut r)?,
        Scenario::Properties => properties(settings, &mut r)?,
        Scenario::CalibrateS => calibration(settings, &mut r)?,
        Scenario::Custom => custom(settings, &mut r)?,
    }
    Ok(r)
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn matrix_label(gauge: bool) -> &'static str {
    if gauge {
        "H''"
    } else {
        "H"
    }
}

fn status_name(s: PairStatus) -> &'static str {
    match s {
        PairStatus::Biorthonormal => "biorthonormal",
        PairStatus::SelfOrthogonal => "self_orthogonal",
        PairStatus::Unpaired => "unpaired",
    }
}

/// Reads the calibration record from the output directory, or computes and
/// stores it.
pub fn calibrated_record(out: &Path, tol: &Tolerances) -> Result<CalibrationRecord> {
    let path = out.join(CALIBRATION_FILE);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(rec) = serde_json::from_str::<CalibrationRecord>(&text) {
            if rec.request == CalibrationRequest::default() && rec.matched {
                return Ok(rec);
            }
        }
    }
    let rec = calibrate_s(&CalibrationRequest::default(), &tol.laser)?;
    fs::create_dir_all(out)?;
    fs::write(&path, serde_json::to_string_pretty(&rec)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(rec)
}

fn selective_model(s: f64, tol: &Tolerances) -> Result<Model<f64>> {
    Ok(Model::build(&LatticeSpec::chain(9, T).geometric(s), &tol.spectra)?)
}

fn sorted_by_re(es: &EigenSystem<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..es.len()).collect();
    idx.sort_by(|&a, &b| es.eigenvalues[a].re.total_cmp(&es.eigenvalues[b].re));
    idx
}

fn weights(v: &[C64]) -> Vec<f64> {
    let n2 = norm2(v).powi(2);
    v.iter().map(|z| z.norm_sqr() / n2).collect()
}

fn fig1(s: &RunSettings, r: &mut Report) -> Result<()> {
    let tol = &s.tolerances;
    let omega2 = 1e-3 * T;
    let base = LatticeSpec::chain(100, T).harmonic(omega2);
    let m = Model::<f64>::build(&base.clone().random(s.seed), &tol.spectra)?;
    let h0 = hermitian_eig(&m.h0)?;
    let e0: Vec<C64> = h0.eigenvalues.iter().map(|&x| c(x)).collect();
    let es = eig_full(&m.h)?;
    let order = sorted_by_re(&es);

    let mut spectra = Table::new("spectra", &["index", "h0", "h_re", "h_im"]);
    for (i, &k) in order.iter().enumerate() {
        let w = es.eigenvalues[k];
        spectra.push(vec![(i + 1).into(), h0.eigenvalues[i].into(), w.re.into(), w.im.into()]);
    }
    r.table(spectra);

    let levels = harmonic_levels(&e0, omega2, T, 5);
    let mut lv = Table::new("harmonic", &["q", "energy", "continuum", "deviation"]);
    for l in &levels {
        lv.push(vec![l.q.into(), l.energy.into(), l.continuum.into(), l.deviation.into()]);
    }
    r.table(lv);

    let mut prof = Table::new("profiles", &["matrix", "state", "site", "weight"]);
    for q in 0..3 {
        for (j, w) in weights(&h0.vectors.column(q)).iter().enumerate() {
            prof.push(vec!["H0".into(), (q + 1).into(), (j + 1).into(), (*w).into()]);
        }
        for (j, w) in weights(&es.right_vectors[order[q]]).iter().enumerate() {
            prof.push(vec!["H".into(), (q + 1).into(), (j + 1).into(), (*w).into()]);
        }
    }
    r.table(prof);

    let worst = levels.iter().map(|l| l.deviation).fold(0.0, f64::max);
    r.at_most("lowest five levels follow the continuum oscillator (|E_q + 2t - (q-1/2)w|/w)", worst, 0.05);
    let a_range = m.a.diagonal().iter().all(|z| z.re > 0.0 && z.re <= 2.0);
    r.is_true("random scaling a_j in (0, 2]", a_range);
    r.at_most("random H spectrum is real (max |Im w|/|H|)", es.max_imag() / es.norm, tol.spectra.real);
    let (lo0, hi0) = real_support(&e0);
    let (lo, hi) = real_support(&es.eigenvalues);
    r.check(
        "random H spectrum extends past H0 at both ends",
        lo < lo0 && hi > hi0,
        format!("[{lo}, {hi}]"),
        format!("strictly contains [{lo0}, {hi0}]"),
    );
    r.data("omega2", omega2)?;
    r.data("harmonic_levels", &levels)?;
    r.data("scaling", m.a.diagonal().iter().map(|z| z.re).collect::<Vec<_>>())?;
    Ok(())
}

fn mode_table(name: &str, rows: &mut Table, es: &EigenSystem<f64>, s: f64, tol: &Tolerances) -> Result<()> {
    for m in mode_reports(es, s, &tol.skin)? {
        rows.push(vec![
            name.into(),
            (m.mode_index + 1).into(),
            m.eigenvalue.re.into(),
            m.eigenvalue.im.into(),
            m.ipr.into(),
            m.com.into(),
            m.decay_rate.into(),
            m.envelope_r2.into(),
            m.classification.as_str().into(),
        ]);
    }
    Ok(())
}

fn next_to_zero(es: &EigenSystem<f64>) -> (f64, f64) {
    let mut pos = f64::INFINITY;
    let mut neg = f64::NEG_INFINITY;
    for w in &es.eigenvalues {
        if w.norm() <= ZERO_TOL * es.norm {
            continue;
        }
        if w.re > 0.0 {
            pos = pos.min(w.re);
        } else {
            neg = neg.max(w.re);
        }
    }
    (pos, neg)
}

fn fig2(s: &RunSettings, r: &mut Report) -> Result<()> {
    let tol = &s.tolerances;
    let rec = calibrated_record(&s.out, tol)?;
    let m = selective_model(rec.s, tol)?;
    let gauge = m.gauge.as_ref().ok_or_else(|| anyhow!("gauge matrix unavailable"))?;
    let es_h = eig_full(&m.h)?;
    let es_g = eig_full(gauge)?;
    let es_0 = eig_full(&m.h0)?;

    let mut modes = Table::new("modes", &["matrix", "mode", "re", "im", "ipr", "com", "decay_rate", "envelope_r2", "class"]);
    mode_table("H", &mut modes, &es_h, rec.s, tol)?;
    mode_table("H''", &mut modes, &es_g, rec.s, tol)?;
    r.table(modes);
    let mut prof = Table::new("profiles", &["matrix", "mode", "site", "abs"]);
    for (name, es) in [("H", &es_h), ("H''", &es_g)] {
        for (k, v) in es.right_vectors.iter().enumerate() {
            let nv = norm2(v);
            for (j, z) in v.iter().enumerate() {
                prof.push(vec![name.into(), (k + 1).into(), (j + 1).into(), (z.norm() / nv).into()]);
            }
        }
    }
    r.table(prof);

    let (gp, gn) = next_to_zero(&es_g);
    let (hp, hn) = next_to_zero(&es_h);
    r.near("H'' next-to-zero eigenvalue +", gp, 0.618 * T, 1e-3 * T);
    r.near("H'' next-to-zero eigenvalue -", gn, -0.618 * T, 1e-3 * T);
    r.near("H next-to-zero eigenvalue +", hp, 2.38 * T, 1e-2 * T);
    r.near("H next-to-zero eigenvalue -", hn, -2.38 * T, 1e-2 * T);
    let eq = zero_mode_equality(&es_h, &es_g)?;
    r.at_most("zero modes of H and H'' identical", eq, 1e-8);
    let sel = verify_selective_skin(&es_h, &es_0, rec.s, &tol.skin)?;
    r.at_most("H zero mode equals psi0 s^-(j-1)", sel.profile_residual, 1e-8);
    r.at_most("left zero mode of H equals H0 zero mode", sel.left_residual, 1e-8);
    r.is_true("nonzero modes of H are bulk", sel.nonzero_all_bulk);
    let std = verify_standard_skin(&es_g, &es_0, rec.s, &tol.skin)?;
    r.is_true(
        "all modes of H'' are skin_left",
        std.modes.iter().all(|m| m.classification == Localization::SkinLeft),
    );
    r.data("s", rec.s)?;
    r.data("selective", &sel)?;
    r.data("standard", &std)?;
    Ok(())
}

fn fig3(s: &RunSettings, r: &mut Report) -> Result<()> {
    let tol = &s.tolerances;
    let rec = calibrated_record(&s.out, tol)?;
    let m = selective_model(rec.s, tol)?;
    let gauge = m.gauge.as_ref().ok_or_else(|| anyhow!("gauge matrix unavailable"))?;
    let expected = nhreal::calibrate::REFERENCE_THRESHOLDS;

    let mut th = Table::new("thresholds", &["matrix", "kappa0", "d_over_kappa0", "expected", "relative_error", "zero_mode"]);
    let mut prof = Table::new("profiles", &["matrix", "kappa0", "site", "abs", "re", "im"]);
    let mut junc = Table::new("junctions", &["matrix", "kappa0", "position", "gain"]);
    let mut traj = Table::new("trajectory", &["matrix", "kappa0", "gamma", "re", "im"]);
    for &(k, is_gauge, want) in &expected {
        let kappa0 = k * T;
        let mat = if is_gauge { gauge } else { &m.h };
        let name = matrix_label(is_gauge);
        let pump = PumpSpec::new(kappa0, &[1]);
        let res = find_threshold(mat, &pump, &tol.laser)?;
        let rel = (res.threshold_kappa - want).abs() / want;
        th.push(vec![name.into(), kappa0.into(), res.threshold_kappa.into(), want.into(), rel.into(), res.crossing_is_zero_mode.into()]);
        r.at_most(&format!("D/kappa0 for {name} at kappa0 = {kappa0} within 1% of {want}"), rel, 0.01);
        r.is_true(&format!("{name} at kappa0 = {kappa0}: zero mode lases first"), res.crossing_is_zero_mode);
        for (g, w) in &res.trajectory {
            traj.push(vec![name.into(), kappa0.into(), (*g).into(), w.re.into(), w.im.into()]);
        }
        for (j, z) in res.threshold_mode.iter().enumerate() {
            prof.push(vec![name.into(), kappa0.into(), (j + 1).into(), z.norm().into(), z.re.into(), z.im.into()]);
        }
        let pf = power_flows(&res.threshold_mode, mat, &pump.with_gamma(res.threshold))?;
        for (x, g) in pf.positions.iter().zip(&pf.junction_gains) {
            junc.push(vec![name.into(), kappa0.into(), (*x).into(), (*g).into()]);
        }
        r.is_true(&format!("{name} at kappa0 = {kappa0}: all junction gains negative"), pf.all_losses());
        r.at_most(&format!("{name} at kappa0 = {kappa0}: power balance residual"), pf.balance_residual, tol.laser.balance);
        r.data(&format!("power_flows_{}_{}", if is_gauge { "gauge" } else { "product" }, kappa0), &pf)?;
    }
    // junction loss contrast at weak loss
    let max_g = |mat: &Matrix<f64>| -> Result<f64> {
        let pump = PumpSpec::new(0.02 * T, &[1]);
        let res = find_threshold(mat, &pump, &tol.laser)?;
        Ok(power_flows(&res.threshold_mode, mat, &pump.with_gamma(res.threshold))?.max_abs_gain())
    };
    let ratio = max_g(gauge)? / max_g(&m.h)?;
    r.check(
        "max |G| of H'' at least 5x that of H at kappa0 = 0.02t",
        ratio >= 5.0,
        format!("{ratio}"),
        ">= 5".into(),
    );
    r.table(th);
    r.table(prof);
    r.table(junc);
    r.table(traj);
    r.data("s", rec.s)?;
    Ok(())
}

fn fig4(s: &RunSettings, r: &mut Report) -> Result<()> {
    let tol = &s.tolerances;
    let ratio = 2.0;
    let cases = [("a4_zero", 9usize, 4usize), ("a1_zero_odd", 9, 1), ("a1_zero_even", 8, 1)];
    let mut ev = Table::new("eigenvalues", &["case", "index", "re", "im", "status"]);
    for (name, n, site) in cases {
        let spec = LatticeSpec::chain(n, T).geometric(ratio).zeroed(&[site]);
        let m = Model::<f64>::build(&spec, &tol.spectra)?;
        let es = eig_full(&m.h)?;
        for (i, &k) in sorted_by_re(&es).iter().enumerate() {
            ev.push(vec![name.into(), (i + 1).into(), es.eigenvalues[k].re.into(), es.eigenvalues[k].im.into(), status_name(es.status[k]).into()]);
        }
        let rep = ep_analyze(&m.h, c(0.0), &tol.spectra)?;
        let loc = ep_location(&es, &m.a, &tol.spectra);
        r.is_true(&format!("{name}: self-orthogonal modes sit at zero in ker A"), loc.ok);
        match name {
            "a4_zero" => {
                r.check(
                    "a4_zero: algebraic 3, geometric 2, blocks [2, 1]",
                    rep.algebraic_multiplicity == 3 && rep.geometric_multiplicity == 2 && rep.ep_orders == vec![2, 1],
                    format!("{} {} {:?}", rep.algebraic_multiplicity, rep.geometric_multiplicity, rep.ep_orders),
                    "3 2 [2, 1]".into(),
                );
                let mut e4 = vec![c(0.0); n];
                e4[3] = c(1.0);
                let mut j = vec![c(0.0); n];
                j[0] = c(-1.0);
                j[2] = c(ratio.powi(-2));
                let chain = rep.jordan_chains.iter().find(|ch| ch.len() == 2);
                let (ev_res, chain_ref) = match chain {
                    Some(ch) => (collinearity(ch.eigenvector(), &e4).0, chain_matches_reference(&m.h, ch, &j, &tol.spectra)?),
                    None => (f64::INFINITY, f64::INFINITY),
                };
                r.at_most("a4_zero: EP2 eigenvector is e4", ev_res, 1e-8);
                r.at_most("a4_zero: Jordan chain residual", rep.chain_residual, 1e-8);
                r.at_most("a4_zero: chain vector matches J = [-1, 0, s^-2, 0, ...]", chain_ref, 1e-8);
            }
            "a1_zero_odd" => r.check(
                "a1_zero_odd: simple zero, no EP",
                rep.algebraic_multiplicity == 1 && !rep.is_ep(),
                format!("{} {:?}", rep.algebraic_multiplicity, rep.ep_orders),
                "1 [1]".into(),
            ),
            _ => r.check(
                "a1_zero_even: EP2 at zero",
                rep.ep_orders == vec![2],
                format!("{:?}", rep.ep_orders),
                "[2]".into(),
            ),
        }
        r.data(name, &rep)?;
    }
    r.table(ev);
    r.data("s", ratio)?;
    Ok(())
}

fn fig5(s: &RunSettings, r: &mut Report) -> Result<()> {
    let tol = &s.tolerances;
    let rec = calibrated_record(&s.out, tol)?;
    let m = selective_model(rec.s, tol)?;
    let gauge = m.gauge.as_ref().ok_or_else(|| anyhow!("gauge matrix unavailable"))?;
    let kappa0 = 0.02 * T;
    let pump = PumpSpec::new(kappa0, &[1]);
    let mut prof = Table::new("profiles", &["matrix", "site", "zero_order_abs", "exact_abs", "predicted_abs"]);
    let mut conv = Table::new("convergence", &["matrix", "gamma", "even_residual", "odd_deviation", "energy_residual"]);
    for (name, mat) in [("H", &m.h), ("H''", gauge)] {
        let es = eig_full(mat)?;
        let z = zero_mode_index(&es, ZERO_TOL)?;
        let d = find_threshold(mat, &pump, &tol.laser)?.threshold;
        let pred = first_order(&es, &[1], d, z, &tol.perturb)?;
        let pairs = nhph_pairs(&es, &tol.perturb);
        r.check(
            &format!("{name}: NHPH pairing of the nonzero modes"),
            pairs.pairs.len() == 4 && pairs.self_paired.len() == 1 && pairs.complete(),
            format!("{} pairs, {} self-paired", pairs.pairs.len(), pairs.self_paired.len()),
            "4 pairs, 1 self-paired".into(),
        );
        let scale = norm2(&pred.state_correction);
        let odd = pred.state_correction.iter().step_by(2).map(|x| x.norm()).fold(0.0, f64::max) / scale;
        r.at_most(&format!("{name}: first-order correction vanishes on odd sites"), odd, tol.perturb.odd_site);
        let formula = zero_mode_pair_formula(&es, &pairs, &[1], d, z)?;
        let gap = formula
            .iter()
            .zip(&pred.state_correction)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale;
        r.at_most(&format!("{name}: pair formula equals the mode sum"), gap, 1e-10);
        let rows = compare_with_exact(mat, &es, z, &pump, &[d / 4.0, d / 2.0, d], &tol.perturb)?;
        for row in &rows {
            conv.push(vec![name.into(), row.gamma1.into(), row.even_residual.into(), row.odd_deviation.into(), row.energy_residual.into()]);
        }
        let slope = log_slope(&rows.iter().map(|r| (r.gamma1, r.even_residual)).collect::<Vec<_>>());
        r.check(
            &format!("{name}: even-site residual shrinks at least quadratically"),
            slope >= 1.8,
            format!("slope {slope}"),
            ">= 1.8".into(),
        );
        let last = rows.last().expect("three rows");
        let psi0 = &es.right_vectors[z];
        for j in 0..psi0.len() {
            prof.push(vec![name.into(), (j + 1).into(), psi0[j].norm().into(), last.exact[j].norm().into(), last.predicted[j].norm().into()]);
        }
        let hg = matrix_elements(&es, &[1])?;
        let deriv = tracked_derivative(mat, &pump, z, 1e-3 * kappa0, &tol.laser)?;
        let dgap = (deriv - C64::new(0.0, 1.0) * hg[(z, z)]).norm();
        r.at_most(&format!("{name}: tracked dw/dgamma equals i H_gamma,00"), dgap, 1e-6 * kappa0);
        r.data(&format!("prediction_{}", if name == "H" { "product" } else { "gauge" }), &pred)?;
    }
    r.table(prof);
    r.table(conv);
    r.data("s", rec.s)?;
    Ok(())
}

fn oscillators(s: &RunSettings, r: &mut Report) -> Result<()> {
    let tol = &s.tolerances;
    let chain = s.config.chain.clone().unwrap_or(OscillatorChain {
        masses: vec![1.0, 2.0],
        spring_k: 1.0,
    });
    chain.validate()?;
    let n = chain.n();
    let m = dynamical_matrix(&chain);
    let mut lambdas = nhreal::eigenvalues(&m)?;
    lambdas.sort_by(|a, b| b.re.total_cmp(&a.re));
    let freqs = eigenfrequencies(&m, &tol.mech);
    r.is_true("spectrum of M real and nonpositive", freqs.is_ok());
    let freqs = freqs?;
    let gap = hermitian_equivalent_gap(&chain)?;
    r.at_most("spectrum of M equals that of diag(m^-1/2) M0 diag(m^-1/2)", gap / m.norm_fro(), 1e-8);
    if chain.masses == [1.0, 2.0] && chain.spring_k == 1.0 {
        let r3 = 3f64.sqrt();
        let dev = (lambdas[0].re - (-3.0 + r3) / 2.0).abs().max((lambdas[1].re - (-3.0 - r3) / 2.0).abs());
        r.at_most("two-mass eigenvalues (-3 +- sqrt 3)/2", dev, 1e-10);
    }
    let checks = verify_modes(&chain, 100.0, 0.05, &tol.mech)?;
    let mut t = Table::new("modes", &["mode", "lambda_re", "lambda_im", "omega", "measured", "relative_error", "shape_deviation"]);
    for (ck, l) in checks.iter().zip(&lambdas) {
        t.push(vec![(ck.mode + 1).into(), l.re.into(), l.im.into(), ck.eigenfrequency.into(), ck.measured.into(), ck.relative_error.into(), ck.shape_deviation.into()]);
    }
    r.table(t);
    let worst = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    r.at_most("time-domain frequencies match eigenfrequencies", worst, 1e-3);
    let shape = checks.iter().map(|c| c.shape_deviation).fold(0.0, f64::max);
    r.at_most("single-mode start stays in its mode", shape, 1e-3);

    // random start for the energy check
    let mut rng = SplitMix64::new(s.seed);
    let mut draw = || 2.0 * rng.next_unit() - 1.0;
    let start = PhaseState {
        x: (0..n).map(|_| draw()).collect(),
        v: (0..n).map(|_| draw()).collect(),
    };
    let dt = 0.002 / chain.omega_bound();
    let slowest = freqs.first().copied().unwrap_or(1.0);
    let steps = (20.0 * std::f64::consts::TAU / (slowest * dt)).ceil() as usize;
    let every = (steps / 2000).max(1);
    let traj = integrate(&chain, &start, dt, steps, every, &tol.mech)?;
    let e0 = chain.energy(&start.x, &start.v);
    let drift = traj
        .positions
        .iter()
        .zip(&traj.velocities)
        .map(|(x, v)| (chain.energy(x, v) - e0).abs() / e0)
        .fold(0.0, f64::max);
    r.at_most("energy conserved over the run", drift, 1e-6);
    let mut headers = vec!["time".to_string()];
    headers.extend((1..=n).map(|j| format!("x{j}")));
    let mut tt = Table {
        name: "trajectory".into(),
        headers,
        rows: Vec::new(),
    };
    for (t, x) in traj.times().iter().zip(&traj.positions) {
        let mut row: Vec<Cell> = vec![(*t).into()];
        row.extend(x.iter().map(|&v| Cell::from(v)));
        tt.push(row);
    }
    r.table(tt);
    r.data("chain", &chain)?;
    r.data("eigenfrequencies", &freqs)?;
    Ok(())
}

fn properties(s: &RunSettings, r: &mut Report) -> Result<()> {
    let cfg = SuiteConfig {
        trials: s.config.trials.unwrap_or(200),
        seed: s.seed,
        ..SuiteConfig::default()
    };
    let rep = run_suite(&cfg, &Property::ALL, &s.tolerances);
    let mut t = Table::new("summary", &["property", "trials", "passes", "worst_metric", "worst_secondary"]);
    for sm in &rep.summaries {
        let name = serde_json::to_value(sm.property)?.as_str().unwrap_or("?").to_string();
        t.push(vec![
            name.clone().into(),
            sm.trials.into(),
            sm.passes.into(),
            sm.worst_metric.into(),
            sm.worst_secondary.map_or(Cell::from(""), Cell::from),
        ]);
        r.check(&format!("{name}: every trial passes"), sm.passes == sm.trials, format!("{}/{}", sm.passes, sm.trials), format!("{0}/{0}", sm.trials));
    }
    r.table(t);
    let failures: Vec<_> = rep.summaries.iter().flat_map(|s| s.failures.iter()).collect();
    r.data("config", &rep.config)?;
    r.data("failures", &failures)?;
    Ok(())
}

fn calibration(s: &RunSettings, r: &mut Report) -> Result<()> {
    let req = CalibrationRequest {
        anchor: s.config.anchor.unwrap_or(nhreal::calibrate::DEFAULT_ANCHOR),
        ..CalibrationRequest::default()
    };
    let rec = calibrate_s(&req, &s.tolerances.laser)?;
    r.check(
        "some s in [1.01, 4] reproduces the anchor within 1e-3 t",
        rec.matched,
        format!("s = {}, residual {:e}", rec.s, rec.residual),
        format!("|E(s) - {}t| <= 1e-3 t", req.anchor),
    );
    for ck in &rec.thresholds {
        r.check(
            &format!("calibrated s reproduces D/kappa0 = {} for {} at kappa0 = {}", ck.expected, matrix_label(ck.gauge), ck.kappa0),
            ck.pass,
            ck.measured.map_or_else(|| ck.error.clone().unwrap_or_default(), |m| m.to_string()),
            format!("{} within 1%", ck.expected),
        );
    }
    r.at_most("H'' null control: first excitation independent of s", rec.null_control, 1e-9);
    let mut t = Table::new("scan", &["s", "first_excitation"]);
    for (x, e) in &rec.scan {
        t.push(vec![(*x).into(), (*e).into()]);
    }
    r.table(t);
    r.data("calibration", &rec)?;
    if rec.matched {
        fs::create_dir_all(&s.out)?;
        fs::write(s.out.join(CALIBRATION_FILE), serde_json::to_string_pretty(&rec)? + "\n")?;
    }
    Ok(())
}

fn custom(s: &RunSettings, r: &mut Report) -> Result<()> {
    let tol = &s.tolerances;
    let spec = s.config.lattice.as_ref().ok_or_else(|| anyhow!("custom scenario needs a lattice"))?;
    let m = Model::<f64>::build(spec, &tol.spectra)?;
    let cert = certify(&m.h, &m.h0, &tol.spectra)?;
    let es = eig_full(&m.h)?;
    if m.b.is_some() {
        r.at_most("spectrum real (max |Im w|/|H|)", cert.max_imag / es.norm, tol.spectra.real);
    } else {
        r.is_true("spectrum closed under conjugation", cert.conjugation_closed());
    }
    if let Some(ph) = cert.pseudo_hermitian_residual {
        r.at_most("H0^-1 H H0 = H^dagger", ph, tol.spectra.hermitian);
    }
    let mut ev = Table::new("eigenvalues", &["index", "re", "im", "status"]);
    for (i, &k) in sorted_by_re(&es).iter().enumerate() {
        ev.push(vec![(i + 1).into(), es.eigenvalues[k].re.into(), es.eigenvalues[k].im.into(), status_name(es.status[k]).into()]);
    }
    r.table(ev);
    let ratio = spec.ratio().unwrap_or(1.0);
    let mut modes = Table::new("modes", &["matrix", "mode", "re", "im", "ipr", "com", "decay_rate", "envelope_r2", "class"]);
    mode_table("H", &mut modes, &es, ratio, tol)?;
    r.table(modes);
    if es.status.iter().any(|&st| st != PairStatus::Biorthonormal) {
        let rep = ep_analyze(&m.h, c(0.0), &tol.spectra)?;
        if m.b.is_some() {
            r.is_true("self-orthogonal modes sit at zero in ker A", ep_location(&es, &m.a, &tol.spectra).ok);
        }
        r.data("ep_report", &rep)?;
    }
    if let Some(pump) = &s.config.pump {
        let res = find_threshold(&m.h, pump, &tol.laser)?;
        let pf = power_flows(&res.threshold_mode, &m.h, &pump.with_gamma(res.threshold))?;
        r.at_most("power balance at threshold", pf.balance_residual, tol.laser.balance);
        let mut junc = Table::new("junctions", &["position", "gain"]);
        for (x, g) in pf.positions.iter().zip(&pf.junction_gains) {
            junc.push(vec![(*x).into(), (*g).into()]);
        }
        r.table(junc);
        r.data("threshold", &res)?;
        r.data("power_flows", &pf)?;
    }
    r.data("lattice", spec)?;
    r.data("certificate", &cert)?;
    Ok(())
}
