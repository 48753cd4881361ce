//! Acceptance suite: one PASS/FAIL line per criterion at fixed tolerances.
//! Exits non-zero when any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::process::Command;

use tdmech::atlas::{check_connection_compat, check_semispray_compat, TransformedConnection, TransformedSpray};
use tdmech::cli::{check, Law};
use tdmech::diffkernel::{eval_map, fd_partials, map_jet, partials, DomainBox};
use tdmech::dynamics::{
    el_residual, el_residual_forced, forced_spray, integrate, integrate_lagrangian, ExprForce, InitialState,
    IntegratorConfig,
};
use tdmech::expr::{ExprLagrangian, ExprMap};
use tdmech::lagrangian::TimeLagrangian;
use tdmech::riemann::{
    constrained_spray, constraint_drift, integrate_constrained, perfectness_residual, potential_spray, ExprMetric,
    ExprPotential, LevelSetConstraint, MechanicalLagrangian, PullbackMetric,
};
use tdmech::sampling::Sampler;
use tdmech::scenario::{catalog, Resolved, ScenarioConfig, System, SystemSpray};
use tdmech::semispray::{
    check_f_related, lagrangian_vector_field, ExprSpray, LagrangianConnection, LagrangianSpray,
};
use tdmech::TangentSample;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn resolved(name: &str) -> Resolved {
    ScenarioConfig::from_json(&format!(r#"{{"version": 1, "scenario": "{name}"}}"#))
        .and_then(|c| c.resolve().map_err(|e| e.to_string()))
        .unwrap_or_else(|e| panic!("catalog entry {name}: {e}"))
}

fn systems() -> Vec<(&'static str, Resolved, System)> {
    catalog()
        .into_iter()
        .map(|e| {
            let r = resolved(e.name);
            let s = System::build(&r.system).expect("catalog systems build");
            (e.name, r, s)
        })
        .collect()
}

fn overlap_samples(sys: &System, seed: u64, count: usize) -> Vec<TangentSample> {
    let dom = match &sys.transition {
        Some(tr) => {
            let a = &sys.x_domain;
            let b = tr.overlap();
            DomainBox::new(
                a.lo.iter().zip(&b.lo).map(|(p, q)| p.max(*q)).collect(),
                a.hi.iter().zip(&b.hi).map(|(p, q)| p.min(*q)).collect(),
            )
        }
        None => sys.x_domain.clone(),
    };
    Sampler::new(seed).tangent_samples(&dom, count, (0.0, 1.0), 1.0)
}

fn fold_max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
}

fn verdict(max: f64, tol: f64) -> bool {
    max <= tol
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Worst law residual over the catalog through the `check` pipeline.
fn catalog_law(law: Law) -> Result<(f64, usize), String> {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (_, res, sys) in systems() {
        if !law.applicable(&sys) {
            continue;
        }
        let report = check(&res, Some(&[law])).map_err(err)?;
        worst = fold_max([worst, report.entries[0].max_residual]);
        count += 1;
    }
    Ok((worst, count))
}

fn c1() -> Outcome {
    let tol = 1e-6;
    let mut worst = 0.0f64;
    for (i, (_, _, sys)) in systems().into_iter().enumerate() {
        let field = sys.lagrangian.field();
        for v in overlap_samples(&sys, 100 + i as u64, 100) {
            let ad = partials(field, &v).map_err(err)?;
            let fd = fd_partials(field, &v, 1e-4).map_err(err)?;
            worst = fold_max([worst, ad.relative_deviation(&fd)]);
        }
    }
    Ok((verdict(worst, tol), format!("AD vs finite differences, 7 scenarios x 100 samples: max relative deviation {worst:.2e} (tol {tol:e})")))
}

fn c2() -> Outcome {
    let tol = 1e-10;
    let mut worst = 0.0f64;
    for (_, _, sys) in systems() {
        let tr = sys.transition.as_ref().ok_or("catalog entry without chart change")?;
        let gb = TransformedSpray::new(&sys.spray, tr.clone()).map_err(err)?;
        let samples = overlap_samples(&sys, 200, 100);
        worst = fold_max([worst, check_semispray_compat(&sys.spray, &gb, tr, &samples).map_err(err)?.max_residual]);
    }
    // control: a source spray that differs by a unit vector field
    let free = &systems()[0].2;
    let tr = free.transition.as_ref().unwrap();
    let shifted = ExprSpray::parse(&["1", "0"], "a").map_err(err)?;
    let gb = TransformedSpray::new(&free.spray, tr.clone()).map_err(err)?;
    let control = check_semispray_compat(&shifted, &gb, tr, &overlap_samples(free, 201, 100)).map_err(err)?;
    let ctrl = control.max_residual;
    Ok((
        verdict(worst, tol) && ctrl >= 1.0,
        format!("semispray transformation law under x + 0.1x^3: max residual {worst:.2e} (tol {tol:e}); mismatch control {ctrl:.3} (>= 1)"),
    ))
}

fn c3() -> Outcome {
    let tol = 1e-10;
    let (mut w0, mut w1) = (0.0f64, 0.0f64);
    for (_, _, sys) in systems() {
        let tr = sys.transition.as_ref().ok_or("catalog entry without chart change")?;
        let na = LagrangianConnection::new(sys.lagrangian.clone());
        let nb = TransformedConnection::new(&na, tr.clone()).map_err(err)?;
        let r = check_connection_compat(&na, &nb, tr, &overlap_samples(&sys, 300, 100)).map_err(err)?;
        w0 = fold_max([w0, r.n0.max_residual]);
        w1 = fold_max([w1, r.n1.max_residual]);
    }
    Ok((
        verdict(w0, tol) && verdict(w1, tol),
        format!("connection transformation laws: N0 {w0:.2e}, N1 {w1:.2e} (tol {tol:e})"),
    ))
}

fn c4() -> Outcome {
    let tol = 1e-10;
    let (worst, n) = catalog_law(Law::TrivializedTransitionBlock)?;
    Ok((
        verdict(worst, tol),
        format!("trivialized transition equals (dphi, dphi) at t in {{0, 1, 7}} with superposition probes, {n} scenarios: {worst:.2e} (tol {tol:e})"),
    ))
}

fn c5() -> Outcome {
    let tol = 1e-12;
    let (worst, n) = catalog_law(Law::RecoverGRoundtrip)?;
    Ok((
        verdict(worst, tol),
        format!("recover G from spray-form and connection-form trivializations, {n} scenarios: {worst:.2e} (tol {tol:e})"),
    ))
}

fn c6() -> Outcome {
    let (tol_iz, tol_sign) = (1e-8, 1e-10);
    let (iz, _) = catalog_law(Law::IzOmegaZero)?;
    let (sign, n) = catalog_law(Law::SignLedger)?;
    Ok((
        verdict(iz, tol_iz) && verdict(sign, tol_sign),
        format!("i_Z Omega_L = 0: {iz:.2e} (tol {tol_iz:e}); X2 + G + N0 = 0: {sign:.2e} (tol {tol_sign:e}); {n} Lagrangians"),
    ))
}

fn harmonic_run(h: f64) -> Result<(f64, f64), String> {
    let l = TimeLagrangian::new(ExprLagrangian::parse("0.5*y0^2 - 0.5*x0^2", 1).map_err(err)?, "a");
    let traj = integrate(
        &LagrangianSpray::new(l.clone()),
        &InitialState::new(0.0, vec![1.0], vec![0.0]),
        &IntegratorConfig::rk4(h, 0.0, 2.0 * PI),
    )
    .map_err(err)?;
    let (x, _) = traj.at(PI / 2.0).ok_or("pi/2 outside the span")?;
    Ok((x[0].abs(), el_residual(&l, &traj).map_err(err)?.max()))
}

fn c7() -> Outcome {
    let tol = 1e-6;
    let (x_quarter, el) = harmonic_run(1e-3)?;
    let (_, coarse) = harmonic_run(2e-3)?;
    let ratio = coarse / el;
    Ok((
        x_quarter <= tol && el <= tol && ratio >= 8.0,
        format!("harmonic k = 1, h = 1e-3: |x(pi/2)| {x_quarter:.2e}, el_residual {el:.2e} (tol {tol:e}); residual ratio h = 2e-3 : 1e-3 = {ratio:.1} (>= 8)"),
    ))
}

fn c8() -> Outcome {
    let tol = 1e-6;
    let l = TimeLagrangian::new(ExprLagrangian::parse("0.5*exp(2*t)*y0^2", 1).map_err(err)?, "a");
    let traj = integrate(
        &LagrangianSpray::new(l),
        &InitialState::new(0.0, vec![0.0], vec![1.0]),
        &IntegratorConfig::rk4(1e-3, 0.0, 1.0),
    )
    .map_err(err)?;
    let e = (traj.last().x[0] - (1.0 - (-2.0f64).exp()) / 2.0).abs();
    Ok((verdict(e, tol), format!("time-dependent metric e^(2t): |x(1) - (1 - e^-2)/2| {e:.2e} (tol {tol:e})")))
}

fn c9() -> Outcome {
    let tol = 1e-10;
    let u = ExprPotential::parse("sin(t)*x0", 2).map_err(err)?;
    let metrics = [
        ExprMetric::identity(2),
        ExprMetric::diagonal(&["1", "x0^2"]).map_err(err)?,
    ];
    let mut worst = 0.0f64;
    let mut rng = Sampler::new(900);
    for g in metrics {
        let l = TimeLagrangian::new(MechanicalLagrangian::new(g.clone(), Some(u.clone())), "a");
        for _ in 0..100 {
            let t = rng.uniform(0.0, 2.0 * PI);
            let x = vec![rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0)];
            let y = rng.vector(2, 1.0);
            let direct = potential_spray(&g, &u, t, &x, &y).map_err(err)?;
            let generic = lagrangian_vector_field(&l, &TangentSample::new(t, x, y)).map_err(err)?;
            worst = fold_max([worst, fold_max(direct.iter().zip(&generic).map(|(a, b)| (a - b).abs()))]);
        }
    }
    Ok((
        verdict(worst, tol),
        format!("K2 - grad U vs generic Lagrangian field for g in {{I, diag(1, x0^2)}}, U = sin(t) x0: {worst:.2e} (tol {tol:e})"),
    ))
}

fn c10() -> Outcome {
    let tol = 1e-6;
    let l = TimeLagrangian::new(ExprLagrangian::parse("0.5*y0^2", 1).map_err(err)?, "a");
    let f = ExprForce::parse(&["sin(t)"]).map_err(err)?;
    let spray = forced_spray(LagrangianSpray::new(l.clone()), l.clone(), f.clone()).map_err(err)?;
    let traj = integrate(
        &spray,
        &InitialState::new(0.0, vec![0.0], vec![0.0]),
        &IntegratorConfig::rk4(1e-3, 0.0, PI),
    )
    .map_err(err)?;
    let e = (traj.last().x[0] - PI).abs();
    let el = el_residual_forced(&l, &f, &traj).map_err(err)?.max();
    Ok((
        e <= tol && el <= tol,
        format!("forced free particle, F = sin t: |x(pi) - pi| {e:.2e}, forced el_residual {el:.2e} (tol {tol:e})"),
    ))
}

fn sphere() -> Result<LevelSetConstraint<ExprMap>, String> {
    LevelSetConstraint::new(ExprMap::parse(&["0.5*(x0^2 + x1^2 + x2^2 - 1)"], 3).map_err(err)?).map_err(err)
}

fn c11() -> Outcome {
    let (tol_end, tol_perf, tol_drift, tol_agree) = (1e-6, 1e-8, 1e-7, 1e-6);
    // unforced great circle
    let free = constrained_spray(ExprMetric::identity(3), ExprForce::parse(&["0", "0", "0"]).map_err(err)?, sphere()?, "a")
        .map_err(err)?;
    let traj = integrate_constrained(
        &free,
        &InitialState::new(0.0, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
        &IntegratorConfig::rk4(1e-3, 0.0, PI / 2.0),
        false,
    )
    .map_err(err)?;
    let end = traj.last();
    let end_err = fold_max([end.x[0].abs(), (end.x[1] - 1.0).abs(), end.x[2].abs()]);

    // forced bead from the catalog over [0, 2pi], h = 1e-3
    let res = resolved("bead-on-sphere-forced");
    let sys = System::build(&res.system).map_err(err)?;
    let SystemSpray::Constrained(spray) = &sys.spray else {
        return Err("bead scenario is not constrained".into());
    };
    let cfg = IntegratorConfig::rk4(1e-3, 0.0, 2.0 * PI);
    let init = InitialState::new(0.0, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]);
    let bead = integrate_constrained(spray, &init, &cfg, false).map_err(err)?;
    let cst = sys.constraint.as_ref().unwrap();
    let g = sys.metric.as_ref().unwrap();
    let force = sys.force.as_ref().unwrap();
    let drift = constraint_drift(cst, &bead).map_err(err)?.0.max();
    let mut rng = Sampler::new(1100);
    let mut perf = 0.0f64;
    for p in bead.samples.iter().step_by(50) {
        let ws: Vec<Vec<f64>> = (0..4).map(|_| rng.vector(3, 1.0)).collect();
        perf = fold_max([perf, perfectness_residual(cst, g, force, p.t, &p.x, &p.y, &ws).map_err(err)?]);
    }

    // intrinsic spherical coordinates (theta, phi) with the pulled-back force
    let param = ExprMap::parse(&["sin(x0)*cos(x1)", "sin(x0)*sin(x1)", "cos(x0)"], 2).map_err(err)?;
    let metric = PullbackMetric::new(ExprMetric::identity(3), param.clone()).map_err(err)?;
    let l = TimeLagrangian::new(MechanicalLagrangian::<_, ExprPotential>::new(metric, None), "sphere");
    let fq = ExprForce::parse(&["0", "1e-3*sin(t)*sin(x0)^2"]).map_err(err)?;
    let intrinsic = forced_spray(LagrangianSpray::new(l.clone()), l, fq).map_err(err)?;
    let q0 = vec![PI / 2.0, 0.0];
    let qdot0 = vec![0.3, 1.0];
    let jet = map_jet(&param, &q0, false).map_err(err)?;
    let tilted = InitialState::new(0.0, jet.value.clone(), jet.jacobian.mul_vec(&qdot0));
    let ambient = integrate_constrained(spray, &tilted, &cfg, false).map_err(err)?;
    let chart = integrate(&intrinsic, &InitialState::new(0.0, q0, qdot0), &cfg).map_err(err)?;
    let mut agree = 0.0f64;
    for (a, b) in ambient.samples.iter().zip(&chart.samples) {
        let lifted = eval_map(&param, &b.x).map_err(err)?;
        agree = fold_max([agree, fold_max(a.x.iter().zip(&lifted).map(|(p, q)| (p - q).abs()))]);
    }

    Ok((
        end_err <= tol_end && perf <= tol_perf && drift <= tol_drift && agree <= tol_agree,
        format!(
            "bead on sphere: great-circle endpoint {end_err:.2e} (tol {tol_end:e}); perfectness {perf:.2e} (tol {tol_perf:e}); \
             forced drift over [0, 2pi] {drift:.2e} (tol {tol_drift:e}); ambient vs intrinsic {agree:.2e} (tol {tol_agree:e})"
        ),
    ))
}

fn c12() -> Outcome {
    let (tol_rel, tol_geo) = (1e-8, 1e-6);
    let res = resolved("frelated-demo");
    let sys = System::build(&res.system).map_err(err)?;
    let (f, target) = sys.related.as_ref().ok_or("frelated-demo lacks a related system")?;
    let s_m = LagrangianSpray::new(sys.lagrangian.clone());
    let s_n = LagrangianSpray::new(target.clone());
    let samples = Sampler::new(1200).tangent_samples(&DomainBox::cube(1, -1.0, 1.0), 100, (0.0, 1.0), 1.0);
    let rel = check_f_related(&s_m, &s_n, f, &samples).map_err(err)?.max_residual();

    let cfg = res.integrator.clone();
    let gm = integrate(&s_m, &res.initial, &cfg).map_err(err)?;
    let jet = map_jet(f, &res.initial.x0, false).map_err(err)?;
    let pushed = InitialState::new(res.initial.t0, jet.value.clone(), jet.jacobian.mul_vec(&res.initial.y0));
    let gn = integrate(&s_n, &pushed, &cfg).map_err(err)?;
    let mut geo = 0.0f64;
    for (a, b) in gm.samples.iter().zip(&gn.samples) {
        let fa = eval_map(f, &a.x).map_err(err)?;
        geo = fold_max([geo, (fa[0] - b.x[0]).abs()]);
    }
    // same check through the direct Lagrangian integrator on the target side
    let direct = integrate_lagrangian(target, &pushed, &cfg).map_err(err)?;
    geo = fold_max([geo, (direct.last().x[0] - gn.last().x[0]).abs()]);
    Ok((
        verdict(rel, tol_rel) && verdict(geo, tol_geo),
        format!("cubic diffeomorphism pair: f-related residual {rel:.2e} (tol {tol_rel:e}); f(geodesic) vs geodesic {geo:.2e} (tol {tol_geo:e})"),
    ))
}

fn c13() -> Outcome {
    let dir = std::env::temp_dir().join(format!("tdmech-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).map_err(err)?;
    let bin = env!("CARGO_BIN_EXE_tdmech");
    let run = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .env("TDMECH_OUTPUT_ROOT", &dir)
            .output()
            .map(|o| o.status.code())
            .map_err(err)
    };
    let write = |name: &str, text: &str| -> Result<String, String> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(err)?;
        Ok(p.to_string_lossy().into_owned())
    };
    let a = write("a.json", r#"{"version": 1, "scenario": "harmonic-td", "outputs": {"directory": "a"}}"#)?;
    let b = write("b.json", r#"{"version": 1, "scenario": "harmonic-td", "outputs": {"directory": "b"}}"#)?;
    let runs_ok = run(&["run", &a])? == Some(0) && run(&["run", &b])? == Some(0);
    let identical = ["trajectory.csv", "residual.csv", "report.json"]
        .iter()
        .all(|f| fs::read(dir.join("a").join(f)).ok() == fs::read(dir.join("b").join(f)).ok() && dir.join("a").join(f).exists());
    let malformed = write("m.json", r#"{"version": 1, "scenario": "harmonic-td", "#)?;
    let malformed_code = run(&["run", &malformed])?;
    let failing = write(
        "f.json",
        r#"{"version": 1,
            "scenario": {"name": "mismatch", "dim": 1,
                         "lagrangian": {"kind": "expression", "expr": "0.5*y0^2"},
                         "chart_change": {"kind": "explicit", "map": ["x0"], "inverse": ["x0"],
                                          "overlap": {"lo": [-1], "hi": [1]}},
                         "target_spray": ["1"]},
            "integrator": {"method": "rk4", "h": 0.1, "s_span": [0, 1]},
            "initial": {"t0": 0, "x0": [0], "y0": [1]}}"#,
    )?;
    let failing_code = run(&["check", &failing, "--laws", "semispray-compat"])?;
    let _ = fs::remove_dir_all(&dir);
    Ok((
        runs_ok && identical && malformed_code == Some(2) && failing_code == Some(1),
        format!(
            "repeated fixed-step runs byte-identical: {identical}; malformed config exit {malformed_code:?} (2); failing law exit {failing_code:?} (1)"
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("oracle equivalence", c1),
        ("semispray chart compatibility", c2),
        ("connection compatibility", c3),
        ("trivialized transition block", c4),
        ("recover-G round trip", c5),
        ("Lagrangian vector field", c6),
        ("Euler-Lagrange reproduction", c7),
        ("time-dependent metric", c8),
        ("potential-field identity", c9),
        ("external force", c10),
        ("constraint suite", c11),
        ("f-relatedness", c12),
        ("CLI determinism and exit codes", c13),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (pass, detail) = match std::panic::catch_unwind(run) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        if !pass {
            failures += 1;
        }
        println!("criterion {:>2} {} {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
