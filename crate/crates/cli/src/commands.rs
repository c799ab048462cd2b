//! Subcommand implementations. Each one resolves its configuration, runs
//! the analysis and writes a JSON report (also printed to stdout).

use std::collections::BTreeMap;
use std::path::Path;

use evmono::cones::{
    certify_sem, empirical_order_probe, flow_direction_probe, isostable_comparability_scan, kamke_muller_check,
    CertOptions, ComparabilityScan, Cone, ORDER_CHECKPOINTS,
};
use evmono::koopman::{
    eval_field_on_grid, eval_section_on_grid, extract_isostables, write_polylines, KoopmanSpec, LaplaceMethod,
    LaplaceOptions, Polyline,
};
use evmono::linalg::{norm_inf, Matrix};
use evmono::linear::{
    check_eventual_positivity, find_alpha_certificates, schur_reduce, similarity_positivize, LorentzConeSpec,
};
use evmono::models::{get_model_with, list_models};
use evmono::ode::{find_equilibrium, Tolerances};
use evmono::sampling::Window;
use evmono::scalar::format_rational;
use evmono::spectral::{check_dominance, classify_pf, decompose};
use evmono::VectorField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Outputs, RunConfig};
use crate::input::{self, ConeSource, Levels, Model};
use crate::{Cli, Command, ConeArgs, Failure, LaplaceArgs, Method, ModelArgs};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ITERS: usize = 100;

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::LinearCheck { matrix, t_max, samples, positivize } => {
            linear_check(cli, out, matrix, *t_max, *samples, *positivize)
        }
        Command::Equilibrium { model } => equilibrium(cli, out, model),
        Command::Eigenfunction { model, laplace, window, grid, gradients } => {
            eigenfunction(cli, out, model, laplace, window.as_deref(), grid, *gradients)
        }
        Command::Isostables { model, laplace, levels, cross_section, window, grid } => {
            isostables(cli, out, model, laplace, levels, cross_section.as_deref(), window.as_deref(), grid)
        }
        Command::Certify { model, laplace, cone, samples, margin, window, cross_section, scan_grid, scan_levels } => {
            let scan = ScanArgs { cross_section: cross_section.as_deref(), grid: *scan_grid, levels: *scan_levels };
            certify(cli, out, model, laplace, cone, *samples, *margin, window.as_deref(), scan)
        }
        Command::OrderProbe { model, cone, pairs, horizon, seed, window } => {
            order_probe(cli, out, model, cone, *pairs, *horizon, *seed, window.as_deref())
        }
        Command::Reduce { matrix, fast } => reduce(out, matrix, fast),
        Command::ListModels => {
            for name in list_models() {
                // The gut model has no defaults; report its parameter names.
                let (dim, np) = match get_model_with(&name, &BTreeMap::new()) {
                    Ok(m) => (m.field.dim(), m.field.params().len()),
                    Err(_) => (4, evmono::models::GUT_PARAMS.len()),
                };
                println!("{name} {dim} {np}");
            }
            Ok(())
        }
    }
}

fn emit(mut outputs: Outputs, name: &str, report: &impl Serialize) -> Result<(), Failure> {
    let text = outputs.json(name, report)?;
    print!("{text}");
    outputs.finish()
}

fn tolerances(cli: &Cli) -> Result<Tolerances, Failure> {
    let ok = |v: f64| (1e-13..=1e-2).contains(&v);
    if !ok(cli.rtol) || !ok(cli.atol) {
        return Err(Failure::usage("--rtol and --atol must lie in [1e-13, 1e-2]"));
    }
    Ok(Tolerances::new(cli.rtol, cli.atol))
}

fn eig_tol(cli: &Cli, a: &Matrix<f64>) -> Result<f64, Failure> {
    if !(cli.eig_tol > 0.0 && cli.eig_tol.is_finite()) {
        return Err(Failure::usage("--eig-tol must be positive"));
    }
    Ok(cli.eig_tol * a.norm_1().max(1.0))
}

fn pairs_of(z: &[num_complex::Complex<f64>]) -> Vec<[f64; 2]> {
    z.iter().map(|c| [c.re, c.im]).collect()
}

fn linear_check(
    cli: &Cli,
    out: &Path,
    source: &str,
    t_max: Option<f64>,
    samples: usize,
    positivize: bool,
) -> Result<(), Failure> {
    let a = match get_model_with(source, &BTreeMap::new()).ok().and_then(|m| m.matrix) {
        Some(a) if !Path::new(source).exists() => a,
        _ => input::real_matrix(Path::new(source))?,
    };
    if let Some(t) = t_max {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::usage("--t-max must be positive and finite"));
        }
    }
    if samples < 2 {
        return Err(Failure::usage("--samples must be at least 2"));
    }
    let tol = eig_tol(cli, &a)?;
    let mut cfg = RunConfig::new("linear-check", out);
    cfg.source = Some(source.to_string());
    cfg.samples = Some(samples);
    cfg.set("matrix", a.to_rows());
    cfg.set("t_max", t_max);
    cfg.set("positivize", positivize);
    cfg.set("eig_tol", cli.eig_tol);
    let outputs = Outputs::new(cfg)?;

    let stage = "linear-check";
    let dec = decompose(&a).map_err(|e| Failure::numeric(stage, e))?;
    let evpos = check_eventual_positivity(&a, t_max, samples).map_err(|e| Failure::numeric(stage, e))?;
    let pf = classify_pf(&a, tol).map_err(|e| Failure::numeric(stage, e))?;
    let alpha = match find_alpha_certificates(&dec) {
        Ok(r) => serde_json::to_value(r).expect("serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mut report = json!({
        "source": source,
        "eigenvalues": pairs_of(&dec.eigenvalues),
        "dominance": check_dominance(&dec, tol),
        "pf_class": pf,
        "evpos": evpos,
        "alpha_certificates": alpha,
    });
    if positivize {
        report["positivizer"] = match similarity_positivize(&dec) {
            Ok(p) => {
                let b = p.s.inverse().map_err(|e| Failure::numeric("positivize", e))?.matmul(&a).matmul(&p.s);
                let transformed =
                    check_eventual_positivity(&b, t_max, samples).map_err(|e| Failure::numeric("positivize", e))?;
                json!({
                    "s": p.s.to_rows(),
                    "construction": p.construction,
                    "condition": p.condition,
                    "transformed": b.to_rows(),
                    "transformed_evpos": transformed,
                })
            }
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    emit(outputs, "linear-check.json", &report)
}

/// Model, overrides and a Newton-refined equilibrium.
struct Resolved {
    model: Model,
    params: BTreeMap<String, f64>,
    epsilon_override: Option<f64>,
    x_star: Vec<f64>,
}

/// With `trajectories`, `--epsilon-override` replaces `eps` after the
/// equilibrium is found.
fn resolve(cli: &Cli, args: &ModelArgs, trajectories: bool) -> Result<Resolved, Failure> {
    let params = input::params(&args.params)?;
    let mut model = input::model(&args.model, &params)?;
    let guess = model.guess(args.guess.as_deref(), args.label.as_deref())?;
    let x_star =
        find_equilibrium(&model.field, &guess, NEWTON_TOL, NEWTON_ITERS).map_err(|e| Failure::numeric("equilibrium", e))?;
    let epsilon_override = if trajectories { cli.epsilon_override } else { None };
    if let Some(e) = epsilon_override {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Failure::usage("--epsilon-override must be positive and finite"));
        }
        model.field.set_param("eps", e).map_err(|err| Failure::usage(format!("--epsilon-override: {err}")))?;
    }
    Ok(Resolved { model, params, epsilon_override, x_star })
}

fn koopman(r: &Resolved) -> Result<KoopmanSpec<f64>, Failure> {
    KoopmanSpec::new(&r.model.field, &r.x_star).map_err(|e| Failure::numeric("koopman", e))
}

fn base_config(command: &str, out: &Path, r: &Resolved) -> RunConfig {
    let mut cfg = RunConfig::new(command, out);
    cfg.source = Some(r.model.name.clone());
    cfg.params = r.params.clone();
    cfg.equilibrium = Some(r.x_star.clone());
    if let Some(e) = r.epsilon_override {
        cfg.set("epsilon_override", e);
    }
    cfg
}

fn laplace_options(cli: &Cli, args: &LaplaceArgs, spec: &KoopmanSpec<f64>) -> Result<LaplaceOptions, Failure> {
    let horizon = match args.horizon {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(_) => return Err(Failure::usage("--horizon must be positive and finite")),
        None => spec.default_horizon(),
    };
    if !(args.divergence_factor > 1.0 && args.divergence_factor.is_finite()) {
        return Err(Failure::usage("--divergence-factor must exceed 1"));
    }
    let method = match args.method {
        Method::Terminal => LaplaceMethod::Terminal,
        Method::Average => LaplaceMethod::Average,
    };
    Ok(LaplaceOptions {
        horizon: Some(horizon),
        tol: tolerances(cli)?,
        divergence_factor: args.divergence_factor,
        method,
        ..Default::default()
    })
}

fn spec_json(spec: &KoopmanSpec<f64>, names: &[String]) -> Value {
    json!({
        "states": names,
        "x_star": spec.x_star,
        "lambda1": spec.lambda1,
        "v1": spec.v1,
        "w1": spec.w1,
        "eigenvalues": pairs_of(&spec.dec.eigenvalues),
    })
}

fn equilibrium(cli: &Cli, out: &Path, args: &ModelArgs) -> Result<(), Failure> {
    let r = resolve(cli, args, false)?;
    let mut cfg = base_config("equilibrium", out, &r);
    cfg.set("label", &args.label);
    cfg.set("guess", &args.guess);
    cfg.set("eig_tol", cli.eig_tol);
    let outputs = Outputs::new(cfg)?;

    let field = &r.model.field;
    let f = field.eval(&r.x_star).map_err(|e| Failure::numeric("equilibrium", e))?;
    let jac = field.jacobian(&r.x_star).map_err(|e| Failure::numeric("equilibrium", e))?;
    let dec = decompose(&jac).map_err(|e| Failure::numeric("spectrum", e))?;
    let dominance = check_dominance(&dec, eig_tol(cli, &jac)?);
    let mut report = json!({
        "model": r.model.name,
        "states": field.state_names(),
        "x": r.x_star,
        "residual": norm_inf(&f),
        "jacobian": jac.to_rows(),
        "eigenvalues": pairs_of(&dec.eigenvalues),
        "diagonalizable": dec.diagonalizable,
        "dominance": dominance,
    });
    if dominance.lambda1_real && dominance.lambda1_simple {
        report["v1"] = json!(dec.v_re(0));
        report["w1"] = json!(dec.w_re(0));
    }
    emit(outputs, "equilibrium.json", &report)
}

fn eigenfunction(
    cli: &Cli,
    out: &Path,
    args: &ModelArgs,
    laplace: &LaplaceArgs,
    window: Option<&str>,
    grid: &str,
    gradients: bool,
) -> Result<(), Failure> {
    let r = resolve(cli, args, true)?;
    let spec = koopman(&r)?;
    let n = spec.dim();
    let window = r.model.window(window)?;
    let shape = input::grid(grid, n)?;
    let opts = laplace_options(cli, laplace, &spec)?;
    let mut cfg = base_config("eigenfunction", out, &r);
    cfg.window = Some(window.clone());
    cfg.grid = Some(shape.clone());
    cfg.laplace = Some(opts);
    cfg.set("gradients", gradients);
    let mut outputs = Outputs::new(cfg)?;

    let field = eval_field_on_grid(&spec, &r.model.field, &window, &shape, gradients, &opts)
        .map_err(|e| Failure::numeric("eigenfunction", e))?;
    let names = r.model.field.state_names();
    let mut cols: Vec<String> = names.to_vec();
    cols.push("s1".into());
    if gradients {
        cols.extend(names.iter().map(|s| format!("ds1_d{s}")));
    }
    cols.push("divergent".into());
    let mut body = Vec::new();
    field.write_dump(&mut body).map_err(|e| Failure::io(e.to_string()))?;
    outputs.text("eigenfunction.txt", &cols.join(" "), &body)?;

    let divergent = field.divergent_mask.iter().filter(|d| **d).count();
    let report = json!({
        "model": r.model.name,
        "spec": spec_json(&spec, names),
        "window": window,
        "grid_shape": shape,
        "points": field.len(),
        "divergent": divergent,
        "gradients": gradients,
        "dump": "eigenfunction.txt",
    });
    emit(outputs, "eigenfunction.json", &report)
}

/// Free axes, base point and 2D window of a cross-section.
struct Section {
    axes: Vec<usize>,
    base: Vec<f64>,
    window: Window,
}

fn section(m: &Model, x_star: &[f64], fixed: Option<&str>, window: Option<&str>) -> Result<Section, Failure> {
    let names = m.field.state_names();
    let n = names.len();
    if n < 2 {
        return Err(Failure::usage("cross-sections need at least two states"));
    }
    let fixed = match fixed {
        Some(s) => input::cross_section(s, names)?,
        None => (2..n).map(|i| (i, x_star[i])).collect(),
    };
    let axes: Vec<usize> = (0..n).filter(|i| !fixed.contains_key(i)).collect();
    if axes.len() != 2 {
        return Err(Failure::usage(format!("cross-section leaves {} free states, need exactly 2", axes.len())));
    }
    let mut base = x_star.to_vec();
    for (i, v) in &fixed {
        base[*i] = *v;
    }
    let window = match window {
        Some(s) if s.split(',').count() == 2 => input::window(s, 2)?,
        Some(s) => {
            let w = input::window(s, n)?;
            Window::new(axes.iter().map(|a| w.lo[*a]).collect(), axes.iter().map(|a| w.hi[*a]).collect())
        }
        None => {
            let w = m.window(None)?;
            Window::new(axes.iter().map(|a| w.lo[*a]).collect(), axes.iter().map(|a| w.hi[*a]).collect())
        }
    };
    Ok(Section { axes, base, window })
}

fn polylines_on(
    spec: &KoopmanSpec<f64>,
    field: &VectorField,
    sec: &Section,
    shape: &[usize],
    levels: &Levels,
    opts: &LaplaceOptions,
    stage: &str,
) -> Result<(Vec<f64>, Vec<Polyline<f64>>, usize), Failure> {
    let grid = eval_section_on_grid(spec, field, &sec.base, &sec.axes, &sec.window, shape, false, opts)
        .map_err(|e| Failure::numeric(stage, e))?;
    let levels = match levels {
        Levels::Auto(k) => input::auto_levels(&grid.s1_values, *k),
        Levels::Fixed(v) => v.clone(),
    };
    let lines = extract_isostables(&grid, &levels).map_err(|e| Failure::numeric(stage, e))?;
    let divergent = grid.divergent_mask.iter().filter(|d| **d).count();
    Ok((levels, lines, divergent))
}

fn polyline_body(lines: &[Polyline<f64>]) -> Result<Vec<u8>, Failure> {
    let mut body = Vec::new();
    write_polylines(lines, &mut body).map_err(|e| Failure::io(e.to_string()))?;
    Ok(body)
}

#[allow(clippy::too_many_arguments)]
fn isostables(
    cli: &Cli,
    out: &Path,
    args: &ModelArgs,
    laplace: &LaplaceArgs,
    levels: &str,
    cross: Option<&str>,
    window: Option<&str>,
    grid: &str,
) -> Result<(), Failure> {
    let r = resolve(cli, args, true)?;
    let spec = koopman(&r)?;
    let levels = input::levels(levels)?;
    let sec = section(&r.model, &r.x_star, cross, window)?;
    let shape = input::grid(grid, 2)?;
    let opts = laplace_options(cli, laplace, &spec)?;
    let mut cfg = base_config("isostables", out, &r);
    cfg.window = Some(sec.window.clone());
    cfg.grid = Some(shape.clone());
    cfg.laplace = Some(opts);
    cfg.set("axes", &sec.axes);
    cfg.set("base", &sec.base);
    cfg.set(
        "levels",
        match &levels {
            Levels::Auto(k) => json!({ "auto": k }),
            Levels::Fixed(v) => json!(v),
        },
    );
    let mut outputs = Outputs::new(cfg)?;

    let (levels, lines, divergent) = polylines_on(&spec, &r.model.field, &sec, &shape, &levels, &opts, "isostables")?;
    let names = r.model.field.state_names();
    let header = format!("level sign {} {}", names[sec.axes[0]], names[sec.axes[1]]);
    outputs.text("isostables.txt", &header, &polyline_body(&lines)?)?;
    let report = json!({
        "model": r.model.name,
        "spec": spec_json(&spec, names),
        "axes": sec.axes,
        "base": sec.base,
        "window": sec.window,
        "grid_shape": shape,
        "levels": levels,
        "polylines": lines.len(),
        "closed": lines.iter().filter(|p| p.closed).count(),
        "divergent_nodes": divergent,
        "dump": "isostables.txt",
    });
    emit(outputs, "isostables.json", &report)
}

fn bind_cone(src: &ConeSource, spec: &KoopmanSpec<f64>) -> Result<Cone<f64>, Failure> {
    let n = spec.dim();
    let cone = match src {
        ConeSource::OrthantSignature { sigma } => Cone::orthant(sigma.clone()).map_err(|e| Failure::usage(e.to_string()))?,
        ConeSource::PolyhedralGenerated { generators } => {
            Cone::polyhedral(generators.clone()).map_err(|e| Failure::usage(e.to_string()))?
        }
        ConeSource::TransformedLorentz { alpha } => {
            Cone::lorentz(LorentzConeSpec::from_decomposition(&spec.dec, alpha).map_err(|e| Failure::usage(e.to_string()))?)
        }
    };
    if cone.dim() != n {
        return Err(Failure::usage(format!("cone has dimension {}, model has {n}", cone.dim())));
    }
    Ok(cone)
}

struct ScanArgs<'a> {
    cross_section: Option<&'a str>,
    grid: usize,
    levels: usize,
}

/// Comparability scan margin: pairs closer than this fraction of their
/// separation to the cone boundary are not counted as ordered.
const SCAN_MARGIN: f64 = 1e-2;

#[allow(clippy::too_many_arguments)]
fn certify(
    cli: &Cli,
    out: &Path,
    args: &ModelArgs,
    laplace: &LaplaceArgs,
    cone: &ConeArgs,
    samples: usize,
    margin: f64,
    window: Option<&str>,
    scan: ScanArgs,
) -> Result<(), Failure> {
    let r = resolve(cli, args, true)?;
    let spec = koopman(&r)?;
    let n = spec.dim();
    let src = input::cone_source(cone.cone.as_deref(), cone.cone_file.as_deref())?;
    let hint = src.as_ref().map(|s| bind_cone(s, &spec)).transpose()?;
    let window = r.model.window(window)?;
    if samples == 0 {
        return Err(Failure::usage("--samples must be positive"));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Failure::usage("--margin must be finite and nonnegative"));
    }
    if scan.grid < 2 || scan.levels == 0 {
        return Err(Failure::usage("--scan-grid needs at least 2 nodes and --scan-levels at least 1"));
    }
    let sec = section(&r.model, &r.x_star, scan.cross_section, None)?;
    let sec = Section {
        window: Window::new(
            sec.axes.iter().map(|a| window.lo[*a]).collect(),
            sec.axes.iter().map(|a| window.hi[*a]).collect(),
        ),
        ..sec
    };
    let opts = laplace_options(cli, laplace, &spec)?;
    let mut cfg = base_config("certify", out, &r);
    cfg.window = Some(window.clone());
    cfg.laplace = Some(opts);
    cfg.samples = Some(samples);
    cfg.margin = Some(margin);
    cfg.grid = Some(vec![scan.grid; 2]);
    cfg.set("cone", &src);
    cfg.set("scan_axes", &sec.axes);
    cfg.set("scan_base", &sec.base);
    cfg.set("scan_levels", scan.levels);
    let mut outputs = Outputs::new(cfg)?;

    let field = &r.model.field;
    let points = window.halton::<f64>(samples);
    let cert_opts = CertOptions { margin, laplace: opts, ..Default::default() };
    let report = certify_sem(&spec, field, &points, hint.as_ref(), &cert_opts).map_err(|e| Failure::numeric("certify", e))?;

    // Cones for the isostable scan on the 2D section.
    let restrict = |sigma: &[i8]| sec.axes.iter().map(|a| sigma[*a]).collect::<Vec<i8>>();
    let tested = report.cone.as_ref().or(hint.as_ref());
    let scan_cones: Vec<Cone<f64>> = match tested {
        Some(Cone::OrthantSignature { sigma }) => vec![Cone::orthant(restrict(sigma)).expect("valid signature")],
        Some(c) if n == 2 => vec![c.clone()],
        Some(_) => Vec::new(),
        None => [[1, 1], [1, -1], [-1, 1], [-1, -1]].iter().map(|s| Cone::orthant(s.to_vec()).expect("valid")).collect(),
    };
    let (levels, lines, divergent) =
        polylines_on(&spec, field, &sec, &[scan.grid, scan.grid], &Levels::Auto(scan.levels), &opts, "comparability")?;
    let mut scans: Vec<(Cone<f64>, ComparabilityScan<f64>)> = Vec::new();
    for c in scan_cones {
        let s = isostable_comparability_scan(&lines, &c, SCAN_MARGIN).map_err(|e| Failure::numeric("comparability", e))?;
        scans.push((c, s));
    }
    let names = field.state_names();
    let header = format!("level sign {} {}", names[sec.axes[0]], names[sec.axes[1]]);
    outputs.text("certify_isostables.txt", &header, &polyline_body(&lines)?)?;

    let flow = match tested {
        Some(c) => Some(flow_direction_probe(field, &spec, c, &points, margin).map_err(|e| Failure::numeric("flow-probe", e))?),
        None => None,
    };
    let kamke = match tested {
        Some(Cone::OrthantSignature { sigma }) => {
            Some(kamke_muller_check(field, &points, sigma).map_err(|e| Failure::numeric("kamke-muller", e))?)
        }
        _ => None,
    };
    let doc = json!({
        "model": r.model.name,
        "spec": spec_json(&spec, names),
        "window": window,
        "verdict": report.verdict,
        "cone": report.cone,
        "report": report,
        "comparability": {
            "axes": sec.axes,
            "base": sec.base,
            "window": sec.window,
            "levels": levels,
            "margin": SCAN_MARGIN,
            "divergent_nodes": divergent,
            "scans": scans.iter().map(|(c, s)| json!({ "cone": c, "scan": s })).collect::<Vec<_>>(),
            "dump": "certify_isostables.txt",
        },
        "flow_probe": flow,
        "kamke_muller": kamke,
    });
    emit(outputs, "certify.json", &doc)
}

/// `x ⪰_K y` with both in `window`: `y` uniform, `x - y` a random member
/// of `K` scaled to at most a fifth of the window.
fn ordered_pair(rng: &mut impl Rng, window: &Window, cone: &Cone<f64>, interior: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = window.dim();
    let width: Vec<f64> = window.lo.iter().zip(&window.hi).map(|(a, b)| b - a).collect();
    for _ in 0..10_000 {
        let y: Vec<f64> = (0..n).map(|k| rng.gen_range(window.lo[k]..=window.hi[k])).collect();
        let d: Vec<f64> = match cone {
            Cone::OrthantSignature { sigma } => (0..n)
                .map(|k| {
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        sigma[k] as f64 * rng.gen_range(1e-3..0.2) * width[k]
                    }
                })
                .collect(),
            Cone::PolyhedralGenerated { generators, .. } => {
                let mut d = vec![0.0; n];
                for g in generators {
                    let c: f64 = rng.gen_range(0.0..1.0);
                    d.iter_mut().zip(g).for_each(|(a, b)| *a += c * b);
                }
                d
            }
            Cone::TransformedLorentz { .. } => {
                let t: f64 = rng.gen_range(0.0..1.0);
                (0..n).map(|k| interior[k] + t * rng.gen_range(-1.0..1.0)).collect()
            }
        };
        let scale = d.iter().zip(&width).fold(0.0f64, |m, (v, w)| m.max(v.abs() / w));
        if scale == 0.0 || !cone.contains(&d) {
            continue;
        }
        let s = rng.gen_range(5e-3..0.2) / scale;
        let x: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + s * b).collect();
        if window.contains(&x) {
            return Some((x, y));
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn order_probe(
    cli: &Cli,
    out: &Path,
    args: &ModelArgs,
    cone: &ConeArgs,
    pairs: usize,
    horizon: Option<f64>,
    seed: u64,
    window: Option<&str>,
) -> Result<(), Failure> {
    let r = resolve(cli, args, true)?;
    let spec = koopman(&r)?;
    let src = input::cone_source(cone.cone.as_deref(), cone.cone_file.as_deref())?
        .ok_or_else(|| Failure::usage("order-probe needs --cone or --cone-file"))?;
    let k = bind_cone(&src, &spec)?;
    let window = r.model.window(window)?;
    let horizon = match horizon {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(_) => return Err(Failure::usage("--horizon must be positive and finite")),
        None => spec.default_horizon(),
    };
    if pairs == 0 {
        return Err(Failure::usage("--pairs must be positive"));
    }
    let tol = tolerances(cli)?;
    let mut cfg = base_config("order-probe", out, &r);
    cfg.window = Some(window.clone());
    cfg.tolerances = Some(tol);
    cfg.samples = Some(pairs);
    cfg.set("cone", &src);
    cfg.set("horizon", horizon);
    cfg.set("seed", seed);
    let outputs = Outputs::new(cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
        .map(|_| ordered_pair(&mut rng, &window, &k, &spec.v1))
        .collect::<Option<_>>()
        .ok_or_else(|| Failure::numeric("order-probe", "could not draw ordered pairs inside the window"))?;
    let probe = empirical_order_probe(&r.model.field, &k, &set, horizon, ORDER_CHECKPOINTS, tol)
        .map_err(|e| Failure::numeric("order-probe", e))?;
    let tau0 = probe.tau0_estimates();
    let ordered = tau0.iter().filter(|t| t.is_some()).count();
    let max_tau0 = tau0.iter().flatten().fold(0.0f64, |m, t| m.max(*t));
    let doc = json!({
        "model": r.model.name,
        "cone": k,
        "pairs": pairs,
        "ordered_pairs": ordered,
        "max_tau0": max_tau0,
        "counterexample": probe.counterexample,
        "probe": probe,
    });
    emit(outputs, "order-probe.json", &doc)
}

fn reduce(out: &Path, matrix: &Path, fast: &str) -> Result<(), Failure> {
    let a = input::rational_matrix(matrix)?;
    let n = a.rows();
    let fast = input::indices(fast, n)?;
    let slow: Vec<usize> = (0..n).filter(|i| !fast.contains(i)).collect();
    if slow.is_empty() {
        return Err(Failure::usage("at least one index must stay slow"));
    }
    let mut cfg = RunConfig::new("reduce", out);
    cfg.source = Some(matrix.display().to_string());
    cfg.set("matrix", a.to_rows().iter().map(|r| r.iter().map(format_rational).collect()).collect::<Vec<Vec<String>>>());
    cfg.set("fast", fast.iter().map(|i| i + 1).collect::<Vec<_>>());
    let mut outputs = Outputs::new(cfg)?;

    let red = schur_reduce(&a, &slow, &fast).map_err(|e| Failure::numeric("reduce", e))?;
    let rows: Vec<Vec<String>> = red.to_rows().iter().map(|r| r.iter().map(format_rational).collect()).collect();
    let body: String = rows.iter().map(|r| r.join(" ") + "\n").collect();
    outputs.text("reduce.txt", "reduced matrix", body.as_bytes())?;
    let doc = json!({
        "slow": slow.iter().map(|i| i + 1).collect::<Vec<_>>(),
        "fast": fast.iter().map(|i| i + 1).collect::<Vec<_>>(),
        "reduced": rows,
    });
    emit(outputs, "reduce.json", &doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_pairs_respect_the_cone() {
        let w = Window::new(vec![-1.0; 3], vec![1.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cones = [
            Cone::orthant(vec![-1, 1, 1]).unwrap(),
            Cone::polyhedral(vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.3], vec![0.1, 0.0, 1.0]]).unwrap(),
        ];
        for c in &cones {
            for _ in 0..100 {
                let (x, y) = ordered_pair(&mut rng, &w, c, &[0.0; 3]).unwrap();
                let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                assert!(c.contains(&d) && w.contains(&x) && w.contains(&y));
            }
        }
    }

    #[test]
    fn every_builtin_is_listed() {
        assert_eq!(list_models().len(), evmono::models::MODEL_NAMES.len());
    }
}
