use std::path::PathBuf;

use clap::Args;
use deltashell::coupling::{build_kv, closed_form, lambda_direct, lambda_neumann, oddness_residual, CouplingKind};
use deltashell::geometry::{Surface, SurfaceMesh, TubularMap};
use deltashell::potential::{factorize, squeeze};
use deltashell::shell_ops::{
    plemelj_check, standard_densities, strong_convergence_experiment, AmbientField, Density, OperatorGrid,
    VolumeGrid, DEFAULT_OFFSETS,
};
use deltashell::sphere_spectral::{
    find_gap_eigenvalues, klein_convergence_study, shell_matching, ChannelSystem, Interface, Scan, SolverConfig,
};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{profile_metadata, ListArg, OutputArgs, PotentialArgs, SpectralArgs};
use crate::output::{csv_with_metadata, emit, json_with_metadata, num, opt, Metadata};
use crate::CliError;

fn parse_kind(text: Option<&str>) -> Result<CouplingKind, CliError> {
    match text.unwrap_or("electrostatic") {
        "electrostatic" => Ok(CouplingKind::Electrostatic),
        "scalar" => Ok(CouplingKind::Scalar),
        other => Err(CliError::Usage(format!("unknown coupling kind '{other}' (electrostatic or scalar)"))),
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("result is built as an object"),
    }
}

fn assert_ok(ok: bool, what: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Assertion(what.to_string()))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CouplingArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    /// Gauss–Legendre nodes for K_V [default: 128]
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Neumann-series terms [default: 20]
    #[arg(long)]
    pub terms: Option<usize>,
    /// Pairwise agreement tolerance [default: 1e-9]
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

/// All coupling methods for both kinds. The Neumann sum enters the
/// agreement check only when its tail bound is within the tolerance.
pub fn coupling(args: &CouplingArgs) -> Result<(), CliError> {
    let mut meta = Metadata::new("coupling");
    let profile = args.potential.resolve(1.0, 0.25)?;
    let (nodes, terms, tol) = (args.nodes.unwrap_or(128), args.terms.unwrap_or(20), args.tol.unwrap_or(1e-9));
    profile_metadata(&mut meta, &profile);
    meta.insert("nodes", nodes);
    meta.insert("terms", terms);
    meta.insert("tol", tol);

    let uv = factorize(&profile);
    let kv = build_kv(&uv, nodes)?;
    let tau_eta = profile.square_tau().map(|t| t * profile.eta());
    let mut kinds = Map::new();
    let mut agree = true;
    for kind in [CouplingKind::Electrostatic, CouplingKind::Scalar] {
        let direct = lambda_direct(&kv, kind)?;
        let neumann = lambda_neumann(&kv, kind, terms).ok();
        let closed = tau_eta.map(|x| closed_form(kind, x).value);
        let neumann_checked = neumann.filter(|n| n.error_bound.is_some_and(|b| b <= tol));
        let values: Vec<f64> = [Some(direct.value), neumann_checked.map(|n| n.value), closed]
            .into_iter()
            .flatten()
            .collect();
        let mut gap: f64 = 0.0;
        for (i, a) in values.iter().enumerate() {
            for b in &values[i + 1..] {
                gap = gap.max((a - b).abs());
            }
        }
        agree &= gap <= tol;
        kinds.insert(
            kind.name().into(),
            json!({
                "direct": direct.value,
                "condition": direct.condition,
                "neumann": neumann.map(|n| n.value),
                "neumann_error_bound": neumann.and_then(|n| n.error_bound),
                "neumann_checked": neumann_checked.is_some(),
                "closed_form": closed,
                "max_disagreement": gap,
                "agree": gap <= tol,
            }),
        );
    }
    let result = json!({
        "lambda_e": kinds["electrostatic"]["direct"],
        "lambda_s": kinds["scalar"]["direct"],
        "hs_norm": kv.hs_norm(),
        "oddness_residual": oddness_residual(&kv)?.norm(),
        "methods": kinds,
        "agree": agree,
    });
    emit(&json_with_metadata(object(result), &meta), args.out.output.as_deref())?;
    assert_ok(agree, "coupling methods disagree beyond the tolerance")
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct JumpArgs {
    /// Fibonacci nodes on the unit sphere [default: 512]
    #[arg(long = "N", visible_alias = "n")]
    pub n: Option<usize>,
    /// Offsets h, 2h, 4h for the one-sided limits [default: 0.0125,0.025,0.05]
    #[arg(long)]
    pub offsets: Option<ListArg>,
    /// Largest accepted relative error [default: 5e-2]
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub spectral: SpectralArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

pub fn jump_check(args: &JumpArgs) -> Result<(), CliError> {
    let mut meta = Metadata::new("jump-check");
    let sp = args.spectral.resolve(&mut meta)?;
    let n = args.n.unwrap_or(512);
    let offsets = match &args.offsets {
        Some(l) => l.floats("offsets")?,
        None => DEFAULT_OFFSETS.to_vec(),
    };
    let tol = args.tol.unwrap_or(5e-2);
    meta.insert("N", n);
    meta.insert("offsets", &offsets);
    meta.insert("tol", tol);
    meta.insert("surface", "unit sphere");
    let mesh = SurfaceMesh::fibonacci(Surface::sphere(1.0)?, n)?;
    let owned = standard_densities();
    let densities: Vec<&Density> = owned.iter().map(|f| f as &Density).collect();
    let report = plemelj_check(&sp, &mesh, &densities, &offsets)?;
    let names = ["constant", "linear", "smooth"];
    let per: Vec<Value> = report
        .densities
        .iter()
        .zip(names)
        .map(|(d, name)| {
            json!({
                "density": name,
                "interior_error": d.interior_error,
                "exterior_error": d.exterior_error,
                "jump_residual": d.jump_residual,
                "sum_residual": d.sum_residual,
            })
        })
        .collect();
    let pass = report.max_relative_error <= tol;
    let result = json!({
        "nodes": report.nodes,
        "max_relative_error": report.max_relative_error,
        "densities": per,
        "pass": pass,
    });
    emit(&json_with_metadata(object(result), &meta), args.out.output.as_deref())?;
    assert_ok(pass, "jump relation error exceeds the tolerance")
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GeometryArgs {
    /// sphere or ellipsoid [default: sphere]
    #[arg(long)]
    pub surface: Option<String>,
    /// Sphere radius [default: 1.0]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Ellipsoid semi-axes a,b,c [default: 1.2,1.0,0.8]
    #[arg(long)]
    pub axes: Option<ListArg>,
    /// Fibonacci nodes (sphere) [default: 2048]
    #[arg(long = "N", visible_alias = "n")]
    pub n: Option<usize>,
    /// Polar Gauss nodes of the product mesh (ellipsoid) [default: 48]
    #[arg(long)]
    pub n_theta: Option<usize>,
    /// Gauss nodes across the collar [default: 16]
    #[arg(long)]
    pub t_nodes: Option<usize>,
    /// Collar half-width ε [default: η/2]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Tube width η [default: surface-dependent, below the focal distance]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Largest accepted relative error [default: 1e-6]
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

/// Coarea integrals against closed forms. For any closed convex surface the
/// collar volume is `2εA + (2ε³/3)∫K = 2εA + 8πε³/3`; spheres also get the
/// radial moment `∫|x|²`.
pub fn geometry_audit(args: &GeometryArgs) -> Result<(), CliError> {
    let mut meta = Metadata::new("geometry-audit");
    let kind = args.surface.as_deref().unwrap_or("sphere");
    let t_nodes = args.t_nodes.unwrap_or(16);
    let tol = args.tol.unwrap_or(1e-6);
    let mesh = match kind {
        "sphere" => {
            let r = args.radius.unwrap_or(1.0);
            let n = args.n.unwrap_or(2048);
            meta.insert("radius", r);
            meta.insert("N", n);
            SurfaceMesh::fibonacci(Surface::sphere(r)?, n)?
        }
        "ellipsoid" => {
            let axes = match &args.axes {
                Some(l) => l.floats("axes")?,
                None => vec![1.2, 1.0, 0.8],
            };
            let [a, b, c] = <[f64; 3]>::try_from(axes.as_slice())
                .map_err(|_| CliError::Usage("--axes needs exactly three values".into()))?;
            let nt = args.n_theta.unwrap_or(48);
            meta.insert("axes", [a, b, c]);
            meta.insert("n_theta", nt);
            meta.insert("n_psi", 2 * nt);
            SurfaceMesh::gauss_product(Surface::ellipsoid(a, b, c)?, nt, 2 * nt)?
        }
        other => return Err(CliError::Usage(format!("unknown surface '{other}' (sphere or ellipsoid)"))),
    };
    let surface = *mesh.surface();
    let eta = args.eta.unwrap_or_else(|| surface.default_eta());
    let eps = args.eps.unwrap_or(0.5 * eta);
    meta.insert("surface", kind);
    meta.insert("eta", eta);
    meta.insert("eps", eps);
    meta.insert("t_nodes", t_nodes);
    meta.insert("tol", tol);
    meta.insert("mesh_nodes", mesh.len());

    let area_exact = surface.area();
    let area_mesh = mesh.total_weight();
    let tm = TubularMap::new(mesh, eta)?;
    let volume = tm.coarea_integrate(|_| 1.0, eps, t_nodes)?;
    let volume_exact = 2.0 * eps * area_exact + 8.0 * std::f64::consts::PI * eps.powi(3) / 3.0;
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    let mut checks = vec![
        ("area", area_mesh, area_exact),
        ("collar_volume", volume, volume_exact),
    ];
    if let Surface::Sphere { radius } = surface {
        let moment = tm.coarea_integrate(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2], eps, t_nodes)?;
        let (lo, hi) = (radius - eps, radius + eps);
        let exact = 4.0 * std::f64::consts::PI / 5.0 * (hi.powi(5) - lo.powi(5));
        checks.push(("radial_moment", moment, exact));
    }
    let mut pass = true;
    let mut rows = Map::new();
    for (name, value, exact) in &checks {
        let r = rel(*value, *exact);
        pass &= r <= tol;
        rows.insert((*name).into(), json!({ "value": value, "exact": exact, "relative_error": r }));
    }
    let result = json!({
        "checks": rows,
        "max_curvature": surface.max_curvature(),
        "min_image_separation": tm.min_image_separation(eps)?,
        "pass": pass,
    });
    emit(&json_with_metadata(object(result), &meta), args.out.output.as_deref())?;
    assert_ok(pass, "coarea integrals miss their closed forms")
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ConvergeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    /// Fibonacci nodes on the unit sphere [default: 256]
    #[arg(long = "N", visible_alias = "n")]
    pub n: Option<usize>,
    /// Gauss nodes across the collar [default: 8]
    #[arg(long = "M", visible_alias = "t-nodes")]
    pub m: Option<usize>,
    /// Decreasing ε list within (0, η] [default: η, η/2, …, η/32]
    #[arg(long)]
    pub eps: Option<ListArg>,
    /// Points per side of the ambient grid [default: 25]
    #[arg(long)]
    pub volume_n: Option<usize>,
    /// Half-width of the ambient cube [default: 2.5]
    #[arg(long)]
    pub volume_half_width: Option<f64>,
    /// Required decay ratio per row before the floor [default: 1.5]
    #[arg(long)]
    pub min_ratio: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub spectral: SpectralArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

fn separable_density(x: [f64; 3], t: f64) -> [C64; 4] {
    let w = 1.0 + 0.5 * t;
    [
        C64::new((1.0 + 0.3 * x[2]) * w, 0.0),
        C64::new(0.2 * x[0] * w, 0.0),
        C64::new(0.0, 0.5 * x[1] * w),
        C64::new((x[0] + x[2]).cos() * w, 0.0),
    ]
}

fn ambient_source(y: [f64; 3]) -> [C64; 4] {
    let e = (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp();
    [C64::new(e, 0.0), C64::new(0.0, 0.0), C64::new(0.0, y[2] * e), C64::new(0.3 * y[0] * e, 0.0)]
}

pub fn converge(args: &ConvergeArgs) -> Result<(), CliError> {
    let mut meta = Metadata::new("converge");
    let profile = args.potential.resolve(0.8, 0.25)?;
    let eta = profile.eta();
    let eps = match &args.eps {
        Some(l) => l.floats("eps")?,
        None => (0..6).map(|k| eta / f64::from(1 << k)).collect(),
    };
    let sp = args.spectral.resolve(&mut meta)?;
    let (n, m) = (args.n.unwrap_or(256), args.m.unwrap_or(8));
    let (vn, vh) = (args.volume_n.unwrap_or(25), args.volume_half_width.unwrap_or(2.5));
    let min_ratio = args.min_ratio.unwrap_or(1.5);
    profile_metadata(&mut meta, &profile);
    meta.insert("N", n);
    meta.insert("M", m);
    meta.insert("eps", &eps);
    meta.insert("volume_n", vn);
    meta.insert("volume_half_width", vh);
    meta.insert("min_ratio", min_ratio);
    meta.insert("density", "(1 + t/2)(1 + 0.3z, 0.2x, 0.5iy, cos(x + z))");
    meta.insert("source", "exp(-|y|^2)(1, 0, iz, 0.3x)");

    let grid = OperatorGrid::new(SurfaceMesh::fibonacci(Surface::sphere(1.0)?, n)?, &profile, m)?;
    let field = AmbientField::sample(VolumeGrid::cube(vh, vn)?, ambient_source);
    let g = grid.sample(separable_density);
    let report = strong_convergence_experiment(&grid, &sp, &g, &field, &eps)?;
    let ratios = report.decay_ratios();
    meta.insert("limit_norms", report.limit_norms);
    meta.insert("ratios_B", &ratios[0]);
    meta.insert("ratios_A", &ratios[1]);
    meta.insert("ratios_C", &ratios[2]);
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![num(r.epsilon), num(r.norm_b), num(r.norm_a), num(r.norm_c), r.floor_flag.to_string()])
        .collect();
    let text = csv_with_metadata(&["epsilon", "norm_B", "norm_A", "norm_C", "floor_flag"], &rows, &meta);
    emit(&text, args.out.output.as_deref())?;
    assert_ok(report.decays(min_ratio), "difference norms decay slower than the required ratio")
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SpectrumArgs {
    /// Spin-orbit numbers κ [default: -2,-1,1,2]
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<ListArg>,
    /// Mass m [default: 1.0]
    #[arg(long)]
    pub mass: Option<f64>,
    /// Shell radius R [default: 1.0]
    #[arg(long)]
    pub radius: Option<f64>,
    /// free, shell or squeezed [default: shell]
    #[arg(long)]
    pub interface: Option<String>,
    /// Shell coupling λ [default: 2tan(1/2)]
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// electrostatic or scalar [default: electrostatic]
    #[arg(long)]
    pub kind: Option<String>,
    /// Squeezing scale ε for the squeezed interface [default: 0.05]
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    /// Sign-change scan steps over the gap [default: 400]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Use the refined radial solver
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub refined: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

fn solver_config(refined: bool) -> SolverConfig {
    if refined {
        SolverConfig::default().refined()
    } else {
        SolverConfig::default()
    }
}

pub fn spectrum(args: &SpectrumArgs) -> Result<(), CliError> {
    let mut meta = Metadata::new("spectrum");
    let kappas = match &args.kappa {
        Some(l) => l.ints("kappa")?,
        None => vec![-2, -1, 1, 2],
    };
    let (m, radius) = (args.mass.unwrap_or(1.0), args.radius.unwrap_or(1.0));
    let kind = parse_kind(args.kind.as_deref())?;
    let refined = args.refined.unwrap_or(false);
    let mut scan = Scan::gap(m);
    if let Some(s) = args.steps {
        scan.steps = s;
    }
    meta.insert("kappa", &kappas);
    meta.insert("mass", m);
    meta.insert("radius", radius);
    meta.insert("kind", kind.name());
    meta.insert("scan", scan);
    meta.insert("refined", refined);
    let iface = match args.interface.as_deref().unwrap_or("shell") {
        "free" => {
            meta.insert("interface", "free");
            Interface::Free
        }
        "shell" => {
            let lambda = args.lambda.unwrap_or(2.0 * 0.5f64.tan());
            meta.insert("interface", "shell");
            meta.insert("lambda", lambda);
            Interface::Shell(shell_matching(lambda, kind)?)
        }
        "squeezed" => {
            let profile = args.potential.resolve(1.0, 0.25)?;
            let eps = args.epsilon.unwrap_or(0.05);
            profile_metadata(&mut meta, &profile);
            meta.insert("interface", "squeezed");
            meta.insert("epsilon", eps);
            Interface::Squeezed { family: squeeze(&profile, eps)?, kind }
        }
        other => return Err(CliError::Usage(format!("unknown interface '{other}' (free, shell or squeezed)"))),
    };
    let cfg = solver_config(refined);
    let mut rows = Vec::new();
    for kappa in kappas {
        let ch = ChannelSystem::new(kappa, m, radius)?;
        let res = find_gap_eigenvalues(&ch, &iface, scan, &cfg)?;
        for (k, (a, r)) in res.eigenvalues.iter().zip(&res.residuals).enumerate() {
            rows.push(vec![kappa.to_string(), k.to_string(), num(*a), num(*r)]);
        }
    }
    meta.insert("eigenvalue_count", rows.len());
    let text = csv_with_metadata(&["kappa", "index", "eigenvalue", "residual"], &rows, &meta);
    emit(&text, args.out.output.as_deref())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct KleinArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub potential: PotentialArgs,
    /// Decreasing ε list [default: 0.2,0.1,0.05,0.025]
    #[arg(long)]
    pub eps: Option<ListArg>,
    /// Spin-orbit number κ [default: -1]
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<i32>,
    /// Mass m [default: 1.0]
    #[arg(long)]
    pub mass: Option<f64>,
    /// Shell radius R [default: 1.0]
    #[arg(long)]
    pub radius: Option<f64>,
    /// electrostatic or scalar [default: electrostatic]
    #[arg(long)]
    pub kind: Option<String>,
    /// Sign-change scan steps over the gap [default: 400]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Use the refined radial solver
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub refined: Option<bool>,
    /// Also write the JSON summary here
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

/// Squeezed eigenvalues against the shell eigenvalues at the nonlinear and
/// the naive coupling. Exits 1 when the errors do not decrease strictly.
pub fn klein(args: &KleinArgs) -> Result<(), CliError> {
    let mut meta = Metadata::new("klein");
    let profile = args.potential.resolve(1.0, 1.0)?;
    let eps = match &args.eps {
        Some(l) => l.floats("eps")?,
        None => vec![0.2, 0.1, 0.05, 0.025],
    };
    let kappa = args.kappa.unwrap_or(-1);
    let (m, radius) = (args.mass.unwrap_or(1.0), args.radius.unwrap_or(1.0));
    let kind = parse_kind(args.kind.as_deref())?;
    let refined = args.refined.unwrap_or(false);
    let mut scan = Scan::gap(m);
    if let Some(s) = args.steps {
        scan.steps = s;
    }
    profile_metadata(&mut meta, &profile);
    meta.insert("eps", &eps);
    meta.insert("kappa", kappa);
    meta.insert("mass", m);
    meta.insert("radius", radius);
    meta.insert("kind", kind.name());
    meta.insert("scan", scan);
    meta.insert("refined", refined);
    let ch = ChannelSystem::new(kappa, m, radius)?;
    let study = klein_convergence_study(&profile, &ch, &eps, kind, scan, &solver_config(refined))?;
    meta.insert("lambda_nonlinear", study.lambda_nonlinear);
    meta.insert("lambda_linear", study.lambda_linear);
    meta.insert("a_nonlinear", study.a_nonlinear);
    meta.insert("a_linear", study.a_linear);
    meta.insert("slope", study.slope);
    meta.insert("errors_decreasing", study.errors_decreasing);
    meta.insert("min_linear_distance", study.min_linear_distance);
    let rows: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.epsilon),
                opt(r.a_eps),
                opt(study.a_nonlinear),
                opt(study.a_linear),
                opt(study.target_gap()),
                opt(r.error_nonlinear),
                opt(r.distance_linear),
            ]
        })
        .collect();
    let header = [
        "epsilon",
        "a_eps",
        "a_nonlinear",
        "a_linear",
        "gap",
        "error_nonlinear",
        "distance_linear",
    ];
    emit(&csv_with_metadata(&header, &rows, &meta), args.out.output.as_deref())?;
    if let Some(path) = &args.json {
        let mut summary = object(study.summary_json());
        summary.insert("rows".into(), serde_json::to_value(&study.rows).expect("rows serialize"));
        emit(&json_with_metadata(summary, &meta), Some(path))?;
    }
    assert_ok(
        study.errors_decreasing,
        "squeezed eigenvalues are missing or their errors do not decrease",
    )
}
