//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use doubletopt::geom::{
    adaptive_candidates, BlockGeometry, Candidates, DoubletLine, FieldSampler, Point, Polygon, PrepConfig,
    UniformField, WellCandidate,
};
use doubletopt::hydro::{breakthrough_param, drawdown_limit, upconing_limit, HydroSample, TapLimits};
use doubletopt::io::GroundwaterField;
use doubletopt::model::{build_milp, BlockProblem, ScenarioConfig};
use doubletopt::oracle::{brute_force_optimum, EnumerationBound};
use doubletopt::scenario::{run_matrix, BlockOutcome, RunOptions, ScenarioRun};
use doubletopt::solver::{audit_solution, solve_milp, BlockSolution, Budget};
use doubletopt::synthetic::{synthetic_city, SynthConfig};
use doubletopt::units::Rate;

type Verdict = Result<String, String>;
type Check<'a> = Box<dyn FnMut() -> Verdict + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn sample(k: f64, b: f64, headroom: f64, grad: f64, dir: [f64; 2]) -> HydroSample {
    HydroSample {
        conductivity: k,
        thickness: b,
        natural_level: 515.0,
        max_level: 515.0 + headroom,
        gradient: grad,
        darcy_velocity: None,
        flow_dir: dir,
    }
}

// ---------------------------------------------------------------------------
// 1 + 2: solver against exhaustive enumeration

struct OracleRun {
    problems: Vec<BlockProblem>,
    solutions: Vec<BlockSolution>,
}

fn random_problem(rng: &mut ChaCha8Rng) -> BlockProblem {
    let spacing = [5.0, 7.5, 10.0][rng.gen_range(0..3)];
    let n_lines = rng.gen_range(1..=3);
    let mut rows: Vec<i64> = Vec::new();
    while rows.len() < n_lines {
        let r = rng.gen_range(0..8);
        if !rows.contains(&r) {
            rows.push(r);
        }
    }
    rows.sort();
    let mut next_id = 0;
    let lines = rows
        .iter()
        .enumerate()
        .map(|(k, &row)| {
            let n_wells = rng.gen_range(2..=4);
            let first = rng.gen_range(0..3);
            let t = row as f64 * spacing;
            let wells = (0..n_wells)
                .map(|c| {
                    let s = sample(
                        rng.gen_range(1e-4..5e-3),
                        rng.gen_range(2.0..20.0),
                        rng.gen_range(0.0..3.0),
                        rng.gen_range(1e-4..5e-3),
                        [1.0, 0.0],
                    );
                    next_id += 1;
                    let s_coord = (first + c) as f64 * spacing;
                    WellCandidate {
                        well_id: next_id - 1,
                        x: s_coord,
                        y: t,
                        s: s_coord,
                        t,
                        limits: TapLimits::evaluate(&s),
                    }
                })
                .collect();
            DoubletLine::new(k, t, wells)
        })
        .collect();
    let q_min = [1.0, 5.0][rng.gen_range(0..2)];
    let r_delta = [1.5, 2.0, 3.0][rng.gen_range(0..3)];
    let scenario = ScenarioConfig::new(Rate::from_l_per_s(q_min), r_delta, 10.0).unwrap();
    BlockProblem::new("random", lines, scenario).unwrap()
}

fn oracle_equivalence(state: &mut Option<OracleRun>) -> Verdict {
    const N: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut run = OracleRun {
        problems: Vec::with_capacity(N),
        solutions: Vec::with_capacity(N),
    };
    let mut mismatches = Vec::new();
    let mut nonzero = 0;
    for i in 0..N {
        let p = random_problem(&mut rng);
        let exact = brute_force_optimum(&p, EnumerationBound::default()).map_err(|e| e.to_string())?;
        let sol = solve_milp(&build_milp(&p), &Budget::default()).map_err(|e| e.to_string())?;
        let got = sol.q_block.m3_per_s();
        if rel_diff(got, exact.objective) > 1e-6 || !sol.certificate.proven_optimal {
            mismatches.push(format!("#{i}: solver {got:e} oracle {:e}", exact.objective));
        }
        if exact.objective > 0.0 {
            nonzero += 1;
        }
        run.problems.push(p);
        run.solutions.push(sol);
    }
    let elapsed = start.elapsed();
    *state = Some(run);
    ensure(mismatches.is_empty(), || mismatches.join("; "))?;
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:.1?}")
    })?;
    Ok(format!(
        "{N} instances ({nonzero} with doublets) agree, {elapsed:.1?}"
    ))
}

fn city_field(city: &doubletopt::synthetic::SyntheticCity) -> GroundwaterField {
    GroundwaterField::new(city.field.clone()).expect("synthetic field is valid")
}

fn constraint_audit(oracle: &Option<OracleRun>) -> Verdict {
    let run = oracle.as_ref().ok_or("criterion 1 did not produce solutions")?;
    let mut violations = 0;
    for (sol, p) in run.solutions.iter().zip(&run.problems) {
        violations += audit_solution(sol, p).len();
    }
    ensure(violations == 0, || {
        format!("{violations} violations on random instances")
    })?;

    let city = synthetic_city(&SynthConfig::default());
    let field = city_field(&city);
    let scenarios = ScenarioConfig::standard_matrix(10.0);
    let runs =
        run_matrix(&city.blocks, &field, &scenarios, &RunOptions::default()).map_err(|e| e.to_string())?;
    let opts = RunOptions::default();
    let prepared: Vec<Candidates> = city
        .blocks
        .iter()
        .map(|g| adaptive_candidates(g, &field, &opts.prep))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut audited = 0;
    let mut problems = Vec::new();
    for run in &runs {
        for outcome in &run.outcomes {
            let sol = match outcome {
                BlockOutcome::Solved(s) => s,
                BlockOutcome::Failed(f) => {
                    problems.push(f.to_string());
                    continue;
                }
            };
            let c = prepared.iter().find(|c| c.block_id == sol.block_id).unwrap();
            if c.lines.is_empty() {
                continue;
            }
            let p = BlockProblem::new(c.block_id.clone(), c.lines.clone(), run.scenario).unwrap();
            for v in audit_solution(sol, &p) {
                problems.push(format!("{} {}: {v}", run.scenario.tag(), sol.block_id));
            }
            audited += 1;
        }
    }
    ensure(problems.is_empty(), || problems.join("; "))?;
    Ok(format!(
        "{} random solutions and {audited} city block solutions over {} scenarios are clean",
        run.solutions.len(),
        runs.len()
    ))
}

// ---------------------------------------------------------------------------
// 3: monotonicity

fn monotonicity() -> Verdict {
    let city = synthetic_city(&SynthConfig {
        blocks: 20,
        seed: 11,
        ..Default::default()
    });
    let field = city_field(&city);
    let scenarios = ScenarioConfig::standard_matrix(10.0);
    let runs =
        run_matrix(&city.blocks, &field, &scenarios, &RunOptions::default()).map_err(|e| e.to_string())?;
    let objective = |q: f64, r: f64, b: usize| -> Result<f64, String> {
        let run: &ScenarioRun = runs
            .iter()
            .find(|x| x.scenario.q_min.l_per_s() == q && x.scenario.r_delta == r)
            .ok_or("scenario missing")?;
        let sol = run.outcomes[b]
            .solution()
            .ok_or_else(|| format!("block {b} failed"))?;
        Ok(sol.q_block.m3_per_s())
    };
    // the solver stops at a relative gap of 1e-6, so equal optima may differ by that much
    let worse = |tighter: f64, looser: f64| tighter > looser * (1.0 + 1e-6) + 1e-12;
    let mut violations = Vec::new();
    let mut comparisons = 0;
    for b in 0..city.blocks.len() {
        for q in [1.0, 5.0] {
            for (r0, r1) in [(1.5, 2.0), (2.0, 3.0)] {
                let (a, c) = (objective(q, r0, b)?, objective(q, r1, b)?);
                comparisons += 1;
                if worse(c, a) {
                    violations.push(format!("block {b} q{q}: r{r1} {c:e} > r{r0} {a:e}"));
                }
            }
        }
        for r in [1.5, 2.0, 3.0] {
            let (a, c) = (objective(1.0, r, b)?, objective(5.0, r, b)?);
            comparisons += 1;
            if worse(c, a) {
                violations.push(format!("block {b} r{r}: q5 {c:e} > q1 {a:e}"));
            }
        }
    }
    ensure(violations.is_empty(), || violations.join("; "))?;
    let totals: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.1}", r.report.total_rate.l_per_s()))
        .collect();
    Ok(format!(
        "{comparisons} comparisons on 20 blocks, totals {} l/s",
        totals.join(" ")
    ))
}

// ---------------------------------------------------------------------------
// 4: analytical limits

fn tap_spot_checks() -> Verdict {
    let mut notes = Vec::new();
    let mut check = |name: &str, got: f64, hand: f64, reference: f64, digits: f64| -> Result<(), String> {
        ensure(rel_diff(got, hand) <= 1e-9, || {
            format!("{name}: {got:e} vs hand {hand:e}")
        })?;
        // reference figures are rounded to the digits shown
        let half_ulp = 0.5 * 10f64.powf(reference.abs().log10().floor() - digits + 1.0);
        ensure((got - reference).abs() <= half_ulp, || {
            format!("{name}: {got:e} vs reference {reference:e}")
        })?;
        notes.push(format!("{name}={got:.4e}"));
        Ok(())
    };

    let s = sample(2e-3, 10.0, 1.0, 1e-3, [0.0, 1.0]);
    check("q_d", drawdown_limit(&s), 0.195 * 2e-3 * 10.0 * 10.0, 0.039, 2.0)?;

    let s = sample(1e-3, 10.0, 1.0, 0.001, [0.0, 1.0]);
    let hand = 1.0 * 1e-3 * (0.798 * 10f64.ln()).exp() * (29.9 * 0.001f64).exp();
    check("q_f", upconing_limit(&s), hand, 6.47e-3, 3.0)?;

    let s = HydroSample {
        darcy_velocity: Some(1e-6),
        ..sample(1e-3, 10.0, 1.0, 1e-3, [0.0, 1.0])
    };
    let hand = std::f64::consts::PI / 1.96 * 1e-6 * 10.0;
    check("alpha", breakthrough_param(&s), hand, 1.603e-5, 4.0)?;
    Ok(notes.join(" "))
}

// ---------------------------------------------------------------------------
// 5: candidate layout

const X0: f64 = 690_000.0;
const Y0: f64 = 5_330_000.0;

fn good_sample() -> HydroSample {
    sample(2e-3, 10.0, 1.5, 1e-3, [0.0, 1.0])
}

/// West half too permeable-poor for drawdown, north strip without headroom.
struct PatchyField;

impl FieldSampler for PatchyField {
    fn sample(&self, p: Point) -> Option<HydroSample> {
        let mut s = good_sample();
        if p.x < X0 + 20.0 {
            s.conductivity = 1e-5;
        }
        if p.y > Y0 + 45.0 {
            s.max_level = s.natural_level;
        }
        Some(s)
    }
}

fn prep_conformance() -> Verdict {
    let empty = BlockGeometry {
        block_id: "empty".into(),
        boundary: Polygon::rect(X0, Y0, X0 + 50.0, Y0 + 50.0).unwrap(),
        buildings: vec![],
    };
    let field = UniformField(good_sample());
    let prep = PrepConfig::default();
    let c = adaptive_candidates(&empty, &field, &prep).map_err(|e| e.to_string())?;
    let unlimited = PrepConfig {
        max_wells: usize::MAX,
        ..prep
    };
    let first = adaptive_candidates(&empty, &field, &unlimited).map_err(|e| e.to_string())?;
    ensure(first.spacing == Some(5.0) && first.well_count() > 100, || {
        format!("5 m grid gives {} wells", first.well_count())
    })?;
    ensure(c.spacing == Some(7.5) && c.well_count() <= 100, || {
        format!("landed at {:?} with {} wells", c.spacing, c.well_count())
    })?;
    let landed = c.well_count();

    let built = BlockGeometry {
        block_id: "built".into(),
        boundary: Polygon::rect(X0, Y0, X0 + 60.0, Y0 + 60.0).unwrap(),
        buildings: vec![
            Polygon::rect(X0 + 10.0, Y0 + 10.0, X0 + 25.0, Y0 + 30.0).unwrap(),
            Polygon::rect(X0 + 40.0, Y0 - 5.0, X0 + 65.0, Y0 + 12.0).unwrap(),
            Polygon::new(
                vec![
                    Point::new(X0 + 35.0, Y0 + 40.0),
                    Point::new(X0 + 50.0, Y0 + 45.0),
                    Point::new(X0 + 38.0, Y0 + 55.0),
                ],
                vec![],
            )
            .unwrap(),
        ],
    };
    let c = adaptive_candidates(&built, &field, &prep).map_err(|e| e.to_string())?;
    let mut closest = f64::INFINITY;
    for w in c.lines.iter().flat_map(|l| &l.wells) {
        ensure(built.boundary.contains(w.point()), || {
            format!("well {} outside the block", w.well_id)
        })?;
        for b in &built.buildings {
            closest = closest.min(b.distance(w.point()));
        }
    }
    ensure(c.well_count() > 0, || "no wells next to buildings".into())?;
    ensure(closest >= 3.0 - 1e-9, || {
        format!("a well is {closest:.6} m from a building")
    })?;

    // both layouts on the 5 m grid so the counts are comparable
    let c = adaptive_candidates(&empty, &PatchyField, &unlimited).map_err(|e| e.to_string())?;
    let all = adaptive_candidates(
        &empty,
        &PatchyField,
        &PrepConfig {
            min_well_rate: Rate::ZERO,
            ..unlimited
        },
    )
    .map_err(|e| e.to_string())?;
    let min = prep.min_well_rate.m3_per_s();
    for w in c.lines.iter().flat_map(|l| &l.wells) {
        ensure(w.limits.q_d >= min && w.limits.q_f >= min, || {
            format!("well at ({:.1}, {:.1}) below 1 l/s", w.x - X0, w.y - Y0)
        })?;
    }
    let dropped = all.well_count().saturating_sub(c.well_count());
    ensure(dropped > 0, || "the filter removed nothing".into())?;
    Ok(format!(
        "50x50 block: 5 m -> {} wells, 7.5 m -> {}; nearest building {closest:.2} m; {dropped} weak wells dropped",
        first.well_count(),
        landed,
    ))
}

// ---------------------------------------------------------------------------
// 6: rotation

fn solve_block(c: &Candidates, scenario: ScenarioConfig) -> Result<f64, String> {
    if c.lines.is_empty() {
        return Ok(0.0);
    }
    let p = BlockProblem::new(c.block_id.clone(), c.lines.clone(), scenario).map_err(|e| e.to_string())?;
    let sol = solve_milp(&build_milp(&p), &Budget::default()).map_err(|e| e.to_string())?;
    Ok(sol.q_block.m3_per_s())
}

fn rotation_invariance() -> Verdict {
    let angle = 30f64.to_radians();
    let block = BlockGeometry {
        block_id: "fixture".into(),
        boundary: Polygon::new(
            vec![
                Point::new(X0 + 0.3, Y0 + 0.7),
                Point::new(X0 + 71.9, Y0 + 2.1),
                Point::new(X0 + 68.4, Y0 + 46.2),
                Point::new(X0 + 1.6, Y0 + 43.3),
            ],
            vec![],
        )
        .unwrap(),
        buildings: vec![Polygon::rect(X0 + 30.0, Y0 + 15.0, X0 + 44.0, Y0 + 27.0).unwrap()],
    };
    let dir = [0.4f64.sin(), 0.4f64.cos()];
    let centre = block.boundary.centroid();
    let rotated = block.rotate_about(centre, angle);
    let rdir = Point::new(dir[0], dir[1]).rotate_about(Point::new(0.0, 0.0), angle);
    let s = sample(1.5e-3, 12.0, 1.2, 2e-3, dir);
    let rs = HydroSample {
        flow_dir: [rdir.x, rdir.y],
        ..s
    };
    let prep = PrepConfig::default();
    let a = adaptive_candidates(&block, &UniformField(s), &prep).map_err(|e| e.to_string())?;
    let b = adaptive_candidates(&rotated, &UniformField(rs), &prep).map_err(|e| e.to_string())?;
    ensure(
        a.spacing == b.spacing && a.well_count() == b.well_count() && a.lines.len() == b.lines.len(),
        || {
            format!(
                "layouts differ: {:?}/{} vs {:?}/{}",
                a.spacing,
                a.well_count(),
                b.spacing,
                b.well_count()
            )
        },
    )?;
    let pa: Vec<Point> = a
        .lines
        .iter()
        .flat_map(|l| l.wells.iter().map(|w| w.point()))
        .collect();
    let pb: Vec<Point> = b
        .lines
        .iter()
        .flat_map(|l| l.wells.iter().map(|w| w.point()))
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..pa.len() {
        for j in i + 1..pa.len() {
            worst = worst.max((pa[i].dist(pa[j]) - pb[i].dist(pb[j])).abs());
        }
    }
    ensure(worst <= 1e-6, || {
        format!("pairwise distance changed by {worst:e} m")
    })?;
    let mut notes = Vec::new();
    for scenario in ScenarioConfig::standard_matrix(10.0) {
        let (qa, qb) = (solve_block(&a, scenario)?, solve_block(&b, scenario)?);
        ensure(rel_diff(qa, qb) < 1e-6, || {
            format!("{}: {qa:e} vs {qb:e}", scenario.tag())
        })?;
        notes.push(format!("{:.2}", qa * 1e3));
    }
    ensure(notes.iter().any(|n| n != "0.00"), || {
        "fixture has no doublets".into()
    })?;
    Ok(format!(
        "{} wells, distances within {worst:.1e} m, optima {} l/s unchanged",
        pa.len(),
        notes.join("/")
    ))
}

// ---------------------------------------------------------------------------
// 7 + 8: command line runs

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_doubletopt"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`doubletopt {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn determinism(root: &Path) -> Verdict {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    cli(&["synth", "--blocks", "100", "--seed", "42", "--out", &s(root)])?;
    let geometry = s(&root.join("city.geojson"));
    let field = s(&root.join("field.csv"));
    let mut outputs = Vec::new();
    let mut times = Vec::new();
    for name in ["run_a", "run_b"] {
        let out = root.join(name);
        let start = Instant::now();
        cli(&[
            "solve",
            "--geometry",
            &geometry,
            "--field",
            &field,
            "--workers",
            "4",
            "--out",
            &s(&out),
        ])?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(300), || {
            format!("{name} took {elapsed:.1?}")
        })?;
        times.push(format!("{elapsed:.1?}"));
        outputs.push(files(&out));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    ensure(names.len() == 3 * 6 + 2, || {
        format!("unexpected file set {names:?}")
    })?;
    ensure(
        names == b.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
        || "file sets differ".into(),
    )?;
    let differing: Vec<&str> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    ensure(differing.is_empty(), || {
        format!("differ: {}", differing.join(", "))
    })?;
    Ok(format!(
        "{} files byte-identical, run times {}",
        names.len(),
        times.join(" and ")
    ))
}

fn report_arithmetic(root: &Path) -> Verdict {
    let out = root.join("run_a");
    ensure(out.join("report.csv").exists(), || {
        "no run output to check".into()
    })?;
    let stdout = cli(&["report", "--out", out.to_str().unwrap()])?;
    let lines: Vec<&str> = stdout.lines().collect();
    ensure(
        lines.len() == 6 && lines.iter().all(|l| l.ends_with(": ok")),
        || stdout.clone(),
    )?;
    let summary = lines[0].split(": ").nth(1).unwrap_or_default().to_string();
    Ok(format!(
        "6 scenarios recomputed from block tables ({summary} for the first)"
    ))
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let oracle = std::cell::RefCell::new(None);
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path().to_path_buf();

    let mut criteria: Vec<(&str, Check)> = vec![
        (
            "oracle equivalence",
            Box::new(|| oracle_equivalence(&mut oracle.borrow_mut())),
        ),
        (
            "constraint audit",
            Box::new(|| constraint_audit(&oracle.borrow())),
        ),
        ("monotonicity", Box::new(monotonicity)),
        ("pumping limit formulas", Box::new(tap_spot_checks)),
        ("candidate layout", Box::new(prep_conformance)),
        ("rotation invariance", Box::new(rotation_invariance)),
        ("determinism", Box::new(|| determinism(&root))),
        ("report arithmetic", Box::new(|| report_arithmetic(&root))),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter_mut().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match verdict {
            Ok(detail) => println!("criterion {} PASS {name} [{took:.1?}]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name} [{took:.1?}]: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
