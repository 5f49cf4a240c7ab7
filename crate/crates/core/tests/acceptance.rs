//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pdm::bounds::{theorem1_bound, theorem2_bound};
use pdm::data::{build_working, read_dataset, SparsePattern, WorkingDataset};
use pdm::driver::{train, train_observed, RunConfig, TrainError};
use pdm::oracle::{gilbert_gamma_d, verify_sandwich, OracleResult};
use pdm::schedule::Presentation;
use pdm::state::{MarginRule, WeightState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;
const EPSILONS: [f64; 5] = [0.75, 0.5, 0.25, 0.1, 0.01];
const ORACLE_TOL: f64 = 1e-11;
const ORACLE_ITERS: u64 = 50_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: &[String], summary: String) -> Outcome {
    if failures.is_empty() {
        Outcome { pass: true, detail: summary }
    } else {
        let mut d = format!("{summary}; {} failure(s): {}", failures.len(), failures[0]);
        if failures.len() > 1 {
            d.push_str(&format!(" (+{} more)", failures.len() - 1));
        }
        Outcome { pass: false, detail: d }
    }
}

fn oracle(ds: &WorkingDataset) -> OracleResult {
    gilbert_gamma_d(ds, ORACLE_TOL, ORACLE_ITERS).expect("oracle converges on separable data")
}

/// Per-run findings for the random-dataset family shared by criteria 1, 2,
/// 4 and 5.
#[derive(Default)]
struct RunChecks {
    sandwich: Vec<String>,
    bounds: Vec<String>,
    identity: Vec<String>,
    estimate: Vec<String>,
    monotone: Vec<String>,
    runs: usize,
    pfm_runs: usize,
    worst_identity: f64,
    monotone_steps: u64,
}

fn random_family(c: &mut RunChecks) {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    for i in 0..100 {
        let m = rng.gen_range(2..=200);
        let dim = rng.gen_range(1..=20);
        let delta = [0.0, 0.1, 1.0][i % 3];
        let ds = common::random_working(&mut rng, m, dim, delta);
        let o = oracle(&ds);
        let g = o.gamma_d;
        let r = ds.r();
        for &eps in &EPSILONS {
            let tag = format!("dataset {i} (m={m}, d={dim}, delta={delta}) eps={eps}");
            let mut cfg = RunConfig::pdm(eps);
            cfg.instrument_eq6 = true;

            // ‖a‖/t must not increase once t ≥ R²/(εγ²)
            let t_mono = r * r / (eps * g * g);
            let mut prev: Option<f64> = None;
            let mut worst_rise: f64 = 0.0;
            let mut steps = 0u64;
            let run = train_observed(&ds, &cfg, true, |ev| {
                let (p, q, n) = (ev.dot_before, ev.sq_norm, ev.norm_sq_before);
                for j in 1..=ev.lambda {
                    let t = (ev.t_before + j) as f64;
                    if t < t_mono {
                        continue;
                    }
                    let jf = j as f64;
                    let nj = if j == ev.lambda { ev.norm_sq_after } else { n + 2.0 * jf * p + jf * jf * q };
                    let ratio = nj.sqrt() / t;
                    if let Some(pr) = prev {
                        worst_rise = worst_rise.max((ratio - pr) / pr);
                    }
                    prev = Some(ratio);
                    steps += 1;
                }
            });
            c.runs += 1;
            c.monotone_steps += steps;
            let run = match run {
                Ok(run) => run,
                Err(e) => {
                    c.sandwich.push(format!("{tag}: {e}"));
                    continue;
                }
            };
            let rep = &run.report;
            if worst_rise > 1e-12 {
                c.monotone.push(format!("{tag}: |a|/t rose by {worst_rise:e} relative"));
            }
            let v = verify_sandwich(rep.gamma_prime_d, Some(rep.after_run_estimate), &o, eps, TOL);
            if !(v.lower_ok && v.upper_ok) {
                c.sandwich.push(format!("{tag}: {}", v.failures.join("; ")));
            }
            if !v.estimate_ok {
                c.estimate.push(format!("{tag}: {}", v.failures.join("; ")));
            }
            let res = rep.eq6_max_residual.unwrap_or(f64::INFINITY);
            c.worst_identity = c.worst_identity.max(res);
            if res > 1e-9 {
                c.identity.push(format!("{tag}: residual {res:e}"));
            }
            let b2 = theorem2_bound(eps, r, g).unwrap();
            if rep.t_c as f64 > b2 {
                c.bounds.push(format!("{tag}: PDM t_c={} > {b2}", rep.t_c));
            }

            // fixed margin aiming at (1-ε)γ_d
            let beta = (1.0 - eps) * g;
            if beta > 0.0 {
                c.pfm_runs += 1;
                match train(&ds, &RunConfig::pfm(beta)) {
                    Ok(p) => {
                        let b1 = theorem1_bound(eps, r, g).unwrap();
                        let t = p.report.t_c as f64;
                        if t > b1 {
                            c.bounds.push(format!("{tag}: PFM t_c={t} > first bound {b1}"));
                        }
                        if t > b2 {
                            c.bounds.push(format!("{tag}: PFM t_c={t} > dynamic bound {b2}"));
                        }
                    }
                    Err(e) => c.bounds.push(format!("{tag}: PFM {e}")),
                }
            }
        }
    }
}

/// Replays single updates on `k` while the condition holds, both in working
/// precision and in double-double. Returns both counts, whether each final
/// state satisfies the condition again, and the exact final state.
fn replay(ds: &WorkingDataset, rule: MarginRule, s: &WeightState, k: usize, cap: u64) -> (u64, u64, bool, ExactReplay) {
    let mut r = s.clone();
    let mut n = 0;
    while n < cap && rule.violates(&r, r.dot(ds, k)) {
        r.single_update(ds, k);
        n += 1;
    }
    let mut e = ExactReplay::from(ds, s);
    let mut ne = 0;
    while ne < cap && e.violates(ds, rule, k) {
        e.update(ds, k);
        ne += 1;
    }
    // every state before the last update violated the condition by
    // construction of the loops; the final ones must not
    let finals_ok = !rule.violates(&r, r.dot(ds, k)) && !e.violates(ds, rule, k);
    (n, ne, finals_ok, e)
}

/// Unevaluated sum `hi + lo` carrying about twice the working precision.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let z = s - self.hi;
        let e = (self.hi - (s - z)) + (o.hi - z);
        Dd::norm(s, e + self.lo + o.lo)
    }

    fn mul_f(self, b: f64) -> Dd {
        let p = self.hi * b;
        Dd::norm(p, self.hi.mul_add(b, -p) + self.lo * b)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        Dd::norm(p, self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi)
    }

    fn f(self) -> f64 {
        self.hi + self.lo
    }
}

/// Single updates replayed in double-double arithmetic from a float state,
/// so that the reference does not accumulate one rounding per step.
struct ExactReplay {
    w: Vec<Dd>,
    counts: Vec<u64>,
    norm_sq: Dd,
    t: u64,
    delta_sq: f64,
}

impl ExactReplay {
    fn from(ds: &WorkingDataset, s: &WeightState) -> Self {
        ExactReplay {
            w: s.explicit_weights().iter().map(|&x| Dd::new(x)).collect(),
            counts: s.counts().to_vec(),
            norm_sq: Dd::new(s.norm_sq()),
            t: s.t(),
            delta_sq: ds.delta() * ds.delta(),
        }
    }

    fn dot(&self, ds: &WorkingDataset, j: usize) -> Dd {
        let (idx, vals) = ds.row(j);
        let mut acc = Dd::new(self.counts[j] as f64).mul_f(self.delta_sq);
        for (&i, &v) in idx.iter().zip(vals) {
            acc = acc.add(self.w[i as usize].mul_f(v));
        }
        acc
    }

    fn sq_norm(&self, ds: &WorkingDataset, k: usize) -> Dd {
        let (_, vals) = ds.row(k);
        vals.iter().fold(Dd::new(self.delta_sq), |acc, &v| acc.add(Dd::new(v).mul_f(v)))
    }

    fn violates(&self, ds: &WorkingDataset, rule: MarginRule, k: usize) -> bool {
        let p = self.dot(ds, k);
        match rule {
            MarginRule::Dynamic { epsilon } => {
                if self.t == 0 {
                    p.f() <= 0.0
                } else {
                    // p ≤ (1-ε) N / t
                    p.mul_f(self.t as f64).add(self.norm_sq.mul_f(-(1.0 - epsilon))).f() <= 0.0
                }
            }
            MarginRule::Fixed { beta } => {
                // p ≤ β √N
                p.f() < 0.0 || p.mul(p).add(self.norm_sq.mul_f(-(beta * beta))).f() <= 0.0
            }
        }
    }

    fn update(&mut self, ds: &WorkingDataset, k: usize) {
        let p = self.dot(ds, k);
        let q = self.sq_norm(ds, k);
        self.norm_sq = self.norm_sq.add(p.mul_f(2.0)).add(q);
        let (idx, vals) = ds.row(k);
        for (&i, &v) in idx.iter().zip(vals) {
            self.w[i as usize] = self.w[i as usize].add(Dd::new(v));
        }
        self.counts[k] += 1;
        self.t += 1;
    }
}

/// The most violating pattern when `greedy`, otherwise a random violator.
fn pick(ds: &WorkingDataset, s: &WeightState, viol: &[usize], greedy: bool, rng: &mut ChaCha8Rng) -> usize {
    if greedy {
        let margin = |k: usize| s.dot(ds, k) / ds.sq_norm(k).sqrt();
        *viol.iter().min_by(|&&a, &&b| margin(a).total_cmp(&margin(b))).unwrap()
    } else {
        viol[rng.gen_range(0..viol.len())]
    }
}

fn criterion3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31_337);
    let mut failures = Vec::new();
    let mut checked = 0u64;
    let mut max_lambda = 0u64;
    let mut multi = 0u64;
    while checked < 10_000 {
        let m = rng.gen_range(2..=40);
        let dim = rng.gen_range(1..=8);
        let delta = [0.0, 0.1, 1.0][rng.gen_range(0..3)];
        // with the extension, pattern norms spread over three decades, so
        // that short patterns need many repeats to catch up with the weight
        // vector (rescaling could break separability without it)
        let ps: Vec<SparsePattern> = common::random_patterns(&mut rng, m, dim, if delta == 0.0 { 0.1 } else { 0.0 }, 0.0)
            .into_iter()
            .map(|p| {
                let f = if delta == 0.0 { 1.0 } else { 10f64.powf(rng.gen_range(-1.0..2.0)) };
                let feats = p.indices().iter().zip(p.values()).map(|(&i, &v)| (i, f * v)).collect();
                SparsePattern::new(feats, p.label()).unwrap()
            })
            .collect();
        let ds = build_working(&ps, delta, 1.0, 1.0).unwrap();
        let g = oracle(&ds).gamma_d;
        for _ in 0..50 {
            let rule = if rng.gen_bool(0.5) {
                MarginRule::Dynamic { epsilon: rng.gen_range(0.005..1.0) }
            } else {
                MarginRule::Fixed { beta: rng.gen_range(0.05..0.995) * g }
            };
            // a reachable state: random violating patterns, multiple updates
            // mixed in
            let mut s = WeightState::new(&ds);
            let steps = rng.gen_range(1..2000);
            let greedy = rng.gen_bool(0.5);
            for _ in 0..steps {
                let viol: Vec<usize> = (0..ds.len()).filter(|&k| rule.violates(&s, s.dot(&ds, k))).collect();
                // keep replays affordable
                if viol.is_empty() || s.t() > 200_000 {
                    break;
                }
                let k = pick(&ds, &s, &viol, greedy, &mut rng);
                let lam = if s.t() > 0 && rng.gen_bool(0.7) {
                    rule.update_count(&s, &ds, k, s.dot(&ds, k)).unwrap()
                } else {
                    1
                };
                s.apply_multiple(&ds, k, lam);
            }
            if s.t() == 0 {
                continue;
            }
            let viol: Vec<usize> = (0..ds.len()).filter(|&k| rule.violates(&s, s.dot(&ds, k))).collect();
            if viol.is_empty() {
                continue;
            }
            let k = pick(&ds, &s, &viol, greedy, &mut rng);
            checked += 1;
            let lambda = match rule.update_count(&s, &ds, k, s.dot(&ds, k)) {
                Ok(l) => l,
                Err(e) => {
                    failures.push(format!("{rule:?} t={}: {e}", s.t()));
                    continue;
                }
            };
            max_lambda = max_lambda.max(lambda);
            if lambda > 1 {
                multi += 1;
            }
            let (n, ne, finals_ok, e) = replay(&ds, rule, &s, k, lambda + 1000);
            if n != lambda || ne != lambda || !finals_ok {
                failures.push(format!("{rule:?} t={}: closed form {lambda}, replay {n}, exact replay {ne}", s.t()));
                continue;
            }
            let mut a = s.clone();
            a.apply_multiple(&ds, k, lambda);
            let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
            if rel(a.norm_sq(), e.norm_sq.f()) > 1e-12 {
                failures.push(format!("norm_sq {} vs replay {}", a.norm_sq(), e.norm_sq.f()));
            }
            // inner products of the float state, evaluated in double-double
            // like the reference, so only the states are compared
            let exact_a = ExactReplay::from(&ds, &a);
            for j in 0..ds.len() {
                let (x, y) = (exact_a.dot(&ds, j).f(), e.dot(&ds, j).f());
                if (x - y).abs() > 1e-12 * x.abs().max(y.abs()) {
                    let cond = a.norm_sq().sqrt() * exact_a.sq_norm(&ds, j).f().sqrt() / y.abs();
                    let ulps = a
                        .explicit_weights()
                        .iter()
                        .zip(&e.w)
                        .map(|(&f, d)| (f - d.f()).abs() / (f.abs() * f64::EPSILON).max(f64::MIN_POSITIVE))
                        .fold(0.0, f64::max);
                    failures.push(format!("a.y_{j} {x} vs replay {y} (condition {cond:.1e}, weights within {ulps:.2} ulp)"));
                    break;
                }
            }
        }
    }
    outcome(
        &failures,
        format!("{checked} states, {multi} with lambda > 1, max lambda {max_lambda}"),
    )
}

fn criterion6(bin: &Path) -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/adult_a9a.txt");
    let Ok(f) = std::fs::File::open(&path) else {
        return Outcome {
            pass: false,
            detail: format!("{} not found", path.display()),
        };
    };
    let _ = bin;
    let ps = read_dataset(std::io::BufReader::new(f), None).expect("adult parses");
    let ds = build_working(&ps, 1.0, 1.0, 1.0).unwrap();
    let plain = train(&ds, &RunConfig::pdm(0.01)).expect("pdm converges").report;
    let succ = train(&ds, &RunConfig::pdm_succ(0.01, 8.0)).expect("pdm-succ converges").report;
    let dev_plain = plain.gamma_prime_d / 84.57e-4 - 1.0;
    let dev_succ = succ.gamma_prime_d / 84.46e-4 - 1.0;
    let ratio = plain.t_c as f64 / succ.t_c as f64;
    let mut failures = Vec::new();
    if dev_plain.abs() > 0.02 {
        failures.push(format!("pdm margin off by {:.2}%", 100.0 * dev_plain));
    }
    if dev_succ.abs() > 0.02 {
        failures.push(format!("pdm-succ margin off by {:.2}%", 100.0 * dev_succ));
    }
    if ratio < 2.0 {
        failures.push(format!("update ratio {ratio:.2} < 2"));
    }
    outcome(
        &failures,
        format!(
            "m={} d={}; pdm gamma'={:.4}e-4 ({:+.2}%) t_c={:.4}e6; pdm-succ gamma'={:.4}e-4 ({:+.2}%) t_c={:.4}e6; ratio {ratio:.2}",
            ds.len(),
            ds.feature_dim(),
            plain.gamma_prime_d * 1e4,
            100.0 * dev_plain,
            plain.t_c as f64 / 1e6,
            succ.gamma_prime_d * 1e4,
            100.0 * dev_succ,
            succ.t_c as f64 / 1e6,
        ),
    )
}

fn criterion7(bin: &Path) -> Outcome {
    let toy = "+1 1:2 2:1\n+1 1:1 2:3\n+1 1:0.5 2:2\n-1 1:-1 2:-1\n-1 1:-2 2:0.5\n-1 1:-0.5 2:-2\n";
    let ps = pdm::data::parse_dataset(toy).unwrap();
    let ds = build_working(&ps, 0.0, 1.0, 1.0).unwrap();
    let g = oracle(&ds).gamma_d;
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.txt");
    std::fs::write(&data, toy).unwrap();
    let cli = |beta: f64| {
        let beta = format!("{beta:e}");
        Command::new(bin)
            .args(["train", "--data", data.to_str().unwrap(), "--algo", "pfm", "--delta", "0", "--beta", &beta, "--max-epochs", "1000"])
            .output()
            .unwrap()
    };
    let mut failures = Vec::new();

    let above = cli(1.01 * g);
    let above_code = above.status.code();
    if above_code != Some(pdm::cli::EXIT_NOT_CONVERGED) {
        failures.push(format!("beta=1.01 gamma_d exited {above_code:?}"));
    }
    // the epoch guard itself, with single updates so that no multiple update
    // can outgrow the step limit first
    let mut cfg = RunConfig::pfm(1.01 * g).with_max_epochs(1000);
    cfg.multiple_updates = false;
    let guard = match train(&ds, &cfg) {
        Err(TrainError::NotConverged { epochs, updates }) if epochs == 1000 => format!("guard at {epochs} epochs ({updates} updates)"),
        other => {
            failures.push(format!("single-update run: {:?}", other.map(|r| r.report.t_c)));
            String::new()
        }
    };
    let below = cli(0.99 * g);
    if below.status.code() != Some(pdm::cli::EXIT_OK) {
        failures.push(format!("beta=0.99 gamma_d exited {:?}", below.status.code()));
    }
    let below_report: serde_json::Map<String, serde_json::Value> =
        serde_json::from_slice(&below.stdout).unwrap_or_default();
    outcome(
        &failures,
        format!(
            "gamma_d={g:.6}; 1.01: exit {:?} ({}), {guard}; 0.99: exit {:?}, t_c={}",
            above_code,
            String::from_utf8_lossy(&above.stderr).trim(),
            below.status.code(),
            below_report.get("t_c").cloned().unwrap_or_default()
        ),
    )
}

fn criterion8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8_888);
    let mut failures = Vec::new();
    let mut differ = 0;
    for i in 0..20 {
        let m = rng.gen_range(5..=60);
        let dim = rng.gen_range(1..=6);
        let delta = [0.0, 0.1, 1.0][i % 3];
        let ds = common::random_working(&mut rng, m, dim, delta);
        let o = oracle(&ds);
        let eps = [0.5, 0.1, 0.01][i % 3];
        let active = RunConfig::pdm(eps);
        let mut naive = RunConfig::pdm(eps).with_presentation(Presentation::Cyclic { seed: None });
        naive.multiple_updates = false;
        let mut margins = Vec::new();
        for (name, cfg) in [("active-set", active), ("cyclic", naive)] {
            match train(&ds, &cfg) {
                Ok(r) => {
                    let v = verify_sandwich(r.report.gamma_prime_d, Some(r.report.after_run_estimate), &o, eps, TOL);
                    if !v.pass {
                        failures.push(format!("toy {i} {name}: {}", v.failures.join("; ")));
                    }
                    margins.push(r.report.gamma_prime_d);
                }
                Err(e) => failures.push(format!("toy {i} {name}: {e}")),
            }
        }
        if margins.len() == 2 && margins[0] != margins[1] {
            differ += 1;
        }
    }
    outcome(&failures, format!("20 toy sets; achieved margins differ on {differ}"))
}

fn main() {
    let bin = Path::new(env!("CARGO_BIN_EXE_pdm"));
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();

    let start = Instant::now();
    let mut c = RunChecks::default();
    random_family(&mut c);
    let family_secs = start.elapsed().as_secs_f64();
    let fam = format!("{} PDM runs over 100 datasets x {} epsilons", c.runs, EPSILONS.len());
    results.push((1, "oracle sandwich", outcome(&c.sandwich, fam.clone()), family_secs));
    results.push((
        2,
        "update-count bounds",
        outcome(&c.bounds, format!("{fam}, {} PFM runs", c.pfm_runs)),
        0.0,
    ));

    let t = Instant::now();
    results.push((3, "multiple-update equivalence", criterion3(), t.elapsed().as_secs_f64()));

    let mut id_fail = c.identity.clone();
    id_fail.extend(c.estimate.iter().cloned());
    results.push((
        4,
        "ratio identity and after-run estimate",
        outcome(&id_fail, format!("worst identity residual {:e}", c.worst_identity)),
        0.0,
    ));
    results.push((
        5,
        "monotone decrease of |a|/t",
        outcome(&c.monotone, format!("{} steps checked past the threshold", c.monotone_steps)),
        0.0,
    ));

    let t = Instant::now();
    results.push((6, "Adult margins and update counts", criterion6(bin), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    results.push((7, "non-convergence detection", criterion7(bin), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    results.push((8, "presentation neutrality", criterion8(), t.elapsed().as_secs_f64()));

    let mut all = true;
    for (n, name, o, secs) in &results {
        all &= o.pass;
        let timing = if *secs > 0.0 { format!(" [{secs:.1}s]") } else { String::new() };
        println!("{} {n}. {name}: {}{timing}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if !all {
        std::process::exit(1);
    }
}
