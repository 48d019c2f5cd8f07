//! Multiscale normal-frame cascade and its exponent ledger.
//!
//! A schedule fixes per-level exponents `(γ_i, θ_i, η_i)` shrinking by a
//! factor κ and radii `r_{i+1} = r_i^{1+γ_i}`. At each level the moment
//! vector b is compared with `r_i^{1+2θ_i}`: a small b ends the run with a
//! spectral plane (Case 1), a large b contributes a normal direction
//! `τ_i = b/‖b‖` (Case 2).

use serde::{Deserialize, Serialize};

use crate::doubling::density_ratio;
use crate::error::{Error, Result};
use crate::fit::radius_grid;
use crate::flatness::{beta_for_plane, beta_inf};
use crate::geometry::{dot, AffinePlane};
use crate::measure::{Ball, WeightedCloud};
use crate::moments::{moment_form, spectrum_report, SpectrumReport};

/// κ must stay strictly below this.
pub const KAPPA_LIMIT: f64 = 1.0 / 16.0;
/// In-ball samples required at every cascade radius.
pub const MIN_LEVEL_SAMPLES: usize = 500;
/// Default projection constant a used in the eigenvalue bookkeeping.
pub const DEFAULT_A: f64 = 0.05;
/// Relative tolerance on the density ratio for the default starting radius.
pub const DENSITY_TOLERANCE: f64 = 0.1;
/// Grid size of the first stage of [`kappa_search`].
pub const KAPPA_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelExponents {
    pub gamma: f64,
    pub theta: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSchedule {
    pub kappa: f64,
    pub alpha: f64,
    pub k: usize,
    pub levels: Vec<LevelExponents>,
}

/// Builds the geometric schedule with `γ_1 = κ²(1−κ)`,
/// `θ_1 = γ_1/(2(1+4κ))`, `η_1 = 3θ_1/2`.
pub fn make_schedule(kappa: f64, alpha: f64, k: usize) -> Result<ExponentSchedule> {
    if !(kappa > 0.0 && kappa < KAPPA_LIMIT) {
        return Err(Error::KappaTooLarge(kappa));
    }
    let bound = 4.0 * kappa * kappa * (1.0 - kappa);
    if !(bound < alpha) {
        return Err(Error::AlphaTooSmall { bound, alpha });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let gamma = kappa * kappa * (1.0 - kappa);
    let theta = gamma / (2.0 * (1.0 + 4.0 * kappa));
    let first = LevelExponents {
        gamma,
        theta,
        eta: 1.5 * theta,
    };
    Ok(ExponentSchedule::from_levels(kappa, alpha, geometric(first, kappa, k)))
}

fn geometric(first: LevelExponents, kappa: f64, count: usize) -> Vec<LevelExponents> {
    let mut out = Vec::with_capacity(count);
    let mut cur = first;
    for _ in 0..count {
        out.push(cur);
        cur = LevelExponents {
            gamma: cur.gamma * kappa,
            theta: cur.theta * kappa,
            eta: cur.eta * kappa,
        };
    }
    out
}

impl ExponentSchedule {
    /// Unchecked constructor; run [`check_schedule`] on the result.
    pub fn from_levels(kappa: f64, alpha: f64, levels: Vec<LevelExponents>) -> Self {
        Self {
            kappa,
            alpha,
            k: levels.len(),
            levels,
        }
    }

    /// Exponents at 1-based level `i`.
    pub fn level(&self, i: usize) -> LevelExponents {
        self.levels[i - 1]
    }

    /// θ at 1-based level `j`, with `θ_{k+1} = κθ_k`.
    pub fn theta_at(&self, j: usize) -> f64 {
        if j <= self.k {
            self.levels[j - 1].theta
        } else {
            self.kappa * self.levels[self.k - 1].theta
        }
    }

    /// `∏_{l=from}^{to} (1+γ_l)`, 1-based and inclusive; empty products are 1.
    pub fn product(&self, from: usize, to: usize) -> f64 {
        1.0 + self.product_excess(from, to)
    }

    /// `∏_{l=from}^{to} (1+γ_l) − 1`, computed without cancellation.
    pub fn product_excess(&self, from: usize, to: usize) -> f64 {
        (from..=to).map(|l| self.levels[l - 1].gamma.ln_1p()).sum::<f64>().exp_m1()
    }

    /// `r_1, …, r_{k+1}` from `r_1`, built in log space.
    pub fn radii(&self, r1: f64) -> Vec<f64> {
        let mut log_r = r1.ln();
        let mut out = vec![r1];
        for l in &self.levels {
            log_r *= 1.0 + l.gamma;
            out.push(log_r.exp());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Evaluated with exact products.
    Exact,
    /// Evaluated after replacing products by `1 + x + x²`, `x = γ_i/(1−κ)`.
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub route: Route,
    /// 1-based level i, when the inequality is per level.
    pub level: Option<usize>,
    /// Second level j for the frame-orthogonality family.
    pub other: Option<usize>,
    pub margin: f64,
    /// The margin must exceed this (0 for plain positivity).
    pub required: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub kappa: f64,
    pub alpha: f64,
    pub k: usize,
    pub entries: Vec<Inequality>,
    pub all_hold: bool,
}

impl Ledger {
    pub fn failures(&self) -> Vec<&Inequality> {
        self.entries.iter().filter(|e| !e.holds).collect()
    }

    pub fn find(&self, name: &str, level: Option<usize>, other: Option<usize>) -> Option<&Inequality> {
        self.entries
            .iter()
            .find(|e| e.name == name && e.level == level && e.other == other)
    }

    pub fn min_margin(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.name == name)
            .map(|e| e.margin)
            .reduce(f64::min)
    }
}

struct Builder(Vec<Inequality>);

impl Builder {
    fn push(&mut self, name: &str, route: Route, level: Option<usize>, other: Option<usize>, margin: f64, required: f64) {
        self.0.push(Inequality {
            name: name.into(),
            route,
            level,
            other,
            margin,
            required,
            holds: margin > required,
        });
    }
}

/// Evaluates every constraint on the schedule, exactly and along the
/// product-bound route. Failures are reported, never raised.
pub fn check_schedule(s: &ExponentSchedule) -> Ledger {
    use Route::{Exact, Reduced};
    let kappa = s.kappa;
    let alpha = s.alpha;
    let k = s.k;
    let mut b = Builder(Vec::new());
    b.push("kappa_range", Exact, None, None, (KAPPA_LIMIT - kappa).min(kappa), 0.0);
    b.push("alpha_room", Exact, None, None, alpha - 4.0 * kappa * kappa * (1.0 - kappa), 0.0);
    for i in 1..=k {
        let LevelExponents { gamma, theta, eta } = s.level(i);
        let lv = Some(i);
        b.push("theta_vs_alpha", Exact, lv, None, (3.0 * theta).min(alpha - 3.0 * theta), 0.0);
        b.push("gamma_vs_alpha", Exact, lv, None, (4.0 * gamma).min(alpha - 4.0 * gamma), 0.0);
        b.push("eta_vs_theta", Exact, lv, None, eta.min(2.0 * theta - eta), 0.0);
        b.push("eta_vs_alpha", Exact, lv, None, alpha - 2.0 * eta, 0.0);
        b.push("gamma_vs_theta", Exact, lv, None, gamma - 2.0 * theta, 0.0);
        for j in i + 1..=k + 1 {
            let tj = s.theta_at(j);
            let pe = s.product_excess(i, j - 1);
            let m = 2.0 * gamma - 2.0 * theta - 2.0 * tj - (1.0 + 2.0 * tj) * pe;
            b.push("frame_orthogonality", Exact, lv, Some(j), m, 0.0);
        }
        let p = s.product_excess(i, k);
        b.push("frame_bound", Exact, lv, None, 2.0 * gamma - 2.0 * theta - p, 0.0);
        b.push("case1_gamma", Exact, lv, None, 1.5 * gamma - p, 0.0);
        b.push("case1_theta", Exact, lv, None, gamma + theta / 2.0 - p, 0.0);
        b.push("case1_eta", Exact, lv, None, gamma / 2.0 + eta - p, 0.0);
        b.push("case1_mixed", Exact, lv, None, (gamma + theta + eta) / 2.0 - p, 0.0);
        b.push("case1_cross", Exact, lv, None, gamma / 2.0 + 2.0 * theta - eta / 2.0 - p, 0.0);

        let x = gamma / (1.0 - kappa);
        let tail = x + x * x;
        b.push("product_bound", Exact, lv, None, tail - p, 0.0);
        b.push(
            "frame_orthogonality",
            Reduced,
            lv,
            None,
            2.0 * gamma - 2.0 * theta - 2.0 * kappa * theta - (1.0 + 2.0 * kappa * theta) * tail,
            0.0,
        );
        b.push("case1_eta", Reduced, lv, None, gamma / 2.0 + eta - tail, 0.0);
        b.push("case1_mixed", Reduced, lv, None, (gamma + theta + eta) / 2.0 - tail, 0.0);
        b.push("case1_cross", Reduced, lv, None, gamma / 2.0 + 2.0 * theta - eta / 2.0 - tail, 0.0);
    }
    let first = s.level(1);
    let x = first.gamma / (1.0 - kappa);
    let tail = x + x * x;
    b.push(
        "frame_first_level",
        Reduced,
        Some(1),
        None,
        2.0 * first.gamma - 2.0 * first.theta * (1.0 + kappa) - (1.0 + 2.0 * kappa * first.theta) * tail,
        kappa.powi(3) / (1.0 + 4.0 * kappa),
    );
    b.push(
        "case1_first_level",
        Reduced,
        Some(1),
        None,
        first.gamma / 2.0 + 1.5 * first.theta - tail,
        kappa * kappa / (32.0 * (1.0 + 4.0 * kappa)),
    );
    b.push("total_product", Exact, None, None, kappa + kappa * kappa - s.product_excess(1, k), 0.0);
    let entries = b.0;
    let all_hold = entries.iter().all(|e| e.holds);
    Ledger {
        kappa,
        alpha,
        k,
        entries,
        all_hold,
    }
}

/// `κ³/((1+4κ)(1+κ+κ²))`, the decay exponent of β in the terminal scale.
pub fn predicted_exponent(s: &ExponentSchedule) -> Result<f64> {
    let ledger = check_schedule(s);
    if !ledger.all_hold {
        return Err(ledger_error(&ledger));
    }
    Ok(decay_exponent(s.kappa))
}

/// `κ³/((1+4κ)(1+κ+κ²))` without the ledger check.
pub fn decay_exponent(kappa: f64) -> f64 {
    kappa.powi(3) / ((1.0 + 4.0 * kappa) * (1.0 + kappa + kappa * kappa))
}

fn ledger_error(ledger: &Ledger) -> Error {
    let names: Vec<String> = ledger
        .failures()
        .iter()
        .map(|e| {
            let route = match e.route {
                Route::Exact => "",
                Route::Reduced => " (reduced)",
            };
            match (e.level, e.other) {
                (Some(i), Some(j)) => format!("{}[{i},{j}]{route}", e.name),
                (Some(i), None) => format!("{}[{i}]{route}", e.name),
                _ => format!("{}{route}", e.name),
            }
        })
        .collect();
    Error::LedgerFailed(names.join(", "))
}

/// `t = r^{∏(1+γ_l)}/4`.
pub fn terminal_scale(s: &ExponentSchedule, r1: f64) -> f64 {
    (r1.ln() * s.product(1, s.k)).exp() / 4.0
}

/// Constants entering the predicted bounds. The true ones are existential,
/// so bounds are reported up to these factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c: f64,
    pub c_k: f64,
    pub a: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c: 1.0,
            c_k: 1.0,
            a: DEFAULT_A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    pub coefficient: f64,
    pub exponent: f64,
    pub value: f64,
}

fn term(label: &str, coefficient: f64, r: f64, exponent: f64) -> Term {
    Term {
        label: label.into(),
        coefficient,
        exponent,
        value: coefficient * r.powf(exponent),
    }
}

fn total(terms: &[Term]) -> f64 {
    terms.iter().map(|t| t.value).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBreakdown {
    pub radius: f64,
    /// Residual bound of the rescaled quadratic identity.
    pub eps0: f64,
    pub eps0_terms: Vec<Term>,
    /// Bound on `|Q̃|` when b is small.
    pub eps1: f64,
    /// Eigenvalue bound `n a⁻² ε₁`.
    pub eps2: f64,
    /// Residual bound after diagonalizing Q.
    pub eps3: f64,
    pub eps4: f64,
    pub eps4_terms: Vec<Term>,
    /// `12 √ε₄`, the β bound one level down.
    pub eps5: f64,
}

/// Term-by-term evaluation of the ε chain at radius `r`.
pub fn epsilon_terms(r: f64, level: LevelExponents, alpha: f64, n: usize, consts: &BoundConstants) -> EpsilonBreakdown {
    let LevelExponents { gamma, theta, eta } = level;
    let c = consts.c;
    let eps0_terms = vec![
        term("r^gamma", c, r, gamma),
        term("c_k r^(alpha-2gamma)", c * consts.c_k, r, alpha - 2.0 * gamma),
    ];
    let eps0 = total(&eps0_terms);
    let eps1 = r.powf(2.0 * theta - gamma) + eps0;
    let eps2 = n as f64 / (consts.a * consts.a) * eps1;
    let eps3 = eps0 + c * r.powf(theta);
    let eps4_terms = vec![
        term("r^gamma", c, r, gamma),
        term("r^theta", c, r, theta),
        term("r^(2eta-gamma)", c, r, 2.0 * eta - gamma),
        term("r^(theta+eta-gamma)", c, r, theta + eta - gamma),
        term("r^(4theta-eta-gamma)", c, r, 4.0 * theta - eta - gamma),
    ];
    let eps4 = total(&eps4_terms);
    EpsilonBreakdown {
        radius: r,
        eps0,
        eps0_terms,
        eps1,
        eps2,
        eps3,
        eps4,
        eps4_terms,
        eps5: 12.0 * eps4.sqrt(),
    }
}

/// `C r_j^{−1−2θ_j} r_i^{1+2γ_i−2θ_i}` for 1-based `i < j`.
pub fn orthogonality_bound(s: &ExponentSchedule, radii: &[f64], i: usize, j: usize, c: f64) -> f64 {
    let li = s.level(i);
    c * radii[j - 1].powf(-1.0 - 2.0 * s.theta_at(j)) * radii[i - 1].powf(1.0 + 2.0 * li.gamma - 2.0 * li.theta)
}

/// `C r_{k+1}^{−1} max_i r_i^{1+2γ_i−2θ_i}`.
pub fn frame_bound(s: &ExponentSchedule, radii: &[f64], c: f64) -> f64 {
    let worst = (1..=s.k)
        .map(|i| {
            let l = s.level(i);
            radii[i - 1].powf(1.0 + 2.0 * l.gamma - 2.0 * l.theta)
        })
        .fold(0.0, f64::max);
    c * worst / radii[s.k]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// `‖b‖ ≤ r^{1+2θ}`.
    Small,
    /// `‖b‖ > r^{1+2θ}`.
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub radius: f64,
    pub count: usize,
    pub b_norm: f64,
    pub threshold: f64,
    pub case: CaseKind,
    pub tau: Option<Vec<f64>>,
    pub spectrum: SpectrumReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBound {
    pub i: usize,
    pub j: usize,
    pub inner: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// b was small at `level`; the plane orthogonal to the low eigenvectors of Q.
    SmallMoment {
        level: usize,
        beta_radius: f64,
        /// Optimized β at `r_{level+1}/4`.
        beta: f64,
        /// β of the spectral plane at the same radius.
        beta_spectral: f64,
        plane: AffinePlane,
        epsilon: EpsilonBreakdown,
        /// `(r_{i+1}/r_{k+1}) ε₅`.
        bound: f64,
    },
    /// b was large at every level.
    NormalFrame {
        frame: Vec<Vec<f64>>,
        gram: Vec<Vec<f64>>,
        max_off_diagonal: f64,
        accepted: bool,
        pairs: Vec<PairBound>,
        beta_radius: f64,
        beta: Option<f64>,
        plane: Option<AffinePlane>,
        bound: f64,
    },
    /// Small b at `level` but Q has no usable normal/tangent split.
    Refused { level: usize, split_margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    pub center: Vec<f64>,
    pub r1: f64,
    pub schedule: ExponentSchedule,
    pub radii: Vec<f64>,
    pub constants: BoundConstants,
    pub levels: Vec<LevelRecord>,
    pub outcome: Outcome,
    /// `None` when the schedule ledger has failures.
    pub predicted_exponent: Option<f64>,
    pub terminal_scale: f64,
    pub non_flat: bool,
}

pub fn run_cascade(cloud: &WeightedCloud, x0: &[f64], r1: f64, s: &ExponentSchedule) -> Result<CascadeResult> {
    run_cascade_with(cloud, x0, r1, s, &BoundConstants::default())
}

pub fn run_cascade_with(
    cloud: &WeightedCloud,
    x0: &[f64],
    r1: f64,
    s: &ExponentSchedule,
    consts: &BoundConstants,
) -> Result<CascadeResult> {
    let exponent = predicted_exponent(s).ok();
    let k = cloud.dim() - cloud.n();
    if s.k != k {
        return Err(Error::InvalidParameter(format!(
            "schedule has {} levels but the cloud has codimension {k}",
            s.k
        )));
    }
    if !(r1 > 0.0 && r1 < 1.0) {
        return Err(Error::InvalidParameter(format!("r1 must lie in (0, 1) (got {r1})")));
    }
    let radii = s.radii(r1);
    let mut levels = Vec::new();
    let mut outcome = None;
    for i in 1..=k {
        let r = radii[i - 1];
        let count = cloud.ball_count(&Ball::new(x0.to_vec(), r)?);
        if count < MIN_LEVEL_SAMPLES {
            return Err(Error::LevelResolution {
                level: i,
                radius: r,
                count,
                required: MIN_LEVEL_SAMPLES,
            });
        }
        let pair = moment_form(cloud, x0, r)?;
        let spectrum = spectrum_report(&pair, None);
        let lv = s.level(i);
        let threshold = r.powf(1.0 + 2.0 * lv.theta);
        let b_norm = pair.b_norm();
        if b_norm <= threshold {
            levels.push(LevelRecord {
                level: i,
                radius: r,
                count,
                b_norm,
                threshold,
                case: CaseKind::Small,
                tau: None,
                spectrum: spectrum.clone(),
            });
            if !spectrum.split_ok() {
                outcome = Some(Outcome::Refused {
                    level: i,
                    split_margin: spectrum.split_margin,
                });
                break;
            }
            let normals = pair.q.eigenvectors()[..k].to_vec();
            let plane = AffinePlane::from_normals(x0.to_vec(), &normals)?;
            let beta_radius = radii[i] / 4.0;
            let beta = beta_inf(cloud, x0, beta_radius)?.value;
            let beta_spectral = beta_for_plane(cloud, x0, beta_radius, &plane)?;
            let epsilon = epsilon_terms(r, lv, s.alpha, cloud.n(), consts);
            let bound = radii[i] / radii[k] * epsilon.eps5;
            outcome = Some(Outcome::SmallMoment {
                level: i,
                beta_radius,
                beta,
                beta_spectral,
                plane,
                epsilon,
                bound,
            });
            break;
        }
        let tau: Vec<f64> = pair.b.iter().map(|v| v / b_norm).collect();
        levels.push(LevelRecord {
            level: i,
            radius: r,
            count,
            b_norm,
            threshold,
            case: CaseKind::Large,
            tau: Some(tau),
            spectrum,
        });
    }
    let outcome = match outcome {
        Some(o) => o,
        None => normal_frame(cloud, x0, s, &radii, &levels, consts)?,
    };
    let non_flat = matches!(outcome, Outcome::Refused { .. })
        || matches!(outcome, Outcome::NormalFrame { accepted: false, .. });
    Ok(CascadeResult {
        center: x0.to_vec(),
        r1,
        schedule: s.clone(),
        terminal_scale: terminal_scale(s, r1),
        radii,
        constants: *consts,
        levels,
        outcome,
        predicted_exponent: exponent,
        non_flat,
    })
}

fn normal_frame(
    cloud: &WeightedCloud,
    x0: &[f64],
    s: &ExponentSchedule,
    radii: &[f64],
    levels: &[LevelRecord],
    consts: &BoundConstants,
) -> Result<Outcome> {
    let k = s.k;
    let frame: Vec<Vec<f64>> = levels.iter().filter_map(|l| l.tau.clone()).collect();
    let gram: Vec<Vec<f64>> = frame.iter().map(|a| frame.iter().map(|b| dot(a, b)).collect()).collect();
    let mut pairs = Vec::new();
    let mut max_off_diagonal = 0.0_f64;
    for i in 1..=k {
        for j in i + 1..=k {
            let inner = gram[i - 1][j - 1];
            max_off_diagonal = max_off_diagonal.max(inner.abs());
            pairs.push(PairBound {
                i,
                j,
                inner,
                bound: orthogonality_bound(s, radii, i, j, consts.c),
            });
        }
    }
    let accepted = max_off_diagonal < 1.0 / (2.0 * k as f64);
    let beta_radius = radii[k] / 4.0;
    let (beta, plane) = if accepted {
        let plane = AffinePlane::from_normals(x0.to_vec(), &frame)?;
        (Some(beta_for_plane(cloud, x0, beta_radius, &plane)?), Some(plane))
    } else {
        (None, None)
    };
    Ok(Outcome::NormalFrame {
        frame,
        gram,
        max_off_diagonal,
        accepted,
        pairs,
        beta_radius,
        beta,
        plane,
        bound: frame_bound(s, radii, consts.c),
    })
}

/// Largest grid radius in `[r_min, r_max]` whose density ratio is within
/// [`DENSITY_TOLERANCE`] of 1, halved.
pub fn default_r1(cloud: &WeightedCloud, x0: &[f64], r_max: f64, r_min: f64) -> Result<f64> {
    for r in radius_grid(r_max, r_min) {
        if (density_ratio(cloud, x0, r)? - 1.0).abs() <= DENSITY_TOLERANCE {
            return Ok(r / 2.0);
        }
    }
    Err(Error::ResolutionExhausted {
        radius: r_min,
        count: 0,
        required: MIN_LEVEL_SAMPLES,
    })
}

fn feasible_exponent(kappa: f64, alpha: f64, k: usize) -> Option<f64> {
    let s = make_schedule(kappa, alpha, k).ok()?;
    predicted_exponent(&s).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaChoice {
    pub kappa: f64,
    pub exponent: f64,
}

/// Maximizes the predicted exponent over feasible κ: a uniform grid over
/// `(0, 1/16)`, then golden-section refinement around the best grid point.
pub fn kappa_search(alpha: f64, k: usize) -> Result<KappaChoice> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("α must be positive (got {alpha})")));
    }
    let step = KAPPA_LIMIT / KAPPA_GRID as f64;
    let mut best: Option<(usize, f64)> = None;
    for g in 0..KAPPA_GRID {
        let kappa = (g as f64 + 0.5) * step;
        if let Some(e) = feasible_exponent(kappa, alpha, k) {
            if best.is_none_or(|(_, b)| e > b) {
                best = Some((g, e));
            }
        }
    }
    let (g, e) = best.ok_or(Error::EmptyFeasibleRegion(alpha))?;
    let center = (g as f64 + 0.5) * step;
    let f = |kappa: f64| feasible_exponent(kappa, alpha, k).unwrap_or(f64::NEG_INFINITY);
    let mut lo = (center - step).max(0.0);
    let mut hi = (center + step).min(KAPPA_LIMIT * (1.0 - 1e-12));
    let ratio = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..100 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        }
    }
    let (kappa, exponent) = [(a, fa), (b, fb), (center, e)]
        .into_iter()
        .filter(|(_, v)| v.is_finite())
        .fold((center, e), |acc, c| if c.1 > acc.1 { c } else { acc });
    Ok(KappaChoice { kappa, exponent })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_level_values() {
        let s = make_schedule(0.05, 1.0, 3).unwrap();
        assert!((s.levels[0].gamma - 0.002375).abs() < 1e-15);
        assert!((s.levels[0].theta - 0.002375 / 2.4).abs() < 1e-15);
        assert!((s.levels[1].gamma - 0.05 * 0.002375).abs() < 1e-15);
        assert_eq!(s.theta_at(4), 0.05 * s.levels[2].theta);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(make_schedule(1.0 / 16.0, 1.0, 3), Err(Error::KappaTooLarge(_))));
        assert!(matches!(make_schedule(0.05, 0.001, 3), Err(Error::AlphaTooSmall { .. })));
        assert!(make_schedule(0.05, 1.0, 0).is_err());
    }

    #[test]
    fn radii_follow_power_law() {
        let s = make_schedule(0.05, 1.0, 3).unwrap();
        let r = s.radii(0.5);
        for i in 0..3 {
            assert!((r[i + 1].ln() - (1.0 + s.levels[i].gamma) * r[i].ln()).abs() < 1e-14);
        }
        assert!((terminal_scale(&s, 0.5) - r[3] / 4.0).abs() < 1e-15);
    }

    #[test]
    fn equal_gamma_and_twice_theta_breaks_frame_condition() {
        let mut s = make_schedule(0.05, 1.0, 3).unwrap();
        s.levels[1].gamma = 2.0 * s.levels[1].theta;
        let ledger = check_schedule(&s);
        assert!(!ledger.find("frame_orthogonality", Some(2), Some(3)).unwrap().holds);
        assert!(!ledger.find("gamma_vs_theta", Some(2), None).unwrap().holds);
        assert!(predicted_exponent(&s).is_err());
    }

    #[test]
    fn epsilon_chain_is_consistent() {
        let s = make_schedule(0.05, 1.0, 1).unwrap();
        let e = epsilon_terms(0.3, s.levels[0], 1.0, 2, &BoundConstants::default());
        assert!((e.eps5 - 12.0 * e.eps4.sqrt()).abs() < 1e-12);
        assert!((e.eps2 - 2.0 / 0.0025 * e.eps1).abs() < 1e-9);
        assert_eq!(e.eps4_terms.len(), 5);
    }
}
