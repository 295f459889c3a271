//! The limit process through the stochastic flow `(ξ, x^λ)`.
//!
//! Atoms `(u, a)` of a Poisson point process with intensity
//! `du ⊗ ρ a^{-α} da` move the subordinator by `ξ ↦ ξ + g(a)` and each
//! generating-function coordinate by `x ↦ H(x, a)`. The limit block
//! configuration is recovered by the Lamperti-Kiu time change
//! `dt = e^{(1-α) ξ_u} du`, that is `|μ_t| = e^{-ξ_{τ_t}}` with
//! `τ_t = inf{u : ∫_0^u e^{(1-α)ξ_s} ds > t}`.
//!
//! Atoms with `a > A_max` are not simulated. Their mean effect on `ξ` is
//! added as a drift. Optionally their first-order effect on `x^λ`, the
//! logistic drift `-c x (1 - x)`, is added as well.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{tilted_weight_sampler, ModelConfig, TiltedWeight, DEFAULT_QUAD_NODES};
use crate::numerics::gauss::legendre;
use crate::numerics::quad::{integrate, integrate_power_measure, integrate_power_tail, QuadControls, QuadValue};
use crate::numerics::stats::{fisher_z_test, ks_two_sample, CoMoments, TestOutcome};

/// Above this scale `g` is evaluated by its series in `1/a`.
const G_SERIES_FROM: f64 = 1.0e3;

/// Ingredients of the flow for one model.
#[derive(Debug, Clone)]
pub struct FlowModel {
    pub alpha: f64,
    pub rho: f64,
    tw: TiltedWeight,
    moments: [f64; 6],
}

impl FlowModel {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Self::from_parts(config.alpha, config.rho, tilted_weight_sampler(&config.weight_law, DEFAULT_QUAD_NODES)?)
    }

    pub fn from_parts(alpha: f64, rho: f64, tw: TiltedWeight) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || !(rho > 0.0) {
            return Err(invalid("alpha", "need 0 < alpha < 1 and rho > 0"));
        }
        let moments = [0, 1, 2, 3, 4, 5].map(|j| tw.moment(j));
        Ok(Self { alpha, rho, tw, moments })
    }

    pub fn tilted(&self) -> &TiltedWeight {
        &self.tw
    }

    /// `H(x, a) = E[e^{-Γ/a}(e^{Γx/a} - 1)] / E[1 - e^{-Γ/a}]`.
    pub fn h(&self, x: f64, a: f64) -> f64 {
        h_map(x, a, &self.tw)
    }

    /// `g(a) = -ln E[a (1 - e^{-Γ/a})]`.
    pub fn g(&self, a: f64) -> f64 {
        if a > G_SERIES_FROM {
            let m = &self.moments;
            let y = 1.0 / a;
            // E[a(1 - e^{-Γ/a})] = 1 - m₂ y/2 + m₃ y²/6 - m₄ y³/24 + m₅ y⁴/120 - ...
            let s = y * (-m[2] / 2.0 + y * (m[3] / 6.0 + y * (-m[4] / 24.0 + y * m[5] / 120.0)));
            return -s.ln_1p();
        }
        g_jump(a, &self.tw)
    }

    /// Laplace exponent `φ(q) = ∫_0^∞ (1 - e^{-q g(a)}) ρ a^{-α} da`.
    pub fn laplace_exponent(&self, q: f64, ctl: QuadControls) -> QuadValue {
        if q == 0.0 {
            return QuadValue::new(0.0, 0.0);
        }
        let v = integrate_power_measure(|a| -(-q * self.g(a)).exp_m1(), self.alpha, ctl);
        QuadValue::new(self.rho * v.value, self.rho * v.error)
    }

    /// `∫_{A}^∞ g(a) ρ a^{-α} da`, the mean rate of the omitted jumps of `ξ`.
    pub fn xi_drift(&self, a_max: f64) -> f64 {
        self.rho * integrate_power_tail(|a| self.g(a), self.alpha, a_max, QuadControls::default()).value
    }

    /// First-order rate `c = E Γ² ρ A^{-α} / (2α)` of the omitted `x^λ` drift.
    pub fn x_drift_rate(&self, a_max: f64) -> f64 {
        self.moments[2] * self.rho * a_max.powf(-self.alpha) / (2.0 * self.alpha)
    }

    /// Total mass `ρ A^{1-α} / (1-α)` of the simulated atoms per unit time.
    pub fn atom_rate(&self, a_max: f64) -> f64 {
        self.rho * a_max.powf(1.0 - self.alpha) / (1.0 - self.alpha)
    }

    /// Bounds on the effect of the omitted atoms on `x^λ` per unit flow time:
    /// `∫_A^∞ sup_x |H(x,a) - x| ρ a^{-α} da` and the same integral after
    /// removing the first-order term `-E Γ² x(1-x)/(2a)`.
    ///
    /// The second integrand is `O(a^{-2})` but lost in roundoff for huge `a`,
    /// so it is integrated up to `100 max(A, 10³)` and extended beyond by
    /// twice its `a^{-2}` extrapolation.
    pub fn x_bias_bounds(&self, a_max: f64) -> (f64, f64) {
        let grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let ctl = QuadControls {
            abs_tol: 1e-16,
            rel_tol: 1e-6,
            max_intervals: 200,
        };
        let sup = |a: f64, first_order: bool| {
            grid.iter()
                .map(|&x| {
                    let mut d = self.h(x, a) - x;
                    if first_order {
                        d += self.moments[2] * x * (1.0 - x) / (2.0 * a);
                    }
                    d.abs()
                })
                .fold(0.0, f64::max)
        };
        let raw = integrate_power_tail(|a| sup(a, false), self.alpha, a_max, ctl).value;
        let cut = 100.0 * a_max.max(1e3);
        let mid = integrate(|a| sup(a, true) * a.powf(-self.alpha), a_max, cut, ctl).value;
        let tail = 2.0 * sup(cut, true) * cut.powf(1.0 - self.alpha) / (1.0 + self.alpha);
        (self.rho * raw, self.rho * (mid + tail))
    }

    /// `ρ ∫_A^∞ g(a)²/2 a^{-α} da`, a bound on `|φ(1) - φ̃(1)|` where `φ̃` is
    /// the exponent of the truncated and compensated subordinator. At other
    /// `q` the bound scales as `q²`.
    pub fn xi_laplace_defect(&self, a_max: f64) -> f64 {
        let ctl = QuadControls {
            abs_tol: 1e-20,
            rel_tol: 1e-8,
            max_intervals: 200,
        };
        self.rho * integrate_power_tail(|a| 0.5 * self.g(a).powi(2), self.alpha, a_max, ctl).value
    }
}

/// `H(x, a)` under the tilted weight.
pub fn h_map(x: f64, a: f64, tw: &TiltedWeight) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let den = tw.laplace_gap(0.0, 1.0 / a);
    (tw.laplace_gap((1.0 - x) / a, 1.0 / a) / den).clamp(0.0, 1.0)
}

/// `g(a)` by direct evaluation.
pub fn g_jump(a: f64, tw: &TiltedWeight) -> f64 {
    -(a * tw.laplace_gap(0.0, 1.0 / a)).ln().min(0.0)
}

/// Laplace exponent of the subordinator.
pub fn laplace_exponent(q: f64, config: &ModelConfig, ctl: QuadControls) -> Result<QuadValue> {
    if q < 0.0 {
        return Err(invalid("q", "must be non-negative"));
    }
    Ok(FlowModel::new(config)?.laplace_exponent(q, ctl))
}

/// Truncation settings of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub a_max: f64,
    /// Add the first-order drift of the omitted atoms to `x^λ`.
    pub compensate_x: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            a_max: 1.0e4,
            compensate_x: true,
        }
    }
}

/// Drift terms and bias bounds implied by a truncation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compensation {
    pub a_max: f64,
    pub xi_drift: f64,
    /// Rate of the logistic drift of `x^λ`; zero when not compensated.
    pub x_rate: f64,
    pub atom_rate: f64,
    /// Bound on the per-unit-time bias of `x^λ` from the omitted atoms.
    pub x_bias_rate: f64,
    /// Bound on the error of the Laplace exponent at `q = 1`.
    pub xi_defect: f64,
}

impl Compensation {
    pub fn new(model: &FlowModel, opts: FlowOptions) -> Self {
        let (raw, residual) = model.x_bias_bounds(opts.a_max);
        Self {
            a_max: opts.a_max,
            xi_drift: model.xi_drift(opts.a_max),
            x_rate: if opts.compensate_x { model.x_drift_rate(opts.a_max) } else { 0.0 },
            atom_rate: model.atom_rate(opts.a_max),
            x_bias_rate: if opts.compensate_x { residual } else { raw },
            xi_defect: model.xi_laplace_defect(opts.a_max),
        }
    }

    /// Logistic flow `x ↦ x e^{-cu} / (1 - x + x e^{-cu})`.
    fn drift_x(&self, x: f64, du: f64) -> f64 {
        if self.x_rate == 0.0 || x <= 0.0 || x >= 1.0 {
            return x;
        }
        let e = (-self.x_rate * du).exp();
        x * e / (1.0 - x + x * e)
    }
}

/// A simulated path of the flow on `[0, horizon]`.
///
/// Values are stored right after each atom; between atoms `ξ` grows
/// linearly at rate `xi_drift` and `x^λ` follows the logistic drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    pub lambdas: Vec<f64>,
    pub xi0: f64,
    pub horizon: f64,
    pub comp: Compensation,
    pub jump_times: Vec<f64>,
    pub jump_scales: Vec<f64>,
    pub xi: Vec<f64>,
    /// `x[i * K + j]`: coordinate `j` right after atom `i`.
    pub x: Vec<f64>,
}

impl JumpPath {
    fn new(lambdas: &[f64], xi0: f64, comp: Compensation) -> Self {
        Self {
            lambdas: lambdas.to_vec(),
            xi0,
            horizon: 0.0,
            comp,
            jump_times: Vec::new(),
            jump_scales: Vec::new(),
            xi: Vec::new(),
            x: Vec::new(),
        }
    }

    pub fn jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// Start of the segment containing `u`: time, `ξ`, and the `x^λ` slice.
    fn knot(&self, i: Option<usize>) -> (f64, f64, &[f64]) {
        let k = self.lambdas.len();
        match i {
            None => (0.0, self.xi0, &self.lambdas),
            Some(i) => (self.jump_times[i], self.xi[i], &self.x[i * k..(i + 1) * k]),
        }
    }

    fn segment(&self, u: f64) -> Option<usize> {
        self.jump_times.partition_point(|&s| s <= u).checked_sub(1)
    }

    /// `ξ_u`.
    pub fn xi_at(&self, u: f64) -> Result<f64> {
        self.check(u)?;
        let (s, xi, _) = self.knot(self.segment(u));
        Ok(xi + self.comp.xi_drift * (u - s))
    }

    /// `x^{λ_j}_u` for every `j`.
    pub fn x_at(&self, u: f64) -> Result<Vec<f64>> {
        self.check(u)?;
        let (s, _, x) = self.knot(self.segment(u));
        Ok(x.iter().map(|&v| self.comp.drift_x(v, u - s)).collect())
    }

    fn check(&self, u: f64) -> Result<()> {
        if u > self.horizon || u < 0.0 {
            return Err(Error::Horizon {
                requested: u,
                covered: self.horizon,
            });
        }
        Ok(())
    }

    /// Continues the path to flow time `horizon`.
    pub fn extend<R: Rng + ?Sized>(&mut self, model: &FlowModel, horizon: f64, rng: &mut R) {
        let k = self.lambdas.len();
        let rate = self.comp.atom_rate;
        let beta = 1.0 - model.alpha;
        let mut u = self.horizon;
        loop {
            let e: f64 = Exp1.sample(rng);
            let next = u + e / rate;
            if next > horizon {
                break;
            }
            let a = self.comp.a_max * rng.random::<f64>().powf(1.0 / beta);
            let (s, xi, xs) = self.knot(self.jumps().checked_sub(1));
            let new_xi = xi + self.comp.xi_drift * (next - s) + model.g(a);
            let new_x: Vec<f64> = xs.iter().map(|&v| model.h(self.comp.drift_x(v, next - s), a)).collect();
            self.jump_times.push(next);
            self.jump_scales.push(a);
            self.xi.push(new_xi);
            self.x.extend(new_x);
            debug_assert_eq!(self.x.len(), self.jump_times.len() * k);
            u = next;
        }
        self.horizon = horizon;
    }

    /// Writes `(u, xi, x_λ...)` at the start and after every atom.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["u".to_string(), "xi".to_string()];
        header.extend(self.lambdas.iter().map(|l| format!("x_{l}")));
        out.write_record(&header)?;
        for i in std::iter::once(None).chain((0..self.jumps()).map(Some)) {
            let (s, xi, x) = self.knot(i);
            let mut row = vec![format!("{s:e}"), format!("{xi:e}")];
            row.extend(x.iter().map(|v| format!("{v:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Simulates the flow on `[0, horizon]` from `ξ₀ = 0`, `x^λ₀ = λ`.
pub fn simulate_flow<R: Rng + ?Sized>(
    model: &FlowModel,
    lambdas: &[f64],
    horizon: f64,
    opts: FlowOptions,
    rng: &mut R,
) -> Result<JumpPath> {
    simulate_flow_from(model, lambdas, 0.0, horizon, Compensation::new(model, opts), rng)
}

/// Simulates the flow from `ξ₀` with a precomputed compensation.
pub fn simulate_flow_from<R: Rng + ?Sized>(
    model: &FlowModel,
    lambdas: &[f64],
    xi0: f64,
    horizon: f64,
    comp: Compensation,
    rng: &mut R,
) -> Result<JumpPath> {
    if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(invalid("lambdas", "must lie in [0, 1]"));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon", "must be positive"));
    }
    let mut path = JumpPath::new(lambdas, xi0, comp);
    path.extend(model, horizon, rng);
    Ok(path)
}

/// The limit process `t ↦ μ_t` seen through `|μ_t|` and `ψ_λ(μ_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuPath<'p> {
    path: &'p JumpPath,
    beta: f64,
    /// `A(u_i) = ∫_0^{u_i} e^{(1-α)ξ_s} ds` at every knot.
    clock: Vec<f64>,
    covered: f64,
}

/// State of the limit process at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuPoint {
    pub t: f64,
    /// Flow time `τ_t`.
    pub u: f64,
    pub xi: f64,
    /// `|μ_t|`.
    pub radial: f64,
    /// `ψ_{λ_j}(μ_t)`.
    pub psi: Vec<f64>,
}

/// `∫_0^Δ e^{β(ξ + d s)} ds`.
fn exp_linear_integral(beta: f64, xi: f64, d: f64, delta: f64) -> f64 {
    let bd = beta * d;
    let base = (beta * xi).exp();
    if bd.abs() < 1e-300 {
        base * delta
    } else {
        base * (bd * delta).exp_m1() / bd
    }
}

/// Builds the time change of the Lamperti-Kiu transform.
pub fn lamperti_reconstruct(path: &JumpPath, alpha: f64) -> MuPath<'_> {
    let beta = 1.0 - alpha;
    let d = path.comp.xi_drift;
    let mut clock = Vec::with_capacity(path.jumps() + 1);
    clock.push(0.0);
    let mut acc = 0.0;
    for i in 0..path.jumps() {
        let (s, xi, _) = path.knot(i.checked_sub(1));
        acc += exp_linear_integral(beta, xi, d, path.jump_times[i] - s);
        clock.push(acc);
    }
    let (s, xi, _) = path.knot(path.jumps().checked_sub(1));
    let covered = acc + exp_linear_integral(beta, xi, d, path.horizon - s);
    MuPath {
        path,
        beta,
        clock,
        covered,
    }
}

impl MuPath<'_> {
    /// Largest real time covered by the flow horizon.
    pub fn covered(&self) -> f64 {
        self.covered
    }

    /// `(|μ_t|, ψ_λ(μ_t))`.
    pub fn at(&self, t: f64) -> Result<MuPoint> {
        if t > self.covered || t < 0.0 {
            return Err(Error::Horizon {
                requested: t,
                covered: self.covered,
            });
        }
        let seg = self.clock.partition_point(|&c| c <= t) - 1;
        let (s, xi, _) = self.path.knot(seg.checked_sub(1));
        let d = self.path.comp.xi_drift;
        let excess = (t - self.clock[seg]) * (-self.beta * xi).exp();
        let bd = self.beta * d;
        let delta = if bd.abs() < 1e-300 { excess } else { (bd * excess).ln_1p() / bd };
        let u = (s + delta).min(self.path.horizon);
        let xi_u = xi + d * delta;
        let radial = (-xi_u).exp();
        let x = self.path.x_at(u)?;
        Ok(MuPoint {
            t,
            u,
            xi: xi_u,
            radial,
            psi: x.iter().map(|v| v * radial).collect(),
        })
    }

    /// Recovers `(u_i, ξ_{u_i})` at every atom from `t ↦ |μ_t|` alone, by
    /// integrating `|μ_t|^{1-α} dt` numerically between atoms.
    pub fn extract(&self) -> Result<Vec<(f64, f64)>> {
        let ctl = QuadControls {
            abs_tol: 1e-14,
            rel_tol: 1e-13,
            max_intervals: 100,
        };
        let mut u = 0.0;
        let mut out = Vec::with_capacity(self.path.jumps());
        for i in 0..self.path.jumps() {
            let (a, b) = (self.clock[i], self.clock[i + 1]);
            let q = integrate(
                |t| self.at(t).map(|p| p.radial.powf(self.beta)).unwrap_or(f64::NAN),
                a,
                b,
                ctl,
            );
            u += q.value;
            let xi = -self.at(b)?.radial.ln();
            out.push((u, xi));
        }
        Ok(out)
    }
}

/// `∫_0^∞ e^{-qξ_u} du` and its projections on the stored coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFunctional {
    pub q: f64,
    /// `∫_0^T e^{-q ξ_u} du`.
    pub value: f64,
    /// `∫_0^T x^{λ_j}_u e^{-q ξ_u} du`.
    pub projections: Vec<f64>,
    /// `e^{-q ξ_T} / (q d̂)` with `d̂ = (ξ_T - ξ_0)/T`.
    pub tail_bound: f64,
    /// Set when the tail bound exceeds the tolerance.
    pub flagged: bool,
}

/// Exact integral of `e^{-qξ}` along the path, plus the heuristic tail.
pub fn exp_functional(path: &JumpPath, q: f64, tol: f64) -> Result<ExpFunctional> {
    if !(q > 0.0) {
        return Err(invalid("q", "the exponential functional needs q > 0"));
    }
    let d = path.comp.xi_drift;
    let k = path.lambdas.len();
    let gl = legendre(8);
    let mut value = 0.0;
    let mut proj = vec![0.0; k];
    let mut seg = |i: Option<usize>, end: f64| {
        let (s, xi, x) = path.knot(i);
        let delta = end - s;
        value += exp_linear_integral(-q, xi, d, delta);
        for (j, &x0) in x.iter().enumerate() {
            proj[j] += if path.comp.x_rate == 0.0 || x0 == 0.0 || x0 == 1.0 {
                x0 * exp_linear_integral(-q, xi, d, delta)
            } else {
                0.5 * delta
                    * gl.apply(|r| {
                        let v = 0.5 * delta * (r + 1.0);
                        path.comp.drift_x(x0, v) * (-q * (xi + d * v)).exp()
                    })
            };
        }
    };
    for i in 0..path.jumps() {
        seg(i.checked_sub(1), path.jump_times[i]);
    }
    seg(path.jumps().checked_sub(1), path.horizon);
    let xi_t = path.xi_at(path.horizon)?;
    let rate = (xi_t - path.xi0) / path.horizon;
    let tail_bound = (-q * xi_t).exp() / (q * rate);
    Ok(ExpFunctional {
        q,
        value,
        projections: proj,
        tail_bound,
        flagged: !(tail_bound <= tol),
    })
}

/// Extends the path until the tail bound of the exponential functional at
/// `q` is below `tol`, doubling the horizon at most `max_doublings` times.
pub fn exp_functional_adaptive<R: Rng + ?Sized>(
    path: &mut JumpPath,
    model: &FlowModel,
    q: f64,
    tol: f64,
    max_doublings: usize,
    rng: &mut R,
) -> Result<ExpFunctional> {
    let mut ef = exp_functional(path, q, tol)?;
    for _ in 0..max_doublings {
        if !ef.flagged {
            break;
        }
        let h = 2.0 * path.horizon;
        path.extend(model, h, rng);
        ef = exp_functional(path, q, tol)?;
    }
    Ok(ef)
}

/// Times at which the Markov-additive and self-similarity tests look.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapDesign {
    pub s1: f64,
    pub s2: f64,
    pub t: f64,
    /// Real time at which the radial parts are compared.
    pub t_radial: f64,
    /// Start `|μ_0| = 1/γ` of the rescaled sample.
    pub gamma: f64,
    /// Battery significance; each of the three tests uses a third of it.
    pub level: f64,
}

impl Default for MapDesign {
    fn default() -> Self {
        Self {
            s1: 0.5,
            s2: 1.5,
            t: 1.0,
            t_radial: 1.0,
            gamma: 2.0,
            level: 0.01,
        }
    }
}

/// Outcome of the Markov-additive and self-similarity battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub stationarity: TestOutcome,
    pub independence: TestOutcome,
    pub self_similarity: TestOutcome,
    pub level: f64,
    pub passed: bool,
}

/// Runs the battery on paths started at `ξ₀ = 0` and paths started at
/// `ξ₀ = ln γ`.
///
/// * stationarity: `ξ_{s₁+t} - ξ_{s₁}` on one half of the paths against
///   `ξ_{s₂+t} - ξ_{s₂}` on the other half (two-sample KS);
/// * independence: correlation of `ξ_{s₁}` and `ξ_{s₁+t} - ξ_{s₁}`;
/// * self-similarity: `γ |μ^{(1/γ)}_{t γ^{1-α}}|` against `|μ_t|`.
pub fn map_tests(paths: &[JumpPath], scaled: &[JumpPath], alpha: f64, design: MapDesign) -> Result<MapReport> {
    if paths.len() < 4 || scaled.is_empty() {
        return Err(invalid("paths", "need several paths of each kind"));
    }
    let half = paths.len() / 2;
    let incr = |p: &JumpPath, s: f64| -> Result<f64> { Ok(p.xi_at(s + design.t)? - p.xi_at(s)?) };
    let a: Vec<f64> = paths[..half].iter().map(|p| incr(p, design.s1)).collect::<Result<_>>()?;
    let b: Vec<f64> = paths[half..].iter().map(|p| incr(p, design.s2)).collect::<Result<_>>()?;
    let stationarity = TestOutcome {
        name: "stationarity_ks".into(),
        ..ks_two_sample(&a, &b)
    };
    let mut cm = CoMoments::default();
    for p in paths {
        let x = p.xi_at(design.s1)?;
        cm.push(x, p.xi_at(design.s1 + design.t)? - x);
    }
    let independence = TestOutcome {
        name: "independence_fisher_z".into(),
        ..fisher_z_test(cm.correlation(), paths.len())
    };
    let direct: Vec<f64> = paths
        .iter()
        .map(|p| lamperti_reconstruct(p, alpha).at(design.t_radial).map(|m| m.radial))
        .collect::<Result<_>>()?;
    let s = design.t_radial * design.gamma.powf(1.0 - alpha);
    let rescaled: Vec<f64> = scaled
        .iter()
        .map(|p| lamperti_reconstruct(p, alpha).at(s).map(|m| design.gamma * m.radial))
        .collect::<Result<_>>()?;
    let self_similarity = TestOutcome {
        name: "self_similarity_ks".into(),
        ..ks_two_sample(&direct, &rescaled)
    };
    let per_test = design.level / 3.0;
    let passed = [&stationarity, &independence, &self_similarity]
        .iter()
        .all(|t| t.p_value > per_test);
    Ok(MapReport {
        stationarity,
        independence,
        self_similarity,
        level: design.level,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightLaw;
    use crate::rng::{stream, StreamTag};
    use approx::assert_relative_eq;

    fn model(law: WeightLaw) -> FlowModel {
        FlowModel::new(&ModelConfig::power(0.5, 1.0, law, 0)).unwrap()
    }

    fn point() -> FlowModel {
        model(WeightLaw::Constant { c: 1.0 })
    }

    #[test]
    fn h_examples() {
        let m = point();
        assert_relative_eq!(m.h(0.5, 1.0), (0.5f64.exp() - 1.0) / (1f64.exp() - 1.0), max_relative = 1e-14);
        assert_eq!(m.h(1.0, 3.0), 1.0);
        assert_eq!(m.h(0.0, 3.0), 0.0);
        for law in [WeightLaw::Constant { c: 1.0 }, WeightLaw::Gamma { shape: 1.0, scale: 1.0 }] {
            let m = model(law);
            for i in 0..=10 {
                let x = i as f64 / 10.0;
                assert!((m.h(x, 1e3) - x).abs() <= 0.01);
            }
        }
    }

    #[test]
    fn g_examples() {
        let m = point();
        assert_relative_eq!(m.g(1.0), 0.458_675_145_387_081_8, max_relative = 1e-12);
        assert!(m.g(1e4) < 1e-3);
        // Series and direct evaluation agree where both are accurate.
        assert_relative_eq!(m.g(2e3), g_jump(2e3, m.tilted()), max_relative = 1e-9);
        let gm = model(WeightLaw::Gamma { shape: 2.0, scale: 1.0 });
        for i in -3..=6 {
            assert!(gm.g(10f64.powi(i)) >= 0.0);
        }
    }

    #[test]
    fn laplace_exponent_is_concave() {
        let m = point();
        let ctl = QuadControls::default();
        assert_eq!(m.laplace_exponent(0.0, ctl).value, 0.0);
        let v: Vec<f64> = [0.5, 1.0, 1.5, 2.0].iter().map(|&q| m.laplace_exponent(q, ctl).value).collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert!(v[2] - 2.0 * v[1] + v[0] <= 0.0);
        assert!(v[3] - 2.0 * v[2] + v[1] <= 0.0);
    }

    #[test]
    fn unit_coordinate_stays_one() {
        let m = point();
        let mut rng = stream(1, StreamTag::Flow, 0);
        let p = simulate_flow(&m, &[0.3, 0.6, 1.0], 2.0, FlowOptions::default(), &mut rng).unwrap();
        assert!(p.jumps() > 100);
        for i in 0..p.jumps() {
            let x = &p.x[i * 3..i * 3 + 3];
            assert_eq!(x[2], 1.0);
            assert!(x[0] <= x[1] && x[1] <= 1.0 && x[0] >= 0.0);
            if i > 0 {
                assert!(p.xi[i] >= p.xi[i - 1]);
            }
        }
    }

    #[test]
    fn drift_only_path_has_closed_form() {
        let m = point();
        let comp = Compensation {
            a_max: 1e-300,
            xi_drift: 0.7,
            x_rate: 0.0,
            atom_rate: 1e-300,
            x_bias_rate: 0.0,
            xi_defect: 0.0,
        };
        let mut rng = stream(2, StreamTag::Flow, 0);
        let p = simulate_flow_from(&m, &[0.5], 0.0, 10.0, comp, &mut rng).unwrap();
        assert_eq!(p.jumps(), 0);
        let mu = lamperti_reconstruct(&p, 0.5);
        for &t in &[0.0, 0.3, 1.0, 2.5] {
            let r = mu.at(t).unwrap().radial;
            assert_relative_eq!(r, (1.0 + 0.7 * 0.5 * t).powf(-2.0), max_relative = 1e-12);
        }
        let ef = exp_functional(&p, 1.5, 1.0).unwrap();
        assert_relative_eq!(ef.value, -(-1.5f64 * 0.7 * 10.0).exp_m1() / (1.5 * 0.7), max_relative = 1e-13);
    }

    #[test]
    fn lamperti_round_trip() {
        let m = model(WeightLaw::Gamma { shape: 1.0, scale: 1.0 });
        let mut rng = stream(3, StreamTag::Flow, 0);
        let p = simulate_flow(&m, &[0.5], 1.0, FlowOptions { a_max: 100.0, compensate_x: true }, &mut rng).unwrap();
        let mu = lamperti_reconstruct(&p, 0.5);
        let first = mu.at(0.0).unwrap();
        assert_eq!(first.radial, 1.0);
        assert_eq!(first.psi[0], 0.5);
        let back = mu.extract().unwrap();
        for (i, (u, xi)) in back.iter().enumerate() {
            assert!((u - p.jump_times[i]).abs() < 1e-9);
            assert!((xi - p.xi[i]).abs() < 1e-9);
        }
        assert!(mu.at(mu.covered() * 1.01).is_err());
    }

    #[test]
    fn h_agrees_with_coagulation_closed_form() {
        use crate::coag::{coag_psi_closed, FreqVector};
        let m = model(WeightLaw::Gamma { shape: 2.0, scale: 1.0 });
        let z = FreqVector::new(vec![0.3, 0.2, 0.1, 0.05, 0.05, 0.1, 0.2]).unwrap();
        let z = z.scale(1.0 / z.total());
        for &lambda in &[0.2, 0.5, 0.9] {
            for &a in &[0.1, 1.0, 30.0] {
                let x = z.psi(lambda);
                let ratio = coag_psi_closed(&z, a, lambda, m.tilted()) / coag_psi_closed(&z, a, 1.0, m.tilted());
                assert!((m.h(x, a) - ratio).abs() < 1e-8);
            }
        }
    }
}
