//! Per-client joint resource optimizer: pick local step count κ, CPU
//! frequency f̄, and transmit power p to maximize a weighted sum of
//! computation efficiency and communication energy efficiency, subject to
//! a per-round energy budget and deadline.
//!
//! The solver is block-coordinate: a closed form for κ given (f̄, p), a
//! closed form for f̄ given (κ, p), and a successive-convex-approximation
//! (SCA) loop for p given (κ, f̄), iterated until the objective settles.
//! Infeasibility is an ordinary outcome — the client sits the round out —
//! not an error.

use alloc::vec::Vec;

use crate::math;
use crate::wireless::{self, DeviceCaps, LinkState};

/// Relative slack when re-checking constraints with the true formulas.
const FEAS_REL_TOL: f64 = 1e-9;
/// Guard on the rate-lower-bound exponent before it can overflow `2^x`.
const MAX_RATE_EXPONENT: f64 = 500.0;
/// Transmit powers probed by the deterministic restart scan.
const SCAN_POWER_POINTS: u32 = 200;

/// The per-round decision for one client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourcePlan {
    /// Local step-units this round; 0 when infeasible.
    pub kappa: u32,
    /// CPU frequency in Hz; 0 when infeasible.
    pub freq_hz: f64,
    /// Transmit power in W; 0 when infeasible.
    pub power_w: f64,
    /// Whether the client can participate this round.
    pub feasible: bool,
    /// Objective value of the returned point; 0 when infeasible.
    pub objective: f64,
}

impl ResourcePlan {
    /// The sit-this-round-out plan.
    pub fn straggler() -> Self {
        Self {
            kappa: 0,
            freq_hz: 0.0,
            power_w: 0.0,
            feasible: false,
            objective: 0.0,
        }
    }
}

/// Optimizer knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    /// Weight ε on the computation-efficiency term; 1−ε weighs the
    /// communication energy efficiency.
    pub comp_weight: f64,
    /// Upper bound on local step-units per round.
    pub kappa_max: u32,
    /// Outer block-coordinate iterations.
    pub outer_iters: u32,
    /// Inner SCA iterations for the power solve.
    pub sca_iters: u32,
    /// Power-iterate convergence tolerance (W).
    pub power_tol: f64,
    /// Outer objective convergence tolerance.
    pub objective_tol: f64,
    /// Initial frequency as a fraction of the device maximum.
    pub init_freq_frac: f64,
    /// Initial power as a fraction of the device maximum.
    pub init_power_frac: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            comp_weight: 0.5,
            kappa_max: 5,
            outer_iters: 20,
            sca_iters: 30,
            power_tol: 1e-6,
            objective_tol: 1e-6,
            init_freq_frac: 0.5,
            init_power_frac: 0.5,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(0.0..=1.0).contains(&self.comp_weight) {
            return Err("computation weight outside [0, 1]");
        }
        if self.kappa_max < 1 || self.outer_iters < 1 || self.sca_iters < 1 {
            return Err("iteration counts must be at least 1");
        }
        if !(self.power_tol > 0.0 && self.objective_tol > 0.0) {
            return Err("tolerances must be positive");
        }
        if !(0.0 < self.init_freq_frac && self.init_freq_frac <= 1.0)
            || !(0.0 < self.init_power_frac && self.init_power_frac <= 1.0)
        {
            return Err("initial point fractions must lie in (0, 1]");
        }
        Ok(())
    }
}

/// The joint objective: `ε·κ/(0.5·ν·n·n̄·c·s·f̄²) + (1−ε)·R(p)/p`,
/// computation steps per unit of per-step energy plus bits per joule on
/// the uplink.
pub fn objective(
    caps: &DeviceCaps,
    link: &LinkState,
    kappa: u32,
    freq_hz: f64,
    power_w: f64,
    comp_weight: f64,
) -> f64 {
    debug_assert!(freq_hz > 0.0 && power_w > 0.0);
    let comp = kappa as f64 / (0.5 * caps.capacitance * caps.cycles_per_unit() * freq_hz * freq_hz);
    let ee = wireless::uplink_rate(link, power_w) / power_w;
    comp_weight * comp + (1.0 - comp_weight) * ee
}

/// Closed-form best integer step count at fixed (f̄, p): the objective
/// grows with κ, so the optimum is the floor of the tightest of the energy
/// bound, the deadline bound, and the cap. `None` when that floor is
/// below 1 (the client cannot finish even one step-unit).
pub fn optimal_kappa(
    caps: &DeviceCaps,
    link: &LinkState,
    freq_hz: f64,
    power_w: f64,
    kappa_max: u32,
) -> Option<u32> {
    debug_assert!(freq_hz > 0.0 && power_w > 0.0);
    let e_up = wireless::up_energy(caps, link, power_w).ok()?;
    let t_up = wireless::up_time(caps, link, power_w).ok()?;
    let cycles = caps.cycles_per_unit();
    let energy_bound = (caps.energy_budget_j - e_up)
        / (0.5 * caps.capacitance * cycles * freq_hz * freq_hz);
    let deadline_bound = freq_hz * (caps.deadline_s - t_up) / cycles;
    let continuous = (kappa_max as f64).min(energy_bound).min(deadline_bound);
    if !(continuous >= 1.0) {
        return None;
    }
    Some(math::floor(continuous) as u32)
}

/// Closed-form best CPU frequency at fixed (κ, p): the objective falls
/// with f̄, so the optimum is the smallest frequency meeting the deadline,
/// `f̄* = n·n̄·c·s·κ·R / (t_th·R − N_bits)`. `None` when the deadline
/// cannot fit the payload at all, when f̄* exceeds the hardware maximum,
/// or when the energy budget is violated at f̄*.
pub fn optimal_freq(
    caps: &DeviceCaps,
    link: &LinkState,
    kappa: u32,
    power_w: f64,
) -> Option<f64> {
    debug_assert!(kappa >= 1 && power_w > 0.0);
    let rate = wireless::uplink_rate(link, power_w);
    if rate <= 0.0 {
        return None;
    }
    let denom = caps.deadline_s * rate - caps.payload_bits();
    if denom <= 0.0 {
        return None;
    }
    let freq = caps.cycles_per_unit() * kappa as f64 * rate / denom;
    if !(freq > 0.0) || freq > caps.max_freq_hz {
        return None;
    }
    let e_total = wireless::comp_energy(caps, kappa, freq).ok()?
        + wireless::up_energy(caps, link, power_w).ok()?;
    if e_total > caps.energy_budget_j * (1.0 + FEAS_REL_TOL) {
        return None;
    }
    Some(freq)
}

/// First-order expansion, around `p_j`, of the uplink energy efficiency
/// `R(p)/p`:
///
/// `(ω/ln2)·[ L/p_j + ( ΞΓ/(p_j(ωξ² + ΞΓp_j)) − L/p_j² )·(p − p_j) ]`
///
/// with `L = ln(1 + ΞΓ·p_j/(ωξ²))`. Affine in `p` and tangent to the true
/// curve at `p_j`.
pub fn linearized_ee(link: &LinkState, p: f64, p_j: f64) -> f64 {
    debug_assert!(p_j > 0.0);
    let a = link.gain();
    let den = link.bandwidth_hz * link.noise_psd;
    let l = math::ln(1.0 + a * p_j / den);
    let slope = a / (p_j * (den + a * p_j)) - l / (p_j * p_j);
    link.bandwidth_hz / math::LN_2 * (l / p_j + slope * (p - p_j))
}

/// First-order expansion, around `p_j`, of the upload energy
/// `N_bits·p/R(p)`:
///
/// `[N·ln2·(FPP+1)/(ω·L)]·[ p_j + (1 − ΞΓ·p_j/(L·(ωξ² + ΞΓp_j)))·(p − p_j) ]`.
///
/// The true upload energy is concave increasing in `p`, so this tangent
/// sits above it: enforcing the linearized budget is conservative.
pub fn linearized_up_energy(caps: &DeviceCaps, link: &LinkState, p: f64, p_j: f64) -> f64 {
    debug_assert!(p_j > 0.0);
    let a = link.gain();
    let den = link.bandwidth_hz * link.noise_psd;
    let l = math::ln(1.0 + a * p_j / den);
    let lead = caps.payload_bits() * math::LN_2 / (link.bandwidth_hz * l);
    lead * (p_j + (1.0 - a * p_j / (l * (den + a * p_j))) * (p - p_j))
}

/// The smallest transmit power meeting the deadline at fixed (κ, f̄): the
/// rate must reach `N_bits/(t_th − t_cp)`. `None` when the deadline is
/// already spent on computation or the required SNR overflows.
fn power_lower_bound(caps: &DeviceCaps, link: &LinkState, kappa: u32, freq_hz: f64) -> Option<f64> {
    let t_cp = wireless::comp_time(caps, kappa, freq_hz).ok()?;
    let slack = caps.deadline_s - t_cp;
    if slack <= 0.0 {
        return None;
    }
    let exponent = caps.payload_bits() / (link.bandwidth_hz * slack);
    if exponent > MAX_RATE_EXPONENT {
        return None;
    }
    let den = link.bandwidth_hz * link.noise_psd;
    Some(den / link.gain() * (math::exp2(exponent) - 1.0))
}

/// Largest power in `[floor_p, p_max]` keeping `constraint(p) ≤ 0`, found
/// by bisection; assumes `constraint` is increasing and non-positive at
/// `floor_p`. Returns a point on the feasible side.
fn bisect_power_cap(
    floor_p: f64,
    p_max: f64,
    tol: f64,
    constraint: impl Fn(f64) -> f64,
) -> f64 {
    if constraint(p_max) <= 0.0 {
        return p_max;
    }
    let (mut lo, mut hi) = (floor_p, p_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if constraint(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// SCA transmit-power solve at fixed (κ, f̄), returning the iterate
/// sequence (initial point first) alongside the final power.
///
/// Each iterate linearizes the objective's energy-efficiency term and the
/// upload-energy constraint around the current point; the surrogate
/// problem is affine in `p` over an interval, so its solution is whichever
/// endpoint scores the higher surrogate objective. Because the energy
/// tangent over-estimates the true energy and the rate bound is exact,
/// every iterate stays feasible for the true constraints, and the true
/// objective is non-decreasing along the sequence.
pub fn sca_power_trace(
    caps: &DeviceCaps,
    link: &LinkState,
    kappa: u32,
    freq_hz: f64,
    cfg: &OptimConfig,
) -> Option<(f64, Vec<f64>)> {
    let p_max = caps.max_power_w;
    let p_lo = power_lower_bound(caps, link, kappa, freq_hz)?;
    if p_lo > p_max {
        return None;
    }
    let e_comp = wireless::comp_energy(caps, kappa, freq_hz).ok()?;
    let e_avail = caps.energy_budget_j - e_comp;
    if e_avail <= 0.0 {
        return None;
    }
    // Clamp the configured initial point into the TRUE feasible interval.
    let true_energy = |p: f64| wireless::up_energy(caps, link, p).unwrap_or(f64::INFINITY);
    if true_energy(p_lo.max(f64::MIN_POSITIVE)) > e_avail * (1.0 + FEAS_REL_TOL) {
        return None;
    }
    let tol = FEAS_REL_TOL * p_max;
    let p_hi_true = bisect_power_cap(p_lo.max(f64::MIN_POSITIVE), p_max, tol, |p| {
        true_energy(p) - e_avail
    });
    let mut p_j = (cfg.init_power_frac * p_max).clamp(p_lo.max(f64::MIN_POSITIVE), p_hi_true);

    let mut trace = Vec::with_capacity(cfg.sca_iters as usize + 1);
    trace.push(p_j);
    for _ in 0..cfg.sca_iters {
        // Surrogate feasible interval: exact rate bound, linearized energy
        // cap. The tangent touches the true energy at p_j ≤ budget, so the
        // interval always contains p_j.
        let p_hi = bisect_power_cap(p_j, p_max, tol, |p| {
            linearized_up_energy(caps, link, p, p_j) - e_avail
        });
        if p_lo > p_hi {
            return None;
        }
        let lo_val = linearized_ee(link, p_lo.max(f64::MIN_POSITIVE), p_j);
        let hi_val = linearized_ee(link, p_hi, p_j);
        let p_next = if lo_val >= hi_val { p_lo.max(f64::MIN_POSITIVE) } else { p_hi };
        let moved = math::abs(p_next - p_j);
        p_j = p_next;
        trace.push(p_j);
        if moved < cfg.power_tol {
            break;
        }
    }

    // Final word goes to the true constraints.
    let t_cp = wireless::comp_time(caps, kappa, freq_hz).ok()?;
    let t_up = wireless::up_time(caps, link, p_j).ok()?;
    let e_up = wireless::up_energy(caps, link, p_j).ok()?;
    let time_ok = t_cp + t_up <= caps.deadline_s * (1.0 + FEAS_REL_TOL);
    let energy_ok = e_comp + e_up <= caps.energy_budget_j * (1.0 + FEAS_REL_TOL);
    let power_ok = p_j > 0.0 && p_j <= p_max * (1.0 + FEAS_REL_TOL);
    if time_ok && energy_ok && power_ok {
        Some((p_j, trace))
    } else {
        None
    }
}

/// SCA transmit-power solve at fixed (κ, f̄); see [`sca_power_trace`].
pub fn sca_power(
    caps: &DeviceCaps,
    link: &LinkState,
    kappa: u32,
    freq_hz: f64,
    cfg: &OptimConfig,
) -> Option<f64> {
    sca_power_trace(caps, link, kappa, freq_hz, cfg).map(|(p, _)| p)
}

/// Check a candidate plan against every constraint using the true
/// (non-linearized) formulas, with a small relative slack.
pub fn plan_is_feasible(
    caps: &DeviceCaps,
    link: &LinkState,
    kappa: u32,
    freq_hz: f64,
    power_w: f64,
    kappa_max: u32,
) -> bool {
    if kappa < 1 || kappa > kappa_max {
        return false;
    }
    if !(freq_hz > 0.0 && freq_hz <= caps.max_freq_hz * (1.0 + FEAS_REL_TOL)) {
        return false;
    }
    if !(power_w > 0.0 && power_w <= caps.max_power_w * (1.0 + FEAS_REL_TOL)) {
        return false;
    }
    let (Ok(t_cp), Ok(e_cp)) = (
        wireless::comp_time(caps, kappa, freq_hz),
        wireless::comp_energy(caps, kappa, freq_hz),
    ) else {
        return false;
    };
    let (Ok(t_up), Ok(e_up)) = (
        wireless::up_time(caps, link, power_w),
        wireless::up_energy(caps, link, power_w),
    ) else {
        return false;
    };
    t_cp + t_up <= caps.deadline_s * (1.0 + FEAS_REL_TOL)
        && e_cp + e_up <= caps.energy_budget_j * (1.0 + FEAS_REL_TOL)
}

/// Deterministic restart scan: over a fine ladder of transmit powers and
/// the given κ range, pair each (κ, p) with its closed-form frequency from
/// [`optimal_freq`]. Every candidate is a fixed point of the
/// block-coordinate sweep started from that (f̄, p), so this is a
/// multi-start of the same iteration, not a different algorithm. Returns
/// the best-objective feasible candidate.
fn restart_scan(
    caps: &DeviceCaps,
    link: &LinkState,
    cfg: &OptimConfig,
    kappa_lo: u32,
    kappa_hi: u32,
) -> Option<ResourcePlan> {
    let mut best: Option<ResourcePlan> = None;
    for i in 1..=SCAN_POWER_POINTS {
        let p = caps.max_power_w * (i as f64 / SCAN_POWER_POINTS as f64);
        for kappa in kappa_lo..=kappa_hi {
            let Some(f) = optimal_freq(caps, link, kappa, p) else {
                continue;
            };
            if !plan_is_feasible(caps, link, kappa, f, p, cfg.kappa_max) {
                continue;
            }
            let obj = objective(caps, link, kappa, f, p, cfg.comp_weight);
            if best.as_ref().map_or(true, |b| obj > b.objective) {
                best = Some(ResourcePlan {
                    kappa,
                    freq_hz: f,
                    power_w: p,
                    feasible: true,
                    objective: obj,
                });
            }
        }
    }
    best
}

/// Joint per-client resource plan. Runs the block-coordinate sweep
/// (κ sub-solver → f̄ sub-solver → SCA power solve) from the configured
/// starting point until the objective settles, then refines the result
/// with a deterministic multi-start of the same sweep over a fine power
/// ladder: at the converged κ when the sweep succeeded, or over the whole
/// κ range as a rescue otherwise. Never errors — if no restart finds a
/// feasible point either, the client is a straggler this round.
///
/// The refinement exists because each sub-solver's optimum sits on the
/// deadline boundary shared with the next variable, so a single sweep
/// can never move the transmit power off its initial value; restarting
/// from every ladder power provably covers any point a coarse feasibility
/// grid can find.
pub fn optimize(caps: &DeviceCaps, link: &LinkState, cfg: &OptimConfig) -> ResourcePlan {
    let mut freq = cfg.init_freq_frac * caps.max_freq_hz;
    let mut power = cfg.init_power_frac * caps.max_power_w;
    let mut kappa = 0u32;
    let mut prev_obj = f64::NEG_INFINITY;
    let mut settled = false;

    for _ in 0..cfg.outer_iters {
        let step = optimal_kappa(caps, link, freq, power, cfg.kappa_max)
            .and_then(|k| optimal_freq(caps, link, k, power).map(|f| (k, f)))
            .and_then(|(k, f)| sca_power(caps, link, k, f, cfg).map(|p| (k, f, p)));
        let (k, f, p) = match step {
            Some(t) => t,
            None => {
                settled = false;
                break;
            }
        };
        kappa = k;
        freq = f;
        power = p;
        settled = true;
        let obj = objective(caps, link, k, f, p, cfg.comp_weight);
        if math::abs(obj - prev_obj) < cfg.objective_tol {
            prev_obj = obj;
            break;
        }
        prev_obj = obj;
    }

    let swept = if settled && plan_is_feasible(caps, link, kappa, freq, power, cfg.kappa_max) {
        Some(ResourcePlan {
            kappa,
            freq_hz: freq,
            power_w: power,
            feasible: true,
            objective: prev_obj,
        })
    } else {
        None
    };
    // Keep the sweep's local-step count when it found one: Lemma-style κ
    // selection maximizes local work, which the learning side wants even
    // where a smaller κ would nudge the efficiency objective.
    let (lo, hi) = match &swept {
        Some(plan) => (plan.kappa, plan.kappa),
        None => (1, cfg.kappa_max),
    };
    let scanned = restart_scan(caps, link, cfg, lo, hi);
    match (swept, scanned) {
        (Some(a), Some(b)) => {
            if b.objective > a.objective {
                b
            } else {
                a
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => ResourcePlan::straggler(),
    }
}
