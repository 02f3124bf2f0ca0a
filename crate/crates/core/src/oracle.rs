//! Exact expectation-level ground truth for the virtual protocol.
//!
//! A scenario fixes, for every pulse slot, the actual intensity of each of
//! the ten sources (five per party) and an arbitrary per-slot yield and
//! error-yield matrix over photon-number classes. Every tally the security
//! derivation manipulates is then an exact expectation:
//!
//! ```text
//! D_jk      = sum_i y_jk^i                       (source-independent tally)
//! n_jk^lr   = sum_i p_l p_r a_j^li b_k^ri y_jk^i (per-source class counts)
//! G_jk      = sum_i t_jk^i                       (error tally)
//! m_jk^lr   = sum_i p_l p_r a_j^li b_k^ri t_jk^i
//! ```
//!
//! so every inequality used by the bounds module can be checked without
//! statistical tolerance. Both bases tally the same slot population with
//! their own source grids (`w,y,z` against `v,x`); in particular the
//! single-photon yield is basis-independent, which the error-rate bound
//! relies on when it reuses the Z-basis single-photon estimate.
//!
//! Per-slot yields may be arbitrary numbers in `[0,1]`, strictly subsuming
//! any physical channel: this models an adversary that knows the error of
//! each pulse.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::channel::{ChannelParams, ObservedStats, YieldMatrix, X_SOURCES, Z_SOURCES};
use crate::error::{Error, Result};
use crate::fock::{fill_class_coeffs, CoeffIntervalSet, PartyEnsemble, Source};

/// How per-slot intensities and yields are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioMode {
    /// Every pulse exactly at nominal intensity, channel-model yields.
    UniformDelta,
    /// I.i.d. uniform intensity deviations inside the fluctuation box.
    RandomDelta,
    /// Extremal corner deviations, slot-indexed so all sign patterns of
    /// both parties are exercised.
    AdversarialDelta,
    /// Corner/random deviations plus per-slot, per-class yield scaling
    /// `y^i = u * y_channel` with `u ~ U[0,1]`, and a per-slot error
    /// fraction `t^i = v * y^i` with `v ~ U[0,1]`.
    RandomYields,
}

impl ScenarioMode {
    pub const ALL: [ScenarioMode; 4] = [
        ScenarioMode::UniformDelta,
        ScenarioMode::RandomDelta,
        ScenarioMode::AdversarialDelta,
        ScenarioMode::RandomYields,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioMode::UniformDelta => "uniform-delta",
            ScenarioMode::RandomDelta => "random-delta",
            ScenarioMode::AdversarialDelta => "adversarial-delta",
            ScenarioMode::RandomYields => "random-yields",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Concrete per-pulse intensities and yields for `n_pulses` slots.
#[derive(Clone, Debug, PartialEq)]
pub struct PerPulseScenario {
    n_pulses: usize,
    kmax: usize,
    /// Per slot, per source (Source order): actual intensity.
    alice_intensities: Vec<[f64; 5]>,
    bob_intensities: Vec<[f64; 5]>,
    /// Row-major `classes x classes` per slot.
    yields: Vec<f64>,
    error_yields: Vec<f64>,
    seed: u64,
    mode: ScenarioMode,
}

/// Number of photon-number classes for a truncation order (`0..=kmax`
/// plus the tail class).
fn class_count(kmax: usize) -> usize {
    kmax + 2
}

impl PerPulseScenario {
    pub fn n_pulses(&self) -> usize {
        self.n_pulses
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn classes(&self) -> usize {
        class_count(self.kmax)
    }

    pub fn mode(&self) -> ScenarioMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn intensity(&self, slot: usize, party_a: bool, s: Source) -> f64 {
        if party_a {
            self.alice_intensities[slot][s as usize]
        } else {
            self.bob_intensities[slot][s as usize]
        }
    }

    fn y_slot(&self, slot: usize) -> &[f64] {
        let cc = self.classes() * self.classes();
        &self.yields[slot * cc..(slot + 1) * cc]
    }

    fn t_slot(&self, slot: usize) -> &[f64] {
        let cc = self.classes() * self.classes();
        &self.error_yields[slot * cc..(slot + 1) * cc]
    }

    /// Scales every per-slot yield and error yield by `c in (0,1]`.
    pub fn scale_yields(&mut self, c: f64) {
        for v in self.yields.iter_mut().chain(self.error_yields.iter_mut()) {
            *v *= c;
        }
    }

    /// Serializes to the line-oriented fixture format: a header followed by
    /// one `slot` line per pulse carrying the ten intensities, the yield
    /// matrix, and the error-yield matrix.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("mdi-decoy-scenario v1\n");
        let _ = writeln!(out, "n_pulses {}", self.n_pulses);
        let _ = writeln!(out, "kmax {}", self.kmax);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "mode {}", self.mode.name());
        for i in 0..self.n_pulses {
            out.push_str("slot");
            for &mu in &self.alice_intensities[i] {
                let _ = write!(out, " {mu}");
            }
            for &mu in &self.bob_intensities[i] {
                let _ = write!(out, " {mu}");
            }
            for &y in self.y_slot(i) {
                let _ = write!(out, " {y}");
            }
            for &t in self.t_slot(i) {
                let _ = write!(out, " {t}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the fixture format produced by [`Self::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, detail: &str| Error::ScenarioParse {
            line,
            detail: detail.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, magic) = lines.next().ok_or_else(|| err(1, "empty input"))?;
        if magic.trim() != "mdi-decoy-scenario v1" {
            return Err(err(1, "missing `mdi-decoy-scenario v1` header"));
        }
        let mut n_pulses: Option<usize> = None;
        let mut kmax: Option<usize> = None;
        let mut seed: Option<u64> = None;
        let mut mode: Option<ScenarioMode> = None;
        let mut alice_intensities = Vec::new();
        let mut bob_intensities = Vec::new();
        let mut yields = Vec::new();
        let mut error_yields = Vec::new();
        for (idx, raw) in lines {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            match key {
                "n_pulses" | "kmax" | "seed" => {
                    let v = parts
                        .next()
                        .ok_or_else(|| err(lineno, "missing value"))?
                        .parse::<u64>()
                        .map_err(|_| err(lineno, "value must be a non-negative integer"))?;
                    if parts.next().is_some() {
                        return Err(err(lineno, "trailing tokens"));
                    }
                    match key {
                        "n_pulses" => n_pulses = Some(v as usize),
                        "kmax" => {
                            if !(2..=64).contains(&v) {
                                return Err(err(lineno, "kmax must lie in 2..=64"));
                            }
                            kmax = Some(v as usize)
                        }
                        _ => seed = Some(v),
                    }
                }
                "mode" => {
                    let name = parts.next().ok_or_else(|| err(lineno, "missing mode"))?;
                    mode = Some(
                        ScenarioMode::from_name(name)
                            .ok_or_else(|| err(lineno, "unknown scenario mode"))?,
                    );
                }
                "slot" => {
                    let kmax = kmax.ok_or_else(|| err(lineno, "kmax must precede slots"))?;
                    let classes = class_count(kmax);
                    let expected = 10 + 2 * classes * classes;
                    let mut vals = Vec::with_capacity(expected);
                    for tok in parts {
                        let v: f64 = tok
                            .parse()
                            .map_err(|_| err(lineno, "slot entries must be numbers"))?;
                        if !v.is_finite() {
                            return Err(err(lineno, "slot entries must be finite"));
                        }
                        vals.push(v);
                    }
                    if vals.len() != expected {
                        return Err(err(lineno, "wrong number of slot entries"));
                    }
                    let mut a = [0.0; 5];
                    let mut b = [0.0; 5];
                    for s in 0..5 {
                        if vals[s] < 0.0 || vals[5 + s] < 0.0 {
                            return Err(err(lineno, "intensities must be non-negative"));
                        }
                        a[s] = vals[s];
                        b[s] = vals[5 + s];
                    }
                    let cc = classes * classes;
                    let y = &vals[10..10 + cc];
                    let t = &vals[10 + cc..];
                    for e in 0..cc {
                        if !(0.0..=1.0).contains(&y[e]) || t[e] < 0.0 || t[e] > y[e] {
                            return Err(err(lineno, "need 0 <= t <= y <= 1 per class pair"));
                        }
                    }
                    alice_intensities.push(a);
                    bob_intensities.push(b);
                    yields.extend_from_slice(y);
                    error_yields.extend_from_slice(t);
                }
                _ => return Err(err(lineno, "unknown directive")),
            }
        }
        let n_pulses = n_pulses.ok_or_else(|| err(1, "missing n_pulses"))?;
        let kmax = kmax.ok_or_else(|| err(1, "missing kmax"))?;
        if alice_intensities.len() != n_pulses {
            return Err(Error::ScenarioParse {
                line: 1,
                detail: format!(
                    "declared {} pulses, found {} slot lines",
                    n_pulses,
                    alice_intensities.len()
                ),
            });
        }
        Ok(Self {
            n_pulses,
            kmax,
            alice_intensities,
            bob_intensities,
            yields,
            error_yields,
            seed: seed.unwrap_or(0),
            mode: mode.unwrap_or(ScenarioMode::UniformDelta),
        })
    }
}

/// Draws a scenario for the configured ensembles and channel.
/// Deterministic for a given `(mode, seed)`.
pub fn generate_scenario(
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
    params: &ChannelParams,
    n_pulses: usize,
    mode: ScenarioMode,
    seed: u64,
) -> Result<PerPulseScenario> {
    let kmax = alice.kmax();
    if bob.kmax() != kmax {
        return Err(Error::InvalidParameter {
            name: "kmax",
            value: bob.kmax() as f64,
            requirement: "alice and bob must share one truncation order",
        });
    }
    params.validate()?;
    let classes = class_count(kmax);
    let cc = classes * classes;
    let base = YieldMatrix::linear_model(params, kmax);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut alice_intensities = Vec::with_capacity(n_pulses);
    let mut bob_intensities = Vec::with_capacity(n_pulses);
    let mut yields = Vec::with_capacity(n_pulses * cc);
    let mut error_yields = Vec::with_capacity(n_pulses * cc);

    // Corner sign patterns for the adversarial mode: five bits per party,
    // one per source, cycled so every (alice, bob) pattern pair occurs.
    let corner = |bits: u64, s: Source| {
        if bits >> (s as u64) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    };
    let offset_a = seed % 32;
    let offset_b = (seed / 32) % 32;

    for i in 0..n_pulses {
        let mut a = [0.0; 5];
        let mut b = [0.0; 5];
        for s in Source::ALL {
            let fill = |ens: &PartyEnsemble, rng: &mut ChaCha20Rng, bits: u64| {
                let mu = ens.nominal_intensity(s);
                let dmax = ens.delta_for(s);
                let d = match mode {
                    ScenarioMode::UniformDelta => 0.0,
                    ScenarioMode::RandomDelta | ScenarioMode::RandomYields => {
                        if dmax == 0.0 {
                            0.0
                        } else {
                            rng.gen_range(-dmax..=dmax)
                        }
                    }
                    ScenarioMode::AdversarialDelta => dmax * corner(bits, s),
                };
                mu * (1.0 + d)
            };
            let bits_a = (i as u64 + offset_a) % 32;
            let bits_b = (i as u64 / 32 + offset_b) % 32;
            a[s as usize] = fill(alice, &mut rng, bits_a);
            b[s as usize] = fill(bob, &mut rng, bits_b);
        }
        alice_intensities.push(a);
        bob_intensities.push(b);
        match mode {
            ScenarioMode::RandomYields => {
                for e in 0..cc {
                    let y = base.y_flat()[e] * rng.gen_range(0.0..=1.0);
                    let t = y * rng.gen_range(0.0..=1.0);
                    yields.push(y);
                    error_yields.push(t);
                }
            }
            _ => {
                yields.extend_from_slice(base.y_flat());
                error_yields.extend_from_slice(base.t_flat());
            }
        }
    }

    Ok(PerPulseScenario {
        n_pulses,
        kmax,
        alice_intensities,
        bob_intensities,
        yields,
        error_yields,
        seed,
        mode,
    })
}

/// Neumaier-compensated accumulator: the per-slot folds must not lose the
/// 1e-12-level identities to plain summation noise.
#[derive(Clone, Copy, Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Every exact tally of one scenario.
#[derive(Clone, Debug)]
pub struct ExactTallies {
    classes: usize,
    /// `D_jk`, row-major.
    d: Vec<f64>,
    /// `G_jk`, row-major.
    g: Vec<f64>,
    /// `n_jk^lr` on the Z grid, `[l][r]` in `Z_SOURCES` order.
    n_z: Vec<f64>,
    /// `n_jk^lr` (counts) on the X grid.
    n_x: Vec<f64>,
    /// `m_jk^lr` (error counts) on the X grid.
    m_x: Vec<f64>,
    /// Aggregate counts `N_lr` on the Z grid.
    pub big_n_z: [[f64; 3]; 3],
    /// Aggregate non-vacuum counts (both classes >= 1) on the Z grid.
    pub n_tilde_z: [[f64; 3]; 3],
    /// Aggregate counts on the X grid.
    pub big_n_x: [[f64; 2]; 2],
    /// Aggregate error counts `M_lr` on the X grid.
    pub big_m_x: [[f64; 2]; 2],
    /// Non-vacuum part of `M_xx`.
    pub m_tilde_xx: f64,
    /// Vacuum-involving part of `M_xx` (`M_xx - m_tilde_xx`).
    pub m_xx_v: f64,
    /// Weighted signal-source error mass, for the QBER.
    t_zz: f64,
    n_pulses: f64,
}

impl ExactTallies {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn d(&self, j: usize, k: usize) -> f64 {
        self.d[j * self.classes + k]
    }

    pub fn g(&self, j: usize, k: usize) -> f64 {
        self.g[j * self.classes + k]
    }

    /// Exact single-photon pair tally.
    pub fn d11(&self) -> f64 {
        self.d(1, 1)
    }

    /// Exact single-photon error tally.
    pub fn g11(&self) -> f64 {
        self.g(1, 1)
    }

    /// Exact `n_jk^lr` on the Z grid.
    pub fn n_z(&self, l: Source, r: Source, j: usize, k: usize) -> f64 {
        let (li, ri) = (crate::channel::z_index(l), crate::channel::z_index(r));
        self.n_z[((li * 3 + ri) * self.classes + j) * self.classes + k]
    }

    /// Exact count `n_jk^lr` on the X grid.
    pub fn n_x(&self, l: Source, r: Source, j: usize, k: usize) -> f64 {
        let (li, ri) = (crate::channel::x_index(l), crate::channel::x_index(r));
        self.n_x[((li * 2 + ri) * self.classes + j) * self.classes + k]
    }

    /// Exact error count `m_jk^lr` on the X grid.
    pub fn m_x(&self, l: Source, r: Source, j: usize, k: usize) -> f64 {
        let (li, ri) = (crate::channel::x_index(l), crate::channel::x_index(r));
        self.m_x[((li * 2 + ri) * self.classes + j) * self.classes + k]
    }
}

/// Folds the scenario into its exact tallies. Selection probabilities come
/// from the ensembles; per-pulse coefficients from the scenario intensities.
pub fn exact_tallies(
    scn: &PerPulseScenario,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<ExactTallies> {
    let kmax = scn.kmax();
    if alice.kmax() != kmax || bob.kmax() != kmax {
        return Err(Error::InvalidParameter {
            name: "kmax",
            value: kmax as f64,
            requirement: "scenario and ensembles must share one truncation order",
        });
    }
    let classes = scn.classes();
    let cc = classes * classes;

    let mut d = vec![Acc::default(); cc];
    let mut g = vec![Acc::default(); cc];
    let mut n_z = vec![Acc::default(); 9 * cc];
    let mut n_x = vec![Acc::default(); 4 * cc];
    let mut m_x = vec![Acc::default(); 4 * cc];
    let mut t_zz = Acc::default();

    // Per-slot scratch: probability-weighted class coefficients.
    let mut coef_a = vec![0.0; 5 * classes];
    let mut coef_b = vec![0.0; 5 * classes];

    let pa: Vec<f64> = Source::ALL
        .iter()
        .map(|&s| alice.source(s).select_prob())
        .collect();
    let pb: Vec<f64> = Source::ALL
        .iter()
        .map(|&s| bob.source(s).select_prob())
        .collect();

    for i in 0..scn.n_pulses() {
        for s in Source::ALL {
            let si = s as usize;
            fill_class_coeffs(
                scn.intensity(i, true, s),
                kmax,
                &mut coef_a[si * classes..(si + 1) * classes],
            );
            fill_class_coeffs(
                scn.intensity(i, false, s),
                kmax,
                &mut coef_b[si * classes..(si + 1) * classes],
            );
        }
        let y = scn.y_slot(i);
        let t = scn.t_slot(i);

        for j in 0..classes {
            for k in 0..classes {
                let e = j * classes + k;
                let (ye, te) = (y[e], t[e]);
                if ye == 0.0 && te == 0.0 {
                    continue;
                }
                d[e].add(ye);
                g[e].add(te);
                for (li, &l) in Z_SOURCES.iter().enumerate() {
                    let aj = pa[l as usize] * coef_a[(l as usize) * classes + j];
                    for (ri, &r) in Z_SOURCES.iter().enumerate() {
                        let bk = pb[r as usize] * coef_b[(r as usize) * classes + k];
                        n_z[(li * 3 + ri) * cc + e].add(aj * bk * ye);
                    }
                }
                for (li, &l) in X_SOURCES.iter().enumerate() {
                    let aj = pa[l as usize] * coef_a[(l as usize) * classes + j];
                    for (ri, &r) in X_SOURCES.iter().enumerate() {
                        let bk = pb[r as usize] * coef_b[(r as usize) * classes + k];
                        n_x[(li * 2 + ri) * cc + e].add(aj * bk * ye);
                        m_x[(li * 2 + ri) * cc + e].add(aj * bk * te);
                    }
                }
                let zi = Source::Z as usize;
                t_zz.add(pa[zi] * coef_a[zi * classes + j] * pb[zi] * coef_b[zi * classes + k] * te);
            }
        }
    }

    let resolve = |acc: Vec<Acc>| -> Vec<f64> { acc.into_iter().map(Acc::value).collect() };
    let d = resolve(d);
    let g = resolve(g);
    let n_z = resolve(n_z);
    let n_x = resolve(n_x);
    let m_x = resolve(m_x);

    let sum_grid = |m: &[f64], base: usize, from_one: bool| -> f64 {
        let mut acc = Acc::default();
        for j in 0..classes {
            for k in 0..classes {
                if from_one && (j == 0 || k == 0) {
                    continue;
                }
                acc.add(m[base + j * classes + k]);
            }
        }
        acc.value()
    };

    let mut big_n_z = [[0.0; 3]; 3];
    let mut n_tilde_z = [[0.0; 3]; 3];
    for li in 0..3 {
        for ri in 0..3 {
            big_n_z[li][ri] = sum_grid(&n_z, (li * 3 + ri) * cc, false);
            n_tilde_z[li][ri] = sum_grid(&n_z, (li * 3 + ri) * cc, true);
        }
    }
    let mut big_n_x = [[0.0; 2]; 2];
    let mut big_m_x = [[0.0; 2]; 2];
    for li in 0..2 {
        for ri in 0..2 {
            big_n_x[li][ri] = sum_grid(&n_x, (li * 2 + ri) * cc, false);
            big_m_x[li][ri] = sum_grid(&m_x, (li * 2 + ri) * cc, false);
        }
    }
    // The (x, x) cell sits at grid index 1*2 + 1.
    let m_tilde_xx = sum_grid(&m_x, 3 * cc, true);
    let m_xx_v = big_m_x[1][1] - m_tilde_xx;

    Ok(ExactTallies {
        classes,
        d,
        g,
        n_z,
        n_x,
        m_x,
        big_n_z,
        n_tilde_z,
        big_n_x,
        big_m_x,
        m_tilde_xx,
        m_xx_v,
        t_zz: t_zz.value(),
        n_pulses: scn.n_pulses() as f64,
    })
}

/// Converts exact tallies into the observable statistics an experiment
/// would report for this scenario.
pub fn observables_from_scenario(
    scn: &PerPulseScenario,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<ObservedStats> {
    if scn.n_pulses() == 0 {
        return Err(Error::EmptyScenario);
    }
    let tallies = exact_tallies(scn, alice, bob)?;
    observables_from_tallies(&tallies, alice, bob)
}

/// Same as [`observables_from_scenario`] for pre-computed tallies.
pub fn observables_from_tallies(
    tallies: &ExactTallies,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<ObservedStats> {
    let nt = tallies.n_pulses;
    if nt == 0.0 {
        return Err(Error::EmptyScenario);
    }
    let mut s_z = [[0.0; 3]; 3];
    for (li, &l) in Z_SOURCES.iter().enumerate() {
        for (ri, &r) in Z_SOURCES.iter().enumerate() {
            s_z[li][ri] = tallies.big_n_z[li][ri]
                / (alice.source(l).select_prob() * bob.source(r).select_prob() * nt);
        }
    }
    let mut s_x = [[0.0; 2]; 2];
    let mut t_x = [[0.0; 2]; 2];
    for (li, &l) in X_SOURCES.iter().enumerate() {
        for (ri, &r) in X_SOURCES.iter().enumerate() {
            let norm = alice.source(l).select_prob() * bob.source(r).select_prob() * nt;
            s_x[li][ri] = tallies.big_n_x[li][ri] / norm;
            t_x[li][ri] = tallies.big_m_x[li][ri] / norm;
        }
    }
    let s_zz = s_z[2][2];
    if s_zz == 0.0 {
        return Err(Error::QberUndefined);
    }
    let pz = alice.source(Source::Z).select_prob() * bob.source(Source::Z).select_prob();
    let e_zz = tallies.t_zz / (pz * nt) / s_zz;
    // Clamp sub-ulp excursions: exact values are probabilities by
    // construction.
    let clamp01 = |v: f64| v.clamp(0.0, 1.0);
    for row in s_z.iter_mut() {
        for v in row.iter_mut() {
            *v = clamp01(*v);
        }
    }
    for li in 0..2 {
        for ri in 0..2 {
            s_x[li][ri] = clamp01(s_x[li][ri]);
            t_x[li][ri] = t_x[li][ri].clamp(0.0, s_x[li][ri]);
        }
    }
    ObservedStats::new(nt, s_z, s_x, t_x, clamp01(e_zz))
}

/// The exact quantities every certified bound is compared against.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Exact single-photon pair tally.
    pub d11: f64,
    /// Exact single-photon error tally.
    pub g11: f64,
    /// Exact single-photon fraction of signal counts; `None` when the
    /// signal source caused no counts.
    pub delta11: Option<f64>,
    /// Exact single-photon error rate; `None` when `xx` saw no
    /// single-photon counts.
    pub e11: Option<f64>,
    /// Exact non-vacuum counts on the Z grid.
    pub n_tilde_z: [[f64; 3]; 3],
    /// Exact non-vacuum part of the `xx` error count.
    pub m_tilde_xx: f64,
}

/// Extracts the comparison targets from exact tallies.
pub fn ground_truth_targets(
    tallies: &ExactTallies,
    _alice: &PartyEnsemble,
    _bob: &PartyEnsemble,
) -> GroundTruth {
    let n_zz = tallies.big_n_z[2][2];
    let delta11 = if n_zz > 0.0 {
        Some(tallies.n_z(Source::Z, Source::Z, 1, 1) / n_zz)
    } else {
        None
    };
    let n11_xx = tallies.n_x(Source::X, Source::X, 1, 1);
    let e11 = if n11_xx > 0.0 {
        Some(tallies.m_x(Source::X, Source::X, 1, 1) / n11_xx)
    } else {
        None
    };
    GroundTruth {
        d11: tallies.d11(),
        g11: tallies.g11(),
        delta11,
        e11,
        n_tilde_z: tallies.n_tilde_z,
        m_tilde_xx: tallies.m_tilde_xx,
    }
}

/// Exact values of the derivation's slack terms and of the vacuum-part
/// decomposition identity.
#[derive(Clone, Debug)]
pub struct SlackReport {
    /// Slacks from bounding per-pulse coefficients by their extremes in the
    /// two-source count relation (decoy and signal respectively).
    pub xi: [f64; 3],
    /// Slacks from the vacuum-reference contamination chain.
    pub zeta: [f64; 3],
    /// `N_yy` and the recomposition `vac_part + nonvacuum - A - B + C`.
    pub identity_lhs: f64,
    pub identity_rhs: f64,
    pub identity_residual_rel: f64,
    /// Violated inequalities, if any (signals a gate or implementation bug).
    pub violations: Vec<String>,
}

impl SlackReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Absolute tolerance for slack non-negativity at desk scale.
const SLACK_TOL: f64 = 1e-12;
/// Relative tolerance for the decomposition identity.
const IDENTITY_TOL: f64 = 1e-12;

/// Interval bounds per class, tail class included.
fn class_bounds(set: &CoeffIntervalSet) -> (Vec<f64>, Vec<f64>) {
    let kmax = set.kmax();
    let mut lower: Vec<f64> = (0..=kmax).map(|k| set.lower(k)).collect();
    let mut upper: Vec<f64> = (0..=kmax).map(|k| set.upper(k)).collect();
    lower.push(set.tail_lower());
    upper.push(set.tail_upper());
    (lower, upper)
}

/// Recomputes, exactly, every slack term the derivation claims
/// non-negative, plus the decomposition identity for `N_yy`.
pub fn verify_derivation_slacks(
    scn: &PerPulseScenario,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> Result<SlackReport> {
    let kmax = scn.kmax();
    if alice.kmax() != kmax || bob.kmax() != kmax {
        return Err(Error::InvalidParameter {
            name: "kmax",
            value: kmax as f64,
            requirement: "scenario and ensembles must share one truncation order",
        });
    }
    let classes = scn.classes();

    let (ay_l, ay_u) = class_bounds(alice.source(Source::Y));
    let (by_l, by_u) = class_bounds(bob.source(Source::Y));
    let (az_l, _az_u) = class_bounds(alice.source(Source::Z));
    let (bz_l, _bz_u) = class_bounds(bob.source(Source::Z));
    let (_aw_l, aw_u) = class_bounds(alice.source(Source::W));
    let (_bw_l, bw_u) = class_bounds(bob.source(Source::W));

    let p_y = alice.source(Source::Y).select_prob() * bob.source(Source::Y).select_prob();
    let p_z = alice.source(Source::Z).select_prob() * bob.source(Source::Z).select_prob();

    let sigma_1 = ay_u[0] * by_u[0]
        / (alice.source(Source::W).lower(0) * bob.source(Source::W).lower(0));
    let sigma_2 = aw_u[1] * bw_u[1] / (ay_l[1] * by_l[1]);

    let (k_a, k_b) = crate::bounds::anchor_ratios(alice, bob);
    let k_anchor = k_a.min(k_b);

    let mut xi1 = Acc::default();
    let mut xi2 = Acc::default();
    let mut zeta1 = Acc::default();
    let mut zeta2 = Acc::default();
    let mut zeta3 = Acc::default();
    let mut n_yy = Acc::default();
    let mut n_tilde_yy = Acc::default();
    let mut vac_part = Acc::default();
    let mut a_term = Acc::default();
    let mut b_term = Acc::default();
    let mut c_term = Acc::default();
    let mut d_mat = vec![Acc::default(); classes * classes];

    let mut ca_w = vec![0.0; classes];
    let mut cb_w = vec![0.0; classes];
    let mut ca_y = vec![0.0; classes];
    let mut cb_y = vec![0.0; classes];
    let mut ca_z = vec![0.0; classes];
    let mut cb_z = vec![0.0; classes];

    for i in 0..scn.n_pulses() {
        fill_class_coeffs(scn.intensity(i, true, Source::W), kmax, &mut ca_w);
        fill_class_coeffs(scn.intensity(i, false, Source::W), kmax, &mut cb_w);
        fill_class_coeffs(scn.intensity(i, true, Source::Y), kmax, &mut ca_y);
        fill_class_coeffs(scn.intensity(i, false, Source::Y), kmax, &mut cb_y);
        fill_class_coeffs(scn.intensity(i, true, Source::Z), kmax, &mut ca_z);
        fill_class_coeffs(scn.intensity(i, false, Source::Z), kmax, &mut cb_z);
        let y = scn.y_slot(i);

        // Per-pulse contamination ratios of this slot.
        let rho_0 = ca_y[0] * cb_y[0] / (ca_w[0] * cb_w[0]);
        let rho_a = ca_y[0] / ca_w[0];
        let rho_b = cb_y[0] / cb_w[0];
        let rho_1 = ca_w[1] * cb_w[1] / (ca_y[1] * cb_y[1]);

        for j in 0..classes {
            for k in 0..classes {
                let ye = y[j * classes + k];
                if ye == 0.0 {
                    continue;
                }
                d_mat[j * classes + k].add(ye);
                let yy = ca_y[j] * cb_y[k];
                let ww = ca_w[j] * cb_w[k];
                n_yy.add(p_y * yy * ye);
                vac_part.add(p_y * (rho_a * ca_w[j] * cb_y[k] + rho_b * ca_y[j] * cb_w[k]
                    - rho_0 * ww) * ye);
                if j >= 1 && k >= 1 {
                    n_tilde_yy.add(p_y * yy * ye);
                    xi1.add(p_y * (ay_u[j] * by_u[k] - yy) * ye);
                    xi2.add(p_z * (ca_z[j] * cb_z[k] - az_l[j] * bz_l[k]) * ye);
                    zeta1.add(p_y * (sigma_1 - rho_0) * ww * ye);
                    zeta2.add(p_y * sigma_1 * (rho_1 * yy - ww) * ye);
                    zeta3.add(p_y * sigma_1 * (sigma_2 - rho_1) * yy * ye);
                    a_term.add(p_y * rho_a * ca_w[j] * cb_y[k] * ye);
                    b_term.add(p_y * rho_b * ca_y[j] * cb_w[k] * ye);
                    c_term.add(p_y * rho_0 * ww * ye);
                }
            }
        }
    }

    // xi_3 sums over both-nonvacuum class pairs except (1,1), weighted by
    // the source-independent tally.
    let mut xi3 = Acc::default();
    for j in 1..classes {
        for k in 1..classes {
            if j == 1 && k == 1 {
                continue;
            }
            xi3.add(
                p_z * (az_l[j] * bz_l[k] - k_anchor * ay_u[j] * by_u[k])
                    * d_mat[j * classes + k].value(),
            );
        }
    }

    let xi = [xi1.value(), xi2.value(), xi3.value()];
    let zeta = [zeta1.value(), zeta2.value(), zeta3.value()];
    let identity_lhs = n_yy.value();
    let identity_rhs =
        vac_part.value() + n_tilde_yy.value() - a_term.value() - b_term.value() + c_term.value();
    let identity_residual_rel = (identity_lhs - identity_rhs).abs()
        / identity_lhs.abs().max(identity_rhs.abs()).max(1e-300);

    let mut violations = Vec::new();
    for (name, v) in [
        ("xi_1", xi[0]),
        ("xi_2", xi[1]),
        ("xi_3", xi[2]),
        ("zeta_1", zeta[0]),
        ("zeta_2", zeta[1]),
        ("zeta_3", zeta[2]),
    ] {
        if v < -SLACK_TOL {
            violations.push(format!("slack {name} = {v} is negative"));
        }
    }
    if identity_residual_rel >= IDENTITY_TOL {
        violations.push(format!(
            "decomposition identity residual {identity_residual_rel} exceeds {IDENTITY_TOL}"
        ));
    }

    Ok(SlackReport {
        xi,
        zeta,
        identity_lhs,
        identity_rhs,
        identity_residual_rel,
        violations,
    })
}

/// Checks that every per-pulse class coefficient of every source lies
/// inside the interval set handed to the bounds module. This is the
/// precondition of all soundness comparisons.
pub fn check_containment(
    scn: &PerPulseScenario,
    alice: &PartyEnsemble,
    bob: &PartyEnsemble,
) -> std::result::Result<(), String> {
    let kmax = scn.kmax();
    let classes = scn.classes();
    let mut coefs = vec![0.0; classes];
    for i in 0..scn.n_pulses() {
        for (party, ens, is_a) in [("alice", alice, true), ("bob", bob, false)] {
            for s in Source::ALL {
                fill_class_coeffs(scn.intensity(i, is_a, s), kmax, &mut coefs);
                let dist = crate::fock::PhotonDistribution {
                    coeffs: coefs[..=kmax].to_vec(),
                    tail_mass: coefs[kmax + 1],
                };
                if !ens.source(s).contains(&dist, 1e-13) {
                    return Err(format!(
                        "slot {i}, {party} source {}: per-pulse coefficients escape the \
                         declared intervals",
                        s.label()
                    ));
                }
            }
        }
    }
    Ok(())
}
