//! The linearized, time-differentiated inverse problem: simulated boundary
//! measurements, the closed-form initial value of the solution difference,
//! weighted coefficient functionals, stability-ratio experiments, and two
//! reconstruction paths (an exact nodewise algebra over interior data and a
//! regularized least-squares fit to boundary traces).

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::carleman::{boundary_functional_i, CarlemanWeights};
use crate::coeffs::{coefficient_distance, CoefficientSet};
use crate::dynamics::{compatibility_boundary_data, solve_ibvp, HamiltonianOperator};
use crate::fields::{
    boundary_weights, divergence, gradient, neumann_trace, node_weights, time_derivative,
    FieldKind, Grid, ScalarField, Trajectory, TwoStateField, VectorField,
};
use crate::probing::{ProbeLabel, ProbeSet};
use crate::{Error, Result};

const I: C64 = C64::new(0.0, 1.0);
const M_ONE: C64 = C64::new(-1.0, 0.0);

/// Default number of Taylor levels used when manufacturing compatible
/// boundary data for a probe.
pub const DEFAULT_TAYLOR_ORDER: usize = 2;

/// Boundary traces of the time-differentiated solution for one probe:
/// normal derivatives on the observation boundary at every time level.
#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    pub probe: usize,
    /// `[time level][observation node]` for the plus state.
    pub plus: Vec<Vec<C64>>,
    /// `[time level][observation node]` for the minus state.
    pub minus: Vec<Vec<C64>>,
    pub gamma0: Vec<usize>,
    pub dt: f64,
}

impl MeasurementRecord {
    pub fn n_levels(&self) -> usize {
        self.plus.len()
    }
}

/// Difference of two coefficient sets, component by component.
#[derive(Debug, Clone)]
pub struct CoefficientDiff {
    pub a_plus: VectorField,
    pub a_minus: VectorField,
    pub q_plus: ScalarField,
    pub q_minus: ScalarField,
    pub phi_vec: VectorField,
    pub phi_scal: ScalarField,
}

impl CoefficientDiff {
    pub fn zero(grid: Arc<Grid>) -> Self {
        Self {
            a_plus: VectorField::zeros(grid.clone(), FieldKind::Complex),
            a_minus: VectorField::zeros(grid.clone(), FieldKind::Complex),
            q_plus: ScalarField::zeros(grid.clone()),
            q_minus: ScalarField::zeros(grid.clone()),
            phi_vec: VectorField::zeros(grid.clone(), FieldKind::Complex),
            phi_scal: ScalarField::zeros(grid),
        }
    }

    pub fn from_sets(c1: &CoefficientSet, c2: &CoefficientSet) -> Self {
        Self {
            a_plus: complexify(&c1.a_plus.axpy(M_ONE, &c2.a_plus)),
            a_minus: complexify(&c1.a_minus.axpy(M_ONE, &c2.a_minus)),
            q_plus: c1.q_plus.axpy(M_ONE, &c2.q_plus),
            q_minus: c1.q_minus.axpy(M_ONE, &c2.q_minus),
            phi_vec: complexify(&c1.phi_vec.axpy(M_ONE, &c2.phi_vec)),
            phi_scal: c1.phi_scal.axpy(M_ONE, &c2.phi_scal),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.q_plus.grid()
    }

    /// Relative L2 distance to another difference, summed over all
    /// components (plus the divergence terms), normalized by the size of
    /// `other`.
    pub fn rel_l2_error(&self, other: &CoefficientDiff) -> f64 {
        let wq = node_weights(self.grid());
        let mut num = 0.0;
        let mut den = 0.0;
        let scalars = [
            (&self.q_plus, &other.q_plus),
            (&self.q_minus, &other.q_minus),
            (&self.phi_scal, &other.phi_scal),
        ];
        for (a, b) in scalars {
            for n in 0..wq.len() {
                num += wq[n] * (a.values[n] - b.values[n]).norm_sqr();
                den += wq[n] * b.values[n].norm_sqr();
            }
        }
        let vectors = [
            (&self.a_plus, &other.a_plus),
            (&self.a_minus, &other.a_minus),
            (&self.phi_vec, &other.phi_vec),
        ];
        for (a, b) in vectors {
            for c in 0..2 {
                for n in 0..wq.len() {
                    num += wq[n] * (a.comps[c][n] - b.comps[c][n]).norm_sqr();
                    den += wq[n] * b.comps[c][n].norm_sqr();
                }
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

fn complexify(v: &VectorField) -> VectorField {
    VectorField::from_components(v.grid().clone(), FieldKind::Complex, v.comps.clone()).unwrap()
}

/// Linearization bundle: the sum fields of the two magnetic potentials,
/// the coefficient difference, and the closed-form initial value of the
/// time-differentiated solution difference.
#[derive(Debug, Clone)]
pub struct LinearizedData {
    pub s_plus: VectorField,
    pub s_minus: VectorField,
    pub delta: CoefficientDiff,
    pub v0: TwoStateField,
}

impl LinearizedData {
    pub fn new(c1: &CoefficientSet, c2: &CoefficientSet, u0: &TwoStateField) -> Result<Self> {
        Ok(Self {
            s_plus: c1.a_plus.axpy(C64::new(1.0, 0.0), &c2.a_plus),
            s_minus: c1.a_minus.axpy(C64::new(1.0, 0.0), &c2.a_minus),
            delta: CoefficientDiff::from_sets(c1, c2),
            v0: v0_exact(c1, c2, u0)?,
        })
    }
}

fn dot_vec(v: &VectorField, g: &VectorField, n: usize) -> C64 {
    v.comps[0][n] * g.comps[0][n] + v.comps[1][n] * g.comps[1][n]
}

/// Closed-form initial value of the time-differentiated solution
/// difference: for each state,
/// `v0 = i (2i dA.grad u0 + (i div dA - S.dA) u0 - dq u0
///          -+ dPhi.grad u0_other - dphi u0_other)`,
/// where `S` is the sum of the two magnetic potentials and `d` marks the
/// coefficient differences. Identical to `-i (H1 - H2) u0` at interior
/// nodes.
pub fn v0_exact(
    c1: &CoefficientSet,
    c2: &CoefficientSet,
    u0: &TwoStateField,
) -> Result<TwoStateField> {
    let g = u0.grid().clone();
    if !g.same_geometry(c1.grid()) || !g.same_geometry(c2.grid()) {
        return Err(Error::ShapeMismatch("coefficients and state on different grids".into()));
    }
    let lin_s_plus = c1.a_plus.axpy(C64::new(1.0, 0.0), &c2.a_plus);
    let lin_s_minus = c1.a_minus.axpy(C64::new(1.0, 0.0), &c2.a_minus);
    let d = CoefficientDiff::from_sets(c1, c2);
    let grad_p = gradient(&u0.plus);
    let grad_m = gradient(&u0.minus);
    let div_p = divergence(&d.a_plus);
    let div_m = divergence(&d.a_minus);
    let n_nodes = g.n_nodes();
    let mut vp = Vec::with_capacity(n_nodes);
    let mut vm = Vec::with_capacity(n_nodes);
    for n in 0..n_nodes {
        let adv_p = dot_vec(&d.a_plus, &grad_p, n);
        let adv_m = dot_vec(&d.a_minus, &grad_m, n);
        let s_da_p = dot_vec(&lin_s_plus, &d.a_plus, n);
        let s_da_m = dot_vec(&lin_s_minus, &d.a_minus, n);
        let phi_grad_m = dot_vec(&d.phi_vec, &grad_m, n);
        let phi_grad_p = dot_vec(&d.phi_vec, &grad_p, n);
        vp.push(
            I * (2.0 * I * adv_p
                + (I * div_p.values[n] - s_da_p - d.q_plus.values[n]) * u0.plus.values[n]
                - phi_grad_m
                - d.phi_scal.values[n] * u0.minus.values[n]),
        );
        vm.push(
            I * (2.0 * I * adv_m
                + (I * div_m.values[n] - s_da_m - d.q_minus.values[n]) * u0.minus.values[n]
                + phi_grad_p
                - d.phi_scal.values[n] * u0.plus.values[n]),
        );
    }
    TwoStateField::new(
        ScalarField::from_values(g.clone(), vp)?,
        ScalarField::from_values(g, vm)?,
    )
}

/// Inhomogeneity of the time-differentiated difference system: the
/// linearized operator applied to the time derivative of the reference
/// trajectory, one two-state frame per time level.
pub fn linearized_source(
    c1: &CoefficientSet,
    c2: &CoefficientSet,
    traj2: &Trajectory,
) -> Result<Vec<TwoStateField>> {
    let g = traj2.grid().clone();
    if !g.same_geometry(c1.grid()) || !g.same_geometry(c2.grid()) {
        return Err(Error::ShapeMismatch("coefficients and trajectory on different grids".into()));
    }
    let dtraj = time_derivative(traj2)?;
    let s_plus = c1.a_plus.axpy(C64::new(1.0, 0.0), &c2.a_plus);
    let s_minus = c1.a_minus.axpy(C64::new(1.0, 0.0), &c2.a_minus);
    let d = CoefficientDiff::from_sets(c1, c2);
    let div_p = divergence(&d.a_plus);
    let div_m = divergence(&d.a_minus);
    let n_nodes = g.n_nodes();
    dtraj
        .states
        .iter()
        .map(|w| {
            let grad_p = gradient(&w.plus);
            let grad_m = gradient(&w.minus);
            let mut fp = Vec::with_capacity(n_nodes);
            let mut fm = Vec::with_capacity(n_nodes);
            for n in 0..n_nodes {
                let theta_p = 2.0 * I * dot_vec(&d.a_plus, &grad_p, n)
                    + (I * div_p.values[n]
                        - dot_vec(&s_plus, &d.a_plus, n)
                        - d.q_plus.values[n])
                        * w.plus.values[n];
                let theta_m = 2.0 * I * dot_vec(&d.a_minus, &grad_m, n)
                    + (I * div_m.values[n]
                        - dot_vec(&s_minus, &d.a_minus, n)
                        - d.q_minus.values[n])
                        * w.minus.values[n];
                fp.push(
                    theta_p
                        - (dot_vec(&d.phi_vec, &grad_m, n)
                            + d.phi_scal.values[n] * w.minus.values[n]),
                );
                fm.push(
                    theta_m
                        - (-dot_vec(&d.phi_vec, &grad_p, n)
                            + d.phi_scal.values[n] * w.plus.values[n]),
                );
            }
            TwoStateField::new(
                ScalarField::from_values(g.clone(), fp)?,
                ScalarField::from_values(g.clone(), fm)?,
            )
        })
        .collect()
}

/// Solve the forward problem for every probe and record the normal
/// derivative of the time-differentiated solution on the observation
/// boundary. Probe-parallel; the output order follows the probe order.
pub fn simulate_measurements(
    c: &CoefficientSet,
    probes: &ProbeSet,
    w: &CarlemanWeights,
    t_final: f64,
    nt: usize,
) -> Result<Vec<MeasurementRecord>> {
    let h = HamiltonianOperator::new(c);
    let times: Vec<f64> = (0..=nt).map(|k| t_final * k as f64 / nt as f64).collect();
    probes
        .probes
        .par_iter()
        .enumerate()
        .map(|(k, u0)| {
            let run = || -> Result<MeasurementRecord> {
                let bd = compatibility_boundary_data(&h, u0, DEFAULT_TAYLOR_ORDER, &times)?;
                let traj = solve_ibvp(&h, u0, &bd, t_final, nt)?;
                let dtraj = time_derivative(&traj)?;
                let mut plus = Vec::with_capacity(nt + 1);
                let mut minus = Vec::with_capacity(nt + 1);
                for s in &dtraj.states {
                    plus.push(neumann_trace(&s.plus, &w.gamma0)?);
                    minus.push(neumann_trace(&s.minus, &w.gamma0)?);
                }
                Ok(MeasurementRecord {
                    probe: k,
                    plus,
                    minus,
                    gamma0: w.gamma0.clone(),
                    dt: t_final / nt as f64,
                })
            };
            run().map_err(|e| Error::Probe {
                probe: k,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Add independent Gaussian noise to every trace sample, scaled to a
/// prescribed fraction of the record's largest trace magnitude.
/// Deterministic in `seed`.
pub fn add_trace_noise(records: &mut [MeasurementRecord], level: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for rec in records.iter_mut() {
        let scale = rec
            .plus
            .iter()
            .chain(rec.minus.iter())
            .flatten()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        let sigma = level * scale;
        for frame in rec.plus.iter_mut().chain(rec.minus.iter_mut()) {
            for z in frame.iter_mut() {
                *z += C64::new(sigma * gaussian(&mut rng), sigma * gaussian(&mut rng));
            }
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two uniforms
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Weighted squared coefficient distance with node weight
/// `e^{2 s alpha(., 0)}`; equals the plain squared distance at `s -> 0`.
pub fn h_s_functional(
    c1: &CoefficientSet,
    c2: &CoefficientSet,
    w: &CarlemanWeights,
    s: f64,
) -> Result<f64> {
    if !c1.grid().same_geometry(w.grid()) {
        return Err(Error::ShapeMismatch("coefficients and weights on different grids".into()));
    }
    let mut wq = node_weights(c1.grid());
    for (n, q) in wq.iter_mut().enumerate() {
        *q *= w.weight(2.0 * s, n, 0);
    }
    Ok(crate::coeffs::weighted_distance(c1, c2, &wq))
}

fn trace_norm_sq(a: &MeasurementRecord, b: &MeasurementRecord, bw: &[f64]) -> Result<f64> {
    if a.gamma0 != b.gamma0 || a.n_levels() != b.n_levels() || a.probe != b.probe {
        return Err(Error::Precondition(
            "measurement records are not aligned probe-by-probe".into(),
        ));
    }
    let nt = a.n_levels() - 1;
    let mut total = 0.0;
    for (frames_a, frames_b) in [(&a.plus, &b.plus), (&a.minus, &b.minus)] {
        for k in 0..=nt {
            let wt = if k == 0 || k == nt { 0.5 * a.dt } else { a.dt };
            let mut slice = 0.0;
            for (m, (za, zb)) in frames_a[k].iter().zip(&frames_b[k]).enumerate() {
                slice += bw[m] * (za - zb).norm_sqr();
            }
            total += wt * slice;
        }
    }
    Ok(total)
}

/// Stability experiment summary for one coefficient pair.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Squared coefficient distance (the quantity the estimate bounds).
    pub lhs: f64,
    /// Per-probe squared trace-difference norms on the observation
    /// cylinder, both states summed.
    pub mu: Vec<f64>,
    /// Sum of the per-probe terms.
    pub rhs: f64,
    /// `lhs / rhs`; zero when the pair is identical.
    pub ratio: f64,
    /// Weighted coefficient functional per swept parameter value.
    pub h_s: Vec<(f64, f64)>,
    /// Per parameter value: the summed initial-state functionals of the
    /// closed-form initial values over all probes and both states, divided
    /// by the weighted functional.
    pub lemma_lm0_ratio: Vec<(f64, f64)>,
}

/// Compare two aligned measurement lists and relate the trace differences
/// to the coefficient distance and to the weighted functionals.
pub fn stability_report(
    c1: &CoefficientSet,
    c2: &CoefficientSet,
    meas1: &[MeasurementRecord],
    meas2: &[MeasurementRecord],
    w: &CarlemanWeights,
    probes: &ProbeSet,
) -> Result<StabilityReport> {
    if meas1.len() != meas2.len() || meas1.len() != probes.probes.len() {
        return Err(Error::Precondition(
            "measurement lists must cover every probe".into(),
        ));
    }
    let bw = boundary_weights(c1.grid(), &w.gamma0)?;
    let lhs = coefficient_distance(c1, c2);
    let mut mu = Vec::with_capacity(meas1.len());
    for (a, b) in meas1.iter().zip(meas2) {
        // include the boundary arclength weights in the spatial sum
        if a.gamma0 != w.gamma0 {
            return Err(Error::Precondition(
                "records were taken on a different observation boundary".into(),
            ));
        }
        let mut total = 0.0;
        let nt = a.n_levels() - 1;
        for (frames_a, frames_b) in [(&a.plus, &b.plus), (&a.minus, &b.minus)] {
            if frames_a.len() != frames_b.len() {
                return Err(Error::Precondition("records have different time grids".into()));
            }
            for k in 0..=nt {
                let wt = if k == 0 || k == nt { 0.5 * a.dt } else { a.dt };
                let mut slice = 0.0;
                for (m, (za, zb)) in frames_a[k].iter().zip(&frames_b[k]).enumerate() {
                    slice += bw[m] * (za - zb).norm_sqr();
                }
                total += wt * slice;
            }
        }
        mu.push(total);
    }
    let rhs: f64 = mu.iter().sum();
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    let mut h_s = Vec::with_capacity(w.s_grid.len());
    let mut lemma = Vec::with_capacity(w.s_grid.len());
    for &s in &w.s_grid {
        let hs = h_s_functional(c1, c2, w, s)?;
        let mut num = 0.0;
        for u0 in &probes.probes {
            let v0 = v0_exact(c1, c2, u0)?;
            num += boundary_functional_i(w, s, &v0.plus)?;
            num += boundary_functional_i(w, s, &v0.minus)?;
        }
        h_s.push((s, hs));
        lemma.push((s, if hs == 0.0 { 0.0 } else { num / hs }));
    }
    Ok(StabilityReport {
        lhs,
        mu,
        rhs,
        ratio,
        h_s,
        lemma_lm0_ratio: lemma,
    })
}

/// Result of the exact nodewise reconstruction from interior initial
/// values.
#[derive(Debug, Clone)]
pub struct AlgebraicReconstruction {
    pub delta: CoefficientDiff,
    /// Relative discrepancy between the two independent recoveries of the
    /// vector coupling before averaging.
    pub phi_vec_discrepancy: f64,
    /// Relative residual of the redundant probes against the recovered
    /// difference.
    pub consistency_residual: f64,
}

fn label_index(probes: &ProbeSet, want: ProbeLabel) -> Result<usize> {
    probes
        .labels
        .iter()
        .position(|&l| l == want)
        .ok_or_else(|| Error::Precondition(format!("probe set is missing the {want} probe")))
}

/// Recover every coefficient difference nodewise from the closed-form
/// initial values of the probe runs. `a1_plus`/`a1_minus` are the known
/// reference potentials, closing the sum fields via `S = 2 A1 - dA`.
pub fn algebraic_reconstruct(
    v0_records: &[TwoStateField],
    a1_plus: &VectorField,
    a1_minus: &VectorField,
    probes: &ProbeSet,
) -> Result<AlgebraicReconstruction> {
    if v0_records.len() != probes.probes.len() {
        return Err(Error::Precondition(
            "need one initial-value record per probe".into(),
        ));
    }
    let g = a1_plus.grid().clone();
    let n_nodes = g.n_nodes();
    let p_const_plus = 0; // (1, 0)
    let p_const_minus = 1; // (0, 1)
    let cp = [
        label_index(probes, ProbeLabel::CoordPlus(0))?,
        label_index(probes, ProbeLabel::CoordPlus(1))?,
    ];
    let cm = [
        label_index(probes, ProbeLabel::CoordMinus(0))?,
        label_index(probes, ProbeLabel::CoordMinus(1))?,
    ];
    let cb = [
        label_index(probes, ProbeLabel::CoordBoth(0))?,
        label_index(probes, ProbeLabel::CoordBoth(1))?,
    ];
    let coord = |n: usize, j: usize| -> f64 {
        let (x, y) = g.coords(n);
        if j == 0 {
            x
        } else {
            y
        }
    };
    // the scalar coupling from the first constant probe
    let d_phi_scal = ScalarField::from_values(
        g.clone(),
        (0..n_nodes)
            .map(|n| I * v0_records[p_const_plus].minus.values[n])
            .collect(),
    )?;
    // magnetic differences from the coordinate probes
    let mut da_plus = [vec![C64::new(0.0, 0.0); n_nodes], vec![C64::new(0.0, 0.0); n_nodes]];
    let mut da_minus = [vec![C64::new(0.0, 0.0); n_nodes], vec![C64::new(0.0, 0.0); n_nodes]];
    let mut dphi_a = [vec![C64::new(0.0, 0.0); n_nodes], vec![C64::new(0.0, 0.0); n_nodes]];
    let mut dphi_b = [vec![C64::new(0.0, 0.0); n_nodes], vec![C64::new(0.0, 0.0); n_nodes]];
    for j in 0..2 {
        for n in 0..n_nodes {
            let xj = coord(n, j);
            da_plus[j][n] = -0.5
                * (v0_records[cp[j]].plus.values[n]
                    - xj * v0_records[p_const_plus].plus.values[n]);
            da_minus[j][n] = -0.5
                * (v0_records[cm[j]].minus.values[n]
                    - xj * v0_records[p_const_minus].minus.values[n]);
            // coupling from the plus-coordinate probe's minus record…
            dphi_a[j][n] =
                -I * v0_records[cp[j]].minus.values[n] + d_phi_scal.values[n] * xj;
            // …and from the minus-coordinate probe's plus record
            dphi_b[j][n] =
                I * v0_records[cm[j]].plus.values[n] - d_phi_scal.values[n] * xj;
        }
    }
    // discrepancy between the two recoveries, then average
    let mut disc_num = 0.0;
    let mut disc_den = 0.0;
    let wq = node_weights(&g);
    for j in 0..2 {
        for n in 0..n_nodes {
            disc_num += wq[n] * (dphi_a[j][n] - dphi_b[j][n]).norm_sqr();
            disc_den += wq[n]
                * (0.5 * (dphi_a[j][n] + dphi_b[j][n])).norm_sqr();
        }
    }
    let phi_vec_discrepancy = if disc_den == 0.0 {
        disc_num.sqrt()
    } else {
        (disc_num / disc_den).sqrt()
    };
    let d_phi_vec = VectorField::from_components(
        g.clone(),
        FieldKind::Complex,
        [
            (0..n_nodes).map(|n| 0.5 * (dphi_a[0][n] + dphi_b[0][n])).collect(),
            (0..n_nodes).map(|n| 0.5 * (dphi_a[1][n] + dphi_b[1][n])).collect(),
        ],
    )?;
    let d_a_plus = VectorField::from_components(
        g.clone(),
        FieldKind::Complex,
        [da_plus[0].clone(), da_plus[1].clone()],
    )?;
    let d_a_minus = VectorField::from_components(
        g.clone(),
        FieldKind::Complex,
        [da_minus[0].clone(), da_minus[1].clone()],
    )?;
    // electric differences from the constant probes, closing the sum
    // fields with the known reference potentials: S = 2 A1 - dA
    let div_p = divergence(&d_a_plus);
    let div_m = divergence(&d_a_minus);
    let mut dq_p = Vec::with_capacity(n_nodes);
    let mut dq_m = Vec::with_capacity(n_nodes);
    for n in 0..n_nodes {
        let s_p = [
            2.0 * a1_plus.comps[0][n] - d_a_plus.comps[0][n],
            2.0 * a1_plus.comps[1][n] - d_a_plus.comps[1][n],
        ];
        let s_m = [
            2.0 * a1_minus.comps[0][n] - d_a_minus.comps[0][n],
            2.0 * a1_minus.comps[1][n] - d_a_minus.comps[1][n],
        ];
        let s_da_p = s_p[0] * d_a_plus.comps[0][n] + s_p[1] * d_a_plus.comps[1][n];
        let s_da_m = s_m[0] * d_a_minus.comps[0][n] + s_m[1] * d_a_minus.comps[1][n];
        dq_p.push(I * div_p.values[n] - s_da_p + I * v0_records[p_const_plus].plus.values[n]);
        dq_m.push(I * div_m.values[n] - s_da_m + I * v0_records[p_const_minus].minus.values[n]);
    }
    let delta = CoefficientDiff {
        a_plus: d_a_plus,
        a_minus: d_a_minus,
        q_plus: ScalarField::from_values(g.clone(), dq_p)?,
        q_minus: ScalarField::from_values(g.clone(), dq_m)?,
        phi_vec: d_phi_vec,
        phi_scal: d_phi_scal,
    };
    // redundant probes: predict their records from the recovered delta and
    // the reference potentials, then measure the relative residual
    let mut res_num = 0.0;
    let mut res_den = 0.0;
    for j in 0..2 {
        let rec = &v0_records[cb[j]];
        let pred = predict_v0(&delta, a1_plus, a1_minus, &probes.probes[cb[j]])?;
        for n in 0..n_nodes {
            res_num += wq[n]
                * ((rec.plus.values[n] - pred.plus.values[n]).norm_sqr()
                    + (rec.minus.values[n] - pred.minus.values[n]).norm_sqr());
            res_den += wq[n]
                * (rec.plus.values[n].norm_sqr() + rec.minus.values[n].norm_sqr());
        }
    }
    let consistency_residual = if res_den == 0.0 {
        res_num.sqrt()
    } else {
        (res_num / res_den).sqrt()
    };
    if !consistency_residual.is_finite() {
        return Err(Error::Precondition("non-finite consistency residual".into()));
    }
    Ok(AlgebraicReconstruction {
        delta,
        phi_vec_discrepancy,
        consistency_residual,
    })
}

/// Evaluate the closed-form initial value implied by a recovered
/// difference and the known reference potentials.
fn predict_v0(
    d: &CoefficientDiff,
    a1_plus: &VectorField,
    a1_minus: &VectorField,
    u0: &TwoStateField,
) -> Result<TwoStateField> {
    let g = u0.grid().clone();
    let grad_p = gradient(&u0.plus);
    let grad_m = gradient(&u0.minus);
    let div_p = divergence(&d.a_plus);
    let div_m = divergence(&d.a_minus);
    let n_nodes = g.n_nodes();
    let mut vp = Vec::with_capacity(n_nodes);
    let mut vm = Vec::with_capacity(n_nodes);
    for n in 0..n_nodes {
        let s_p = [
            2.0 * a1_plus.comps[0][n] - d.a_plus.comps[0][n],
            2.0 * a1_plus.comps[1][n] - d.a_plus.comps[1][n],
        ];
        let s_m = [
            2.0 * a1_minus.comps[0][n] - d.a_minus.comps[0][n],
            2.0 * a1_minus.comps[1][n] - d.a_minus.comps[1][n],
        ];
        let adv_p = d.a_plus.comps[0][n] * grad_p.comps[0][n]
            + d.a_plus.comps[1][n] * grad_p.comps[1][n];
        let adv_m = d.a_minus.comps[0][n] * grad_m.comps[0][n]
            + d.a_minus.comps[1][n] * grad_m.comps[1][n];
        let s_da_p = s_p[0] * d.a_plus.comps[0][n] + s_p[1] * d.a_plus.comps[1][n];
        let s_da_m = s_m[0] * d.a_minus.comps[0][n] + s_m[1] * d.a_minus.comps[1][n];
        let phi_grad_m = d.phi_vec.comps[0][n] * grad_m.comps[0][n]
            + d.phi_vec.comps[1][n] * grad_m.comps[1][n];
        let phi_grad_p = d.phi_vec.comps[0][n] * grad_p.comps[0][n]
            + d.phi_vec.comps[1][n] * grad_p.comps[1][n];
        vp.push(
            I * (2.0 * I * adv_p
                + (I * div_p.values[n] - s_da_p - d.q_plus.values[n]) * u0.plus.values[n]
                - phi_grad_m
                - d.phi_scal.values[n] * u0.minus.values[n]),
        );
        vm.push(
            I * (2.0 * I * adv_m
                + (I * div_m.values[n] - s_da_m - d.q_minus.values[n]) * u0.minus.values[n]
                + phi_grad_p
                - d.phi_scal.values[n] * u0.plus.values[n]),
        );
    }
    TwoStateField::new(
        ScalarField::from_values(g.clone(), vp)?,
        ScalarField::from_values(g, vm)?,
    )
}

/// Which coefficient channels the least-squares search may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    QPlus,
    QMinus,
    PhiScal,
    APlus,
    AMinus,
    PhiVec,
}

/// Options of the regularized least-squares reconstruction.
#[derive(Debug, Clone)]
pub struct LsqOptions {
    /// Number of tensor sine basis functions per active scalar channel
    /// (vector channels use the count per component; the coupling vector
    /// uses one stream function).
    pub basis_size: usize,
    pub iterations: usize,
    pub reg: f64,
    pub channels: Vec<Channel>,
    /// Relative finite-difference step for the gradient.
    pub fd_step: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            basis_size: 1,
            iterations: 200,
            reg: 0.0,
            channels: vec![Channel::QPlus],
            fd_step: 1e-4,
        }
    }
}

/// Outcome of the least-squares search.
#[derive(Debug, Clone)]
pub struct LsqResult {
    /// Recovered full set: the known side plus the fitted difference.
    pub recovered: CoefficientSet,
    pub delta: CoefficientDiff,
    pub coefficients: Vec<f64>,
    pub objective_history: Vec<f64>,
    pub final_objective: f64,
    pub iterations_used: usize,
}

fn basis_modes(count: usize) -> Vec<(usize, usize)> {
    let b = (count as f64).sqrt().ceil() as usize;
    let mut modes = Vec::with_capacity(count);
    'outer: for q in 1..=b.max(1) {
        for p in 1..=b.max(1) {
            modes.push((p, q));
            if modes.len() == count {
                break 'outer;
            }
        }
    }
    modes
}

fn sine_mode_field(g: &Arc<Grid>, p: usize, q: usize) -> ScalarField {
    let pi = std::f64::consts::PI;
    let (lx, ly) = (g.lx, g.ly);
    ScalarField::from_real_fn(g.clone(), move |x, y| {
        (p as f64 * pi * x / lx).sin() * (q as f64 * pi * y / ly).sin()
    })
}

fn delta_from_params(
    g: &Arc<Grid>,
    opts: &LsqOptions,
    modes: &[(usize, usize)],
    params: &[f64],
) -> CoefficientDiff {
    let mut d = CoefficientDiff::zero(g.clone());
    let mut k = 0;
    for &ch in &opts.channels {
        match ch {
            Channel::QPlus | Channel::QMinus | Channel::PhiScal => {
                let target = match ch {
                    Channel::QPlus => &mut d.q_plus,
                    Channel::QMinus => &mut d.q_minus,
                    _ => &mut d.phi_scal,
                };
                for &(p, q) in modes {
                    let b = sine_mode_field(g, p, q);
                    *target = target.axpy(C64::new(params[k], 0.0), &b);
                    k += 1;
                }
            }
            Channel::APlus | Channel::AMinus => {
                let target = match ch {
                    Channel::APlus => &mut d.a_plus,
                    _ => &mut d.a_minus,
                };
                for c in 0..2 {
                    for &(p, q) in modes {
                        let b = sine_mode_field(g, p, q);
                        for n in 0..b.values.len() {
                            target.comps[c][n] += params[k] * b.values[n];
                        }
                        k += 1;
                    }
                }
            }
            Channel::PhiVec => {
                // stream-function parametrization keeps the coupling
                // divergence-free mode by mode
                for &(p, q) in modes {
                    let psi = sine_mode_field(g, p, q);
                    let curl = stream_curl(&psi);
                    for c in 0..2 {
                        for n in 0..psi.values.len() {
                            d.phi_vec.comps[c][n] += params[k] * curl.comps[c][n];
                        }
                    }
                    k += 1;
                }
            }
        }
    }
    debug_assert_eq!(k, params.len());
    d
}

fn stream_curl(psi: &ScalarField) -> VectorField {
    let grad = gradient(psi);
    VectorField::from_components(
        psi.grid().clone(),
        FieldKind::Complex,
        [grad.comps[1].clone(), grad.comps[0].iter().map(|z| -z).collect()],
    )
    .unwrap()
}

fn param_count(opts: &LsqOptions) -> usize {
    opts.channels
        .iter()
        .map(|ch| match ch {
            Channel::APlus | Channel::AMinus => 2 * opts.basis_size,
            _ => opts.basis_size,
        })
        .sum()
}

fn apply_delta(base: &CoefficientSet, d: &CoefficientDiff) -> CoefficientSet {
    let mut c = base.clone();
    for n in 0..c.q_plus.values.len() {
        c.q_plus.values[n] += d.q_plus.values[n];
        c.q_minus.values[n] += d.q_minus.values[n];
        c.phi_scal.values[n] += d.phi_scal.values[n];
        for comp in 0..2 {
            c.a_plus.comps[comp][n] += d.a_plus.comps[comp][n];
            c.a_minus.comps[comp][n] += d.a_minus.comps[comp][n];
            c.phi_vec.comps[comp][n] += d.phi_vec.comps[comp][n];
        }
    }
    c
}

/// Fit a coefficient difference to observed boundary measurements by
/// finite-difference gradient descent with backtracking line search on a
/// tensor sine parametrization. The objective is the squared trace misfit
/// over all probes plus a quadratic penalty on the parameters.
pub fn lsq_reconstruct(
    meas_obs: &[MeasurementRecord],
    c_known_side: &CoefficientSet,
    opts: &LsqOptions,
    probes: &ProbeSet,
    w: &CarlemanWeights,
) -> Result<LsqResult> {
    if opts.basis_size == 0 || opts.basis_size > 64 {
        return Err(Error::Precondition("basis size must lie in 1..=64".into()));
    }
    if meas_obs.len() != probes.probes.len() {
        return Err(Error::Precondition("need one observed record per probe".into()));
    }
    let g = c_known_side.grid().clone();
    let nt = meas_obs[0].n_levels() - 1;
    let t_final = meas_obs[0].dt * nt as f64;
    let modes = basis_modes(opts.basis_size);
    let n_params = param_count(opts);
    let bw = boundary_weights(&g, &meas_obs[0].gamma0)?;
    let objective = |params: &[f64]| -> Result<f64> {
        let d = delta_from_params(&g, opts, &modes, params);
        let c = apply_delta(c_known_side, &d);
        let sim = simulate_measurements(&c, probes, w, t_final, nt)?;
        let mut misfit = 0.0;
        for (a, b) in sim.iter().zip(meas_obs) {
            misfit += trace_norm_sq(a, b, &bw)?;
        }
        let penalty: f64 = params.iter().map(|p| p * p).sum();
        let val = misfit + opts.reg * penalty;
        if !val.is_finite() {
            return Err(Error::Precondition("non-finite objective".into()));
        }
        Ok(val)
    };
    let mut params = vec![0.0f64; n_params];
    let mut best = objective(&params)?;
    let mut history = vec![best];
    let mut step = 0.5;
    let mut iterations_used = 0;
    for _ in 0..opts.iterations {
        iterations_used += 1;
        // central finite-difference gradient
        let mut grad = vec![0.0f64; n_params];
        let scale = params.iter().map(|p| p.abs()).fold(1.0f64, f64::max);
        let h = opts.fd_step * scale;
        for k in 0..n_params {
            let mut p_plus = params.clone();
            p_plus[k] += h;
            let mut p_minus = params.clone();
            p_minus[k] -= h;
            grad[k] = (objective(&p_plus)? - objective(&p_minus)?) / (2.0 * h);
        }
        let gnorm_sq: f64 = grad.iter().map(|v| v * v).sum();
        if gnorm_sq.sqrt() < 1e-14 * (1.0 + best) {
            break;
        }
        // backtracking line search with a sufficient-decrease condition
        let mut accepted = false;
        let mut t = step;
        for _ in 0..30 {
            let trial: Vec<f64> = params
                .iter()
                .zip(&grad)
                .map(|(p, gk)| p - t * gk)
                .collect();
            let val = objective(&trial)?;
            if val <= best - 1e-4 * t * gnorm_sq {
                params = trial;
                best = val;
                accepted = true;
                step = (t * 2.0).min(1e3);
                break;
            }
            t *= 0.5;
        }
        history.push(best);
        if !accepted {
            break;
        }
        if best < 1e-24 {
            break;
        }
    }
    let delta = delta_from_params(&g, opts, &modes, &params);
    let recovered = apply_delta(c_known_side, &delta);
    Ok(LsqResult {
        recovered,
        delta,
        coefficients: params,
        objective_history: history,
        final_objective: best,
        iterations_used,
    })
}

#[cfg(test)]
mod tests;
