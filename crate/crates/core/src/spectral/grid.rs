//! Collocation on regular grids of T¹ × T² and fiber-shift composition.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};
use serde::Serialize;

use super::{FourierIndex, SpectralError, TorusFunction};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollocationOptions {
    /// Grid points per axis are at least `factor · band + 1`.
    pub factor: usize,
    /// Largest admissible number of points on one axis.
    pub max_axis: usize,
    /// Largest admissible total number of grid points.
    pub max_points: usize,
    /// Two-grid residual tolerance, relative to the result majorant.
    pub tolerance: f64,
    /// Coefficients below `prune · max|sample|` are discarded.
    pub prune: f64,
    /// Make the output exactly Hermitian when every input is.
    pub symmetrize: bool,
    /// Overrides the θ-strip margin used by the overflow check.
    pub margin: Option<f64>,
    /// Certified bound on sup |Im h| used by the overflow check in place
    /// of N(h).
    pub imaginary_bound: Option<f64>,
}

impl Default for CollocationOptions {
    fn default() -> Self {
        Self {
            factor: 4,
            max_axis: 1024,
            max_points: 1 << 23,
            tolerance: 1e-12,
            prune: 1e-14,
            symmetrize: true,
            margin: None,
            imaginary_bound: None,
        }
    }
}

/// Result of a collocated computation.
#[derive(Clone, Debug)]
pub struct Collocated {
    pub function: TorusFunction,
    pub residual: f64,
    pub grid: [usize; 3],
    pub band: [u32; 3],
}

/// `f ∘ (id + h)` together with the difference `f ∘ (id + h) − f`.
#[derive(Clone, Debug)]
pub struct Composition {
    pub value: TorusFunction,
    pub difference: TorusFunction,
    pub residual: f64,
    pub grid: [usize; 3],
}

fn axis_points(band: u32, factor: usize) -> usize {
    if band == 0 {
        1
    } else {
        (factor * band as usize + 1).next_power_of_two()
    }
}

fn wrap(i: i32, n: usize) -> usize {
    i.rem_euclid(n as i32) as usize
}

fn signed(m: usize, n: usize) -> Option<i32> {
    if 2 * m < n {
        Some(m as i32)
    } else if 2 * m > n {
        Some(m as i32 - n as i32)
    } else {
        None
    }
}

/// In-place unnormalized 3D DFT, row-major `[θ][φ₁][φ₂]`.
pub fn fft3(data: &mut [Complex64], dims: [usize; 3], direction: FftDirection) {
    let [n0, n1, n2] = dims;
    assert_eq!(data.len(), n0 * n1 * n2);
    let mut planner = FftPlanner::<f64>::new();
    if n2 > 1 {
        let fft = planner.plan_fft(n2, direction);
        data.par_chunks_mut(n2).for_each(|line| fft.process(line));
    }
    let strided = |data: &mut [Complex64],
                   n: usize,
                   stride: usize,
                   starts: Vec<usize>,
                   planner: &mut FftPlanner<f64>| {
        if n <= 1 {
            return;
        }
        let fft = planner.plan_fft(n, direction);
        let lines: Vec<Vec<Complex64>> = starts
            .par_iter()
            .map(|&s| {
                let mut line: Vec<Complex64> = (0..n).map(|j| data[s + j * stride]).collect();
                fft.process(&mut line);
                line
            })
            .collect();
        for (s, line) in starts.iter().zip(lines) {
            for (j, v) in line.into_iter().enumerate() {
                data[s + j * stride] = v;
            }
        }
    };
    let starts1 = (0..n0)
        .flat_map(|a| (0..n2).map(move |c| a * n1 * n2 + c))
        .collect();
    strided(data, n1, n2, starts1, &mut planner);
    let starts0 = (0..n1 * n2).collect();
    strided(data, n0, n1 * n2, starts0, &mut planner);
}

/// Exact samples of `f` on the grid; every band must fit below the Nyquist index.
pub fn sample(f: &TorusFunction, dims: [usize; 3]) -> Vec<Complex64> {
    let [n0, n1, n2] = dims;
    let band = f.bandwidth();
    for (b, n) in band.iter().zip(dims) {
        assert!(
            2 * (*b as usize) < n || (*b == 0),
            "band {b} does not fit grid {n}"
        );
    }
    let mut data = vec![Complex64::new(0.0, 0.0); n0 * n1 * n2];
    for (i, c) in f.modes() {
        let idx = (wrap(i.l, n0) * n1 + wrap(i.k[0], n1)) * n2 + wrap(i.k[1], n2);
        data[idx] += c;
    }
    fft3(&mut data, dims, FftDirection::Inverse);
    data
}

/// Fourier coefficients of grid samples, Nyquist indices dropped.
pub fn coefficients(mut samples: Vec<Complex64>, dims: [usize; 3], prune: f64) -> TorusFunction {
    let [n0, n1, n2] = dims;
    let scale = samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
    fft3(&mut samples, dims, FftDirection::Forward);
    let inv = 1.0 / (n0 * n1 * n2) as f64;
    let cut = prune * scale;
    let mut modes = Vec::new();
    for a in 0..n0 {
        let Some(l) = signed(a, n0) else { continue };
        for b in 0..n1 {
            let Some(k1) = signed(b, n1) else { continue };
            for c in 0..n2 {
                let Some(k2) = signed(c, n2) else { continue };
                let v = samples[(a * n1 + b) * n2 + c] * inv;
                if v.norm() > cut {
                    modes.push((FourierIndex::new(l, k1, k2), v));
                }
            }
        }
    }
    TorusFunction::from_modes(modes)
}

fn in_band(i: &FourierIndex, band: [u32; 3]) -> bool {
    i.l.unsigned_abs() <= band[0]
        && i.k[0].unsigned_abs() <= band[1]
        && i.k[1].unsigned_abs() <= band[2]
}

/// Two-grid residual: coefficient mismatch inside the band plus fine-grid
/// mass outside it, relative to the fine-grid majorant.
fn two_grid_residual(coarse: &TorusFunction, fine: &TorusFunction, band: [u32; 3]) -> f64 {
    let total = fine.abs_sum();
    if total == 0.0 {
        return coarse.abs_sum();
    }
    let mut err = 0.0;
    let mut keys: BTreeMap<FourierIndex, ()> = BTreeMap::new();
    for (i, _) in coarse.modes().chain(fine.modes()) {
        keys.insert(*i, ());
    }
    for i in keys.keys() {
        if in_band(i, band) {
            err += (coarse.coef(*i) - fine.coef(*i)).norm();
        } else {
            err += fine.coef(*i).norm();
        }
    }
    err / total
}

/// Collocates `eval` on grids sized for `base + m · growth` with
/// m = 2, 4, 8, … until two consecutive resolutions agree.
pub fn collocate<F>(
    base: [u32; 3],
    growth: [u32; 3],
    opts: &CollocationOptions,
    real: bool,
    eval: F,
) -> Result<Collocated, SpectralError>
where
    F: Fn([usize; 3]) -> Vec<Complex64>,
{
    let mut m = 2u32;
    let mut last_residual = f64::INFINITY;
    loop {
        let band = [0, 1, 2].map(|a| base[a] + m * growth[a]);
        let coarse_dims = band.map(|b| axis_points(b, opts.factor));
        let fine_dims = coarse_dims.map(|n| if n == 1 { 1 } else { 2 * n });
        let total: usize = fine_dims.iter().product();
        if fine_dims.iter().any(|&n| n > opts.max_axis) || total > opts.max_points {
            return Err(SpectralError::InsufficientGrid {
                residual: last_residual,
                tolerance: opts.tolerance,
            });
        }
        let coarse = coefficients(eval(coarse_dims), coarse_dims, opts.prune);
        let fine = coefficients(eval(fine_dims), fine_dims, opts.prune);
        // Everything the coarse grid resolves is kept.
        let kept = coarse_dims.map(|n| ((n.max(2) - 1) / 2) as u32);
        let residual = two_grid_residual(&coarse, &fine, kept);
        if residual <= opts.tolerance {
            let mut function = fine.filter(|i| in_band(i, kept));
            if real && opts.symmetrize {
                function = function.symmetrize();
            }
            return Ok(Collocated {
                function,
                residual,
                grid: fine_dims,
                band: kept,
            });
        }
        last_residual = residual;
        if growth == [0, 0, 0] {
            return Err(SpectralError::InsufficientGrid {
                residual,
                tolerance: opts.tolerance,
            });
        }
        m *= 2;
    }
}

/// e^z − 1 without cancellation for small z.
fn exp_m1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(z.re.exp_m1() * c - 2.0 * half * half, z.re.exp() * s)
}

/// φ-slices F_l(φ) = Σ_k f_l^k e^{2πi⟨k,φ⟩} on an n₁ × n₂ grid.
fn phi_slices(f: &TorusFunction, n1: usize, n2: usize) -> Vec<(i32, Vec<Complex64>)> {
    let mut by_l: BTreeMap<i32, TorusFunction> = BTreeMap::new();
    for (i, c) in f.modes() {
        let slot = by_l.entry(i.l).or_default();
        *slot = &*slot + &TorusFunction::from_modes([(FourierIndex::new(0, i.k[0], i.k[1]), *c)]);
    }
    by_l.into_iter()
        .map(|(l, g)| (l, sample(&g, [1, n1, n2])))
        .collect()
}

/// Samples of `f(θ + h(θ,φ), φ) − f(θ,φ)` on the grid.
fn shifted_difference_samples(
    f: &TorusFunction,
    h: &TorusFunction,
    dims: [usize; 3],
) -> Vec<Complex64> {
    let [n0, n1, n2] = dims;
    let hs = sample(h, dims);
    let slices = phi_slices(f, n1, n2);
    let lmax = slices
        .iter()
        .map(|(l, _)| l.unsigned_abs())
        .max()
        .unwrap_or(0) as usize;
    let plane = n1 * n2;
    let mut out = vec![Complex64::new(0.0, 0.0); n0 * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(a, row)| {
        let theta = a as f64 / n0 as f64;
        let mut pos = vec![Complex64::new(0.0, 0.0); lmax + 1];
        let mut neg = vec![Complex64::new(0.0, 0.0); lmax + 1];
        for (j, slot) in row.iter_mut().enumerate() {
            let z = Complex64::new(0.0, TWO_PI) * hs[a * plane + j];
            let (wp, wn) = (z.exp(), (-z).exp());
            let (dp, dn) = (exp_m1(z), exp_m1(-z));
            // D_{l+1} = w·D_l + (w − 1)
            for l in 1..=lmax {
                pos[l] = if l == 1 { dp } else { wp * pos[l - 1] + dp };
                neg[l] = if l == 1 { dn } else { wn * neg[l - 1] + dn };
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, fl) in &slices {
                if *l == 0 {
                    continue;
                }
                let d = if *l > 0 {
                    pos[*l as usize]
                } else {
                    neg[l.unsigned_abs() as usize]
                };
                let e = Complex64::from_polar(1.0, TWO_PI * *l as f64 * theta);
                acc += e * fl[j] * d;
            }
            *slot = acc;
        }
    });
    out
}

/// Fourier expansion of `(θ,φ) ↦ f(θ + h(θ,φ), φ)`.
///
/// The strip check requires `2π N(h) < margin`, where N is taken at the
/// strips declared on `h` and the margin defaults to the θ-strip of `f`
/// minus that of `h`. The result is declared on the strips of `h`.
pub fn compose_fiber_shift(
    f: &TorusFunction,
    h: &TorusFunction,
    opts: &CollocationOptions,
) -> Result<Composition, SpectralError> {
    let (sf, rf) = f.strips();
    let (sh, rh) = h.strips();
    let strips = (sh, rf.min(rh));
    if f.is_phi_only() || h.is_zero() {
        return Ok(Composition {
            value: f.clone().with_strips(strips.0, strips.1),
            difference: TorusFunction::zero().with_strips(strips.0, strips.1),
            residual: 0.0,
            grid: [1, 1, 1],
        });
    }
    let margin = opts.margin.unwrap_or(sf - sh);
    let shift = TWO_PI * opts.imaginary_bound.unwrap_or_else(|| h.declared_norm());
    if !(shift < margin) {
        return Err(SpectralError::StripOverflow { shift, margin });
    }
    let real = f.hermitian_defect() <= 1e-12 && h.hermitian_defect() <= 1e-12;
    let base = [0, 1, 2].map(|a| f.bandwidth()[a].max(h.bandwidth()[a]));
    let out = collocate(base, h.bandwidth(), opts, real, |dims| {
        shifted_difference_samples(f, h, dims)
    })?;
    let difference = out.function.with_strips(strips.0, strips.1);
    let value = (f + &difference).with_strips(strips.0, strips.1);
    Ok(Composition {
        value,
        difference,
        residual: out.residual,
        grid: out.grid,
    })
}

/// Values of a function at arbitrary θ on a fixed n₁ × n₂ φ-grid.
pub struct SliceTable {
    slices: Vec<(i32, Vec<Complex64>)>,
}

impl SliceTable {
    pub fn new(f: &TorusFunction, n1: usize, n2: usize) -> Self {
        Self {
            slices: phi_slices(f, n1, n2),
        }
    }

    /// Complex value at θ and φ-grid index j.
    pub fn eval(&self, j: usize, theta: f64) -> Complex64 {
        self.slices
            .iter()
            .map(|(l, s)| s[j] * Complex64::from_polar(1.0, TWO_PI * *l as f64 * theta))
            .sum()
    }
}

fn union_band(a: [u32; 3], b: [u32; 3]) -> [u32; 3] {
    [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])]
}

/// `num / (1 + d)` by collocation.
pub fn divide(
    num: &TorusFunction,
    d: &TorusFunction,
    opts: &CollocationOptions,
) -> Result<Collocated, SpectralError> {
    let real = num.hermitian_defect() <= 1e-12 && d.hermitian_defect() <= 1e-12;
    collocate(
        union_band(num.bandwidth(), d.bandwidth()),
        d.bandwidth(),
        opts,
        real,
        |dims| {
            let a = sample(num, dims);
            let b = sample(d, dims);
            a.into_iter().zip(b).map(|(x, y)| x / (1.0 + y)).collect()
        },
    )
}

const INVERSION_TOL: f64 = 1e-15;
const INVERSION_MAX_ITERS: usize = 200;

/// Vector field of the flow `θ̇ = F(θ,φ)` written in the coordinate
/// `θ = θ̄ + u(θ̄,φ)`: returns G with G(θ,φ) = [(1 + ∂_θu)F + ∂_ωu](θ̄,φ),
/// where θ̄ solves θ̄ + u(θ̄,φ) = θ. Here F is the field in θ̄.
pub fn pushforward_near_identity(
    field: &TorusFunction,
    u: &TorusFunction,
    omega: [f64; 2],
    opts: &CollocationOptions,
) -> Result<Collocated, SpectralError> {
    let du = u.derive_theta();
    let lipschitz = du.abs_sum();
    if lipschitz >= 1.0 {
        return Err(SpectralError::StripOverflow {
            shift: lipschitz,
            margin: 1.0,
        });
    }
    let real = field.hermitian_defect() <= 1e-12 && u.hermitian_defect() <= 1e-12;
    let integrand = &(&du.mul_full(field) + field) + &u.derive_omega(omega);
    let base = union_band(integrand.bandwidth(), u.bandwidth());
    collocate(base, u.bandwidth(), opts, real, |dims| {
        let [n0, n1, n2] = dims;
        let tu = SliceTable::new(u, n1, n2);
        let tg = SliceTable::new(&integrand, n1, n2);
        let plane = n1 * n2;
        let mut out = vec![Complex64::new(0.0, 0.0); n0 * plane];
        out.par_chunks_mut(plane).enumerate().for_each(|(a, row)| {
            let theta = a as f64 / n0 as f64;
            for (j, slot) in row.iter_mut().enumerate() {
                let mut tb = theta - tu.eval(j, theta).re;
                for _ in 0..INVERSION_MAX_ITERS {
                    let next = theta - tu.eval(j, tb).re;
                    let done = (next - tb).abs() <= INVERSION_TOL;
                    tb = next;
                    if done {
                        break;
                    }
                }
                *slot = tg.eval(j, tb);
            }
        });
        out
    })
}
