//! Strang-splitting reference propagator on a Dirichlet sine basis.
//!
//! The basis on `(−R, R)` is `φ_k(x) = R^{-1/2} sin(kπ(x + R)/(2R))`,
//! `k = 1..n`, orthonormal, with `Δφ_k = −(kπ/(2R))² φ_k`. Tensor products
//! give the basis in `d ≤ 3` dimensions. Collocation uses the DST-I grid
//! `x_j = −R + j·2R/(n+1)`, `j = 1..n`.

use std::io::{BufRead, Read};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::gaussian::{inner_sum, GaussianSum};

#[derive(Clone)]
pub struct SineGrid {
    dim: usize,
    half_width: f64,
    modes: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SineGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineGrid")
            .field("dim", &self.dim)
            .field("half_width", &self.half_width)
            .field("modes", &self.modes)
            .finish()
    }
}

impl SineGrid {
    pub fn new(dim: usize, half_width: f64, modes: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dimension must be 1..=3, got {dim}")));
        }
        if !(half_width > 0.0) {
            return Err(Error::InvalidParameter(format!("box half-width must be positive, got {half_width}")));
        }
        if modes < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 modes, got {modes}")));
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * (modes + 1));
        Ok(Self { dim, half_width, modes, fft })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Number of coefficients `n^d`.
    pub fn len(&self) -> usize {
        self.modes.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.modes + 1) as f64
    }

    /// Collocation points along one axis.
    pub fn points(&self) -> Vec<f64> {
        (1..=self.modes).map(|j| -self.half_width + j as f64 * self.spacing()).collect()
    }

    /// Eigenvalue of `−Δ` for the one-dimensional mode `k ≥ 1`.
    pub fn mode_energy(&self, k: usize) -> f64 {
        let w = k as f64 * std::f64::consts::PI / (2.0 * self.half_width);
        w * w
    }

    /// Multi-index of a flat (row-major) position.
    fn unflatten(&self, mut i: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for a in (0..self.dim).rev() {
            idx[a] = i % self.modes;
            i /= self.modes;
        }
        idx
    }

    /// Unnormalized DST-I `S_k = Σ_j x_j sin(πjk/(n+1))` along every axis.
    fn dst(&self, data: &mut [Complex64]) {
        let n = self.modes;
        let m = 2 * (n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let half_i = Complex64::new(0.0, 0.5);
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let pencils = self.len() / n;
            for p in 0..pencils {
                // base offset of pencil p with the axis coordinate removed
                let outer = p / stride;
                let inner = p % stride;
                let base = outer * stride * n + inner;
                buf[0] = Complex64::new(0.0, 0.0);
                buf[n + 1] = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let v = data[base + j * stride];
                    buf[j + 1] = v;
                    buf[m - 1 - j] = -v;
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..n {
                    data[base + k * stride] = buf[k + 1] * half_i;
                }
            }
        }
    }

    /// Point values at the collocation grid from coefficients.
    pub fn to_points(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut v = coeffs.to_vec();
        self.dst(&mut v);
        let s = self.half_width.powf(-0.5 * self.dim as f64);
        v.iter_mut().for_each(|x| *x *= s);
        v
    }

    /// Coefficients interpolating the given point values.
    pub fn from_points(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut v = values.to_vec();
        self.dst(&mut v);
        let s = (self.spacing() / self.half_width.sqrt()).powi(self.dim as i32);
        v.iter_mut().for_each(|x| *x *= s);
        v
    }

    /// Calls `f(flat_index, x)` for every collocation point.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[f64])) {
        let pts = self.points();
        let mut x = vec![0.0; self.dim];
        for i in 0..self.len() {
            let idx = self.unflatten(i);
            for a in 0..self.dim {
                x[a] = pts[idx[a]];
            }
            f(i, &x);
        }
    }

    pub fn sample(&self, u: &GaussianSum) -> Result<Vec<Complex64>> {
        self.check_dim(u)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.for_each_point(|i, x| out[i] = u.eval(x).to_complex64());
        Ok(out)
    }

    fn check_dim(&self, u: &GaussianSum) -> Result<()> {
        if u.dim() != self.dim {
            Err(Error::ShapeMismatch { expected: format!("dimension {}", self.dim), got: u.dim().to_string() })
        } else {
            Ok(())
        }
    }

    /// Upper bound for `‖u‖²_{L²(ℝ^d \ box)}` from Gaussian tail bounds on
    /// each term's `|g|²` marginals (pure terms; polynomial factors are
    /// treated through their Gaussian envelope).
    pub fn tail_mass_bound(&self, u: &GaussianSum) -> Result<f64> {
        self.check_dim(u)?;
        let mut amp = 0.0;
        for t in u.terms() {
            let d = self.dim;
            let w = t.width();
            // |g|² has precision 2A; marginal variance ((2A)⁻¹)_jj
            let a = nalgebra::DMatrix::from_fn(d, d, |i, j| 2.0 * w[i][j].re);
            let cov = a.try_inverse().ok_or(Error::InvalidWidth)?;
            let m = t.center();
            let mut frac = 0.0;
            for j in 0..d {
                let gap = self.half_width - m[j].abs();
                if gap <= 0.0 {
                    frac += 1.0;
                    continue;
                }
                frac += 2.0 * (-gap * gap / (2.0 * cov[(j, j)])).exp();
            }
            amp += (t.norm_sqr()? * frac.min(1.0)).sqrt();
        }
        Ok(amp * amp)
    }
}

/// Sine coefficients of a Gaussian sum together with its tail diagnostic.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coeffs: Vec<Complex64>,
    pub tail_mass: f64,
    /// Set when the tail mass relative to `‖u‖²` exceeds `1e-10`.
    pub tail_warning: bool,
}

pub const TAIL_TOLERANCE: f64 = 1e-10;

pub fn project(u: &GaussianSum, grid: &SineGrid) -> Result<Projection> {
    let tail_mass = grid.tail_mass_bound(u)?;
    let norm = u.norm_sqr()?;
    let coeffs = grid.from_points(&grid.sample(u)?);
    Ok(Projection { coeffs, tail_mass, tail_warning: tail_mass > TAIL_TOLERANCE * norm.max(f64::MIN_POSITIVE) })
}

pub fn coefficient_norm(c: &[Complex64]) -> f64 {
    compensated_sum(c.iter().map(|z| z.norm_sqr())).sqrt()
}

/// Neumaier summation.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut comp = 0.0;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            comp += (s - t) + x;
        } else {
            comp += (x - t) + s;
        }
        s = t;
    }
    s + comp
}

/// `‖ψ − u‖_{L²}` for `ψ = Σ c_k φ_k`: Parseval on `c − P u` in coefficient
/// space plus the part of `u` outside the basis, `‖u‖² − ‖P u‖²`, from the
/// exact `‖u‖²`.
pub fn l2_error(state: &[Complex64], u: &GaussianSum, grid: &SineGrid) -> Result<f64> {
    if state.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len().to_string(), got: state.len().to_string() });
    }
    let samples = grid.sample(u)?;
    let pu = grid.from_points(&samples);
    let inside = compensated_sum(state.iter().zip(&pu).map(|(a, b)| (a - b).norm_sqr()));
    // discrete Parseval: ‖P u‖² is the trapezoid sum of |u|² on the grid
    let pu2 = compensated_sum(samples.iter().map(|z| z.norm_sqr())) * grid.spacing().powi(grid.dim() as i32);
    let outside = (inner_sum(u, u)?.re - pu2).max(0.0);
    Ok((inside + outside).sqrt())
}

/// Embeds coefficients of an `n`-mode grid into an `m ≥ n`-mode grid on the
/// same box; the sine modes coincide, so this is exact.
pub fn embed_coefficients(coeffs: &[Complex64], dim: usize, n: usize, m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.pow(dim as u32)];
    for (idx, c) in coeffs.iter().enumerate() {
        let mut rest = idx;
        let mut target = 0;
        let mut stride = 1;
        for _ in 0..dim {
            target += (rest % n) * stride;
            rest /= n;
            stride *= m;
        }
        out[target] = *c;
    }
    out
}

/// `e^{ih(Δ−V)} ≈ e^{ihΔ/2} e^{−ihV} e^{ihΔ/2}` for a fixed step `h`.
#[derive(Debug, Clone)]
pub struct StrangPropagator {
    grid: SineGrid,
    step: f64,
    kinetic_half: Vec<Complex64>,
    potential: Vec<Complex64>,
}

impl StrangPropagator {
    /// `potential` is evaluated at the collocation points; its real part is used.
    pub fn new(grid: &SineGrid, potential: &GaussianSum, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {step}")));
        }
        let n = grid.modes();
        let energies: Vec<f64> = (1..=n).map(|k| grid.mode_energy(k)).collect();
        let mut kinetic_half = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (i, slot) in kinetic_half.iter_mut().enumerate() {
            let idx = grid.unflatten(i);
            let e: f64 = (0..grid.dim()).map(|a| energies[idx[a]]).sum();
            *slot = Complex64::from_polar(1.0, -0.5 * step * e);
        }
        let mut pot = vec![Complex64::new(0.0, 0.0); grid.len()];
        if !potential.is_empty() {
            grid.check_dim(potential)?;
            grid.for_each_point(|i, x| pot[i] = Complex64::from_polar(1.0, -step * potential.eval(x).re));
        } else {
            pot.iter_mut().for_each(|z| *z = Complex64::new(1.0, 0.0));
        }
        Ok(Self { grid: grid.clone(), step, kinetic_half, potential: pot })
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn grid(&self) -> &SineGrid {
        &self.grid
    }

    pub fn strang_step(&self, state: &mut [Complex64]) {
        for (c, k) in state.iter_mut().zip(&self.kinetic_half) {
            *c *= k;
        }
        let mut pts = self.grid.to_points(state);
        for (p, v) in pts.iter_mut().zip(&self.potential) {
            *p *= v;
        }
        let back = self.grid.from_points(&pts);
        for ((c, b), k) in state.iter_mut().zip(back).zip(&self.kinetic_half) {
            *c = b * k;
        }
    }

    /// States after `0, every, 2·every, …, steps` steps.
    pub fn trajectory(&self, initial: &[Complex64], steps: usize, every: usize) -> Vec<Vec<Complex64>> {
        let every = every.max(1);
        let mut out = vec![initial.to_vec()];
        let mut s = initial.to_vec();
        for i in 1..=steps {
            self.strang_step(&mut s);
            if i % every == 0 {
                out.push(s.clone());
            }
        }
        out
    }
}

/// Default reference step count per unit horizon.
pub const DEFAULT_STEPS: usize = 1000;

/// Reference states at the `intervals + 1` uniform nodes of `[0, t_final]`
/// using `steps_per_interval` Strang steps between nodes.
pub fn reference_at_nodes(
    grid: &SineGrid,
    potential: &GaussianSum,
    initial: &GaussianSum,
    t_final: f64,
    intervals: usize,
    steps_per_interval: usize,
) -> Result<(Projection, Vec<Vec<Complex64>>)> {
    if intervals == 0 || steps_per_interval == 0 {
        return Err(Error::InvalidParameter("intervals and steps must be positive".into()));
    }
    let h = t_final / (intervals * steps_per_interval) as f64;
    let prop = StrangPropagator::new(grid, potential, h)?;
    let p0 = project(initial, grid)?;
    let traj = prop.trajectory(&p0.coeffs, intervals * steps_per_interval, steps_per_interval);
    Ok((p0, traj))
}

/// Header fields of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub modes: usize,
    pub half_width: f64,
    pub step: f64,
    pub time: f64,
}

const SNAPSHOT_MAGIC: &str = "sine-snapshot v1";

/// Text header line followed by `n^d` little-endian `(re, im)` pairs of
/// `f64` in row-major coefficient order.
pub fn encode_snapshot(header: &SnapshotHeader, coeffs: &[Complex64]) -> Vec<u8> {
    let mut out = format!(
        "{SNAPSHOT_MAGIC} dim={} modes={} half_width={:e} step={:e} time={:e} byte_order=little-endian layout=row-major-complex128\n",
        header.dim, header.modes, header.half_width, header.step, header.time
    )
    .into_bytes();
    out.reserve(16 * coeffs.len());
    for z in coeffs {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn write_snapshot(path: &Path, header: &SnapshotHeader, coeffs: &[Complex64]) -> std::io::Result<()> {
    std::fs::write(path, encode_snapshot(header, coeffs))
}

pub fn read_snapshot(path: &Path) -> std::io::Result<(SnapshotHeader, Vec<Complex64>)> {
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let line = line.trim_end();
    if !line.starts_with(SNAPSHOT_MAGIC) {
        return Err(bad("not a sine snapshot"));
    }
    let field = |key: &str| -> std::io::Result<&str> {
        line.split_whitespace()
            .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| bad(&format!("missing {key}")))
    };
    let num = |key: &str| -> std::io::Result<f64> { field(key)?.parse().map_err(|_| bad(key)) };
    let header = SnapshotHeader {
        dim: field("dim")?.parse().map_err(|_| bad("dim"))?,
        modes: field("modes")?.parse().map_err(|_| bad("modes"))?,
        half_width: num("half_width")?,
        step: num("step")?,
        time: num("time")?,
    };
    let n = header.modes.pow(header.dim as u32);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 16 * n {
        return Err(bad("payload length does not match header"));
    }
    let coeffs = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((header, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{free_evolve, width_from_parts, GaussianTerm, C64};

    fn packet(d: usize, q: &[f64], p: &[f64], a: f64) -> GaussianSum {
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = a;
        }
        let t = GaussianTerm::wavepacket(d, C64::one(), q, p, width_from_parts(d, &w, &vec![0.0; d * d])).unwrap();
        GaussianSum::from_terms(d, vec![t]).unwrap()
    }

    fn barrier() -> GaussianSum {
        let bump = |h: f64, c: f64| {
            GaussianTerm::wavepacket(1, C64::from_f64(h, 0.0), &[c], &[0.0], width_from_parts(1, &[1.0], &[0.0]))
                .unwrap()
        };
        GaussianSum::from_terms(1, vec![bump(1.5, -2.0), bump(1.0, 2.0)]).unwrap()
    }

    #[test]
    fn dst_matches_direct_sum() {
        let g = SineGrid::new(1, 1.0, 7).unwrap();
        let x: Vec<Complex64> = (0..7).map(|j| Complex64::new(j as f64 * 0.3 - 1.0, (j * j) as f64 * 0.1)).collect();
        let mut y = x.clone();
        g.dst(&mut y);
        for k in 1..=7 {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 1..=7 {
                s += x[j - 1] * (std::f64::consts::PI * (j * k) as f64 / 8.0).sin();
            }
            assert!((s - y[k - 1]).norm() < 1e-13);
        }
    }

    #[test]
    fn point_transforms_are_inverse() {
        for d in 1..=3 {
            let g = SineGrid::new(d, 3.0, 9).unwrap();
            let c: Vec<Complex64> =
                (0..g.len()).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.7).cos())).collect();
            let back = g.from_points(&g.to_points(&c));
            for (a, b) in c.iter().zip(&back) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_in_coefficients() {
        // Parseval: ‖Σ c_k φ_k‖² sampled by the trapezoid rule equals ‖c‖²
        let g = SineGrid::new(2, 2.0, 12).unwrap();
        let c: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new(1.0 / (1.0 + i as f64), 0.3)).collect();
        let pts = g.to_points(&c);
        let quad: f64 = pts.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.spacing().powi(2);
        assert!((quad - coefficient_norm(&c).powi(2)).abs() < 1e-12 * quad);
    }

    #[test]
    fn projection_reconstructs_samples() {
        let g = SineGrid::new(1, 30.0, 256).unwrap();
        let u = packet(1, &[0.0], &[0.0], 1.0);
        let p = project(&u, &g).unwrap();
        assert!(!p.tail_warning);
        // reconstruct at points off the collocation grid
        let max_err = (0..50)
            .map(|i| {
                let x = -5.0 + 0.2037 * i as f64;
                let mut v = Complex64::new(0.0, 0.0);
                for (k, c) in p.coeffs.iter().enumerate() {
                    v += c * ((k + 1) as f64 * std::f64::consts::PI * (x + 30.0) / 60.0).sin() / 30f64.sqrt();
                }
                (v - u.eval(&[x]).to_complex64()).norm()
            })
            .fold(0.0, f64::max);
        assert!(max_err < 1e-8, "{max_err}");
        assert!(l2_error(&p.coeffs, &u, &g).unwrap() < 1e-7);
    }

    /// `‖Σ c_k φ_k − u‖` measured on the grid refined by `2^levels`, where
    /// the coarse basis embeds by zero padding.
    fn refined_error(c: &[Complex64], n: usize, u: &GaussianSum, levels: u32) -> f64 {
        let nf = (n + 1) * 2usize.pow(levels) - 1;
        let fine = SineGrid::new(1, 30.0, nf).unwrap();
        let mut padded = vec![Complex64::new(0.0, 0.0); nf];
        padded[..n].copy_from_slice(c);
        l2_error(&padded, u, &fine).unwrap()
    }

    #[test]
    fn coarser_projection_is_worse() {
        let u = packet(1, &[1.0], &[2.0], 1.0);
        let mut prev = 0.0;
        for n in [63, 31, 15] {
            let g = SineGrid::new(1, 30.0, n).unwrap();
            let p = project(&u, &g).unwrap();
            let e = refined_error(&p.coeffs, n, &u, 4);
            assert!(e > prev, "n={n}: {e} <= {prev}");
            prev = e;
        }
    }

    #[test]
    fn embedding_matches_finer_projection() {
        let u = packet(2, &[1.0, -0.5], &[0.5, 1.0], 1.0);
        let coarse = project(&u, &SineGrid::new(2, 8.0, 32).unwrap()).unwrap().coeffs;
        let fine = project(&u, &SineGrid::new(2, 8.0, 64).unwrap()).unwrap().coeffs;
        let embedded = embed_coefficients(&coarse, 2, 32, 64);
        let diff: Vec<Complex64> = embedded.iter().zip(&fine).map(|(a, b)| a - b).collect();
        assert!(coefficient_norm(&diff) < 1e-6 * coefficient_norm(&fine), "{}", coefficient_norm(&diff));
    }

    #[test]
    fn tail_warning_for_small_box() {
        let g = SineGrid::new(1, 4.0, 64).unwrap();
        let p = project(&packet(1, &[3.0], &[0.0], 1.0), &g).unwrap();
        assert!(p.tail_warning);
    }

    #[test]
    fn free_steps_conserve_norm_and_match_closed_form() {
        let g = SineGrid::new(1, 30.0, 512).unwrap();
        let u = packet(1, &[0.0], &[0.0], 1.0);
        let prop = StrangPropagator::new(&g, &GaussianSum::new(1), 0.01).unwrap();
        let mut s = project(&u, &g).unwrap().coeffs;
        let n0 = coefficient_norm(&s);
        for _ in 0..50 {
            prop.strang_step(&mut s);
        }
        assert!((coefficient_norm(&s) - n0).abs() < 1e-13 * n0);
        let exact = GaussianSum::from_terms(1, vec![free_evolve(&u.terms()[0], 0.5, 1.0).unwrap()]).unwrap();
        assert!(l2_error(&s, &exact, &g).unwrap() < 1e-6);
        for _ in 0..450 {
            prop.strang_step(&mut s);
        }
        // a wide packet stays inside the box up to t = 5; narrower ones
        // spread to the walls and reflect
        let u5 = packet(1, &[0.0], &[0.2], 0.25);
        let mut s5 = project(&u5, &g).unwrap().coeffs;
        for _ in 0..500 {
            prop.strang_step(&mut s5);
        }
        let e5 = GaussianSum::from_terms(1, vec![free_evolve(&u5.terms()[0], 5.0, 1.0).unwrap()]).unwrap();
        assert!(l2_error(&s5, &e5, &g).unwrap() < 1e-6);
    }

    #[test]
    fn strang_is_second_order_on_barrier() {
        let g = SineGrid::new(1, 30.0, 256).unwrap();
        let u = packet(1, &[6.0], &[-1.0], 1.0);
        let p0 = project(&u, &g).unwrap().coeffs;
        let run = |steps: usize| {
            let prop = StrangPropagator::new(&g, &barrier(), 2.0 / steps as f64).unwrap();
            let mut s = p0.clone();
            for _ in 0..steps {
                prop.strang_step(&mut s);
            }
            s
        };
        let diff =
            |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let (s1, s2, s3) = (run(50), run(100), run(200));
        let order = (diff(&s1, &s2) / diff(&s2, &s3)).log2();
        assert!((order - 2.0).abs() < 0.15, "order {order}");
        let n0 = coefficient_norm(&p0);
        assert!((coefficient_norm(&s3) - n0).abs() < 1e-12 * n0 * 200.0);
    }

    #[test]
    fn three_dimensional_free_motion() {
        let g = SineGrid::new(3, 20.0, 80).unwrap();
        let u = packet(3, &[1.0, -0.5, 0.0], &[0.5, 0.0, -0.5], 1.0);
        let prop = StrangPropagator::new(&g, &GaussianSum::new(3), 0.05).unwrap();
        let mut s = project(&u, &g).unwrap().coeffs;
        for _ in 0..20 {
            prop.strang_step(&mut s);
        }
        let exact = GaussianSum::from_terms(3, vec![free_evolve(&u.terms()[0], 1.0, 1.0).unwrap()]).unwrap();
        assert!(l2_error(&s, &exact, &g).unwrap() < 1e-6);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let h = SnapshotHeader { dim: 2, modes: 3, half_width: 30.0, step: 0.005, time: 1.25 };
        let c: Vec<Complex64> = (0..9).map(|i| Complex64::new(i as f64 / 3.0, -(i as f64).sqrt())).collect();
        write_snapshot(&path, &h, &c).unwrap();
        let (h2, c2) = read_snapshot(&path).unwrap();
        assert_eq!(h, h2);
        assert_eq!(c, c2);
    }
}
