//! Surface-measure convolutions: the smooth kernel, its normalization,
//! slice convolution by tensor Gauss quadrature, and the admissibility
//! margin over a sampled opposing family.

use thiserror::Error;

use crate::families::SliceMember;
use crate::grid::GridComplex;
use crate::quadrature::{adaptive_simpson, gauss_legendre};

#[derive(Debug, Error)]
pub enum MollifierError {
    #[error("kernel radius {eps} exceeds the family margin {margin}")]
    EpsilonTooLarge { eps: f64, margin: f64 },
    #[error("no opposing members supplied")]
    EmptySample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelProfile {
    /// `c_n exp(-1/(1-|x|^2))` inside the unit ball.
    SmoothBump,
    /// The nonsmooth comparison kernel `chi_B / |B|`.
    BallIndicator,
}

/// Scaled mollifier kernel `phi_eps(x) = eps^{-n} phi(x / eps)` with unit
/// total mass.
#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    pub dim: usize,
    pub epsilon: f64,
    pub normalization: f64,
    pub profile: KernelProfile,
}

/// Surface area of the unit sphere in R^n.
fn sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        _ => unreachable!("dimension out of range"),
    }
}

/// Volume of the unit ball in R^n.
fn ball_volume(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        _ => unreachable!("dimension out of range"),
    }
}

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

impl Kernel {
    /// Smooth bump kernel; the normalization constant comes from a dense
    /// radial quadrature so the unit-ball integral is 1.
    pub fn new(dim: usize, epsilon: f64) -> Self {
        assert!(epsilon > 0.0);
        let radial = adaptive_simpson(
            &|r: f64| r.powi(dim as i32 - 1) * bump(r * r),
            0.0,
            1.0,
            1e-14,
        );
        Kernel {
            dim,
            epsilon,
            normalization: 1.0 / (sphere_area(dim) * radial),
            profile: KernelProfile::SmoothBump,
        }
    }

    pub fn ball_indicator(dim: usize, epsilon: f64) -> Self {
        Kernel {
            dim,
            epsilon,
            normalization: 1.0 / ball_volume(dim),
            profile: KernelProfile::BallIndicator,
        }
    }

    /// `phi_eps` at a displacement vector.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| (v / self.epsilon).powi(2)).sum();
        if r2 >= 1.0 {
            return 0.0;
        }
        let scale = self.normalization * self.epsilon.powi(-(self.dim as i32));
        match self.profile {
            KernelProfile::SmoothBump => scale * bump(r2),
            KernelProfile::BallIndicator => scale,
        }
    }
}

/// Tensor Gauss rule over the geometric pieces of a member, with panels
/// subdivided to the kernel scale: the bump is smooth but stiff at its
/// support edge, so panels wider than `eps/4` lose the rule's accuracy.
fn integrate_over_member<F: FnMut(&[f64], f64)>(
    complex: &GridComplex,
    member: &SliceMember,
    order: usize,
    panel_len: f64,
    mut visit: F,
) {
    let n = complex.n();
    let (nodes, weights) = gauss_legendre(order);
    for face in &member.faces {
        let b = &face.geometry;
        let extents: Vec<usize> = (0..n).filter(|&i| b.lo[i] < b.hi[i]).collect();
        // Multiplicity-carrying faces scale by weight / piece measure.
        let piece_measure: f64 = extents
            .iter()
            .map(|&a| (b.hi[a] - b.lo[a]) as f64 * 0.5 * complex.h())
            .product();
        let factor = if piece_measure > 0.0 {
            face.weight / piece_measure
        } else {
            0.0
        };
        let panels: Vec<usize> = extents
            .iter()
            .map(|&a| {
                let len = (b.hi[a] - b.lo[a]) as f64 * 0.5 * complex.h();
                ((len / panel_len).ceil() as usize).clamp(1, 16)
            })
            .collect();
        let base: Vec<f64> = (0..n).map(|i| complex.tick_to_len(b.lo[i])).collect();
        // Index = (panel, node) per extent axis.
        let mut idx = vec![(0usize, 0usize); extents.len()];
        'quad: loop {
            let mut y = base.clone();
            let mut w = factor;
            for (pos, &a) in extents.iter().enumerate() {
                let lo = complex.tick_to_len(b.lo[a]);
                let hi = complex.tick_to_len(b.hi[a]);
                let step = (hi - lo) / panels[pos] as f64;
                let plo = lo + idx[pos].0 as f64 * step;
                let half = 0.5 * step;
                y[a] = plo + half * (nodes[idx[pos].1] + 1.0);
                w *= half * weights[idx[pos].1];
            }
            visit(&y, w);
            let mut pos = 0;
            loop {
                if pos == extents.len() {
                    break 'quad;
                }
                idx[pos].1 += 1;
                if idx[pos].1 < order {
                    break;
                }
                idx[pos].1 = 0;
                idx[pos].0 += 1;
                if idx[pos].0 < panels[pos] {
                    break;
                }
                idx[pos].0 = 0;
                pos += 1;
            }
        }
    }
}

/// `phi_eps^S(x)`: the kernel integrated over the member's geometric
/// pieces. Deterministic for a given order.
pub fn convolve_surface(
    complex: &GridComplex,
    member: &SliceMember,
    kernel: &Kernel,
    x: &[f64],
    order: usize,
) -> f64 {
    let n = complex.n();
    let mut total = 0.0;
    let panel = kernel.epsilon / (2 * order) as f64;
    integrate_over_member(complex, member, order, panel, |y, w| {
        let diff: Vec<f64> = (0..n).map(|i| x[i] - y[i]).collect();
        total += w * kernel.eval(&diff);
    });
    total
}

/// Integral of `phi_eps^S` over one opposing member, by the same tensor
/// rule on the outer surface.
pub fn surface_integral(
    complex: &GridComplex,
    s_member: &SliceMember,
    kernel: &Kernel,
    target: &SliceMember,
    order: usize,
) -> f64 {
    let mut total = 0.0;
    let panel = kernel.epsilon / (2 * order) as f64;
    integrate_over_member(complex, target, order, panel, |x, w| {
        total += w * convolve_surface(complex, s_member, kernel, x, order);
    });
    total
}

/// Minimum of `int_{S*} phi_eps^S` over the sampled opposing members,
/// with the index of the minimizer.
pub fn admissibility_margin(
    complex: &GridComplex,
    s_member: &SliceMember,
    kernel: &Kernel,
    family_samples: &[SliceMember],
    sample_margin: f64,
    order: usize,
) -> Result<(f64, usize), MollifierError> {
    if family_samples.is_empty() {
        return Err(MollifierError::EmptySample);
    }
    if kernel.epsilon > sample_margin {
        return Err(MollifierError::EpsilonTooLarge {
            eps: kernel.epsilon,
            margin: sample_margin,
        });
    }
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (i, target) in family_samples.iter().enumerate() {
        let v = surface_integral(complex, s_member, kernel, target, order);
        if v < best {
            best = v;
            arg = i;
        }
    }
    Ok((best, arg))
}

/// Coarea factor of the difference map on a product of tangent frames:
/// `sqrt(det(M M^T))` for the square matrix with the S* frame and the
/// negated S frame as columns. Unit columns force the factor below 1.
pub fn jacobian_coarea_factor(frame_star: &[Vec<f64>], frame_s: &[Vec<f64>]) -> f64 {
    let n = frame_star.first().or(frame_s.first()).map_or(0, |v| v.len());
    let cols: Vec<Vec<f64>> = frame_star
        .iter()
        .cloned()
        .chain(frame_s.iter().map(|w| w.iter().map(|v| -v).collect()))
        .collect();
    debug_assert_eq!(cols.len(), n);
    let mut m = vec![0.0f64; n * n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            m[i * n + j] = col[i];
        }
    }
    det(&mut m, n).abs()
}

fn det(m: &mut [f64], n: usize) -> f64 {
    let mut d = 1.0;
    for c in 0..n {
        let mut piv = c;
        for r in c + 1..n {
            if m[r * n + c].abs() > m[piv * n + c].abs() {
                piv = r;
            }
        }
        if m[piv * n + c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for j in 0..n {
                m.swap(c * n + j, piv * n + j);
            }
            d = -d;
        }
        d *= m[c * n + c];
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            for j in c..n {
                m[r * n + j] -= f * m[c * n + j];
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{axis_members, FamilyHandle, Mode, Side};
    use crate::grid::{build_grid, BoxSpec};
    use crate::quadrature::gauss_legendre;

    #[test]
    fn kernel_vanishes_outside_ball_and_is_symmetric() {
        for n in 1..=4usize {
            let k = Kernel::new(n, 0.3);
            let x = vec![0.31]
                .into_iter()
                .chain(vec![0.0; n - 1])
                .collect::<Vec<_>>();
            assert_eq!(k.eval(&x), 0.0);
            let mut y = vec![0.07; n];
            y[0] = -0.11;
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            assert_eq!(k.eval(&y), k.eval(&neg));
        }
    }

    #[test]
    fn kernel_total_mass_is_one() {
        for n in [1usize, 2, 3] {
            let eps = 0.8;
            let k = Kernel::new(n, eps);
            let order = 48;
            let (nodes, weights) = gauss_legendre(order);
            let mut total = 0.0;
            let mut idx = vec![0usize; n];
            'grid: loop {
                let mut x = vec![0.0; n];
                let mut w = 1.0;
                for i in 0..n {
                    x[i] = eps * nodes[idx[i]];
                    w *= eps * weights[idx[i]];
                }
                total += w * k.eval(&x);
                let mut pos = 0;
                loop {
                    if pos == n {
                        break 'grid;
                    }
                    idx[pos] += 1;
                    if idx[pos] < order {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
            }
            assert!((total - 1.0).abs() < 1e-6, "n={n}: {total}");
        }
    }

    #[test]
    fn ball_indicator_mass_is_one_2d() {
        let eps = 0.5;
        let k = Kernel::ball_indicator(2, eps);
        let mass = std::f64::consts::PI * eps * eps * k.eval(&[0.0, 0.0]);
        assert!((mass - 1.0).abs() < 1e-12);
    }

    fn mid_fiber(complex: &GridComplex) -> SliceMember {
        let members =
            axis_members(complex, &FamilyHandle::new(Side::A, Mode::AxisRestricted)).unwrap();
        members[members.len() / 2].clone()
    }

    #[test]
    fn convolution_vanishes_far_from_surface() {
        let g = build_grid(&BoxSpec::unit(2, 1, 8)).unwrap();
        let s = mid_fiber(&g);
        let k = Kernel::new(2, 0.1);
        // The fiber sits at y = 0.5625; probe beyond epsilon of it.
        let v = convolve_surface(&g, &s, &k, &[0.5, 0.8], 4);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn convolution_matches_dense_1d_oracle() {
        let g = build_grid(&BoxSpec::unit(2, 1, 16)).unwrap();
        let members =
            axis_members(&g, &FamilyHandle::new(Side::A, Mode::AxisRestricted)).unwrap();
        let s = members[7].clone();
        let height = 7.5 / 16.0;
        let eps = 0.1;
        let k = Kernel::new(2, eps);
        let x = [0.5, height];
        let got = convolve_surface(&g, &s, &k, &x, 8);
        // phi_eps^S(x) = int_0^1 phi_eps(x0 - s, 0) ds; dense 1-D oracle.
        let want = adaptive_simpson(&|t: f64| k.eval(&[x[0] - t, 0.0]), 0.0, 1.0, 1e-13);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn surface_mass_near_hk_measure() {
        // Total mass of phi_eps^S over Q stays within 2% of H^k(S) when S
        // keeps distance eps from the boundary; midpoint sums per cell.
        let g = build_grid(&BoxSpec::unit(2, 1, 16)).unwrap();
        let s = mid_fiber(&g);
        let k = Kernel::new(2, 0.1);
        let mut mass = 0.0;
        for rank in 0..g.top_cell_count() {
            let cell = g.top_cell_from_rank(rank);
            let center = g.center(&cell);
            mass += convolve_surface(&g, &s, &k, &center, 4) * g.cell_measure(&cell).unwrap();
        }
        assert!((mass - 1.0).abs() < 0.02, "mass {mass}");
    }

    #[test]
    fn admissibility_margin_on_axis_pair() {
        let g = build_grid(&BoxSpec::unit(2, 1, 16)).unwrap();
        let s = mid_fiber(&g);
        let handle = FamilyHandle {
            side: Side::B,
            mode: Mode::AxisRestricted,
            delta_margin: 0.15,
        };
        let stars = axis_members(&g, &handle).unwrap();
        let k = Kernel::new(2, 0.1);
        let (margin, _) = admissibility_margin(&g, &s, &k, &stars, 0.15, 4).unwrap();
        assert!(margin >= 1.0 - 1e-3, "margin {margin}");
        // Oversized kernels are refused.
        let wide = Kernel::new(2, 0.2);
        assert!(matches!(
            admissibility_margin(&g, &s, &wide, &stars, 0.15, 4),
            Err(MollifierError::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn margin_deficit_shrinks_with_quadrature_order() {
        let g = build_grid(&BoxSpec::unit(2, 1, 8)).unwrap();
        let s = mid_fiber(&g);
        let handle = FamilyHandle {
            side: Side::B,
            mode: Mode::AxisRestricted,
            delta_margin: 0.2,
        };
        let stars = axis_members(&g, &handle).unwrap();
        let k = Kernel::new(2, 0.15);
        let mut deficits = Vec::new();
        for order in [2usize, 4, 8] {
            let (margin, _) = admissibility_margin(&g, &s, &k, &stars, 0.2, order).unwrap();
            deficits.push((margin - 1.0).abs());
        }
        assert!(deficits[2] <= deficits[1] + 1e-12 && deficits[1] <= deficits[0] + 1e-12);
        assert!(deficits[2] < 1e-6, "{deficits:?}");
    }

    #[test]
    fn coarea_factor_flat_is_one_perturbed_below_one() {
        let j = jacobian_coarea_factor(&[vec![0.0, 1.0]], &[vec![1.0, 0.0]]);
        assert!((j - 1.0).abs() < 1e-15);
        // Unit tangents of analytically sampled perturbed curves.
        for i in 0..50 {
            let t = i as f64 * 0.13;
            let a = 0.4;
            let d1 = [1.0, a * t.cos()];
            let n1 = (1.0 + d1[1] * d1[1]).sqrt();
            let d2 = [a * (2.0 * t).sin(), 1.0];
            let n2 = (1.0 + d2[0] * d2[0]).sqrt();
            let j = jacobian_coarea_factor(
                &[vec![d2[0] / n2, d2[1] / n2]],
                &[vec![d1[0] / n1, d1[1] / n1]],
            );
            assert!(j <= 1.0 + 1e-9, "t={t}: {j}");
        }
    }

    #[test]
    fn flat_pair_in_3d_has_unit_factor() {
        // k = 1 fiber along x, S* the (y,z) plane frame.
        let j = jacobian_coarea_factor(
            &[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            &[vec![1.0, 0.0, 0.0]],
        );
        assert!((j - 1.0).abs() < 1e-15);
    }
}
