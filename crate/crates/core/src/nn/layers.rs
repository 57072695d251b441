//! Dense tensors, 3×3 same-padding convolution via im2col + GEMM, ReLU,
//! 2×2 max pooling and the affine layer, with their backward passes.

use std::ops::{Add, AddAssign, Div, Mul, Sub};

/// Floating-point element type for network arithmetic. `f32` runs training
/// and inference; `f64` backs gradient verification.
pub trait Real:
    Copy
    + Default
    + PartialOrd
    + Send
    + Sync
    + std::fmt::Debug
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C ← A·B + beta·C` for row-major `A: m×k`, `B: k×n`, `C: m×n`, with
    /// arbitrary strides given as (row stride, column stride).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let max_index = |rows: usize, cols: usize, (rs, cs): (isize, isize)| {
                    (rows.saturating_sub(1) as isize * rs + cols.saturating_sub(1) as isize * cs) as usize
                };
                if k > 0 {
                    assert!(max_index(m, k, a_strides) < a.len());
                    assert!(max_index(k, n, b_strides) < b.len());
                }
                // SAFETY: bounds of every operand were checked above.
                unsafe {
                    $gemm(
                        m, k, n, 1.0,
                        a.as_ptr(), a_strides.0, a_strides.1,
                        b.as_ptr(), b_strides.0, b_strides.1,
                        beta,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// 3×3 convolution with unit stride and one pixel of zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `out_ch × in_ch × 3 × 3`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Fully connected layer, `weight` is row-major `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv<T> {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            weight: vec![T::ZERO; out_ch * in_ch * 9],
            bias: vec![T::ZERO; out_ch],
        }
    }

    pub fn cast<U: Real>(&self) -> Conv<U> {
        Conv {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            weight: cast_slice(&self.weight),
            bias: cast_slice(&self.bias),
        }
    }
}

impl<T: Real> Dense<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![T::ZERO; out_dim * in_dim],
            bias: vec![T::ZERO; out_dim],
        }
    }

    pub fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weight: cast_slice(&self.weight),
            bias: cast_slice(&self.bias),
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut out = self.bias.clone();
        T::gemm(
            self.out_dim,
            self.in_dim,
            1,
            &self.weight,
            (self.in_dim as isize, 1),
            x,
            (1, 1),
            T::ONE,
            &mut out,
        );
        out
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[T], d_out: &[T], grad: &mut Dense<T>) -> Vec<T> {
        for (gb, &d) in grad.bias.iter_mut().zip(d_out) {
            *gb += d;
        }
        // dW += d_out ⊗ x
        T::gemm(
            self.out_dim,
            1,
            self.in_dim,
            d_out,
            (1, 1),
            x,
            (1, 1),
            T::ONE,
            &mut grad.weight,
        );
        let mut d_x = vec![T::ZERO; self.in_dim];
        // dx = Wᵀ d_out
        T::gemm(
            self.in_dim,
            self.out_dim,
            1,
            &self.weight,
            (1, self.in_dim as isize),
            d_out,
            (1, 1),
            T::ZERO,
            &mut d_x,
        );
        d_x
    }
}

pub fn cast_slice<T: Real, U: Real>(v: &[T]) -> Vec<U> {
    v.iter().map(|x| U::from_f64(x.to_f64())).collect()
}

/// Unfolds `[ch][h][w]` into `[(ch·9)][h·w]` columns with zero padding.
pub fn im2col<T: Real>(input: &[T], ch: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut cols = vec![T::ZERO; ch * 9 * hw];
    for c in 0..ch {
        let plane = &input[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * 9) + ky * 3 + kx) * hw..((c * 9) + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut row[y * w..(y + 1) * w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds column gradients back onto the input grid.
pub fn col2im<T: Real>(cols: &[T], ch: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::ZERO; ch * hw];
    for c in 0..ch {
        let plane = &mut out[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 9) + ky * 3 + kx) * hw..((c * 9) + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src = &row[y * w..(y + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, &s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, &s)| *d += s),
                    }
                }
            }
        }
    }
    out
}

/// Cached state of one conv → ReLU → max-pool block.
#[derive(Debug, Clone)]
pub struct BlockTrace<T> {
    pub h: usize,
    pub w: usize,
    pub cols: Vec<T>,
    /// Post-ReLU activations, `out_ch × h·w`.
    pub act: Vec<T>,
    /// For each pooled output, the flat index of the winning input in `act`.
    pub argmax: Vec<u32>,
}

impl<T: Real> Conv<T> {
    /// Runs conv + ReLU + 2×2 max pool; returns the pooled map and a trace.
    pub fn forward_block(&self, input: &[T], h: usize, w: usize) -> (Vec<T>, BlockTrace<T>) {
        self.forward_block_gated(input, h, w, None)
    }

    /// As [`Conv::forward_block`], optionally with the ReLU on/off pattern
    /// and pooling winners taken from an earlier trace instead of computed.
    /// With a fixed gate the block is affine in its parameters.
    pub fn forward_block_gated(
        &self,
        input: &[T],
        h: usize,
        w: usize,
        gate: Option<&BlockTrace<T>>,
    ) -> (Vec<T>, BlockTrace<T>) {
        let hw = h * w;
        let cols = im2col(input, self.in_ch, h, w);
        let mut act = vec![T::ZERO; self.out_ch * hw];
        for (oc, chunk) in act.chunks_mut(hw).enumerate() {
            chunk.fill(self.bias[oc]);
        }
        T::gemm(
            self.out_ch,
            self.in_ch * 9,
            hw,
            &self.weight,
            ((self.in_ch * 9) as isize, 1),
            &cols,
            (hw as isize, 1),
            T::ONE,
            &mut act,
        );
        match gate {
            Some(g) => {
                for (v, &on) in act.iter_mut().zip(&g.act) {
                    if !(on > T::ZERO) {
                        *v = T::ZERO;
                    }
                }
            }
            None => {
                for v in act.iter_mut() {
                    if !(*v > T::ZERO) {
                        *v = T::ZERO;
                    }
                }
            }
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut pooled = vec![T::ZERO; self.out_ch * oh * ow];
        let mut argmax = vec![0u32; self.out_ch * oh * ow];
        for c in 0..self.out_ch {
            for y in 0..oh {
                for x in 0..ow {
                    let o = (c * oh + y) * ow + x;
                    let mut best = c * hw + (2 * y) * w + 2 * x;
                    if let Some(g) = gate {
                        best = g.argmax[o] as usize;
                    } else {
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = c * hw + (2 * y + dy) * w + 2 * x + dx;
                            if act[idx] > act[best] {
                                best = idx;
                            }
                        }
                    }
                    pooled[o] = act[best];
                    argmax[o] = best as u32;
                }
            }
        }
        (
            pooled,
            BlockTrace {
                h,
                w,
                cols,
                act,
                argmax,
            },
        )
    }

    /// Backpropagates through pool, ReLU and conv. Parameter gradients are
    /// accumulated into `grad`; the input gradient is returned when requested.
    pub fn backward_block(
        &self,
        trace: &BlockTrace<T>,
        d_pooled: &[T],
        grad: &mut Conv<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        let hw = trace.h * trace.w;
        let mut d_act = vec![T::ZERO; self.out_ch * hw];
        for (&idx, &d) in trace.argmax.iter().zip(d_pooled) {
            d_act[idx as usize] += d;
        }
        // ReLU mask: the gradient only flows where the activation is positive.
        for (d, &a) in d_act.iter_mut().zip(&trace.act) {
            if !(a > T::ZERO) {
                *d = T::ZERO;
            }
        }
        for (oc, chunk) in d_act.chunks(hw).enumerate() {
            let mut s = T::ZERO;
            for &v in chunk {
                s += v;
            }
            grad.bias[oc] += s;
        }
        let k = self.in_ch * 9;
        // dW += d_act · colsᵀ
        T::gemm(
            self.out_ch,
            hw,
            k,
            &d_act,
            (hw as isize, 1),
            &trace.cols,
            (1, hw as isize),
            T::ONE,
            &mut grad.weight,
        );
        if !need_input_grad {
            return None;
        }
        let mut d_cols = vec![T::ZERO; k * hw];
        // d_cols = Wᵀ · d_act
        T::gemm(
            k,
            self.out_ch,
            hw,
            &self.weight,
            (1, k as isize),
            &d_act,
            (hw as isize, 1),
            T::ZERO,
            &mut d_cols,
        );
        Some(col2im(&d_cols, self.in_ch, trace.h, trace.w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line 3×3 same-padding convolution for comparison.
    fn naive_conv(conv: &Conv<f64>, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; conv.out_ch * h * w];
        for oc in 0..conv.out_ch {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = conv.bias[oc];
                    for ic in 0..conv.in_ch {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += conv.weight[((oc * conv.in_ch + ic) * 3 + ky) * 3 + kx]
                                    * input[(ic * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[(oc * h + y) * w + x] = acc.max(0.0);
                }
            }
        }
        out
    }

    fn fill(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn gemm_conv_matches_naive() {
        let mut conv = Conv::<f64>::zeros(3, 4);
        conv.weight = fill(conv.weight.len(), 1);
        conv.bias = fill(4, 2);
        let (h, w) = (6, 5);
        let input = fill(3 * h * w, 3);
        let (_, trace) = conv.forward_block(&input, h, w);
        let expected = naive_conv(&conv, &input, h, w);
        for (a, b) in trace.act.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w) = (2, 5, 4);
        let x = fill(c * h * w, 4);
        let y = fill(c * 9 * h * w, 5);
        let lhs: f64 = im2col(&x, c, h, w).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, c, h, w)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pooling_floor_and_first_max() {
        let conv = Conv::<f64> { in_ch: 1, out_ch: 1, weight: vec![0., 0., 0., 0., 1., 0., 0., 0., 0.], bias: vec![0.0] };
        let input = vec![1.0, 1.0, 2.0, 0.0, 1.0, 1.0, 0.0, 2.0, 9.0, 9.0, 9.0, 9.0];
        let (pooled, trace) = conv.forward_block(&input, 3, 4);
        assert_eq!(pooled, vec![1.0, 2.0]);
        assert_eq!(trace.argmax, vec![0, 2]);
    }

    #[test]
    fn dense_backward_matches_definition() {
        let mut d = Dense::<f64>::zeros(3, 2);
        d.weight = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x = [1.0, -1.0, 0.5];
        assert_eq!(d.forward(&x), vec![0.5, 2.0]);
        let mut g = Dense::zeros(3, 2);
        let dx = d.backward(&x, &[1.0, 2.0], &mut g);
        assert_eq!(dx, vec![9.0, 12.0, 15.0]);
        assert_eq!(g.weight, vec![1.0, -1.0, 0.5, 2.0, -2.0, 1.0]);
        assert_eq!(g.bias, vec![1.0, 2.0]);
    }
}
