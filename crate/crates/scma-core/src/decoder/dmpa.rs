//! Discretized function-node updates on a complex-plane lattice.
//!
//! DMPA replaces the combination sum of a function-node update with a
//! density convolution. Each interfering user contributes an impulse train
//! on a square lattice of step `w`: mass η_{u→k}(m) at the snapped point
//! `h_{k,u}·x_{k,u}^m`. Convolving the trains with the sampled complex
//! Gaussian noise density and evaluating at the snapped target
//! `y_k − h_{k,j}·x_{k,j}^m` yields η_{k→j}(m).
//!
//! [`dmpa_fn_update`] materializes the grids and convolves them with FFTs.
//! [`dmpa_fn_update_direct`] evaluates the same sum pointwise from the
//! snapped lattice coordinates without building grids, which keeps
//! arbitrarily fine steps affordable; the decode path uses this form.
//! Density samples below 1e-12 are truncated to zero on both paths, so the
//! two agree to floating-point accuracy.
//!
//! # Example
//!
//! ```
//! use num_complex::Complex64;
//! use scma_core::codebook::CodebookSet;
//! use scma_core::decoder::{dmpa_fn_update_direct, init_messages, DecoderConfig, DmpaParams};
//! use scma_core::link::{self, ChannelModel};
//! use scma_core::rng::{frame_rng, StreamTag};
//!
//! let cbs = CodebookSet::star_qam_4x6();
//! let ch = link::realize_channel(
//!     ChannelModel::Awgn,
//!     cbs.graph(),
//!     0.2,
//!     &mut frame_rng(0, 0, StreamTag::Channel),
//! )
//! .unwrap();
//! let state = init_messages(&cbs, &DecoderConfig::dmpa()).unwrap();
//! let y0 = Complex64::new(0.3, -0.4);
//! let msg = dmpa_fn_update_direct(&state, y0, &ch, &cbs, 0, 0, &DmpaParams::default()).unwrap();
//! assert_eq!(msg.len(), 4);
//! ```

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::codebook::CodebookSet;
use crate::error::{Error, Result};
use crate::link::ChannelRealization;

use super::{ActiveSet, Domain, MessageState, OpCounters};

/// Density samples below this value are truncated to zero.
const DENSITY_FLOOR: f64 = 1e-12;

/// Lattice parameters for the DMPA function-node update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmpaParams {
    /// Lattice step `w` along each of the real and imaginary axes.
    pub grid_step: f64,
    /// Half-width of the impulse grids; `None` sizes them from the largest
    /// superposed codeword plus four noise standard deviations.
    pub grid_extent: Option<f64>,
}

impl Default for DmpaParams {
    fn default() -> Self {
        DmpaParams {
            grid_step: 0.05,
            grid_extent: None,
        }
    }
}

impl DmpaParams {
    /// Checks that the step and the optional extent are positive and finite.
    pub fn validate(&self) -> Result<()> {
        if !self.grid_step.is_finite() || self.grid_step <= 0.0 {
            return Err(Error::InvalidDecoderConfig(format!(
                "dmpa grid step must be positive and finite, got {}",
                self.grid_step
            )));
        }
        if let Some(extent) = self.grid_extent {
            if !extent.is_finite() || extent <= 0.0 {
                return Err(Error::InvalidDecoderConfig(format!(
                    "dmpa grid extent must be positive and finite, got {extent}"
                )));
            }
        }
        Ok(())
    }
}

fn snap(z: Complex64, w: f64) -> (i64, i64) {
    ((z.re / w).round() as i64, (z.im / w).round() as i64)
}

fn density(dx: i64, dy: i64, w: f64, n0: f64) -> f64 {
    let t2 = w * w * ((dx * dx + dy * dy) as f64);
    let val = (-t2 / n0).exp() / (std::f64::consts::PI * n0);
    if val < DENSITY_FLOOR {
        0.0
    } else {
        val
    }
}

/// Largest infinity-norm coordinate of the superposed constellation at
/// resource `k`, plus four noise standard deviations per axis.
fn auto_extent(channel: &ChannelRealization, cbs: &CodebookSet, k: usize) -> f64 {
    let xi = cbs.graph().users_on_resource(k);
    let m = cbs.size();
    let faded: Vec<Vec<Complex64>> = xi
        .iter()
        .map(|&j| {
            (0..m)
                .map(|sym| channel.coefficient(k, j) * cbs.component(k, j, sym))
                .collect()
        })
        .collect();
    let mut digits = vec![0usize; xi.len()];
    let count = m.pow(xi.len() as u32);
    let mut vmax = 0.0f64;
    for _ in 0..count {
        let sum: Complex64 = digits
            .iter()
            .enumerate()
            .map(|(pos, &sym)| faded[pos][sym])
            .sum();
        vmax = vmax.max(sum.re.abs()).max(sum.im.abs());
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < m {
                break;
            }
            digits[pos] = 0;
        }
    }
    vmax + 4.0 * (channel.n0() / 2.0).sqrt()
}

fn check_extent(point: Complex64, half: i64, w: f64, extent: f64) -> Result<(i64, i64)> {
    let (px, py) = snap(point, w);
    if px.abs() > half || py.abs() > half {
        return Err(Error::GridExtent {
            required: point.re.abs().max(point.im.abs()),
            wid: extent,
        });
    }
    Ok((px, py))
}

fn fft2(data: &mut [Complex64], size: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let fft = if inverse {
        planner.plan_fft_inverse(size)
    } else {
        planner.plan_fft_forward(size)
    };
    for row in data.chunks_exact_mut(size) {
        fft.process(row);
    }
    let mut transposed = vec![Complex64::ZERO; size * size];
    for r in 0..size {
        for c in 0..size {
            transposed[c * size + r] = data[r * size + c];
        }
    }
    for row in transposed.chunks_exact_mut(size) {
        fft.process(row);
    }
    for r in 0..size {
        for c in 0..size {
            data[r * size + c] = transposed[c * size + r];
        }
    }
}

/// DMPA function-node update η_{k→j} by explicit grid convolution.
///
/// Builds one impulse grid per interfering user and the truncated noise
/// density grid, convolves them with FFTs, and reads the result at the
/// snapped targets. Snapped impulses outside the grid raise
/// [`Error::GridExtent`]; targets outside the convolution support read 0.
pub fn dmpa_fn_update(
    state: &MessageState,
    y_k: Complex64,
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    k: usize,
    j: usize,
    params: &DmpaParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    require_probability_domain(state)?;
    state.edge(k, j)?;
    let w = params.grid_step;
    let n0 = channel.n0();
    let extent = params.grid_extent.unwrap_or_else(|| auto_extent(channel, cbs, k));
    let half = (extent / w).ceil() as i64;
    let side = (2 * half + 1) as usize;
    let xi = &state.xi[k];
    let m = state.size;

    let mut impulse_grids: Vec<Vec<Complex64>> = Vec::new();
    for &user in xi {
        if user == j {
            continue;
        }
        let msg = &state.vn_to_fn[state.edge_of[k][user].expect("edge exists")];
        let mut grid = vec![Complex64::ZERO; side * side];
        for (sym, &mass) in msg.iter().enumerate() {
            let point = channel.coefficient(k, user) * cbs.component(k, user, sym);
            let (px, py) = check_extent(point, half, w, extent)?;
            let idx = ((px + half) as usize) * side + (py + half) as usize;
            grid[idx] += Complex64::new(mass, 0.0);
        }
        impulse_grids.push(grid);
    }

    let cut_sq = n0 * -(DENSITY_FLOOR * std::f64::consts::PI * n0).ln();
    let r_cut = if cut_sq > 0.0 { cut_sq.sqrt() } else { 0.0 };
    let half_n = (r_cut / w).ceil() as i64 + 1;
    let side_n = (2 * half_n + 1) as usize;
    let mut noise_grid = vec![Complex64::ZERO; side_n * side_n];
    for ix in -half_n..=half_n {
        for iy in -half_n..=half_n {
            let val = density(ix, iy, w, n0);
            if val > 0.0 {
                let idx = ((ix + half_n) as usize) * side_n + (iy + half_n) as usize;
                noise_grid[idx] = Complex64::new(val, 0.0);
            }
        }
    }

    let trains = impulse_grids.len();
    let conv_size = trains * (side - 1) + (side_n - 1) + 1;
    let origin = trains as i64 * half + half_n;
    let mut planner = FftPlanner::new();
    let embed = |grid: &[Complex64], grid_side: usize| -> Vec<Complex64> {
        let mut padded = vec![Complex64::ZERO; conv_size * conv_size];
        for r in 0..grid_side {
            for c in 0..grid_side {
                padded[r * conv_size + c] = grid[r * grid_side + c];
            }
        }
        padded
    };
    let mut spectrum = embed(&noise_grid, side_n);
    fft2(&mut spectrum, conv_size, &mut planner, false);
    for grid in &impulse_grids {
        let mut padded = embed(grid, side);
        fft2(&mut padded, conv_size, &mut planner, false);
        for (s, p) in spectrum.iter_mut().zip(padded.iter()) {
            *s *= p;
        }
    }
    fft2(&mut spectrum, conv_size, &mut planner, true);
    let scale = 1.0 / (conv_size * conv_size) as f64;

    let mut out = vec![0.0; m];
    for (sym, value) in out.iter_mut().enumerate() {
        let target = y_k - channel.coefficient(k, j) * cbs.component(k, j, sym);
        let (tx, ty) = snap(target, w);
        let ix = tx + origin;
        let iy = ty + origin;
        if ix < 0 || iy < 0 || ix >= conv_size as i64 || iy >= conv_size as i64 {
            continue;
        }
        let raw = spectrum[(ix as usize) * conv_size + iy as usize].re * scale;
        *value = raw.max(0.0);
    }
    Ok(out)
}

/// DMPA function-node update η_{k→j} by direct evaluation.
///
/// Walks the interfering symbol combinations and accumulates the message
/// mass times the truncated noise density of the integer lattice offset
/// between the snapped target and the snapped impulse sum. Matches
/// [`dmpa_fn_update`] without materializing any grid, so the step may be
/// arbitrarily small.
pub fn dmpa_fn_update_direct(
    state: &MessageState,
    y_k: Complex64,
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    k: usize,
    j: usize,
    params: &DmpaParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    require_probability_domain(state)?;
    let ctx = DmpaContext::for_resource(y_k, channel, cbs, params, k)?;
    let active = ActiveSet::full(state.zeta.len(), state.size);
    let mut scratch = OpCounters::default();
    ctx.direct_message(state, k, j, &active, &mut scratch)
}

fn require_probability_domain(state: &MessageState) -> Result<()> {
    if state.domain() != Domain::Probability {
        return Err(Error::InvalidDecoderConfig(
            "dmpa updates require a probability-domain state".into(),
        ));
    }
    Ok(())
}

/// Precomputed snapped lattice coordinates for a decode session.
pub(super) struct DmpaContext {
    w: f64,
    n0: f64,
    impulses: Vec<Vec<Vec<(i64, i64)>>>,
    targets: Vec<Vec<Vec<(i64, i64)>>>,
    first_resource: usize,
}

impl DmpaContext {
    pub(super) fn new(
        y: &[Complex64],
        channel: &ChannelRealization,
        cbs: &CodebookSet,
        params: &DmpaParams,
    ) -> Result<Self> {
        params.validate()?;
        let mut ctx = DmpaContext {
            w: params.grid_step,
            n0: channel.n0(),
            impulses: Vec::new(),
            targets: Vec::new(),
            first_resource: 0,
        };
        for k in 0..cbs.graph().num_resources() {
            ctx.push_resource(y[k], channel, cbs, params, k)?;
        }
        Ok(ctx)
    }

    fn for_resource(
        y_k: Complex64,
        channel: &ChannelRealization,
        cbs: &CodebookSet,
        params: &DmpaParams,
        k: usize,
    ) -> Result<Self> {
        let mut ctx = DmpaContext {
            w: params.grid_step,
            n0: channel.n0(),
            impulses: Vec::new(),
            targets: Vec::new(),
            first_resource: k,
        };
        ctx.push_resource(y_k, channel, cbs, params, k)?;
        Ok(ctx)
    }

    fn push_resource(
        &mut self,
        y_k: Complex64,
        channel: &ChannelRealization,
        cbs: &CodebookSet,
        params: &DmpaParams,
        k: usize,
    ) -> Result<()> {
        let w = params.grid_step;
        let bound = params
            .grid_extent
            .map(|extent| ((extent / w).ceil() as i64, extent));
        let xi = cbs.graph().users_on_resource(k);
        let m = cbs.size();
        let mut impulses = Vec::with_capacity(xi.len());
        let mut targets = Vec::with_capacity(xi.len());
        for &user in xi {
            let mut user_impulses = Vec::with_capacity(m);
            let mut user_targets = Vec::with_capacity(m);
            for sym in 0..m {
                let point = channel.coefficient(k, user) * cbs.component(k, user, sym);
                let coords = match bound {
                    Some((half, extent)) => check_extent(point, half, w, extent)?,
                    None => snap(point, w),
                };
                user_impulses.push(coords);
                user_targets.push(snap(y_k - point, w));
            }
            impulses.push(user_impulses);
            targets.push(user_targets);
        }
        self.impulses.push(impulses);
        self.targets.push(targets);
        Ok(())
    }

    pub(super) fn direct_message(
        &self,
        state: &MessageState,
        k: usize,
        j: usize,
        active: &ActiveSet,
        counters: &mut OpCounters,
    ) -> Result<Vec<f64>> {
        state.edge(k, j)?;
        let slot = k
            .checked_sub(self.first_resource)
            .filter(|&s| s < self.impulses.len())
            .ok_or(Error::IndexOutOfRange {
                what: "resource",
                index: k + 1,
                limit: self.first_resource + self.impulses.len(),
            })?;
        let xi = &state.xi[k];
        let pos_j = xi.iter().position(|&u| u == j).expect("edge implies membership");
        let out_list = &active.candidates[j];
        let mut out = vec![0.0; state.size];
        struct Other {
            list_len: usize,
            user: usize,
            edge: usize,
            fixed: Option<usize>,
            slot_pos: usize,
        }
        let others: Vec<Other> = xi
            .iter()
            .enumerate()
            .filter(|&(_, &user)| user != j)
            .map(|(pos, &user)| Other {
                list_len: match active.fixed[user] {
                    Some(_) => 1,
                    None => active.candidates[user].len(),
                },
                user,
                edge: state.edge_of[k][user].expect("edge exists"),
                fixed: active.fixed[user],
                slot_pos: pos,
            })
            .collect();
        let mut idx = vec![0usize; others.len()];
        loop {
            let mut sum_x = 0i64;
            let mut sum_y = 0i64;
            let mut partial = 1.0f64;
            let mut free_factors = 0u64;
            for (o, &i) in others.iter().zip(idx.iter()) {
                let sym = match o.fixed {
                    Some(s) => s,
                    None => active.candidates[o.user][i],
                };
                let (px, py) = self.impulses[slot][o.slot_pos][sym];
                sum_x += px;
                sum_y += py;
                if o.fixed.is_none() {
                    partial *= state.vn_to_fn[o.edge][sym];
                    free_factors += 1;
                }
            }
            counters.fn_combinations += 1;
            counters.fn_multiplies += free_factors.saturating_sub(1);
            for &m_out in out_list {
                let (tx, ty) = self.targets[slot][pos_j][m_out];
                let val = density(tx - sum_x, ty - sum_y, self.w, self.n0);
                let contrib = if free_factors > 0 {
                    counters.fn_multiplies += 1;
                    val * partial
                } else {
                    val
                };
                out[m_out] += contrib;
            }
            let mut advanced = false;
            for pos in (0..others.len()).rev() {
                idx[pos] += 1;
                if idx[pos] < others[pos].list_len {
                    advanced = true;
                    break;
                }
                idx[pos] = 0;
            }
            if !advanced {
                break;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{assemble_codebooks, ConstellationOperator, MotherConstellation};
    use crate::decoder::{decode, init_messages, DecoderConfig, Variant};
    use crate::graph::FactorGraph;
    use crate::link::{self, BitMapping, ChannelModel};
    use crate::rng::{frame_rng, StreamTag};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    fn uplink(cbs: &CodebookSet, n0: f64, seed: u64) -> ChannelRealization {
        let mut rng = frame_rng(seed, 0, StreamTag::Channel);
        link::realize_channel(ChannelModel::RayleighUplink, cbs.graph(), n0, &mut rng).unwrap()
    }

    fn randomized_state(cbs: &CodebookSet, seed: u64) -> MessageState {
        let mut state = init_messages(cbs, &DecoderConfig::dmpa()).unwrap();
        let mut rng = frame_rng(seed, 0, StreamTag::Decoder);
        let graph = cbs.graph();
        for k in 0..graph.num_resources() {
            for &j in graph.users_on_resource(k).to_vec().iter() {
                let mut msg: Vec<f64> =
                    (0..cbs.size()).map(|_| rng.random_range(0.05..1.0)).collect();
                let sum: f64 = msg.iter().sum();
                for v in msg.iter_mut() {
                    *v /= sum;
                }
                state.set_message_to_fn(j, k, msg).unwrap();
            }
        }
        state
    }

    #[test]
    fn params_validate_rejects_bad_values() {
        assert!(DmpaParams::default().validate().is_ok());
        assert!(DmpaParams {
            grid_step: -0.1,
            grid_extent: None
        }
        .validate()
        .is_err());
        assert!(DmpaParams {
            grid_step: 0.05,
            grid_extent: Some(f64::NAN)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = uplink(&cbs, 0.15, 42);
        let state = randomized_state(&cbs, 7);
        let frame = vec![vec![0, 1]; 6];
        let x = link::encode(&frame, &cbs, BitMapping::Natural).unwrap();
        let mut noise_rng = frame_rng(42, 0, StreamTag::Noise);
        let y = link::transmit(&x, cbs.graph(), &ch, &mut noise_rng).unwrap();
        let params = DmpaParams::default();
        for k in 0..4 {
            for &j in cbs.graph().users_on_resource(k) {
                let fft = dmpa_fn_update(&state, y[k], &ch, &cbs, k, j, &params).unwrap();
                let direct =
                    dmpa_fn_update_direct(&state, y[k], &ch, &cbs, k, j, &params).unwrap();
                for (a, b) in fft.iter().zip(direct.iter()) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-9);
                    if *b > 0.0 {
                        assert_relative_eq!(a, b, max_relative = 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn lattice_aligned_points_match_the_analytic_update() {
        let w = 0.25;
        let graph = FactorGraph::from_rows(vec![vec![1, 1]]).unwrap();
        let points = vec![vec![
            Complex64::new(0.5, 0.25),
            Complex64::new(-0.25, 0.5),
            Complex64::new(-0.5, -0.25),
            Complex64::new(0.25, -0.5),
        ]];
        let mother = MotherConstellation::custom(points).unwrap();
        let ops = vec![ConstellationOperator::identity(1); 2];
        let cbs = assemble_codebooks(&graph, &mother, &ops).unwrap();
        let n0 = 0.5;
        let ch = ChannelRealization::from_matrix(
            ChannelModel::Awgn,
            vec![vec![Complex64::new(1.0, 0.0); 2]],
            n0,
        )
        .unwrap();
        let state = randomized_state(&cbs, 11);
        let y = Complex64::new(0.75, -0.25);
        let params = DmpaParams {
            grid_step: w,
            grid_extent: None,
        };
        let direct = dmpa_fn_update_direct(&state, y, &ch, &cbs, 0, 0, &params).unwrap();
        let msg = state.message_to_fn(1, 0).unwrap();
        for m in 0..4 {
            let mut expected = 0.0;
            for m2 in 0..4 {
                let diff = y - cbs.component(0, 0, m) - cbs.component(0, 1, m2);
                let val = (-diff.norm_sqr() / n0).exp() / (std::f64::consts::PI * n0);
                let val = if val < 1e-12 { 0.0 } else { val };
                expected += msg[m2] * val;
            }
            assert_relative_eq!(direct[m], expected, max_relative = 1e-12);
        }
        let fft = dmpa_fn_update(&state, y, &ch, &cbs, 0, 0, &params).unwrap();
        for (a, b) in fft.iter().zip(direct.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn point_mass_messages_reduce_to_a_single_density() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = uplink(&cbs, 0.2, 5);
        let mut state = init_messages(&cbs, &DecoderConfig::dmpa()).unwrap();
        let k = 0;
        let xi = cbs.graph().users_on_resource(k).to_vec();
        let fixed: Vec<usize> = vec![1, 2, 3];
        for (pos, &j) in xi.iter().enumerate().skip(1) {
            let mut msg = vec![0.0; 4];
            msg[fixed[pos - 1]] = 1.0;
            state.set_message_to_fn(j, k, msg).unwrap();
        }
        let y = Complex64::new(0.4, 0.1);
        let params = DmpaParams {
            grid_step: 1e-7,
            grid_extent: None,
        };
        let direct =
            dmpa_fn_update_direct(&state, y, &ch, &cbs, k, xi[0], &params).unwrap();
        for m in 0..4 {
            let mut sum = Complex64::ZERO;
            for (pos, &j) in xi.iter().enumerate().skip(1) {
                sum += ch.coefficient(k, j) * cbs.component(k, j, fixed[pos - 1]);
            }
            let diff = y - ch.coefficient(k, xi[0]) * cbs.component(k, xi[0], m) - sum;
            let val = (-diff.norm_sqr() / 0.2).exp() / (std::f64::consts::PI * 0.2);
            let val = if val < 1e-12 { 0.0 } else { val };
            assert_relative_eq!(direct[m], val, max_relative = 1e-6);
        }
    }

    #[test]
    fn tiny_explicit_extent_raises_grid_extent() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = uplink(&cbs, 0.1, 9);
        let state = init_messages(&cbs, &DecoderConfig::dmpa()).unwrap();
        let params = DmpaParams {
            grid_step: 0.05,
            grid_extent: Some(0.01),
        };
        let err = dmpa_fn_update(&state, Complex64::ZERO, &ch, &cbs, 0, 0, &params).unwrap_err();
        assert!(matches!(err, Error::GridExtent { .. }));
        let frame = vec![vec![0, 0]; 6];
        let x = link::encode(&frame, &cbs, BitMapping::Natural).unwrap();
        let mut rng = frame_rng(9, 0, StreamTag::Noise);
        let y = link::transmit(&x, cbs.graph(), &ch, &mut rng).unwrap();
        let config = DecoderConfig {
            dmpa: params,
            ..DecoderConfig::dmpa()
        };
        assert!(matches!(
            decode(&y, &ch, &cbs, &config),
            Err(Error::GridExtent { .. })
        ));
    }

    #[test]
    fn fine_step_decode_tracks_plain_mpa() {
        let cbs = CodebookSet::star_qam_4x6();
        let n0 = link::n0_from_ebn0_db(8.0, cbs.avg_symbol_energy(), 2);
        let config = DecoderConfig {
            dmpa: DmpaParams {
                grid_step: 1e-6,
                grid_extent: None,
            },
            ..DecoderConfig::dmpa()
        };
        assert_eq!(config.variant, Variant::Dmpa);
        for f in 0..5u64 {
            let ch = {
                let mut rng = frame_rng(23, f, StreamTag::Channel);
                link::realize_channel(ChannelModel::RayleighUplink, cbs.graph(), n0, &mut rng)
                    .unwrap()
            };
            let mut bit_rng = frame_rng(23, f, StreamTag::Bits);
            let frame = link::random_frame_bits(6, 2, &mut bit_rng);
            let x = link::encode(&frame, &cbs, BitMapping::Natural).unwrap();
            let mut noise_rng = frame_rng(23, f, StreamTag::Noise);
            let y = link::transmit(&x, cbs.graph(), &ch, &mut noise_rng).unwrap();
            let mpa = decode(&y, &ch, &cbs, &DecoderConfig::mpa()).unwrap();
            let dmpa = decode(&y, &ch, &cbs, &config).unwrap();
            for j in 0..6 {
                assert_eq!(mpa.hard_bits[j], dmpa.hard_bits[j]);
                for i in 0..2 {
                    // The density floor saturates LLRs beyond ~30; compare in
                    // the informative range only.
                    let a = mpa.llr[j][i].clamp(-20.0, 20.0);
                    let b = dmpa.llr[j][i].clamp(-20.0, 20.0);
                    assert_abs_diff_eq!(a, b, epsilon = 1e-3);
                }
            }
        }
    }

    #[test]
    fn default_step_decode_recovers_an_easy_frame() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = {
            let mut rng = frame_rng(3, 0, StreamTag::Channel);
            link::realize_channel(ChannelModel::Awgn, cbs.graph(), 0.02, &mut rng).unwrap()
        };
        let frame = vec![
            vec![0, 0],
            vec![0, 1],
            vec![1, 0],
            vec![1, 1],
            vec![0, 0],
            vec![0, 1],
        ];
        let x = link::encode(&frame, &cbs, BitMapping::Natural).unwrap();
        let mut rng = frame_rng(3, 0, StreamTag::Noise);
        let y = link::transmit(&x, cbs.graph(), &ch, &mut rng).unwrap();
        let config = DecoderConfig {
            dmpa: DmpaParams {
                grid_step: 0.005,
                grid_extent: None,
            },
            ..DecoderConfig::dmpa()
        };
        let result = decode(&y, &ch, &cbs, &config).unwrap();
        let sent: Vec<usize> = frame
            .iter()
            .map(|bits| link::bits_to_symbol(bits, BitMapping::Natural).unwrap() - 1)
            .collect();
        assert_eq!(result.hard_symbols, sent);
    }
}
