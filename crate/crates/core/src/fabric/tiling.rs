use std::fmt::Write as _;

use thiserror::Error;

use super::fifo::{FifoSpec, Storage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroConstraints {
    /// (depth, width) pairs the memory compiler offers.
    pub geometries: Vec<(u32, u32)>,
    pub min_depth: u32,
    /// Flip-flop fallback applies when width > `width_factor` × widest macro
    /// and depth < `depth_factor` × `min_depth`.
    pub width_factor: u32,
    pub depth_factor: u32,
    /// Words the FIFO wrapper can hold in registers in front of the SRAM.
    pub max_flop_words: u32,
}

impl Default for MacroConstraints {
    fn default() -> Self {
        let geometries =
            [32, 64, 128, 256].into_iter().flat_map(|d| [36, 72, 144].into_iter().map(move |w| (d, w))).collect();
        Self { geometries, min_depth: 32, width_factor: 2, depth_factor: 2, max_flop_words: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacroUse {
    pub depth: u32,
    pub width: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilingPlan {
    pub macros: Vec<MacroUse>,
    pub fallback: Option<Storage>,
    /// Words held in wrapper registers.
    pub flop_words: u32,
    pub total_macro_instances: u32,
    pub provisioned_width: u32,
    pub provisioned_depth: u32,
    pub total_bits_provisioned: u64,
    pub waste_bits: u64,
}

impl TilingPlan {
    pub fn storage(&self) -> Storage {
        self.fallback.unwrap_or(Storage::Sram)
    }

    pub fn geometry_label(&self) -> String {
        match self.macros.first() {
            Some(m) => format!("{}x{}", m.depth, m.width),
            None => "-".into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TilingError {
    #[error("no macro geometries configured")]
    NoGeometries,
    #[error("geometry {0}x{1} is below the minimum depth {2}")]
    BelowMinDepth(u32, u32, u32),
    #[error("requested geometry must be non-zero")]
    EmptyRequest,
}

pub fn plan_tiling(depth: u32, width: u32, c: &MacroConstraints) -> Result<TilingPlan, TilingError> {
    if depth == 0 || width == 0 {
        return Err(TilingError::EmptyRequest);
    }
    if c.geometries.is_empty() {
        return Err(TilingError::NoGeometries);
    }
    if let Some(&(d, w)) = c.geometries.iter().find(|(d, _)| *d < c.min_depth) {
        return Err(TilingError::BelowMinDepth(d, w, c.min_depth));
    }
    let requested = depth as u64 * width as u64;
    let widest = c.geometries.iter().map(|g| g.1).max().unwrap_or(0);
    if width > c.width_factor * widest && depth < c.depth_factor * c.min_depth {
        return Ok(TilingPlan {
            macros: Vec::new(),
            fallback: Some(Storage::Flipflop),
            flop_words: depth,
            total_macro_instances: 0,
            provisioned_width: width,
            provisioned_depth: depth,
            total_bits_provisioned: requested,
            waste_bits: 0,
        });
    }

    // (waste, instances, macro width, flop words) is the preference order.
    let mut best: Option<((u64, u32, u32, u32), TilingPlan)> = None;
    for &(md, mw) in &c.geometries {
        for flop in 0..=c.max_flop_words.min(depth - 1) {
            let rows = (depth - flop).div_ceil(md);
            let cols = width.div_ceil(mw);
            let count = rows * cols;
            let bits = (rows * md) as u64 * (cols * mw) as u64 + flop as u64 * width as u64;
            let waste = bits - requested;
            let rank = (waste, count, mw, flop);
            if best.as_ref().is_none_or(|(r, _)| rank < *r) {
                best = Some((
                    rank,
                    TilingPlan {
                        macros: vec![MacroUse { depth: md, width: mw, count }],
                        fallback: None,
                        flop_words: flop,
                        total_macro_instances: count,
                        provisioned_width: cols * mw,
                        provisioned_depth: rows * md + flop,
                        total_bits_provisioned: bits,
                        waste_bits: waste,
                    },
                ));
            }
        }
    }
    Ok(best.expect("at least one geometry").1)
}

pub const TILING_CSV_HEADER: &str = "fifo_id,depth,width,storage,macro_geometry,instances,provisioned_bits,waste_bits";

pub fn tiling_csv(rows: &[(FifoSpec, TilingPlan)]) -> String {
    let mut out = String::from(TILING_CSV_HEADER);
    out.push('\n');
    for (f, p) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            f.fifo_id,
            f.depth,
            f.width,
            p.storage().as_str(),
            p.geometry_label(),
            p.total_macro_instances,
            p.total_bits_provisioned,
            p.waste_bits
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wide_shallow_fifo_uses_three_64x144() {
        let p = plan_tiling(66, 417, &MacroConstraints::default()).unwrap();
        assert_eq!(p.macros, vec![MacroUse { depth: 64, width: 144, count: 3 }]);
        assert_eq!(p.total_macro_instances, 3);
        assert_eq!(p.provisioned_width, 432);
        assert_eq!(p.flop_words, 2);
        assert_eq!(p.waste_bits, 64 * 15);
        assert!(p.waste_bits > 0);
    }

    #[test]
    fn narrow_shallow_fifo_falls_back() {
        let p = plan_tiling(52, 289, &MacroConstraints::default()).unwrap();
        assert_eq!(p.fallback, Some(Storage::Flipflop));
        assert_eq!(p.total_macro_instances, 0);
    }

    #[test]
    fn exact_fit() {
        let p = plan_tiling(64, 144, &MacroConstraints::default()).unwrap();
        assert_eq!(p.macros, vec![MacroUse { depth: 64, width: 144, count: 1 }]);
        assert_eq!((p.waste_bits, p.flop_words), (0, 0));
    }

    #[test]
    fn configuration_errors() {
        let c = MacroConstraints { geometries: vec![], ..Default::default() };
        assert_eq!(plan_tiling(4, 4, &c), Err(TilingError::NoGeometries));
        let c = MacroConstraints { geometries: vec![(16, 36)], ..Default::default() };
        assert!(matches!(plan_tiling(4, 4, &c), Err(TilingError::BelowMinDepth(..))));
    }

    proptest! {
        #[test]
        fn provisioned_covers_request(depth in 1u32..600, width in 1u32..700) {
            let p = plan_tiling(depth, width, &MacroConstraints::default()).unwrap();
            if p.fallback.is_none() {
                prop_assert!(p.provisioned_width >= width);
                prop_assert!(p.provisioned_depth >= depth);
                prop_assert!(p.total_bits_provisioned >= depth as u64 * width as u64);
                prop_assert_eq!(p.total_bits_provisioned - p.waste_bits, depth as u64 * width as u64);
            }
        }
    }
}
