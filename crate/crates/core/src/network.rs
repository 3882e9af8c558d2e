//! KAN composition of residual units: `out[j] = Σ_i φ_{j,i}(in[i])` per layer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::residual::{BaseCircuit, Readout, ResidualMode, ResidualUnit};
use crate::spline::DiscretizationGrid;

/// Relative margin added on each side of an observed input range.
pub const RANGE_MARGIN: f64 = 0.05;
/// Half-width used when every observed input is the same value.
pub const DEGENERATE_HALF_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    /// `units[j][i]` maps input node `i` to output node `j`.
    pub units: Vec<Vec<ResidualUnit>>,
}

impl LayerSpec {
    pub fn new(units: Vec<Vec<ResidualUnit>>) -> Result<Self> {
        let out_width = units.len();
        let in_width = units.first().map_or(0, Vec::len);
        if out_width == 0 || in_width == 0 {
            return config("a layer needs at least one input and one output");
        }
        if units.iter().any(|row| row.len() != in_width) {
            return config("layer unit matrix is ragged");
        }
        Ok(Self {
            in_width,
            out_width,
            units,
        })
    }
}

/// One readout table per unit, indexed `[layer][out][in][grid point]`.
pub type Tables = Vec<Vec<Vec<Vec<f64>>>>;

/// Position of one scalar parameter inside the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLoc {
    pub layer: usize,
    pub out: usize,
    pub inp: usize,
    /// Index into the unit's own parameter vector.
    pub local: usize,
    pub is_angle: bool,
}

/// A single unit swapped in for evaluation, with its readout table.
pub struct UnitPatch<'a> {
    pub layer: usize,
    pub out: usize,
    pub inp: usize,
    pub unit: &'a ResidualUnit,
    pub table: &'a [f64],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuKanNetwork {
    pub layers: Vec<LayerSpec>,
    /// `input_ranges[l][i]`: calibrated grid bounds for input node `i` of layer `l`.
    pub input_ranges: Vec<Vec<(f64, f64)>>,
}

impl QuKanNetwork {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return config("a network needs at least one layer");
        }
        for w in layers.windows(2) {
            if w[0].out_width != w[1].in_width {
                return config(format!(
                    "layer widths do not chain: {} outputs feed {} inputs",
                    w[0].out_width, w[1].in_width
                ));
            }
        }
        let input_ranges = layers
            .iter()
            .map(|l| {
                (0..l.in_width)
                    .map(|i| {
                        let g = &l.units[0][i].grid;
                        (g.x_min(), g.x_max())
                    })
                    .collect()
            })
            .collect();
        Ok(Self { layers, input_ranges })
    }

    /// Hybrid network for `widths = [d_in, …, d_out]`. Every unit starts from
    /// `base` on the grid `[0, 1]`, zero trainable angles and unit weights.
    pub fn hybrid(widths: &[usize], base: &BaseCircuit, trainable_layers: usize, readout: Readout) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return config(format!("invalid widths {widths:?}"));
        }
        let grid = DiscretizationGrid::new(0.0, 1.0, base.layout.position_qubits().len())?;
        let layers = widths
            .windows(2)
            .map(|w| {
                let units = (0..w[1])
                    .map(|_| {
                        (0..w[0])
                            .map(|_| ResidualUnit::hybrid(base.clone(), grid.clone(), trainable_layers, readout))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                LayerSpec::new(units)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    /// Fully quantum network, built and calibrated layer by layer on `samples`.
    /// `encode(layer, node, grid)` must return a base carrying the SiLU row
    /// sampled on `grid`; it is called once per input node.
    pub fn full_quantum<F>(
        widths: &[usize],
        n_position_qubits: usize,
        trainable_layers: usize,
        readout: Readout,
        samples: &[Vec<f64>],
        mut encode: F,
    ) -> Result<Self>
    where
        F: FnMut(usize, usize, &DiscretizationGrid) -> Result<BaseCircuit>,
    {
        if widths.len() < 2 || widths.contains(&0) {
            return config(format!("invalid widths {widths:?}"));
        }
        if samples.is_empty() {
            return config("calibration needs at least one sample");
        }
        if samples.iter().any(|x| x.len() != widths[0] || x.iter().any(|v| !v.is_finite())) {
            return domain("calibration samples must be finite and match the input width");
        }
        let mut acts: Vec<Vec<f64>> = samples.to_vec();
        let mut layers = Vec::new();
        for (l, w) in widths.windows(2).enumerate() {
            let mut units = vec![Vec::with_capacity(w[0]); w[1]];
            for i in 0..w[0] {
                let (lo, hi) = padded_range(acts.iter().map(|a| a[i]));
                let grid = DiscretizationGrid::new(lo, hi, n_position_qubits)?;
                let base = encode(l, i, &grid)?;
                for row in units.iter_mut() {
                    row.push(ResidualUnit::full_quantum(base.clone(), trainable_layers, readout)?);
                }
            }
            let layer = LayerSpec::new(units)?;
            acts = layer_outputs(&layer, &acts);
            layers.push(layer);
        }
        Self::new(layers)
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].in_width
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().unwrap().out_width
    }

    pub fn units(&self) -> impl Iterator<Item = &ResidualUnit> {
        self.layers.iter().flat_map(|l| l.units.iter().flatten())
    }

    pub fn units_mut(&mut self) -> impl Iterator<Item = &mut ResidualUnit> {
        self.layers.iter_mut().flat_map(|l| l.units.iter_mut().flatten())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_width() {
            return domain(format!("expected {} inputs, got {}", self.in_width(), x.len()));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; layer.out_width];
            for (j, row) in layer.units.iter().enumerate() {
                for (i, unit) in row.iter().enumerate() {
                    next[j] += unit.forward(cur[i])?;
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Readout tables for every unit.
    pub fn tables(&self) -> Tables {
        self.layers
            .iter()
            .map(|l| {
                l.units
                    .iter()
                    .map(|row| row.iter().map(ResidualUnit::readout_table).collect())
                    .collect()
            })
            .collect()
    }

    /// Forward pass from precomputed tables. `x` must have the input width and
    /// finite entries; non-finite intermediate values clamp to a grid end.
    pub fn forward_with_tables(&self, tables: &Tables, x: &[f64], patch: Option<&UnitPatch<'_>>) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_width];
            for (j, row) in layer.units.iter().enumerate() {
                for (i, unit) in row.iter().enumerate() {
                    next[j] += match patch {
                        Some(p) if p.layer == l && p.out == j && p.inp == i => p.unit.forward_with_table(p.table, cur[i]),
                        _ => unit.forward_with_table(&tables[l][j][i], cur[i]),
                    };
                }
            }
            cur = next;
        }
        cur
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_inputs(xs)?;
        let tables = self.tables();
        Ok(xs.par_iter().map(|x| self.forward_with_tables(&tables, x, None)).collect())
    }

    pub(crate) fn check_inputs(&self, xs: &[Vec<f64>]) -> Result<()> {
        for x in xs {
            if x.len() != self.in_width() {
                return domain(format!("expected {} inputs, got {}", self.in_width(), x.len()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return domain("inputs must be finite");
            }
        }
        Ok(())
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Sets every layer's grids to the observed input range widened by
    /// [`RANGE_MARGIN`] of the span on each side. Hybrid units only.
    pub fn calibrate_ranges(&mut self, samples: &[Vec<f64>]) -> Result<()> {
        self.calibrate_with(samples, |_, _, _| Ok(None))
    }

    /// Calibration with a hook that may supply a new base for each input
    /// node's grid. Units receiving a base are re-encoded; others only move grid.
    pub fn calibrate_with<F>(&mut self, samples: &[Vec<f64>], mut rebase: F) -> Result<()>
    where
        F: FnMut(usize, usize, &DiscretizationGrid) -> Result<Option<BaseCircuit>>,
    {
        if samples.is_empty() {
            return config("calibration needs at least one sample");
        }
        self.check_inputs(samples)?;
        let mut acts: Vec<Vec<f64>> = samples.to_vec();
        for l in 0..self.layers.len() {
            let in_width = self.layers[l].in_width;
            let n_x = self.layers[l].units[0][0].layout().position_qubits().len();
            for i in 0..in_width {
                let (lo, hi) = padded_range(acts.iter().map(|a| a[i]));
                let grid = DiscretizationGrid::new(lo, hi, n_x)?;
                let new_base = rebase(l, i, &grid)?;
                for row in self.layers[l].units.iter_mut() {
                    let unit = &mut row[i];
                    match &new_base {
                        Some(b) => {
                            unit.replace_base(b.clone())?;
                            if unit.mode == ResidualMode::Hybrid {
                                unit.set_grid(grid.clone())?;
                            }
                        }
                        None => unit.set_grid(grid.clone())?,
                    }
                }
                self.input_ranges[l][i] = (lo, hi);
            }
            acts = layer_outputs(&self.layers[l], &acts);
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.units().map(ResidualUnit::n_params).sum()
    }

    /// Layer by layer, then output node, then input node, then the unit's own order.
    pub fn params(&self) -> Vec<f64> {
        self.units().flat_map(ResidualUnit::params).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return config(format!("expected {} parameters, got {}", self.n_params(), p.len()));
        }
        let mut offset = 0;
        for unit in self.units_mut() {
            let n = unit.n_params();
            unit.set_params(&p[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    pub fn param_locations(&self) -> Vec<ParamLoc> {
        let mut locs = Vec::with_capacity(self.n_params());
        for (l, layer) in self.layers.iter().enumerate() {
            for (j, row) in layer.units.iter().enumerate() {
                for (i, unit) in row.iter().enumerate() {
                    for local in 0..unit.n_params() {
                        locs.push(ParamLoc {
                            layer: l,
                            out: j,
                            inp: i,
                            local,
                            is_angle: unit.is_angle(local),
                        });
                    }
                }
            }
        }
        locs
    }
}

fn layer_outputs(layer: &LayerSpec, acts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let tables: Vec<Vec<Vec<f64>>> = layer
        .units
        .iter()
        .map(|row| row.iter().map(ResidualUnit::readout_table).collect())
        .collect();
    acts.par_iter()
        .map(|a| {
            (0..layer.out_width)
                .map(|j| {
                    (0..layer.in_width)
                        .map(|i| layer.units[j][i].forward_with_table(&tables[j][i], a[i]))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// `[min − 5% span, max + 5% span]`, or `value ± 0.5` when the span is zero.
pub fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span > 0.0 && span.is_finite() {
        (lo - RANGE_MARGIN * span, hi + RANGE_MARGIN * span)
    } else {
        (lo - DEGENERATE_HALF_WIDTH, hi + DEGENERATE_HALF_WIDTH)
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
