use serde::Serialize;

use crate::error::{GcpError, Result};
use crate::rng::PortableRng;

/// Side of the square green-channel tile the classifier reads.
pub const TILE: usize = 128;

const CONV1_OUT: usize = 6;
const CONV2_OUT: usize = 16;
const KERNEL: usize = 5;
const FC1_OUT: usize = 120;
const FC2_OUT: usize = 84;
/// 128 -> conv 124 -> pool 62 -> conv 58 -> pool 29.
const FLAT: usize = CONV2_OUT * 29 * 29;

/// Which noise-level ladder a grid belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaSpace {
    Raw,
    Srgb,
    Custom,
}

/// Ordered noise levels, one per classifier output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaGrid {
    values: Vec<f64>,
    space: SigmaSpace,
}

impl SigmaGrid {
    pub fn new(values: Vec<f64>, space: SigmaSpace) -> Result<Self> {
        if values.is_empty() {
            return Err(GcpError::InvalidConfig("sigma grid is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GcpError::InvalidConfig("sigma grid values must be positive".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GcpError::InvalidConfig("sigma grid must be strictly increasing".into()));
        }
        Ok(Self { values, space })
    }

    /// The ten raw-domain levels.
    pub fn raw() -> Self {
        Self {
            values: vec![1.25, 2.5, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0],
            space: SigmaSpace::Raw,
        }
    }

    /// The twelve sRGB-domain levels.
    pub fn srgb() -> Self {
        Self {
            values: vec![1.25, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 80.0, 100.0, 120.0, 140.0],
            space: SigmaSpace::Srgb,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn space(&self) -> SigmaSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the grid value nearest to `sigma` (lower index on ties).
    pub fn nearest_index(&self, sigma: f64) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if (v - sigma).abs() < (self.values[best] - sigma).abs() {
                best = i;
            }
        }
        best
    }
}

/// How pixel values are mapped before inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputScaling {
    Identity,
    /// `pixel / 255`.
    Unit255,
}

impl InputScaling {
    pub(crate) fn tag(self) -> u32 {
        match self {
            InputScaling::Identity => 0,
            InputScaling::Unit255 => 1,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(InputScaling::Identity),
            1 => Some(InputScaling::Unit255),
            _ => None,
        }
    }
}

/// Valid, stride-1 cross-correlation. Weights are `[out][in][kh][kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Fully connected layer. Weights are `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub outputs: usize,
    pub inputs: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    MaxPool2,
    Flatten,
    Dense(Dense),
}

/// Feature map `[channel][row][col]`.
#[derive(Debug, Clone)]
struct Activation {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Conv2d {
    fn forward(&self, x: &Activation) -> Result<Activation> {
        if x.channels != self.in_channels || x.height < self.kernel || x.width < self.kernel {
            return Err(GcpError::mismatch("convolution input shape"));
        }
        let (oh, ow, k) = (x.height - self.kernel + 1, x.width - self.kernel + 1, self.kernel);
        let mut data = vec![0.0f32; self.out_channels * oh * ow];
        for o in 0..self.out_channels {
            let out = &mut data[o * oh * ow..(o + 1) * oh * ow];
            out.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..self.in_channels {
                let plane = &x.data[i * x.height * x.width..(i + 1) * x.height * x.width];
                for ky in 0..k {
                    for kx in 0..k {
                        let w = self.weight[((o * self.in_channels + i) * k + ky) * k + kx];
                        if w == 0.0 {
                            continue;
                        }
                        for y in 0..oh {
                            let src = &plane[(y + ky) * x.width + kx..][..ow];
                            let dst = &mut out[y * ow..(y + 1) * ow];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += w * s;
                            }
                        }
                    }
                }
            }
        }
        Ok(Activation {
            channels: self.out_channels,
            height: oh,
            width: ow,
            data,
        })
    }
}

impl Dense {
    fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.inputs {
            return Err(GcpError::mismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        Ok((0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>()
            })
            .collect())
    }
}

fn max_pool2(x: &Activation) -> Activation {
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut data = Vec::with_capacity(x.channels * oh * ow);
    for c in 0..x.channels {
        let plane = &x.data[c * x.height * x.width..];
        for y in 0..oh {
            for xx in 0..ow {
                let at = |dy: usize, dx: usize| plane[(2 * y + dy) * x.width + 2 * xx + dx];
                data.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
            }
        }
    }
    Activation {
        channels: x.channels,
        height: oh,
        width: ow,
        data,
    }
}

/// The canonical layer description stored in weight files.
pub fn architecture_string(classes: usize) -> String {
    format!(
        "input(1,{TILE},{TILE}) conv2d({CONV1_OUT},1,{KERNEL},{KERNEL},valid,stride=1) relu maxpool(2) \
         conv2d({CONV2_OUT},{CONV1_OUT},{KERNEL},{KERNEL},valid,stride=1) relu maxpool(2) flatten \
         dense({FC1_OUT},{FLAT}) relu dense({FC2_OUT},{FC1_OUT}) relu dense({classes},{FC2_OUT})"
    )
}

/// Names and weight dims of the parameterized layers, in file order.
pub(crate) fn parameter_shapes(classes: usize) -> [(&'static str, Vec<usize>); 5] {
    [
        ("conv1", vec![CONV1_OUT, 1, KERNEL, KERNEL]),
        ("conv2", vec![CONV2_OUT, CONV1_OUT, KERNEL, KERNEL]),
        ("fc1", vec![FC1_OUT, FLAT]),
        ("fc2", vec![FC2_OUT, FC1_OUT]),
        ("fc3", vec![classes, FC2_OUT]),
    ]
}

/// Weights and bias for one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub dims: Vec<usize>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// The green-channel noise-level classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseClassifier {
    layers: Vec<Layer>,
    grid: SigmaGrid,
    scaling: InputScaling,
}

impl NoiseClassifier {
    /// Assembles the fixed architecture from its five parameter blocks.
    pub fn from_params(grid: SigmaGrid, scaling: InputScaling, params: Vec<LayerParams>) -> Result<Self> {
        let shapes = parameter_shapes(grid.len());
        if params.len() != shapes.len() {
            return Err(GcpError::mismatch(format!(
                "expected {} parameter blocks, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (p, (name, dims)) in params.iter().zip(&shapes) {
            if p.name != *name || p.dims != *dims {
                return Err(GcpError::mismatch(format!(
                    "layer {:?} {:?} does not match expected {name:?} {dims:?}",
                    p.name, p.dims
                )));
            }
            if p.weight.len() != dims.iter().product::<usize>() || p.bias.len() != dims[0] {
                return Err(GcpError::mismatch(format!("layer {name} has wrong tensor sizes")));
            }
        }
        let mut it = params.into_iter();
        let conv = |p: LayerParams| {
            Layer::Conv2d(Conv2d {
                out_channels: p.dims[0],
                in_channels: p.dims[1],
                kernel: p.dims[2],
                weight: p.weight,
                bias: p.bias,
            })
        };
        let dense = |p: LayerParams| {
            Layer::Dense(Dense {
                outputs: p.dims[0],
                inputs: p.dims[1],
                weight: p.weight,
                bias: p.bias,
            })
        };
        let (c1, c2, f1, f2, f3) = (
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        );
        let layers = vec![
            conv(c1),
            Layer::Relu,
            Layer::MaxPool2,
            conv(c2),
            Layer::Relu,
            Layer::MaxPool2,
            Layer::Flatten,
            dense(f1),
            Layer::Relu,
            dense(f2),
            Layer::Relu,
            dense(f3),
        ];
        Ok(Self { layers, grid, scaling })
    }

    /// All weights and biases zero.
    pub fn zeros(grid: SigmaGrid) -> Self {
        let params = parameter_shapes(grid.len())
            .into_iter()
            .map(|(name, dims)| LayerParams {
                name: name.to_string(),
                weight: vec![0.0; dims.iter().product()],
                bias: vec![0.0; dims[0]],
                dims,
            })
            .collect();
        Self::from_params(grid, InputScaling::Unit255, params).expect("pinned shapes are consistent")
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization from a seed.
    pub fn seeded(grid: SigmaGrid, seed: u64) -> Self {
        let mut rng = PortableRng::new(seed);
        let params = parameter_shapes(grid.len())
            .into_iter()
            .map(|(name, dims)| {
                let fan_in: usize = dims[1..].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || ((rng.next_f64() * 2.0 - 1.0) * bound) as f32;
                let weight = (0..dims.iter().product::<usize>()).map(|_| draw()).collect();
                let bias = (0..dims[0]).map(|_| draw()).collect();
                LayerParams {
                    name: name.to_string(),
                    dims,
                    weight,
                    bias,
                }
            })
            .collect();
        Self::from_params(grid, InputScaling::Unit255, params).expect("pinned shapes are consistent")
    }

    pub fn grid(&self) -> &SigmaGrid {
        &self.grid
    }

    pub fn scaling(&self) -> InputScaling {
        self.scaling
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn class_count(&self) -> usize {
        self.grid.len()
    }

    /// Parameter blocks in file order.
    pub fn params(&self) -> Vec<LayerParams> {
        let names = ["conv1", "conv2", "fc1", "fc2", "fc3"];
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv2d(c) => Some((
                    vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
                    c.weight.clone(),
                    c.bias.clone(),
                )),
                Layer::Dense(d) => Some((vec![d.outputs, d.inputs], d.weight.clone(), d.bias.clone())),
                _ => None,
            })
            .zip(names)
            .map(|((dims, weight, bias), name)| LayerParams {
                name: name.to_string(),
                dims,
                weight,
                bias,
            })
            .collect()
    }

    /// Raw class scores for a `128 x 128` tile on the `[0, 255]` scale.
    pub fn scores(&self, tile: &[f64]) -> Result<Vec<f32>> {
        if tile.len() != TILE * TILE {
            return Err(GcpError::mismatch(format!(
                "classifier tiles are {TILE}x{TILE}, got {} samples",
                tile.len()
            )));
        }
        let scale = match self.scaling {
            InputScaling::Identity => 1.0,
            InputScaling::Unit255 => 1.0 / 255.0,
        };
        let mut act = Activation {
            channels: 1,
            height: TILE,
            width: TILE,
            data: tile.iter().map(|&v| (v * scale) as f32).collect(),
        };
        let mut flat: Option<Vec<f32>> = None;
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => act = c.forward(&act)?,
                Layer::MaxPool2 => act = max_pool2(&act),
                Layer::Relu => match flat.as_mut() {
                    Some(v) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
                    None => act.data.iter_mut().for_each(|x| *x = x.max(0.0)),
                },
                Layer::Flatten => flat = Some(std::mem::take(&mut act.data)),
                Layer::Dense(d) => {
                    let input = flat
                        .take()
                        .ok_or_else(|| GcpError::mismatch("dense layer before flatten"))?;
                    flat = Some(d.forward(&input)?);
                }
            }
        }
        flat.ok_or_else(|| GcpError::mismatch("network produced no scores"))
    }

    /// Predicted class (lowest index among equal maxima) and raw scores.
    pub fn classify_tile(&self, tile: &[f64]) -> Result<(usize, Vec<f32>)> {
        let scores = self.scores(tile)?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        Ok((best, scores))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_are_valid() {
        assert_eq!(SigmaGrid::raw().len(), 10);
        assert_eq!(SigmaGrid::srgb().len(), 12);
        SigmaGrid::new(SigmaGrid::srgb().values().to_vec(), SigmaSpace::Srgb).unwrap();
        assert!(SigmaGrid::new(vec![2.0, 1.0], SigmaSpace::Custom).is_err());
        assert!(SigmaGrid::new(vec![0.0, 1.0], SigmaSpace::Custom).is_err());
        assert_eq!(SigmaGrid::srgb().nearest_index(25.0), 3);
    }

    #[test]
    fn zero_network_ties_to_lowest_class() {
        let net = NoiseClassifier::zeros(SigmaGrid::srgb());
        let tile = vec![100.0; TILE * TILE];
        let (class, scores) = net.classify_tile(&tile).unwrap();
        assert_eq!(class, 0);
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn bias_only_network_returns_bias() {
        let mut params = NoiseClassifier::zeros(SigmaGrid::raw()).params();
        params[4].bias = (0..10).map(|i| if i == 7 || i == 3 { 2.0 } else { 0.5 }).collect();
        let net = NoiseClassifier::from_params(SigmaGrid::raw(), InputScaling::Unit255, params).unwrap();
        let (class, scores) = net.classify_tile(&vec![0.0; TILE * TILE]).unwrap();
        assert_eq!(class, 3);
        assert_eq!(scores[7], 2.0);
    }

    #[test]
    fn rejects_wrong_tile_and_shapes() {
        let net = NoiseClassifier::zeros(SigmaGrid::raw());
        assert!(net.classify_tile(&vec![0.0; 100]).is_err());
        let mut params = net.params();
        params[2].dims = vec![120, 100];
        assert!(NoiseClassifier::from_params(SigmaGrid::raw(), InputScaling::Unit255, params).is_err());
    }

    #[test]
    fn conv_and_pool_by_hand() {
        // 1x3x3 input, one 2x2 kernel
        let conv = Conv2d {
            out_channels: 1,
            in_channels: 1,
            kernel: 2,
            weight: vec![1.0, 0.0, 0.0, -1.0],
            bias: vec![0.5],
        };
        let x = Activation {
            channels: 1,
            height: 3,
            width: 3,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        };
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.data, vec![-3.5, -3.5, -3.5, -3.5]);
        let p = max_pool2(&Activation {
            channels: 1,
            height: 2,
            width: 4,
            data: vec![1.0, 5.0, -1.0, 0.0, 2.0, 3.0, 7.0, -2.0],
        });
        assert_eq!(p.data, vec![5.0, 7.0]);
    }

    #[test]
    fn seeded_network_is_pure() {
        let net = NoiseClassifier::seeded(SigmaGrid::srgb(), 5);
        let tile: Vec<f64> = (0..TILE * TILE).map(|i| (i % 251) as f64).collect();
        assert_eq!(net.scores(&tile).unwrap(), net.scores(&tile).unwrap());
        assert_eq!(architecture_string(12).matches("conv2d").count(), 2);
    }
}
