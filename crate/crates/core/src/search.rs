//! Patch extraction, the RGGB patch layout and green-channel-guided
//! block matching.

use std::collections::HashSet;

use serde::Serialize;

use crate::config::DenoiseConfig;
use crate::error::{GcpError, Result};
use crate::image::{ChannelSemantics, PlanarImage};
use crate::rng::PortableRng;

/// Top-left corner of a patch, with the frame it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PatchOrigin {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
}

impl PatchOrigin {
    pub fn new(row: usize, col: usize) -> Self {
        Self { frame: 0, row, col }
    }

    pub fn in_frame(frame: usize, row: usize, col: usize) -> Self {
        Self { frame, row, col }
    }
}

/// A `ps x ps x 4` patch, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RggbPatch {
    pub size: usize,
    pub data: Vec<f64>,
    pub origin: PatchOrigin,
}

impl RggbPatch {
    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.size + row) * self.size + col]
    }

    /// The four samples at one pixel (a mode-3 tube).
    #[inline]
    pub fn tube(&self, idx: usize) -> [f64; 4] {
        let n = self.size * self.size;
        [
            self.data[idx],
            self.data[n + idx],
            self.data[2 * n + idx],
            self.data[3 * n + idx],
        ]
    }
}

fn check_fits(img: &PlanarImage, origin: PatchOrigin, ps: usize) -> Result<()> {
    if ps == 0 || origin.row + ps > img.height() || origin.col + ps > img.width() {
        return Err(GcpError::OutOfBounds {
            row: origin.row,
            col: origin.col,
            size: ps,
            height: img.height(),
            width: img.width(),
        });
    }
    Ok(())
}

/// Extracts a four-channel patch. sRGB input gets its green channel
/// duplicated (R, G, G, B); four-channel input is copied as is.
pub fn extract_rggb(img: &PlanarImage, origin: PatchOrigin, ps: usize) -> Result<RggbPatch> {
    check_fits(img, origin, ps)?;
    let source: [usize; 4] = match (img.semantics(), img.channels()) {
        (ChannelSemantics::Srgb, 3) => [0, 1, 1, 2],
        (_, 4) => [0, 1, 2, 3],
        (s, c) => {
            return Err(GcpError::UnsupportedChannels(format!(
                "cannot form an RGGB patch from {c} channels with {s:?} semantics"
            )))
        }
    };
    let mut data = Vec::with_capacity(4 * ps * ps);
    for &c in &source {
        let plane = img.plane(c);
        for r in 0..ps {
            let start = (origin.row + r) * img.width() + origin.col;
            data.extend_from_slice(&plane[start..start + ps]);
        }
    }
    Ok(RggbPatch { size: ps, data, origin })
}

/// How candidate patches are compared with the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchScheme {
    /// Green plane when the reference's green energy is at least
    /// `max(|R|, |B|) / lambda`, otherwise the per-pixel RGB mean.
    GcpGuided {
        lambda: f64,
    },
    GreenOnly,
    MeanOnly,
    /// Every channel.
    Full,
}

/// The comparison actually used for one reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Green,
    Mean,
    Full,
}

/// The branch rule: green iff `|G| >= max(|R|, |B|) / lambda`.
pub fn select_branch(norm_r: f64, norm_g: f64, norm_b: f64, lambda: f64) -> Branch {
    if norm_g >= norm_r.max(norm_b) / lambda {
        Branch::Green
    } else {
        Branch::Mean
    }
}

/// An RGB patch flattened into per-channel vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPatch {
    pub red: Vec<f64>,
    pub green: Vec<f64>,
    pub blue: Vec<f64>,
}

impl ColorPatch {
    fn mean(&self) -> impl Iterator<Item = f64> + '_ {
        self.red
            .iter()
            .zip(&self.green)
            .zip(&self.blue)
            .map(|((r, g), b)| (r + g + b) / 3.0)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sq_dist(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared GCP-guided distance. The branch depends on the reference only.
pub fn gcp_distance(reference: &ColorPatch, candidate: &ColorPatch, lambda: f64) -> Result<(f64, Branch)> {
    let len = reference.red.len();
    for v in [
        &reference.green,
        &reference.blue,
        &candidate.red,
        &candidate.green,
        &candidate.blue,
    ] {
        if v.len() != len {
            return Err(GcpError::mismatch("patches differ in size"));
        }
    }
    let branch = select_branch(
        norm(&reference.red),
        norm(&reference.green),
        norm(&reference.blue),
        lambda,
    );
    let d = match branch {
        Branch::Green => sq_dist(reference.green.iter().copied(), candidate.green.iter().copied()),
        _ => sq_dist(reference.mean(), candidate.mean()),
    };
    Ok((d, branch))
}

/// Planes derived once per frame for block matching.
#[derive(Debug, Clone)]
pub struct GuidePlanes {
    height: usize,
    width: usize,
    color: Option<[Vec<f64>; 4]>,
    full: Vec<Vec<f64>>,
}

const RED: usize = 0;
const GREEN: usize = 1;
const BLUE: usize = 2;
const MEAN: usize = 3;

impl GuidePlanes {
    /// sRGB and packed RGGB frames get red/green/blue/mean planes (packed
    /// green is the average of its two sites). Every frame keeps its raw
    /// channels for [`SearchScheme::Full`].
    pub fn new(img: &PlanarImage) -> Self {
        let color = match (img.semantics(), img.channels()) {
            (ChannelSemantics::Srgb, 3) | (ChannelSemantics::PackedRggb, 4) => {
                let red = img.plane(0).to_vec();
                let blue = img.plane(img.channels() - 1).to_vec();
                let green = img.green_plane();
                let mean = red
                    .iter()
                    .zip(&green)
                    .zip(&blue)
                    .map(|((r, g), b)| (r + g + b) / 3.0)
                    .collect();
                Some([red, green, blue, mean])
            }
            _ => None,
        };
        let full = (0..img.channels()).map(|c| img.plane(c).to_vec()).collect();
        Self {
            height: img.height(),
            width: img.width(),
            color,
            full,
        }
    }

    pub fn has_color(&self) -> bool {
        self.color.is_some()
    }

    fn patch_norm(&self, plane: &[f64], origin: PatchOrigin, ps: usize) -> f64 {
        let mut s = 0.0;
        for r in 0..ps {
            let start = (origin.row + r) * self.width + origin.col;
            s += plane[start..start + ps].iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    }

    /// Colored RGB view of a patch, when color planes exist.
    pub fn color_patch(&self, origin: PatchOrigin, ps: usize) -> Option<ColorPatch> {
        let color = self.color.as_ref()?;
        let grab = |plane: &[f64]| {
            let mut v = Vec::with_capacity(ps * ps);
            for r in 0..ps {
                let start = (origin.row + r) * self.width + origin.col;
                v.extend_from_slice(&plane[start..start + ps]);
            }
            v
        };
        Some(ColorPatch {
            red: grab(&color[RED]),
            green: grab(&color[GREEN]),
            blue: grab(&color[BLUE]),
        })
    }

    fn branch_for(&self, scheme: SearchScheme, reference: PatchOrigin, ps: usize) -> Branch {
        match (scheme, &self.color) {
            (SearchScheme::Full, _) | (_, None) => Branch::Full,
            (SearchScheme::GreenOnly, _) => Branch::Green,
            (SearchScheme::MeanOnly, _) => Branch::Mean,
            (SearchScheme::GcpGuided { lambda }, Some(c)) => select_branch(
                self.patch_norm(&c[RED], reference, ps),
                self.patch_norm(&c[GREEN], reference, ps),
                self.patch_norm(&c[BLUE], reference, ps),
                lambda,
            ),
        }
    }

    fn planes_for(&self, branch: Branch) -> Vec<&[f64]> {
        match (branch, &self.color) {
            (Branch::Green, Some(c)) => vec![&c[GREEN]],
            (Branch::Mean, Some(c)) => vec![&c[MEAN]],
            _ => self.full.iter().map(|p| p.as_slice()).collect(),
        }
    }
}

/// One candidate chosen for a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Match {
    pub origin: PatchOrigin,
    pub distance: f64,
}

/// Parameters of a block-matching pass.
#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    pub patch_size: usize,
    pub window: usize,
    pub group_size: usize,
    pub scheme: SearchScheme,
    /// Frames searched on each side of the reference frame.
    pub temporal_radius: usize,
}

impl SearchParams {
    pub fn from_config(cfg: &DenoiseConfig, scheme: SearchScheme) -> Self {
        Self {
            patch_size: cfg.patch_size,
            window: cfg.window,
            group_size: cfg.group_size,
            scheme,
            temporal_radius: 0,
        }
    }
}

/// Candidate top-left offsets along one axis: `window` positions starting
/// `window / 2` before the reference, clipped to the valid range.
fn window_range(center: usize, window: usize, extent: usize, ps: usize) -> std::ops::RangeInclusive<usize> {
    let lo = center.saturating_sub(window / 2);
    let hi = (center + window - window / 2 - 1).min(extent - ps);
    lo..=hi
}

/// The `group_size` best matches for `reference` across `frames`.
///
/// The reference itself always comes first. The rest follow by ascending
/// squared distance; ties go to the smaller row, then column, then frame.
pub fn search_matches(frames: &[GuidePlanes], reference: PatchOrigin, params: &SearchParams) -> (Vec<Match>, Branch) {
    let ps = params.patch_size;
    let guide = &frames[reference.frame];
    let branch = guide.branch_for(params.scheme, reference, ps);
    let width = guide.width;

    let first = reference.frame.saturating_sub(params.temporal_radius);
    let last = (reference.frame + params.temporal_radius).min(frames.len() - 1);
    let ref_planes = guide.planes_for(branch);

    let mut candidates: Vec<Match> = Vec::with_capacity(params.window * params.window * (last - first + 1));
    for frame in first..=last {
        let cand_planes = frames[frame].planes_for(branch);
        for row in window_range(reference.row, params.window, guide.height, ps) {
            for col in window_range(reference.col, params.window, width, ps) {
                let origin = PatchOrigin { frame, row, col };
                if origin == reference {
                    continue;
                }
                let mut d = 0.0;
                for (rp, cp) in ref_planes.iter().zip(&cand_planes) {
                    for r in 0..ps {
                        let a = &rp[(reference.row + r) * width + reference.col..][..ps];
                        let b = &cp[(row + r) * width + col..][..ps];
                        d += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                    }
                }
                candidates.push(Match { origin, distance: d });
            }
        }
    }
    let keep = params.group_size.saturating_sub(1).min(candidates.len());
    let order = |a: &Match, b: &Match| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.origin.row.cmp(&b.origin.row))
            .then(a.origin.col.cmp(&b.origin.col))
            .then(a.origin.frame.cmp(&b.origin.frame))
    };
    if keep < candidates.len() && keep > 0 {
        candidates.select_nth_unstable_by(keep - 1, order);
    }
    candidates.truncate(keep);
    candidates.sort_by(order);

    let mut out = Vec::with_capacity(keep + 1);
    out.push(Match {
        origin: reference,
        distance: 0.0,
    });
    out.extend(candidates);
    (out, branch)
}

/// A reference patch and its most similar neighbours, in RGGB layout.
#[derive(Debug, Clone)]
pub struct PatchGroup {
    /// `patches[0]` is the reference.
    pub patches: Vec<RggbPatch>,
    pub distances: Vec<f64>,
    pub branch: Branch,
}

impl PatchGroup {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patch_size(&self) -> usize {
        self.patches.first().map_or(0, |p| p.size)
    }

    pub fn origins(&self) -> Vec<PatchOrigin> {
        self.patches.iter().map(|p| p.origin).collect()
    }

    /// Builds a group from already-extracted patches.
    pub fn from_patches(patches: Vec<RggbPatch>) -> Result<Self> {
        let ps = patches
            .first()
            .map(|p| p.size)
            .ok_or_else(|| GcpError::mismatch("empty group"))?;
        if patches.iter().any(|p| p.size != ps || p.data.len() != 4 * ps * ps) {
            return Err(GcpError::mismatch("patches in a group must share one shape"));
        }
        let n = patches.len();
        Ok(Self {
            patches,
            distances: vec![0.0; n],
            branch: Branch::Full,
        })
    }
}

/// Default scheme for an image: GCP-guided for color data, full-channel
/// distance otherwise.
pub fn scheme_for(img: &PlanarImage, lambda: f64) -> SearchScheme {
    match img.semantics() {
        ChannelSemantics::Srgb | ChannelSemantics::PackedRggb => SearchScheme::GcpGuided { lambda },
        _ => SearchScheme::Full,
    }
}

/// Groups the reference patch at `reference` with its `K` best matches.
pub fn search_group(img: &PlanarImage, reference: PatchOrigin, cfg: &DenoiseConfig) -> Result<PatchGroup> {
    cfg.validate()?;
    check_fits(img, reference, cfg.patch_size)?;
    let guide = GuidePlanes::new(img);
    let params = SearchParams::from_config(cfg, scheme_for(img, cfg.lambda));
    let (matches, branch) = search_matches(
        std::slice::from_ref(&guide),
        PatchOrigin { frame: 0, ..reference },
        &params,
    );
    let patches = matches
        .iter()
        .map(|m| extract_rggb(img, m.origin, cfg.patch_size))
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchGroup {
        patches,
        distances: matches.iter().map(|m| m.distance).collect(),
        branch,
    })
}

/// Mean search success rate of each scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessRates {
    pub green_only: f64,
    pub mean_only: f64,
    pub gcp_guided: f64,
    pub references: usize,
}

/// For `n_ref` random references, the fraction of patches each scheme
/// selects on `noisy` that the same scheme also selects on `clean`,
/// averaged over references.
pub fn success_rate_experiment(
    clean: &PlanarImage,
    noisy: &PlanarImage,
    n_ref: usize,
    cfg: &DenoiseConfig,
    seed: u64,
) -> Result<SuccessRates> {
    if !clean.same_shape(noisy) {
        return Err(GcpError::mismatch("clean and noisy images differ in shape"));
    }
    if clean.semantics() != ChannelSemantics::Srgb || noisy.semantics() != ChannelSemantics::Srgb {
        return Err(GcpError::UnsupportedChannels("success rates need sRGB images".into()));
    }
    cfg.validate()?;
    let ps = cfg.patch_size;
    if clean.height() < ps || clean.width() < ps {
        return Err(GcpError::EmptyImage);
    }
    let clean_guide = [GuidePlanes::new(clean)];
    let noisy_guide = [GuidePlanes::new(noisy)];
    let mut rng = PortableRng::new(seed);
    let refs: Vec<PatchOrigin> = (0..n_ref)
        .map(|_| {
            let row = rng.below(clean.height() - ps + 1);
            let col = rng.below(clean.width() - ps + 1);
            PatchOrigin::new(row, col)
        })
        .collect();

    let schemes = [
        SearchScheme::GreenOnly,
        SearchScheme::MeanOnly,
        SearchScheme::GcpGuided { lambda: cfg.lambda },
    ];
    let per_ref: Vec<[f64; 3]> = cfg.execution.install(|| {
        cfg.execution.map(&refs, |&r| {
            let mut rates = [0.0; 3];
            for (slot, scheme) in rates.iter_mut().zip(schemes) {
                let params = SearchParams::from_config(cfg, scheme);
                let truth: HashSet<PatchOrigin> = search_matches(&clean_guide, r, &params)
                    .0
                    .into_iter()
                    .map(|m| m.origin)
                    .collect();
                let (found, _) = search_matches(&noisy_guide, r, &params);
                let hits = found.iter().filter(|m| truth.contains(&m.origin)).count();
                *slot = hits as f64 / found.len() as f64;
            }
            rates
        })
    });
    let n = per_ref.len().max(1) as f64;
    let avg = |i: usize| per_ref.iter().map(|r| r[i]).sum::<f64>() / n;
    Ok(SuccessRates {
        green_only: avg(0),
        mean_only: avg(1),
        gcp_guided: avg(2),
        references: refs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(h: usize, w: usize, f: impl FnMut(usize, usize, usize) -> f64) -> PlanarImage {
        PlanarImage::from_fn(h, w, 3, ChannelSemantics::Srgb, f).unwrap()
    }

    fn unit(v: f64, n: usize) -> Vec<f64> {
        vec![v / (n as f64).sqrt(); n]
    }

    #[test]
    fn extract_layouts() {
        let gray = rgb(10, 10, |_, _, _| 77.0);
        let p = extract_rggb(&gray, PatchOrigin::new(1, 2), 4).unwrap();
        assert!(p.data.iter().all(|&v| v == 77.0));

        let px = rgb(1, 1, |c, _, _| [10.0, 20.0, 30.0][c]);
        let p = extract_rggb(&px, PatchOrigin::new(0, 0), 1).unwrap();
        assert_eq!(p.tube(0), [10.0, 20.0, 20.0, 30.0]);

        let packed = PlanarImage::from_fn(6, 6, 4, ChannelSemantics::PackedRggb, |c, r, col| {
            (c * 36 + r * 6 + col) as f64
        })
        .unwrap();
        let p = extract_rggb(&packed, PatchOrigin::new(2, 1), 3).unwrap();
        for c in 0..4 {
            for r in 0..3 {
                for col in 0..3 {
                    assert_eq!(p.get(c, r, col), packed.get(c, 2 + r, 1 + col));
                }
            }
        }
    }

    #[test]
    fn extract_out_of_bounds() {
        let img = rgb(8, 8, |_, _, _| 0.0);
        assert!(matches!(
            extract_rggb(&img, PatchOrigin::new(1, 0), 8),
            Err(GcpError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn branch_rule() {
        let n = 4;
        let p = ColorPatch {
            red: unit(1.0, n),
            green: unit(1.0, n),
            blue: unit(1.0, n),
        };
        assert_eq!(gcp_distance(&p, &p, 1.2).unwrap(), (0.0, Branch::Green));
        let q = ColorPatch {
            red: unit(2.0, n),
            green: unit(1.0, n),
            blue: unit(0.0, n),
        };
        let (d, b) = gcp_distance(&q, &q, 1.2).unwrap();
        assert_eq!((d, b), (0.0, Branch::Mean));
        // the candidate does not influence the branch
        let (_, b) = gcp_distance(&q, &p, 1.2).unwrap();
        assert_eq!(b, Branch::Mean);
    }

    #[test]
    fn constant_image_takes_scan_order() {
        let img = rgb(30, 30, |_, _, _| 100.0);
        let cfg = DenoiseConfig {
            group_size: 5,
            ..DenoiseConfig::default()
        };
        let g = search_group(&img, PatchOrigin::new(10, 10), &cfg).unwrap();
        let origins: Vec<_> = g.origins().iter().map(|o| (o.row, o.col)).collect();
        assert_eq!(origins, vec![(10, 10), (0, 0), (0, 1), (0, 2), (0, 3)]);
        assert!(g.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn exact_copies_win() {
        // random texture with the reference block pasted at four places
        let mut rng = PortableRng::new(3);
        let mut img = rgb(40, 40, |_, _, _| rng.next_f64() * 255.0);
        let ps = 4;
        let src = PatchOrigin::new(18, 18);
        let copies = [(12, 12), (12, 25), (25, 12), (25, 25)];
        for &(r0, c0) in &copies {
            for c in 0..3 {
                for r in 0..ps {
                    for col in 0..ps {
                        let v = img.get(c, src.row + r, src.col + col);
                        img.set(c, r0 + r, c0 + col, v);
                    }
                }
            }
        }
        let cfg = DenoiseConfig {
            patch_size: ps,
            window: 20,
            group_size: 5,
            ..DenoiseConfig::default()
        };
        let g = search_group(&img, src, &cfg).unwrap();
        let mut got: Vec<_> = g.origins()[1..].iter().map(|o| (o.row, o.col)).collect();
        got.sort();
        assert_eq!(got, copies.to_vec());
    }

    #[test]
    fn window_is_clipped() {
        assert_eq!(window_range(0, 20, 64, 8), 0..=9);
        assert_eq!(window_range(30, 20, 64, 8), 20..=39);
        assert_eq!(window_range(56, 20, 64, 8), 46..=56);
    }

    #[test]
    fn identical_inputs_give_unit_rates() {
        let mut rng = PortableRng::new(11);
        let img = rgb(40, 40, |_, _, _| rng.next_f64() * 255.0);
        let cfg = DenoiseConfig {
            group_size: 10,
            ..DenoiseConfig::default()
        };
        let rates = success_rate_experiment(&img, &img, 50, &cfg, 1).unwrap();
        assert_eq!(rates.gcp_guided, 1.0);
        assert_eq!(rates.green_only, 1.0);
        assert_eq!(rates.mean_only, 1.0);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let a = rgb(20, 20, |_, _, _| 0.0);
        let b = rgb(20, 21, |_, _, _| 0.0);
        assert!(success_rate_experiment(&a, &b, 5, &DenoiseConfig::default(), 0).is_err());
    }
}
