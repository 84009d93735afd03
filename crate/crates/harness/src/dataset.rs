//! Image corpora: synthetic smooth images or a directory of 8-bit files.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use wirlab::attacks::blur_values;
use wirlab::rng::{stage_id, stream};
use wirlab::transforms::add_gaussian_noise;
use wirlab::{Image, Shape};

use crate::error::{io_err, HarnessError, Result};
use crate::imageio::read_image;

pub const SYNTH_BLUR_RADIUS: usize = 4;
pub const SYNTH_BLUR_SIGMA: f64 = 2.0;
const IMAGE_EXTENSIONS: [&str; 5] = ["png", "ppm", "pgm", "pnm", "pbm"];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: DataSource,
    pub side: usize,
    pub channels: usize,
    pub count: usize,
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            source: DataSource::Synthetic,
            side: 16,
            channels: 1,
            count: 600,
            fractions: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 10 {
            return Err(HarnessError::InvalidConfig(format!("dataset count {} < 10", self.count)));
        }
        if self.fractions.iter().any(|f| !(*f >= 0.0 && *f <= 1.0)) {
            return Err(HarnessError::InvalidConfig("split fractions must lie in [0,1]".into()));
        }
        let total: f64 = self.fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(HarnessError::InvalidConfig(format!("split fractions sum to {total}, not 1")));
        }
        Shape::square(self.side, self.channels)?;
        if !matches!(self.channels, 1 | 3) {
            return Err(HarnessError::InvalidConfig("channels must be 1 or 3".into()));
        }
        Ok(())
    }

    /// Train, validation and test sizes; test takes the rounding remainder.
    pub fn split_sizes(&self) -> [usize; 3] {
        let train = (self.count as f64 * self.fractions[0]).round() as usize;
        let val = ((self.count as f64 * self.fractions[1]).round() as usize).min(self.count - train);
        [train, val, self.count - train - val]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<Image>,
    pub val: Vec<Image>,
    pub test: Vec<Image>,
}

fn split(spec: &DatasetSpec, mut images: Vec<Image>) -> Splits {
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut stream(spec.seed, stage_id("dataset.split"), 0));
    let [a, b, _] = spec.split_sizes();
    let mut slots: Vec<Option<Image>> = images.drain(..).map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<Image> { ids.iter().map(|&i| slots[i].take().expect("each index once")).collect() };
    Splits { train: take(&order[..a]), val: take(&order[a..a + b]), test: take(&order[a + b..]) }
}

/// One synthetic image: unit Gaussian noise, blurred by a 9x9 Gaussian kernel
/// (sigma 2), then min-max normalized to exactly `[0,1]`.
pub fn synth_image(shape: Shape, seed: u64, index: u64) -> Result<Image> {
    let mut r = stream(seed, stage_id("dataset.synth"), index);
    let mut noise = vec![0.0; shape.len()];
    add_gaussian_noise(&mut noise, 1.0, &mut r);
    let smooth = blur_values(&noise, shape, SYNTH_BLUR_RADIUS, SYNTH_BLUR_SIGMA)?;
    let (lo, hi) = smooth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let pixels = smooth.iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.5 }).collect();
    Ok(Image::new(shape, pixels)?)
}

pub fn synth_dataset(spec: &DatasetSpec) -> Result<Splits> {
    spec.validate()?;
    let shape = Shape::square(spec.side, spec.channels)?;
    let images =
        (0..spec.count as u64).into_par_iter().map(|i| synth_image(shape, spec.seed, i)).collect::<Result<Vec<_>>>()?;
    Ok(split(spec, images))
}

/// Reads the first `count` decodable images of a directory in file-name order.
/// Files that fail to decode are skipped with a warning.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Splits> {
    spec.validate()?;
    let DataSource::Directory(dir) = &spec.source else {
        return synth_dataset(spec);
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    let mut images = Vec::with_capacity(spec.count);
    for p in &paths {
        if images.len() == spec.count {
            break;
        }
        match read_image(p, spec.side, spec.channels) {
            Ok(img) => images.push(img),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if images.len() < spec.count {
        return Err(HarnessError::Dataset(format!(
            "{} has {} usable images, {} requested",
            dir.display(),
            images.len(),
            spec.count
        )));
    }
    Ok(split(spec, images))
}

/// Mean absolute difference between horizontally and vertically adjacent pixels.
pub fn mean_gradient(img: &Image) -> f64 {
    let s = img.shape();
    let mut total = 0.0;
    let mut n = 0usize;
    for y in 0..s.height {
        for x in 0..s.width {
            for c in 0..s.channels {
                if x + 1 < s.width {
                    total += (img.get(x + 1, y, c) - img.get(x, y, c)).abs();
                    n += 1;
                }
                if y + 1 < s.height {
                    total += (img.get(x, y + 1, c) - img.get(x, y, c)).abs();
                    n += 1;
                }
            }
        }
    }
    total / n as f64
}
