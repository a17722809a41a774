use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::events::SensorGeometry;

/// Static speckle intensity pattern, larger than the sensor so that it can
/// be translated without sampling outside.
///
/// Sensor pixel `(x, y)` at rest looks at field sample `(x + origin, y + origin)`.
#[derive(Debug, Clone)]
pub struct SpeckleField {
    pub width: usize,
    pub height: usize,
    pub origin: usize,
    pub grain: f64,
    pub seed: u64,
    pub intensity: Vec<f32>,
}

impl SpeckleField {
    /// Wraps a hand-made intensity grid.
    pub fn from_intensity(
        width: usize,
        height: usize,
        origin: usize,
        intensity: Vec<f32>,
    ) -> Result<Self> {
        if intensity.len() != width * height {
            return Err(Error::arg("intensity grid does not match its dimensions"));
        }
        if intensity.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::arg("speckle intensity must be nonnegative"));
        }
        if !intensity.iter().any(|&v| v > 0.0) {
            return Err(Error::arg("speckle intensity is identically zero"));
        }
        Ok(SpeckleField {
            width,
            height,
            origin,
            grain: 1.0,
            seed: 0,
            intensity,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.intensity[y * self.width + x]
    }

    /// Bilinear sample at fractional field coordinates.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = self.at(x0, y0) as f64 * (1.0 - fx) + self.at(x1, y0) as f64 * fx;
        let bottom = self.at(x0, y1) as f64 * (1.0 - fx) + self.at(x1, y1) as f64 * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Border beyond the margin needed by the widest interpolation kernel.
pub(crate) const SPARE: usize = 2;

/// Fully developed speckle: a complex white Gaussian field low-passed by a
/// Gaussian kernel, intensity = |field|^2, normalized to unit mean.
///
/// `grain` is the full width at half maximum of the intensity
/// autocorrelation, in pixels.
pub fn generate_speckle(
    seed: u64,
    geometry: SensorGeometry,
    grain: f64,
    margin: usize,
) -> Result<SpeckleField> {
    if !(grain >= 1.0) {
        return Err(Error::arg(format!("grain {grain} must be >= 1 pixel")));
    }
    // Spare pixels so cubic lookups at the full margin stay in bounds.
    let origin = margin + SPARE;
    let width = geometry.width as usize + 2 * origin;
    let height = geometry.height as usize + 2 * origin;

    // Intensity autocorrelation is exp(-r^2 / (2 sigma^2)) for a Gaussian
    // filter of std sigma, so its FWHM is 2 sqrt(2 ln 2) sigma.
    let sigma = grain / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let kernel = gaussian_kernel(sigma);
    let pad = kernel.len() / 2;
    let (pw, ph) = (width + 2 * pad, height + 2 * pad);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut re: Vec<f64> = (0..pw * ph).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut im: Vec<f64> = (0..pw * ph).map(|_| StandardNormal.sample(&mut rng)).collect();
    for plane in [&mut re, &mut im] {
        *plane = separable_valid(plane, pw, ph, &kernel);
    }

    let mut intensity: Vec<f64> = re.iter().zip(&im).map(|(a, b)| a * a + b * b).collect();
    let mean = intensity.iter().sum::<f64>() / intensity.len() as f64;
    if mean > 0.0 {
        intensity.iter_mut().for_each(|v| *v /= mean);
    }
    Ok(SpeckleField {
        width,
        height,
        origin,
        grain,
        seed,
        intensity: intensity.into_iter().map(|v| v as f32).collect(),
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.into_iter().map(|v| v / norm).collect()
}

/// Separable convolution keeping only fully supported outputs.
fn separable_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let pad = k.len() / 2;
    let (ow, oh) = (w - 2 * pad, h - 2 * pad);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&row[x..x + k.len()]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (j, kv) in k.iter().enumerate() {
            let src_row = &rows[(y + j) * ow..(y + j + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src_row) {
                *o += kv * s;
            }
        }
    }
    out
}

/// Cubic B-spline coefficients interpolating `src` (row-major `w` x `h`),
/// with mirror boundaries.
pub(crate) fn bspline_coefficients(src: &[f32], w: usize, h: usize) -> Vec<f64> {
    let mut c: Vec<f64> = src.iter().map(|&v| v as f64).collect();
    let mut line = Vec::new();
    for y in 0..h {
        line.clear();
        line.extend_from_slice(&c[y * w..(y + 1) * w]);
        prefilter_line(&mut line);
        c[y * w..(y + 1) * w].copy_from_slice(&line);
    }
    for x in 0..w {
        line.clear();
        line.extend((0..h).map(|y| c[y * w + x]));
        prefilter_line(&mut line);
        for (y, v) in line.iter().enumerate() {
            c[y * w + x] = *v;
        }
    }
    c
}

fn prefilter_line(c: &mut [f64]) {
    let n = c.len();
    if n < 2 {
        return;
    }
    let z = 3f64.sqrt() - 2.0;
    c.iter_mut().for_each(|v| *v *= 6.0);
    // Causal initialization, truncated mirror sum.
    let horizon = n.min(30);
    let mut zk = z;
    let mut sum = c[0];
    for v in &c[1..horizon] {
        sum += zk * v;
        zk *= z;
    }
    c[0] = sum;
    for k in 1..n {
        c[k] += z * c[k - 1];
    }
    c[n - 1] = z / (z * z - 1.0) * (c[n - 1] + z * c[n - 2]);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
}

/// Cubic B-spline weights for offsets -1, 0, 1, 2 at fraction `t`.
#[inline]
pub(crate) fn bspline_weights(t: f64) -> [f64; 4] {
    let u = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    [
        u * u * u / 6.0,
        (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0,
        (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0,
        t3 / 6.0,
    ]
}
