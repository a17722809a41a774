//! Coarse-to-fine dense optical flow by quadratic polynomial expansion
//! (Farneback's two-frame method).
//!
//! Each image is locally modelled as `f(p) = p'Ap + b'p + c` by Gaussian
//! weighted least squares. For a translation `f2(p) = f1(p - d)` the linear
//! terms satisfy `b2 = b1 - 2 A d`, which gives `d` from a windowed least
//! squares solve. Coarser pyramid levels seed the finer ones.

use crate::error::{Error, Result};

/// Single-channel float image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::arg(format!(
                "plane data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn rms(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let ss: f64 = self.data.iter().map(|&v| v as f64 * v as f64).sum();
        (ss / self.data.len() as f64).sqrt()
    }

    pub fn dot(&self, other: &Plane) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }

    /// Square box filter of side `2 * radius + 1`, replicated borders.
    /// Running sums, so the cost does not depend on the radius.
    pub fn box_blur(&self, radius: usize) -> Plane {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        let norm = 1.0 / (2 * radius + 1) as f64;
        let mut tmp = vec![0.0f32; w * h];
        let mut line = Vec::new();
        for y in 0..h {
            box_line(&self.data[y * w..(y + 1) * w], radius, norm, &mut line);
            tmp[y * w..(y + 1) * w].copy_from_slice(&line);
        }
        let mut col = vec![0.0f32; h];
        let mut data = vec![0.0f32; w * h];
        for x in 0..w {
            for (y, c) in col.iter_mut().enumerate() {
                *c = tmp[y * w + x];
            }
            box_line(&col, radius, norm, &mut line);
            for (y, v) in line.iter().enumerate() {
                data[y * w + x] = *v;
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    pub fn gaussian_blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as i64;
        let mut k: Vec<f32> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
            .collect();
        let s: f32 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        self.separable(&k)
    }

    fn separable(&self, k: &[f32]) -> Plane {
        let (w, h) = (self.width, self.height);
        let r = (k.len() / 2) as isize;
        let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
        let mut tmp = vec![0.0f32; w * h];
        for y in 0..h {
            let row = &self.data[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    acc += kv * row[clamp(x as isize + j as isize - r, w)];
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = vec![0.0f32; w * h];
        for y in 0..h {
            for (j, kv) in k.iter().enumerate() {
                let sy = clamp(y as isize + j as isize - r, h);
                let src = &tmp[sy * w..(sy + 1) * w];
                for (o, s) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                    *o += kv * s;
                }
            }
        }
        Plane {
            width: w,
            height: h,
            data: out,
        }
    }

    /// Bilinear sample with clamped coordinates.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f32, y - y0 as f32);
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bot = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Bilinear resize with pixel-centre alignment.
    pub fn resize(&self, width: usize, height: usize) -> Plane {
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = (y as f32 + 0.5) * sy - 0.5;
            for x in 0..width {
                data.push(self.sample((x as f32 + 0.5) * sx - 0.5, fy));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }
}

fn box_line(src: &[f32], radius: usize, norm: f64, out: &mut Vec<f32>) {
    let n = src.len() as isize;
    let r = radius as isize;
    let at = |i: isize| src[i.clamp(0, n - 1) as usize] as f64;
    out.clear();
    let mut acc: f64 = (-r..=r).map(at).sum();
    for i in 0..n {
        out.push((acc * norm) as f32);
        acc += at(i + r + 1) - at(i - r);
    }
}

/// Per-pixel displacement in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    fn resized(&self, width: usize, height: usize) -> FlowField {
        let su = width as f32 / self.width as f32;
        let sv = height as f32 / self.height as f32;
        let u = Plane {
            width: self.width,
            height: self.height,
            data: self.u.clone(),
        }
        .resize(width, height);
        let v = Plane {
            width: self.width,
            height: self.height,
            data: self.v.clone(),
        }
        .resize(width, height);
        FlowField {
            width,
            height,
            u: u.data.into_iter().map(|x| x * su).collect(),
            v: v.data.into_iter().map(|x| x * sv).collect(),
        }
    }
}

/// Coarse-to-fine settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidConfig {
    pub levels: usize,
    /// Odd side of the averaging window of the displacement solve.
    pub window: usize,
    pub iterations: usize,
    /// Per-level scale factor in (0, 1).
    pub downscale: f64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            levels: 3,
            window: 15,
            iterations: 3,
            downscale: 0.5,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::arg("pyramid levels must be >= 1"));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::arg(format!("window {} must be odd and >= 3", self.window)));
        }
        if self.iterations < 1 {
            return Err(Error::arg("iterations must be >= 1"));
        }
        if !(self.downscale > 0.0 && self.downscale < 1.0) {
            return Err(Error::arg(format!("downscale {} must be in (0, 1)", self.downscale)));
        }
        Ok(())
    }
}

const POLY_SIGMA: f64 = 1.1;
const POLY_RADIUS: usize = 4;
/// Coarser levels than this are not built.
const MIN_LEVEL_SIDE: usize = 8;

/// Quadratic expansion coefficients of one image.
#[derive(Debug, Clone)]
pub struct PolyPlane {
    width: usize,
    height: usize,
    // A = [[a11, a12], [a12, a22]], b = (b1, b2)
    coef: [Vec<f32>; 5],
}

impl PolyPlane {
    pub fn expand(img: &Plane) -> PolyPlane {
        let n = POLY_RADIUS as isize;
        let g: Vec<f64> = (-n..=n)
            .map(|i| (-(i * i) as f64 / (2.0 * POLY_SIGMA * POLY_SIGMA)).exp())
            .collect();
        let gs: f64 = g.iter().sum();
        let g: Vec<f64> = g.iter().map(|v| v / gs).collect();
        let m2: f64 = (-n..=n).zip(&g).map(|(i, w)| (i * i) as f64 * w).sum();
        let m4: f64 = (-n..=n).zip(&g).map(|(i, w)| (i * i * i * i) as f64 * w).sum();

        // Inverse of the Gram block coupling {1, x^2, y^2}; only the rows of
        // x^2 and y^2 are needed.
        let gram = [[1.0, m2, m2], [m2, m4, m2 * m2], [m2, m2 * m2, m4]];
        let inv = invert3(gram);

        let (w, h) = (img.width, img.height);
        let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;

        // Row pass: moments 0, 1, 2 along x.
        let mut r0 = vec![0.0f64; w * h];
        let mut r1 = vec![0.0f64; w * h];
        let mut r2 = vec![0.0f64; w * h];
        for y in 0..h {
            let row = &img.data[y * w..(y + 1) * w];
            for x in 0..w {
                let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
                for (j, gw) in g.iter().enumerate() {
                    let i = j as isize - n;
                    let v = row[clamp(x as isize + i, w)] as f64 * gw;
                    s0 += v;
                    s1 += v * i as f64;
                    s2 += v * (i * i) as f64;
                }
                r0[y * w + x] = s0;
                r1[y * w + x] = s1;
                r2[y * w + x] = s2;
            }
        }

        let mut coef: [Vec<f32>; 5] = Default::default();
        coef.iter_mut().for_each(|c| *c = vec![0.0; w * h]);
        for y in 0..h {
            for x in 0..w {
                let (mut c1, mut cx, mut cy, mut cxx, mut cyy, mut cxy) =
                    (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, gw) in g.iter().enumerate() {
                    let i = j as isize - n;
                    let k = clamp(y as isize + i, h) * w + x;
                    let fi = i as f64;
                    c1 += gw * r0[k];
                    cx += gw * r1[k];
                    cy += gw * fi * r0[k];
                    cxx += gw * r2[k];
                    cyy += gw * fi * fi * r0[k];
                    cxy += gw * fi * r1[k];
                }
                let rxx = inv[1][0] * c1 + inv[1][1] * cxx + inv[1][2] * cyy;
                let ryy = inv[2][0] * c1 + inv[2][1] * cxx + inv[2][2] * cyy;
                let p = y * w + x;
                coef[0][p] = rxx as f32;
                coef[1][p] = (0.5 * cxy / (m2 * m2)) as f32;
                coef[2][p] = ryy as f32;
                coef[3][p] = (cx / m2) as f32;
                coef[4][p] = (cy / m2) as f32;
            }
        }
        PolyPlane {
            width: w,
            height: h,
            coef,
        }
    }

    #[inline]
    fn get(&self, p: usize, scale: f32) -> [f32; 5] {
        [
            self.coef[0][p] * scale,
            self.coef[1][p] * scale,
            self.coef[2][p] * scale,
            self.coef[3][p] * scale,
            self.coef[4][p] * scale,
        ]
    }

    #[inline]
    fn sample(&self, x: f32, y: f32, scale: f32) -> [f32; 5] {
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f32, y - y0 as f32);
        let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let idx = [
            y0 * self.width + x0,
            y0 * self.width + x1,
            y1 * self.width + x0,
            y1 * self.width + x1,
        ];
        let mut out = [0.0f32; 5];
        for (o, c) in out.iter_mut().zip(&self.coef) {
            *o = scale * (w[0] * c[idx[0]] + w[1] * c[idx[1]] + w[2] * c[idx[2]] + w[3] * c[idx[3]]);
        }
        out
    }
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            // Cofactor of (j, i) for the adjugate.
            let (r0, r1) = match j {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c0, c1) = match i {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            *slot = sign * minor / det;
        }
    }
    inv
}

/// Polynomial expansions of every pyramid level of one image, finest first.
#[derive(Debug, Clone)]
pub struct ExpansionPyramid {
    levels: Vec<PolyPlane>,
}

impl ExpansionPyramid {
    pub fn build(img: &Plane, cfg: &PyramidConfig) -> ExpansionPyramid {
        let mut levels = vec![PolyPlane::expand(img)];
        let mut scale = 1.0;
        for _ in 1..cfg.levels {
            scale *= cfg.downscale;
            let w = (img.width as f64 * scale).round() as usize;
            let h = (img.height as f64 * scale).round() as usize;
            if w < MIN_LEVEL_SIDE || h < MIN_LEVEL_SIDE {
                break;
            }
            let sigma = (1.0 / scale - 1.0) * 0.5;
            let level = img.gaussian_blur(sigma).resize(w, h);
            levels.push(PolyPlane::expand(&level));
        }
        ExpansionPyramid { levels }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn size(&self) -> (usize, usize) {
        (self.levels[0].width, self.levels[0].height)
    }
}

/// Flow from `prev` to `next`, each expansion multiplied by its scale
/// factor first (lets callers normalize frames without re-expanding).
pub fn flow_from_expansions(
    prev: &ExpansionPyramid,
    prev_scale: f32,
    next: &ExpansionPyramid,
    next_scale: f32,
    cfg: &PyramidConfig,
) -> Result<FlowField> {
    if prev.size() != next.size() {
        return Err(Error::arg(format!(
            "frame geometry mismatch: {:?} vs {:?}",
            prev.size(),
            next.size()
        )));
    }
    let depth = prev.depth().min(next.depth());
    let mut flow: Option<FlowField> = None;
    for level in (0..depth).rev() {
        let (p1, p2) = (&prev.levels[level], &next.levels[level]);
        let mut f = match flow.take() {
            Some(coarse) => coarse.resized(p1.width, p1.height),
            None => FlowField::zeros(p1.width, p1.height),
        };
        for _ in 0..cfg.iterations {
            update_flow(p1, prev_scale, p2, next_scale, &mut f, cfg.window);
        }
        flow = Some(f);
    }
    Ok(flow.expect("at least one level"))
}

/// Dense flow between two frames; `u, v` are the displacement of the
/// pattern from `prev` to `next` in pixels.
pub fn dense_flow(prev: &Plane, next: &Plane, cfg: &PyramidConfig) -> Result<FlowField> {
    cfg.validate()?;
    if (prev.width, prev.height) != (next.width, next.height) {
        return Err(Error::arg(format!(
            "frame geometry mismatch: {}x{} vs {}x{}",
            prev.width, prev.height, next.width, next.height
        )));
    }
    let a = ExpansionPyramid::build(prev, cfg);
    let b = ExpansionPyramid::build(next, cfg);
    flow_from_expansions(&a, 1.0, &b, 1.0, cfg)
}

fn update_flow(p1: &PolyPlane, s1: f32, p2: &PolyPlane, s2: f32, flow: &mut FlowField, window: usize) {
    let (w, h) = (p1.width, p1.height);
    let mut terms: [Vec<f32>; 5] = Default::default();
    terms.iter_mut().for_each(|t| *t = vec![0.0; w * h]);
    let edge = (POLY_RADIUS + 1) as f32;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let (du, dv) = (flow.u[p], flow.v[p]);
            let (sx, sy) = (x as f32 + du, y as f32 + dv);
            if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f32 || sy > (h - 1) as f32 {
                continue;
            }
            let c1 = p1.get(p, s1);
            let c2 = p2.sample(sx, sy, s2);
            let a11 = 0.5 * (c1[0] + c2[0]);
            let a12 = 0.5 * (c1[1] + c2[1]);
            let a22 = 0.5 * (c1[2] + c2[2]);
            let db1 = -0.5 * (c2[3] - c1[3]) + a11 * du + a12 * dv;
            let db2 = -0.5 * (c2[4] - c1[4]) + a12 * du + a22 * dv;
            // Expansions near the border see replicated pixels; fade them out.
            let dist = x.min(y).min(w - 1 - x).min(h - 1 - y) as f32;
            let wt = ((dist + 1.0) / edge).min(1.0);
            terms[0][p] = wt * (a11 * a11 + a12 * a12);
            terms[1][p] = wt * (a12 * (a11 + a22));
            terms[2][p] = wt * (a12 * a12 + a22 * a22);
            terms[3][p] = wt * (a11 * db1 + a12 * db2);
            terms[4][p] = wt * (a12 * db1 + a22 * db2);
        }
    }
    let r = window / 2;
    let sums: Vec<Plane> = terms
        .into_iter()
        .map(|t| Plane { width: w, height: h, data: t }.box_blur(r))
        .collect();
    for p in 0..w * h {
        let (g11, g12, g22) = (sums[0].data[p] as f64, sums[1].data[p] as f64, sums[2].data[p] as f64);
        let (h1, h2) = (sums[3].data[p] as f64, sums[4].data[p] as f64);
        let tr = g11 + g22;
        let det = g11 * g22 - g12 * g12 + 1e-4 * tr * tr + 1e-30;
        flow.u[p] = ((g22 * h1 - g12 * h2) / det) as f32;
        flow.v[p] = ((g11 * h2 - g12 * h1) / det) as f32;
    }
}

/// Count-weighted mean of a flow field; `(0, 0)` when all counts are zero.
pub fn weighted_global_flow(flow: &FlowField, counts: &[u32]) -> Result<(f64, f64)> {
    if counts.len() != flow.u.len() {
        return Err(Error::arg("count image does not match flow geometry"));
    }
    let (mut su, mut sv, mut sc) = (0.0, 0.0, 0.0);
    for ((&u, &v), &c) in flow.u.iter().zip(&flow.v).zip(counts) {
        if c > 0 {
            let c = c as f64;
            su += u as f64 * c;
            sv += v as f64 * c;
            sc += c;
        }
    }
    if sc == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((su / sc, sv / sc))
}
