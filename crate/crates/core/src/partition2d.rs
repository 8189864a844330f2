//! Exact partition of a CPWL network's input space restricted to a 2-D slice.
//!
//! Regions are refined layer by layer: inside a region the composed map up to
//! layer ℓ is affine in slice coordinates, so every neuron of layer ℓ+1 has a
//! straight zero level-set there. Each region is cut by those lines, the
//! resulting pieces get their new activation signs, and the composed map is
//! updated with the masked layer.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::descriptors::{rank_from_singular_values, scaling_from_singular_values};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, singular_values, Matrix};
use crate::net::{ActivationPattern, AffineMap, CpwlNetwork};
use crate::scalar::Scalar;

/// Geometric tolerance (signed distance in slice coordinates).
pub const GEOM_EPS: f64 = 1e-10;
/// Pieces thinner than this area are not split off.
pub const MIN_AREA: f64 = 1e-12;
pub const DEFAULT_MAX_REGIONS: usize = 1_000_000;

pub type Point2<T> = [T; 2];

/// Affine 2-D plane `c + U·(x, y)` in the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D<T> {
    origin: Vec<T>,
    /// `E × 2`, orthonormal columns.
    basis: Matrix<T>,
}

impl<T: Scalar> Slice2D<T> {
    pub fn new(origin: Vec<T>, basis: Matrix<T>) -> Result<Self> {
        check_dim(origin.len(), basis.rows(), "slice origin")?;
        check_dim(2, basis.cols(), "slice basis columns")?;
        if basis.transpose().row_orthonormality_error() > T::lit(1e-10) {
            return Err(Error::InvalidInput("slice basis columns are not orthonormal".into()));
        }
        Ok(Slice2D { origin, basis })
    }

    /// The plane `ℝ²` itself.
    pub fn identity() -> Self {
        Slice2D {
            origin: vec![T::zero(); 2],
            basis: Matrix::identity(2),
        }
    }

    /// Plane through three latents, with `a` at the origin and `b` on the first axis.
    /// Returns the slice and the slice coordinates of the three anchors.
    pub fn through(a: &[T], b: &[T], c: &[T]) -> Result<(Self, [Point2<T>; 3])> {
        check_dim(a.len(), b.len(), "anchor")?;
        check_dim(a.len(), c.len(), "anchor")?;
        let mut m = Matrix::from_fn(2, a.len(), |i, j| if i == 0 { b[j] - a[j] } else { c[j] - a[j] });
        if !crate::linalg::orthonormalize_rows(&mut m) {
            return Err(Error::InvalidInput("anchors are collinear".into()));
        }
        let slice = Slice2D::new(a.to_vec(), m.transpose())?;
        let coords = [slice.coordinates(a)?, slice.coordinates(b)?, slice.coordinates(c)?];
        Ok((slice, coords))
    }

    pub fn ambient_dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[T] {
        &self.origin
    }

    pub fn basis(&self) -> &Matrix<T> {
        &self.basis
    }

    pub fn embed(&self, x: T, y: T) -> Vec<T> {
        (0..self.origin.len())
            .map(|i| self.origin[i] + self.basis[(i, 0)] * x + self.basis[(i, 1)] * y)
            .collect()
    }

    /// Orthogonal projection of a latent onto slice coordinates.
    pub fn coordinates(&self, z: &[T]) -> Result<Point2<T>> {
        check_dim(self.origin.len(), z.len(), "latent")?;
        let d: Vec<T> = z.iter().zip(&self.origin).map(|(&a, &b)| a - b).collect();
        let c = self.basis.t_matvec(&d)?;
        Ok([c[0], c[1]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexRegion<T> {
    /// Counter-clockwise, in slice coordinates.
    pub vertices: Vec<Point2<T>>,
    pub pattern: ActivationPattern,
    /// Affine map of the full latent (composed through all layers).
    pub affine: AffineMap<T>,
    /// The same map restricted to slice coordinates.
    pub slice_affine: AffineMap<T>,
    /// `NaN` when the region maps to a point.
    pub psi: T,
    pub nu: T,
}

impl<T: Scalar> ConvexRegion<T> {
    pub fn area(&self) -> T {
        polygon_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point2<T> {
        polygon_centroid(&self.vertices)
    }

    pub fn contains(&self, p: Point2<T>, eps: T) -> bool {
        convex_contains(&self.vertices, p, eps)
    }
}

/// A straight knot piece: where neuron `neuron` of layer `layer` changes sign.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSegment<T> {
    pub layer: usize,
    pub neuron: usize,
    pub endpoints: [Point2<T>; 2],
}

#[derive(Debug, Clone)]
pub struct SlicePartition<T> {
    pub regions: Vec<ConvexRegion<T>>,
    pub domain: Vec<Point2<T>>,
    pub knots: Vec<KnotSegment<T>>,
    slice: Slice2D<T>,
    by_pattern: HashMap<ActivationPattern, usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct PartitionOptions {
    pub max_regions: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            max_regions: DEFAULT_MAX_REGIONS,
        }
    }
}

struct WorkRegion<T> {
    polygon: Vec<Point2<T>>,
    slope: Matrix<T>,
    offset: Vec<T>,
    signs: Vec<Vec<bool>>,
}

pub fn compute_partition<T: Scalar>(
    net: &CpwlNetwork<T>,
    slice: &Slice2D<T>,
    domain: &[Point2<T>],
) -> Result<SlicePartition<T>> {
    compute_partition_with(net, slice, domain, PartitionOptions::default())
}

pub fn compute_partition_with<T: Scalar>(
    net: &CpwlNetwork<T>,
    slice: &Slice2D<T>,
    domain: &[Point2<T>],
    opts: PartitionOptions,
) -> Result<SlicePartition<T>> {
    check_dim(net.input_dim(), slice.ambient_dim(), "slice dimension")?;
    let domain = normalize_domain(domain)?;
    let eps = T::lit(GEOM_EPS);
    let min_area = T::lit(MIN_AREA);

    let mut regions = vec![WorkRegion {
        polygon: domain.clone(),
        slope: slice.basis.clone(),
        offset: slice.origin.clone(),
        signs: Vec::new(),
    }];
    let mut knots = Vec::new();

    for (li, layer) in net.layers().iter().enumerate() {
        let mut next = Vec::with_capacity(regions.len());
        for region in regions {
            let pre_slope = layer.weight.matmul(&region.slope)?;
            let pre_offset: Vec<T> = layer
                .weight
                .matvec(&region.offset)?
                .into_iter()
                .zip(&layer.bias)
                .map(|(a, &b)| a + b)
                .collect();
            let mut pieces = vec![region.polygon];
            if layer.activation.is_nonlinear() {
                for k in 0..layer.out_dim() {
                    let a = [pre_slope[(k, 0)], pre_slope[(k, 1)]];
                    let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
                    if na == T::zero() {
                        continue;
                    }
                    let line = ([a[0] / na, a[1] / na], pre_offset[k] / na);
                    // A line coincident with an earlier cut lies on piece
                    // boundaries and splits nothing, so duplicates drop out here.
                    let mut out = Vec::with_capacity(pieces.len() + 1);
                    for poly in pieces {
                        match split_polygon(&poly, line, eps, min_area) {
                            Split::Whole => out.push(poly),
                            Split::Cut { pos, neg, chord } => {
                                knots.push(KnotSegment {
                                    layer: li,
                                    neuron: k,
                                    endpoints: chord,
                                });
                                out.push(pos);
                                out.push(neg);
                            }
                        }
                    }
                    pieces = out;
                    if next.len() + pieces.len() > opts.max_regions {
                        return Err(Error::RegionBudget(opts.max_regions));
                    }
                }
            }
            for poly in pieces {
                let centroid = polygon_centroid(&poly);
                let mut slope = pre_slope.clone();
                let mut offset = pre_offset.clone();
                let mut signs = region.signs.clone();
                if layer.activation.is_nonlinear() {
                    let mut s = Vec::with_capacity(layer.out_dim());
                    for k in 0..layer.out_dim() {
                        let v = pre_slope[(k, 0)] * centroid[0] + pre_slope[(k, 1)] * centroid[1] + pre_offset[k];
                        let active = v > T::zero();
                        let g = layer.activation.gain(active);
                        for x in slope.row_mut(k) {
                            *x = *x * g;
                        }
                        offset[k] = offset[k] * g;
                        s.push(active);
                    }
                    signs.push(s);
                } else {
                    signs.push(Vec::new());
                }
                next.push(WorkRegion {
                    polygon: poly,
                    slope,
                    offset,
                    signs,
                });
            }
            if next.len() > opts.max_regions {
                return Err(Error::RegionBudget(opts.max_regions));
            }
        }
        regions = next;
    }

    let mut out = Vec::with_capacity(regions.len());
    let mut by_pattern = HashMap::with_capacity(regions.len());
    for (i, r) in regions.into_iter().enumerate() {
        let pattern = ActivationPattern::new(r.signs);
        let affine = net.affine_for_pattern(&pattern)?;
        let sigma = singular_values(&affine.slope)?;
        let (rows, cols) = affine.slope.shape();
        let psi = scaling_from_singular_values(&sigma, rows, cols).map_or(T::nan(), |s| s.psi);
        let nu = rank_from_singular_values(&sigma, rows, cols).map_or(T::nan(), |s| s.nu);
        by_pattern.insert(pattern.clone(), i);
        out.push(ConvexRegion {
            vertices: r.polygon,
            pattern,
            affine,
            slice_affine: AffineMap {
                slope: r.slope,
                offset: r.offset,
            },
            psi,
            nu,
        });
    }
    Ok(SlicePartition {
        regions: out,
        domain,
        knots,
        slice: slice.clone(),
        by_pattern,
    })
}

impl<T: Scalar> SlicePartition<T> {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn slice(&self) -> &Slice2D<T> {
        &self.slice
    }

    pub fn domain_area(&self) -> T {
        polygon_area(&self.domain)
    }

    pub fn region_with_pattern(&self, pattern: &ActivationPattern) -> Option<&ConvexRegion<T>> {
        self.by_pattern.get(pattern).map(|&i| &self.regions[i])
    }

    /// Region containing `p`. Points on shared edges resolve to the region whose
    /// pattern matches the network's own sign convention at `p`.
    pub fn region_at(&self, net: &CpwlNetwork<T>, p: Point2<T>) -> Result<&ConvexRegion<T>> {
        let eps = T::lit(GEOM_EPS);
        if !convex_contains(&self.domain, p, eps) {
            return Err(Error::OutsideDomain(p[0].as_f64(), p[1].as_f64()));
        }
        let candidates: Vec<usize> = (0..self.regions.len())
            .filter(|&i| self.regions[i].contains(p, eps))
            .collect();
        if candidates.len() == 1 {
            return Ok(&self.regions[candidates[0]]);
        }
        let (_, pattern) = net.forward(&self.slice.embed(p[0], p[1]))?;
        if let Some(&i) = self.by_pattern.get(&pattern) {
            return Ok(&self.regions[i]);
        }
        candidates
            .first()
            .map(|&i| &self.regions[i])
            .ok_or(Error::OutsideDomain(p[0].as_f64(), p[1].as_f64()))
    }

    pub fn to_document(&self, coloring: Coloring) -> PolygonDocument {
        let opt = |v: T| {
            let v = v.as_f64();
            v.is_finite().then_some(v)
        };
        PolygonDocument {
            schema_version: POLYGON_SCHEMA_VERSION,
            coloring,
            regions: self
                .regions
                .iter()
                .map(|r| PolygonRecord {
                    vertices: r.vertices.iter().map(|v| [v[0].as_f64(), v[1].as_f64()]).collect(),
                    psi: opt(r.psi),
                    nu: opt(r.nu),
                    value: match coloring {
                        Coloring::Psi => opt(r.psi),
                        Coloring::Nu => opt(r.nu),
                        Coloring::None => None,
                    },
                })
                .collect(),
            knots: self
                .knots
                .iter()
                .map(|k| {
                    let [a, b] = k.endpoints;
                    [[a[0].as_f64(), a[1].as_f64()], [b[0].as_f64(), b[1].as_f64()]]
                })
                .collect(),
        }
    }

    pub fn export_polygons<W: Write>(&self, w: W, coloring: Coloring) -> Result<()> {
        self.to_document(coloring).write(w)
    }
}

pub const POLYGON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coloring {
    Psi,
    Nu,
    None,
}

/// Polygon JSON:
/// `{"schema_version":1,"coloring":"psi","regions":[{"vertices":[[x,y],…],"psi":…,"nu":…,"value":…}],"knots":[[[x1,y1],[x2,y2]],…]}`.
/// Undefined descriptors are written as `null`; `value` repeats the coloring descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonDocument {
    pub schema_version: u32,
    pub coloring: Coloring,
    pub regions: Vec<PolygonRecord>,
    pub knots: Vec<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonRecord {
    pub vertices: Vec<[f64; 2]>,
    pub psi: Option<f64>,
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<f64>,
}

impl PolygonDocument {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

enum Split<T> {
    Whole,
    Cut {
        pos: Vec<Point2<T>>,
        neg: Vec<Point2<T>>,
        chord: [Point2<T>; 2],
    },
}

/// Cuts a convex polygon by the unit-normal line `n·p + c = 0`.
fn split_polygon<T: Scalar>(poly: &[Point2<T>], (n, c): (Point2<T>, T), eps: T, min_area: T) -> Split<T> {
    let d: Vec<T> = poly.iter().map(|p| n[0] * p[0] + n[1] * p[1] + c).collect();
    if d.iter().all(|&x| x >= -eps) || d.iter().all(|&x| x <= eps) {
        return Split::Whole;
    }
    let mut pos = Vec::with_capacity(poly.len() + 2);
    let mut neg = Vec::with_capacity(poly.len() + 2);
    let mut on_line = Vec::with_capacity(2);
    for i in 0..poly.len() {
        let j = (i + 1) % poly.len();
        let (p, di, dj) = (poly[i], d[i], d[j]);
        if di.abs() <= eps {
            pos.push(p);
            neg.push(p);
            on_line.push(p);
        } else if di > T::zero() {
            pos.push(p);
        } else {
            neg.push(p);
        }
        if (di > eps && dj < -eps) || (di < -eps && dj > eps) {
            let t = di / (di - dj);
            let q = poly[j];
            let x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
            pos.push(x);
            neg.push(x);
            on_line.push(x);
        }
    }
    if on_line.len() != 2 || polygon_area(&pos) < min_area || polygon_area(&neg) < min_area {
        // Sliver: the thin side stays with its neighbor.
        return Split::Whole;
    }
    Split::Cut {
        pos,
        neg,
        chord: [on_line[0], on_line[1]],
    }
}

fn normalize_domain<T: Scalar>(domain: &[Point2<T>]) -> Result<Vec<Point2<T>>> {
    if domain.len() < 3 {
        return Err(Error::InvalidInput("domain polygon needs at least 3 vertices".into()));
    }
    let mut d = domain.to_vec();
    if signed_area(&d) < T::zero() {
        d.reverse();
    }
    if polygon_area(&d) <= T::lit(MIN_AREA) {
        return Err(Error::InvalidInput("domain polygon has no area".into()));
    }
    let n = d.len();
    for i in 0..n {
        let (a, b, c) = (d[i], d[(i + 1) % n], d[(i + 2) % n]);
        if cross(a, b, c) < -T::lit(GEOM_EPS) {
            return Err(Error::InvalidInput("domain polygon is not convex".into()));
        }
    }
    Ok(d)
}

/// Axis-aligned square `[-h, h]²`, counter-clockwise.
pub fn square<T: Scalar>(h: T) -> Vec<Point2<T>> {
    vec![[-h, -h], [h, -h], [h, h], [-h, h]]
}

fn cross<T: Scalar>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn signed_area<T: Scalar>(poly: &[Point2<T>]) -> T {
    let n = poly.len();
    let mut s = T::zero();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        s = s + p[0] * q[1] - q[0] * p[1];
    }
    s / T::lit(2.0)
}

pub fn polygon_area<T: Scalar>(poly: &[Point2<T>]) -> T {
    signed_area(poly).abs()
}

pub fn polygon_centroid<T: Scalar>(poly: &[Point2<T>]) -> Point2<T> {
    let a = signed_area(poly);
    let n = poly.len();
    if a.abs() <= T::lit(1e-300) {
        let k = T::lit(n as f64);
        let sx: T = poly.iter().map(|p| p[0]).sum();
        let sy: T = poly.iter().map(|p| p[1]).sum();
        return [sx / k, sy / k];
    }
    let (mut cx, mut cy) = (T::zero(), T::zero());
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p[0] * q[1] - q[0] * p[1];
        cx = cx + (p[0] + q[0]) * w;
        cy = cy + (p[1] + q[1]) * w;
    }
    let six_a = T::lit(6.0) * a;
    [cx / six_a, cy / six_a]
}

fn convex_contains<T: Scalar>(poly: &[Point2<T>], p: Point2<T>, eps: T) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let e = [b[0] - a[0], b[1] - a[1]];
        let len = dot(&e, &e).sqrt();
        len == T::zero() || cross(a, b, p) / len >= -eps
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Layer};

    fn three_relus() -> CpwlNetwork<f64> {
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        CpwlNetwork::new(vec![
            Layer::new(w, vec![0.0, 0.0, -1.0], Activation::Relu).unwrap(),
            Layer::new(Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap(), vec![0.0], Activation::Identity).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn linear_net_single_region() {
        let net = CpwlNetwork::<f64>::linear(Matrix::from_diag(&[2.0, 3.0]), vec![1.0, 1.0]).unwrap();
        let p = compute_partition(&net, &Slice2D::identity(), &square(1.0)).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.regions[0].area() - 4.0).abs() < 1e-12);
        assert!((p.regions[0].psi - 6f64.ln()).abs() < 1e-12);
        let r = p.region_at(&net, [0.0, 0.0]).unwrap();
        assert_eq!(r.vertices.len(), 4);
    }

    #[test]
    fn three_lines_in_general_position_give_seven_regions() {
        let net = three_relus();
        let p = compute_partition(&net, &Slice2D::identity(), &square(5.0)).unwrap();
        assert_eq!(p.len(), 7);
        let total: f64 = p.regions.iter().map(ConvexRegion::area).sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn tiny_budget_fails() {
        let net = three_relus();
        let opts = PartitionOptions { max_regions: 3 };
        assert!(matches!(
            compute_partition_with(&net, &Slice2D::identity(), &square(5.0), opts),
            Err(Error::RegionBudget(3))
        ));
    }

    #[test]
    fn region_at_rejects_outside_points() {
        let net = three_relus();
        let p = compute_partition(&net, &Slice2D::identity(), &square(1.0)).unwrap();
        assert!(p.region_at(&net, [2.0, 0.0]).is_err());
    }

    #[test]
    fn boundary_point_follows_forward_convention() {
        let net = three_relus();
        let p = compute_partition(&net, &Slice2D::identity(), &square(5.0)).unwrap();
        // (0, 2) lies on the x1 = 0 knot; forward treats it as inactive.
        let r = p.region_at(&net, [0.0, 2.0]).unwrap();
        let (_, pat) = net.forward(&[0.0, 2.0]).unwrap();
        assert_eq!(r.pattern, pat);
    }

    #[test]
    fn domain_validation() {
        let net = three_relus();
        assert!(compute_partition(&net, &Slice2D::identity(), &[[0.0, 0.0], [1.0, 0.0]]).is_err());
        let nonconvex = [[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [1.0, 2.0]];
        assert!(compute_partition(&net, &Slice2D::identity(), &nonconvex).is_err());
        // Clockwise input is accepted and reoriented.
        let cw: Vec<_> = square(1.0).into_iter().rev().collect();
        assert!(compute_partition(&net, &Slice2D::identity(), &cw).is_ok());
    }

    #[test]
    fn slice_through_anchors() {
        let a = [1.0f64, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        let c = [0.0, 0.0, 1.0];
        let (s, coords) = Slice2D::through(&a, &b, &c).unwrap();
        for (z, p) in [a, b, c].iter().zip(coords) {
            let back = s.embed(p[0], p[1]);
            for (x, y) in back.iter().zip(z) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(Slice2D::through(&a, &a, &c).is_err());
    }
}
