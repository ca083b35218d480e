//! Primitives, rays and the bounding volume hierarchy behind the hitpoint function.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::sampling::uniform_sample_sphere;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Ray { origin, dir, t_min: 0.0, t_max: f64::INFINITY }
    }

    pub fn segment(origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Self {
        Ray { origin, dir, t_min, t_max }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// A ray/surface intersection. `normal` is the unit geometric normal as
/// authored (not flipped toward the ray).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceHit {
    pub point: Vec3,
    pub normal: Vec3,
    pub t: f64,
    pub primitive_id: usize,
}

/// Result of the hitpoint function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hit {
    Surface(SurfaceHit),
    /// Missed all geometry in a scene with an environment light.
    Environment,
    /// Missed all geometry in a scene without environment; carries no radiance.
    Escaped,
}

impl Hit {
    pub fn surface(&self) -> Option<&SurfaceHit> {
        match self {
            Hit::Surface(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_environment(&self) -> bool {
        matches!(self, Hit::Environment)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Parallelogram `corner + a·edge1 + b·edge2`, `a, b ∈ [0,1]`; normal `edge1 × edge2`.
    Quad { corner: Vec3, edge1: Vec3, edge2: Vec3 },
    /// Counter-clockwise vertices; normal `(v1−v0) × (v2−v0)`.
    Triangle { v0: Vec3, v1: Vec3, v2: Vec3 },
}

impl Shape {
    pub fn area(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Shape::Quad { edge1, edge2, .. } => edge1.cross(edge2).length(),
            Shape::Triangle { v0, v1, v2 } => 0.5 * (v1 - v0).cross(v2 - v0).length(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = match *self {
            Shape::Sphere { center, radius } => center.is_finite() && radius.is_finite(),
            Shape::Quad { corner, edge1, edge2 } => corner.is_finite() && edge1.is_finite() && edge2.is_finite(),
            Shape::Triangle { v0, v1, v2 } => v0.is_finite() && v1.is_finite() && v2.is_finite(),
        };
        if !finite {
            return Err("non-finite coordinates".into());
        }
        if let Shape::Sphere { radius, .. } = self {
            if *radius <= 0.0 {
                return Err(format!("sphere radius {radius} must be positive"));
            }
        }
        let area = self.area();
        if !(area > 1e-12) {
            return Err(format!("zero area ({area})"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Aabb {
        match *self {
            Shape::Sphere { center, radius } => {
                Aabb::new(center - Vec3::splat(radius), center + Vec3::splat(radius))
            }
            Shape::Quad { corner, edge1, edge2 } => Aabb::empty()
                .grow(corner)
                .grow(corner + edge1)
                .grow(corner + edge2)
                .grow(corner + edge1 + edge2),
            Shape::Triangle { v0, v1, v2 } => Aabb::empty().grow(v0).grow(v1).grow(v2),
        }
    }

    /// Nearest intersection in `(ray.t_min, ray.t_max)`: `(t, unit normal)`.
    #[inline]
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, Vec3)> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(ray.dir);
                let c = oc.length_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let mut t = -b - sq;
                if t <= ray.t_min || t >= ray.t_max {
                    t = -b + sq;
                    if t <= ray.t_min || t >= ray.t_max {
                        return None;
                    }
                }
                Some((t, (ray.at(t) - center) / radius))
            }
            Shape::Quad { corner, edge1, edge2 } => {
                let n = edge1.cross(edge2);
                let denom = n.dot(ray.dir);
                if denom.abs() < 1e-12 * n.length() {
                    return None;
                }
                let t = n.dot(corner - ray.origin) / denom;
                if t <= ray.t_min || t >= ray.t_max {
                    return None;
                }
                let r = ray.at(t) - corner;
                let w = n / n.length_squared();
                let a = w.dot(r.cross(edge2));
                let b = w.dot(edge1.cross(r));
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                    return None;
                }
                Some((t, n.normalized()))
            }
            Shape::Triangle { v0, v1, v2 } => {
                let e1 = v1 - v0;
                let e2 = v2 - v0;
                let p = ray.dir.cross(e2);
                let det = e1.dot(p);
                if det.abs() < 1e-14 {
                    return None;
                }
                let inv = 1.0 / det;
                let s = ray.origin - v0;
                let u = s.dot(p) * inv;
                if !(0.0..=1.0).contains(&u) {
                    return None;
                }
                let q = s.cross(e1);
                let v = ray.dir.dot(q) * inv;
                if v < 0.0 || u + v > 1.0 {
                    return None;
                }
                let t = e2.dot(q) * inv;
                if t <= ray.t_min || t >= ray.t_max {
                    return None;
                }
                Some((t, e1.cross(e2).normalized()))
            }
        }
    }

    /// Uniform point (by area) on the surface: `(point, unit normal)`.
    pub fn sample_point(&self, u: f64, v: f64) -> (Vec3, Vec3) {
        match *self {
            Shape::Sphere { center, radius } => {
                let (d, _) = uniform_sample_sphere(u, v);
                (center + d * radius, d)
            }
            Shape::Quad { corner, edge1, edge2 } => {
                (corner + edge1 * u + edge2 * v, edge1.cross(edge2).normalized())
            }
            Shape::Triangle { v0, v1, v2 } => {
                let su = u.sqrt();
                let b0 = 1.0 - su;
                let b1 = v * su;
                let p = v0 * b0 + v1 * b1 + v2 * (1.0 - b0 - b1);
                (p, (v1 - v0).cross(v2 - v0).normalized())
            }
        }
    }

    fn centroid(&self) -> Vec3 {
        match *self {
            Shape::Sphere { center, .. } => center,
            Shape::Quad { corner, edge1, edge2 } => corner + (edge1 + edge2) * 0.5,
            Shape::Triangle { v0, v1, v2 } => (v0 + v1 + v2) / 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub material: usize,
    pub area: f64,
}

impl Primitive {
    pub fn new(shape: Shape, material: usize) -> Self {
        Primitive { shape, material, area: shape.area() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb::new(Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY))
    }

    pub fn grow(self, p: Vec3) -> Self {
        Aabb::new(self.min.min(p), self.max.max(p))
    }

    pub fn union(self, o: Aabb) -> Self {
        Aabb::new(self.min.min(o.min), self.max.max(o.max))
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().length()
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        o.min.x >= self.min.x
            && o.min.y >= self.min.y
            && o.min.z >= self.min.z
            && o.max.x <= self.max.x
            && o.max.y <= self.max.y
            && o.max.z <= self.max.z
    }

    /// Slab test; returns the entry distance if the box overlaps `(t_min, t_max)`.
    #[inline]
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.min[a] - origin[a]) * inv_dir[a];
            let mut far = (self.max[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN (0 * inf) leaves the bound untouched
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
        }
        // tolerate flat boxes
        (t0 <= t1 * (1.0 + 1e-12) + 1e-12).then_some(t0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: index of the first entry in `order`; interior: index of the right child
    /// (the left child always follows its parent).
    pub offset: u32,
    /// Number of primitives in a leaf; 0 for interior nodes.
    pub count: u32,
    pub axis: u8,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

const MAX_LEAF: usize = 4;
const SAH_BINS: usize = 12;

/// Flattened BVH built with a binned surface-area heuristic; falls back to a
/// median split when all centroids fall into one bin.
#[derive(Clone, Debug)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    pub order: Vec<u32>,
}

struct BuildItem {
    bounds: Aabb,
    centroid: Vec3,
    index: u32,
}

impl Bvh {
    pub fn build(primitives: &[Primitive]) -> Result<Bvh> {
        if primitives.is_empty() {
            return Err(Error::EmptyScene);
        }
        let mut items: Vec<BuildItem> = primitives
            .iter()
            .enumerate()
            .map(|(i, p)| BuildItem { bounds: p.shape.bounds(), centroid: p.shape.centroid(), index: i as u32 })
            .collect();
        let mut bvh = Bvh { nodes: Vec::with_capacity(2 * primitives.len()), order: Vec::with_capacity(primitives.len()) };
        bvh.build_recursive(&mut items);
        Ok(bvh)
    }

    fn build_recursive(&mut self, items: &mut [BuildItem]) -> usize {
        let bounds = items.iter().fold(Aabb::empty(), |b, it| b.union(it.bounds));
        let node_index = self.nodes.len();
        self.nodes.push(BvhNode { bounds, offset: 0, count: 0, axis: 0 });

        if items.len() <= MAX_LEAF {
            return self.make_leaf(node_index, items);
        }
        let centroid_bounds = items.iter().fold(Aabb::empty(), |b, it| b.grow(it.centroid));
        let axis = centroid_bounds.extent().max_axis();
        let lo = centroid_bounds.min[axis];
        let hi = centroid_bounds.max[axis];
        if hi - lo <= 1e-12 {
            // coincident centroids: split the list in half
            let mid = items.len() / 2;
            return self.make_interior(node_index, axis, items, mid);
        }

        let bin_of = |c: f64| (((c - lo) / (hi - lo) * SAH_BINS as f64) as usize).min(SAH_BINS - 1);
        let mut bin_bounds = [Aabb::empty(); SAH_BINS];
        let mut bin_counts = [0usize; SAH_BINS];
        for it in items.iter() {
            let b = bin_of(it.centroid[axis]);
            bin_bounds[b] = bin_bounds[b].union(it.bounds);
            bin_counts[b] += 1;
        }
        let mut best: Option<(f64, usize)> = None;
        for split in 1..SAH_BINS {
            let (mut lb, mut lc) = (Aabb::empty(), 0);
            for b in 0..split {
                lb = lb.union(bin_bounds[b]);
                lc += bin_counts[b];
            }
            let (mut rb, mut rc) = (Aabb::empty(), 0);
            for b in split..SAH_BINS {
                rb = rb.union(bin_bounds[b]);
                rc += bin_counts[b];
            }
            if lc == 0 || rc == 0 {
                continue;
            }
            let cost = lb.surface_area() * lc as f64 + rb.surface_area() * rc as f64;
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, split));
            }
        }
        let mid = match best {
            Some((_, split)) => partition_in_place(items, |it| bin_of(it.centroid[axis]) < split),
            None => {
                items.sort_by(|a, b| a.centroid[axis].total_cmp(&b.centroid[axis]));
                items.len() / 2
            }
        };
        let mid = if mid == 0 || mid == items.len() {
            items.sort_by(|a, b| a.centroid[axis].total_cmp(&b.centroid[axis]));
            items.len() / 2
        } else {
            mid
        };
        self.make_interior(node_index, axis, items, mid)
    }

    fn make_leaf(&mut self, node_index: usize, items: &[BuildItem]) -> usize {
        let node = &mut self.nodes[node_index];
        node.offset = self.order.len() as u32;
        node.count = items.len() as u32;
        self.order.extend(items.iter().map(|it| it.index));
        node_index
    }

    fn make_interior(&mut self, node_index: usize, axis: usize, items: &mut [BuildItem], mid: usize) -> usize {
        let (left, right) = items.split_at_mut(mid);
        self.build_recursive(left);
        let right_index = self.build_recursive(right);
        let node = &mut self.nodes[node_index];
        node.offset = right_index as u32;
        node.axis = axis as u8;
        node_index
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Closest hit among `primitives`.
    pub fn intersect(&self, primitives: &[Primitive], ray: &Ray) -> Option<SurfaceHit> {
        self.traverse(primitives, ray, false)
    }

    /// True if anything lies in `(ray.t_min, ray.t_max)`.
    pub fn intersects_any(&self, primitives: &[Primitive], ray: &Ray) -> bool {
        self.traverse(primitives, ray, true).is_some()
    }

    fn traverse(&self, primitives: &[Primitive], ray: &Ray, any: bool) -> Option<SurfaceHit> {
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let neg = [ray.dir.x < 0.0, ray.dir.y < 0.0, ray.dir.z < 0.0];
        let mut r = *ray;
        let mut best: Option<SurfaceHit> = None;
        let mut stack = [0usize; 64];
        let mut sp = 0;
        let mut current = 0usize;
        loop {
            let node = &self.nodes[current];
            if node.bounds.hit(r.origin, inv, r.t_min, r.t_max).is_some() {
                if node.is_leaf() {
                    let start = node.offset as usize;
                    for &pi in &self.order[start..start + node.count as usize] {
                        let prim = &primitives[pi as usize];
                        if let Some((t, normal)) = prim.shape.intersect(&r) {
                            r.t_max = t;
                            best = Some(SurfaceHit { point: r.at(t), normal, t, primitive_id: pi as usize });
                            if any {
                                return best;
                            }
                        }
                    }
                } else {
                    // visit the near child first
                    let (first, second) = if neg[node.axis as usize] {
                        (node.offset as usize, current + 1)
                    } else {
                        (current + 1, node.offset as usize)
                    };
                    stack[sp] = second;
                    sp += 1;
                    current = first;
                    continue;
                }
            }
            if sp == 0 {
                break;
            }
            sp -= 1;
            current = stack[sp];
        }
        best
    }
}

fn partition_in_place<T>(items: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let mut i = 0;
    for j in 0..items.len() {
        if pred(&items[j]) {
            items.swap(i, j);
            i += 1;
        }
    }
    i
}

/// Linear scan over all primitives; reference for the BVH.
pub fn brute_force_intersect(primitives: &[Primitive], ray: &Ray) -> Option<SurfaceHit> {
    let mut r = *ray;
    let mut best = None;
    for (i, p) in primitives.iter().enumerate() {
        if let Some((t, normal)) = p.shape.intersect(&r) {
            r.t_max = t;
            best = Some(SurfaceHit { point: r.at(t), normal, t, primitive_id: i });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RngStream;
    use proptest::prelude::*;

    fn sphere(c: Vec3, r: f64) -> Primitive {
        Primitive::new(Shape::Sphere { center: c, radius: r }, 0)
    }

    fn random_triangles(rng: &mut RngStream, n: usize, offset: Vec3) -> Vec<Primitive> {
        (0..n)
            .map(|_| {
                let base = Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()) * 4.0 + offset;
                let mut jitter = || Vec3::new(rng.next_f64() - 0.5, rng.next_f64() - 0.5, rng.next_f64() - 0.5);
                let (a, b, c) = (base + jitter(), base + jitter(), base + jitter());
                Primitive::new(Shape::Triangle { v0: a, v1: b, v2: c }, 0)
            })
            .filter(|p| p.area > 1e-6)
            .collect()
    }

    fn random_ray(rng: &mut RngStream) -> Ray {
        let o = Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()) * 8.0 - Vec3::splat(2.0);
        let (d, _) = uniform_sample_sphere(rng.next_f64(), rng.next_f64());
        Ray::new(o, d)
    }

    #[test]
    fn sphere_analytic_hit() {
        let prims = [sphere(Vec3::ZERO, 0.5)];
        let bvh = Bvh::build(&prims).unwrap();
        assert_eq!(bvh.nodes.len(), 1);
        let ray = Ray::new(Vec3::new(0.0, 0.0, -1.0), Vec3::Z);
        let hit = bvh.intersect(&prims, &ray).unwrap();
        assert!((hit.t - 0.5).abs() < 1e-12);
        assert!((hit.point - Vec3::new(0.0, 0.0, -0.5)).length() < 1e-12);
        assert!((hit.normal - Vec3::new(0.0, 0.0, -1.0)).length() < 1e-12);
    }

    #[test]
    fn parallel_ray_misses_quad() {
        let q = Primitive::new(Shape::Quad { corner: Vec3::ZERO, edge1: Vec3::X, edge2: Vec3::Z }, 0);
        let ray = Ray::new(Vec3::new(-1.0, 0.0, 0.5), Vec3::X);
        assert!(q.shape.intersect(&ray).is_none());
        let down = Ray::new(Vec3::new(0.5, 1.0, 0.5), -Vec3::Y);
        let (t, n) = q.shape.intersect(&down).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        // X x Z = -Y
        assert!((n + Vec3::Y).length() < 1e-12);
    }

    #[test]
    fn empty_scene_is_rejected() {
        assert!(matches!(Bvh::build(&[]), Err(Error::EmptyScene)));
    }

    #[test]
    fn degenerate_shapes_fail_validation() {
        assert!(Shape::Quad { corner: Vec3::ZERO, edge1: Vec3::X, edge2: Vec3::X * 2.0 }.validate().is_err());
        assert!(Shape::Sphere { center: Vec3::ZERO, radius: 0.0 }.validate().is_err());
        assert!(Shape::Triangle { v0: Vec3::ZERO, v1: Vec3::X, v2: Vec3::Y }.validate().is_ok());
    }

    #[test]
    fn bvh_matches_brute_force_on_random_triangles() {
        let mut rng = RngStream::from_seed(11);
        let prims = random_triangles(&mut rng, 100, Vec3::ZERO);
        let bvh = Bvh::build(&prims).unwrap();
        for _ in 0..1000 {
            let ray = random_ray(&mut rng);
            let a = bvh.intersect(&prims, &ray);
            let b = brute_force_intersect(&prims, &ray);
            assert_eq!(a.map(|h| h.primitive_id), b.map(|h| h.primitive_id));
            if let (Some(a), Some(b)) = (a, b) {
                assert_eq!(a.t, b.t);
            }
            assert_eq!(bvh.intersects_any(&prims, &ray), b.is_some());
        }
    }

    #[test]
    fn disjoint_clusters_split_at_root() {
        let mut rng = RngStream::from_seed(2);
        let mut prims = random_triangles(&mut rng, 20, Vec3::ZERO);
        let left = prims.len();
        prims.extend(random_triangles(&mut rng, 20, Vec3::new(100.0, 0.0, 0.0)));
        let bvh = Bvh::build(&prims).unwrap();
        let root = bvh.nodes[0];
        assert!(!root.is_leaf());
        let collect = |start: usize| {
            let mut out = Vec::new();
            let mut stack = vec![start];
            while let Some(n) = stack.pop() {
                let node = bvh.nodes[n];
                if node.is_leaf() {
                    let s = node.offset as usize;
                    out.extend(bvh.order[s..s + node.count as usize].iter().map(|&i| i as usize));
                } else {
                    stack.push(n + 1);
                    stack.push(node.offset as usize);
                }
            }
            out
        };
        let mut l = collect(1);
        let mut r = collect(root.offset as usize);
        l.sort();
        r.sort();
        let (lo, hi): (Vec<usize>, Vec<usize>) = ((0..left).collect(), (left..prims.len()).collect());
        assert!((l == lo && r == hi) || (l == hi && r == lo));
    }

    #[test]
    fn bvh_structure_invariants() {
        let mut rng = RngStream::from_seed(9);
        let prims = random_triangles(&mut rng, 300, Vec3::ZERO);
        let bvh = Bvh::build(&prims).unwrap();
        let mut seen = bvh.order.clone();
        seen.sort();
        assert_eq!(seen, (0..prims.len() as u32).collect::<Vec<_>>());
        for (i, n) in bvh.nodes.iter().enumerate() {
            if !n.is_leaf() {
                assert!(n.bounds.contains(&bvh.nodes[i + 1].bounds));
                assert!(n.bounds.contains(&bvh.nodes[n.offset as usize].bounds));
            }
        }
    }

    proptest! {
        #[test]
        fn bvh_equals_linear_scan(seed in 0u64..1000, n in 1usize..60) {
            let mut rng = RngStream::from_seed(seed);
            let mut prims = random_triangles(&mut rng, n, Vec3::ZERO);
            prims.push(sphere(Vec3::new(2.0, 2.0, 2.0), 0.7));
            prims.push(Primitive::new(Shape::Quad { corner: Vec3::ZERO, edge1: Vec3::X * 3.0, edge2: Vec3::Z * 3.0 }, 0));
            let bvh = Bvh::build(&prims).unwrap();
            for _ in 0..50 {
                let ray = random_ray(&mut rng);
                let a = bvh.intersect(&prims, &ray).map(|h| (h.primitive_id, h.t));
                let b = brute_force_intersect(&prims, &ray).map(|h| (h.primitive_id, h.t));
                prop_assert_eq!(a, b);
            }
        }
    }
}
