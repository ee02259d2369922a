use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::mesher::{Contour2D, LevelSet, TriangleMesh};

/// `x ↦ (x − center) / scale`, with `scale` the longest bounding-box side.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationTransform {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) / self.scale)
            .collect()
    }

    pub fn invert(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.center)
            .map(|(x, c)| x * self.scale + c)
            .collect()
    }

    fn map_cloud(&self, cloud: &PointCloud, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<PointCloud> {
        let coords = cloud.iter().flat_map(f).collect();
        let out = PointCloud::new(cloud.dim(), coords)?;
        match cloud.normals() {
            Some(n) => out.with_normals(n.to_vec()),
            None => Ok(out),
        }
    }

    pub fn normalize(&self, cloud: &PointCloud) -> Result<PointCloud> {
        self.map_cloud(cloud, |p| self.apply(p))
    }

    pub fn denormalize(&self, cloud: &PointCloud) -> Result<PointCloud> {
        self.map_cloud(cloud, |p| self.invert(p))
    }

    pub fn denormalize_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        mesh.map_vertices(|v| {
            let p = self.invert(&v);
            [p[0], p[1], p[2]]
        })
    }

    pub fn denormalize_contour(&self, contour: &Contour2D) -> Contour2D {
        contour.map_vertices(|v| {
            let p = self.invert(&v);
            [p[0], p[1]]
        })
    }

    pub fn denormalize_level_set(&self, set: &LevelSet) -> LevelSet {
        match set {
            LevelSet::Mesh(m) => LevelSet::Mesh(self.denormalize_mesh(m)),
            LevelSet::Contour(c) => LevelSet::Contour(self.denormalize_contour(c)),
        }
    }
}

/// Centre the bounding box at the origin and scale its longest side to 1.
pub fn normalize_cloud(cloud: &PointCloud) -> Result<(PointCloud, NormalizationTransform)> {
    let (lo, hi) = cloud.bounds().ok_or(Error::EmptyInput("point cloud"))?;
    let scale = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| h - l)
        .fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Degenerate("all points of the cloud coincide".into()));
    }
    let center = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let transform = NormalizationTransform { center, scale };
    Ok((transform.normalize(cloud)?, transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let cloud = PointCloud::from_points(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 1.0, 1.0]]);
        let (out, t) = normalize_cloud(&cloud).unwrap();
        assert_eq!(t.center, vec![1.0, 0.5, 0.5]);
        assert_eq!(t.scale, 2.0);
        assert_eq!(
            out.coords(),
            &[-0.5, -0.25, -0.25, 0.5, -0.25, -0.25, 0.5, 0.25, 0.25]
        );
    }

    #[test]
    fn normalized_cloud_gives_identity() {
        let cloud = PointCloud::from_points(&[[-0.5, -0.5], [0.5, 0.5], [0.0, 0.1]]);
        let (_, t) = normalize_cloud(&cloud).unwrap();
        assert_eq!(t, NormalizationTransform::identity(2));
    }

    #[test]
    fn degenerate_clouds_rejected() {
        assert!(normalize_cloud(&PointCloud::new(3, vec![]).unwrap()).is_err());
        let same = PointCloud::from_points(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        assert!(matches!(normalize_cloud(&same), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mesh_round_trip() {
        let t = NormalizationTransform {
            center: vec![1.0, -2.0, 0.5],
            scale: 3.0,
        };
        let mesh = TriangleMesh::new(
            vec![[0.1, 0.2, 0.3], [0.4, -0.1, 0.0], [0.0, 0.0, 0.25]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let big = t.denormalize_mesh(&mesh);
        assert!((big.area() - 9.0 * mesh.area()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip_and_fit(
            pts in prop::collection::vec(prop::array::uniform3(-100.0f64..100.0), 2..40)
        ) {
            let cloud = PointCloud::from_points(&pts);
            prop_assume!(cloud.bounds().map(|(l, h)| l != h).unwrap_or(false));
            let (norm, t) = normalize_cloud(&cloud).unwrap();
            for p in norm.iter() {
                prop_assert!(p.iter().all(|v| (-0.5 - 1e-12..=0.5 + 1e-12).contains(v)));
            }
            let back = t.denormalize(&norm).unwrap();
            for (a, b) in back.coords().iter().zip(cloud.coords()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
