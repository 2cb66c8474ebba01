//! Visual-word dictionaries: k-means per cohort, merged per (metric, region).

use std::cmp::Ordering;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, FeatureKey};
use crate::error::{Error, Result};
use crate::patching::Patch;
use crate::rng::{mix, stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative WCSS improvement of a Lloyd step drops below this.
    pub rel_tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 10,
            max_iter: 300,
            rel_tol: 1e-6,
            n_restarts: 8,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k-means: k must be at least 1"));
        }
        if self.max_iter == 0 || self.n_restarts == 0 {
            return Err(Error::config("k-means: max_iter and n_restarts must be positive"));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::config("k-means: rel_tol must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Sorted lexicographically.
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// Lloyd assignment passes used by the winning restart.
    pub iterations: usize,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest row in `words` (flat, `dim` per row); ties go to the lowest index.
#[inline]
fn nearest(v: &[f64], words: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, w) in words.chunks_exact(dim).enumerate() {
        let d = sq_dist(v, w);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding over the flat point buffer.
fn seed_plus_plus<R: Rng>(rng: &mut R, pts: &[f64], n: usize, dim: usize, k: usize) -> Vec<f64> {
    let mut cent = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    cent.extend_from_slice(&pts[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = pts
        .chunks_exact(dim)
        .map(|p| sq_dist(p, &cent[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        // Caller guarantees at least k distinct points, so total > 0 here.
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if target < acc {
                break;
            }
        }
        let pick = pick.expect("a point with positive distance");
        let c = &pts[pick * dim..(pick + 1) * dim];
        cent.extend_from_slice(c);
        for (p, d) in pts.chunks_exact(dim).zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, c));
        }
    }
    cent
}

/// Single-point transfers in the style of Hartigan and Wong: move a point
/// whenever that lowers the WCSS, until no move does. Every Hartigan optimum
/// is also a Lloyd fixed point, but not conversely, so this only ever helps.
/// Returns the exact assignment means and their WCSS.
fn hartigan_refine(pts: &[f64], dim: usize, k: usize, assign: &mut [usize]) -> (Vec<f64>, f64) {
    let n = assign.len();
    let means = |assign: &[usize]| {
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, p) in pts.chunks_exact(dim).enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i] * dim..(assign[i] + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                sums[j * dim..(j + 1) * dim].iter_mut().for_each(|s| *s *= inv);
            }
        }
        (sums, counts)
    };
    let (mut cent, mut counts) = means(assign);
    // Each pass either moves a point (strictly lowering WCSS) or stops; the
    // cap only guards against floating-point cycling.
    for _ in 0..(100 * n).max(100) {
        let mut moved = false;
        for i in 0..n {
            let a = assign[i];
            if counts[a] <= 1 {
                continue;
            }
            let p = &pts[i * dim..(i + 1) * dim];
            let na = counts[a] as f64;
            let remove_gain = na / (na - 1.0) * sq_dist(p, &cent[a * dim..(a + 1) * dim]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add_cost = if counts[b] == 0 {
                    0.0
                } else {
                    nb / (nb + 1.0) * sq_dist(p, &cent[b * dim..(b + 1) * dim])
                };
                if best.is_none_or(|(_, c)| add_cost < c) {
                    best = Some((b, add_cost));
                }
            }
            let Some((b, add_cost)) = best else { continue };
            if add_cost < remove_gain * (1.0 - 1e-12) {
                let nb = counts[b] as f64;
                for d in 0..dim {
                    let ca = &mut cent[a * dim + d];
                    *ca = (*ca * na - p[d]) / (na - 1.0);
                    let cb = &mut cent[b * dim + d];
                    *cb = if counts[b] == 0 { p[d] } else { (*cb * nb + p[d]) / (nb + 1.0) };
                }
                counts[a] -= 1;
                counts[b] += 1;
                assign[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let (cent, _) = means(assign);
    let wcss = pts
        .chunks_exact(dim)
        .zip(assign.iter())
        .map(|(p, &j)| sq_dist(p, &cent[j * dim..(j + 1) * dim]))
        .sum();
    (cent, wcss)
}

struct Run {
    centroids: Vec<f64>,
    wcss: f64,
    iterations: usize,
}

fn lloyd(pts: &[f64], n: usize, dim: usize, cfg: &KMeansConfig, restart: usize) -> Result<Run> {
    let k = cfg.k;
    let mut rng = stream(cfg.seed, Domain::KMeansRestart, restart as u64);
    let mut cent = seed_plus_plus(&mut rng, pts, n, dim, k);
    let mut assign = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, p) in pts.chunks_exact(dim).enumerate() {
            let (j, d) = nearest(p, &cent, dim);
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
            dist[i] = d;
            wcss += d;
        }
        if wcss > prev * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::numeric(format!(
                "k-means WCSS increased from {prev} to {wcss} at iteration {iterations}"
            )));
        }
        let converged = !changed
            || wcss == 0.0
            || (prev.is_finite() && (prev - wcss) <= cfg.rel_tol * prev);
        if converged || iterations >= cfg.max_iter {
            let (centroids, wcss) = hartigan_refine(pts, dim, k, &mut assign);
            return Ok(Run {
                centroids,
                wcss,
                iterations,
            });
        }
        prev = wcss;

        // Update step.
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, p) in pts.chunks_exact(dim).enumerate() {
            let j = assign[i];
            counts[j] += 1;
            for (s, v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            for (c, s) in cent[j * dim..(j + 1) * dim]
                .iter_mut()
                .zip(&sums[j * dim..(j + 1) * dim])
            {
                *c = s * inv;
            }
        }
        // Re-seed empty clusters with the point farthest from its centroid.
        for j in 0..k {
            if counts[j] != 0 {
                continue;
            }
            let far = dist
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("non-empty");
            cent[j * dim..(j + 1) * dim].copy_from_slice(&pts[far * dim..(far + 1) * dim]);
            dist[far] = 0.0;
        }
    }
}

/// Lloyd's algorithm from k-means++ seeds, polished by single-point
/// transfers, best of `n_restarts` by WCSS.
///
/// Points are put in canonical (lexicographic) order first, so the result
/// does not depend on input order. Restarts run in parallel with
/// independent streams; the output is identical to a sequential run.
pub fn kmeans<P: AsRef<[f64]> + Sync>(points: &[P], cfg: &KMeansConfig) -> Result<KMeansResult> {
    cfg.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(Error::data("k-means: no points"));
    }
    let dim = points[0].as_ref().len();
    if dim == 0 || points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::data("k-means: points must share a positive dimension"));
    }
    if points.iter().any(|p| p.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::data("k-means: non-finite coordinate"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(points[a].as_ref(), points[b].as_ref()));
    let distinct = 1 + order
        .windows(2)
        .filter(|w| lex_cmp(points[w[0]].as_ref(), points[w[1]].as_ref()) != Ordering::Equal)
        .count();
    if cfg.k > distinct {
        return Err(Error::data(format!(
            "k-means: k = {} exceeds the {distinct} distinct points",
            cfg.k
        )));
    }
    let mut pts = Vec::with_capacity(n * dim);
    for &i in &order {
        pts.extend_from_slice(points[i].as_ref());
    }

    let runs = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| lloyd(&pts, n, dim, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.wcss < a.wcss { b } else { a })
        .expect("at least one restart");
    let mut centroids: Vec<Vec<f64>> = best.centroids.chunks_exact(dim).map(|c| c.to_vec()).collect();
    centroids.sort_by(|a, b| lex_cmp(a, b));
    Ok(KMeansResult {
        centroids,
        wcss: best.wcss,
        iterations: best.iterations,
    })
}

/// Merged dictionary for one (metric, region): control words, then mTBI words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Codebook {
    pub key: FeatureKey,
    pub k: usize,
    pub patch_size: usize,
    pub provenance: Vec<Cohort>,
    pub words: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(key: FeatureKey, patch_size: usize, words: Vec<Vec<f64>>, provenance: Vec<Cohort>) -> Result<Self> {
        let cb = Codebook {
            key,
            k: words.len(),
            patch_size,
            provenance,
            words,
        };
        cb.validate()?;
        Ok(cb)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.patch_size * self.patch_size;
        if self.words.is_empty() {
            return Err(Error::data(format!("codebook {}: no words", self.key)));
        }
        if self.k != self.words.len() || self.provenance.len() != self.words.len() {
            return Err(Error::data(format!(
                "codebook {}: k, provenance and word counts disagree",
                self.key
            )));
        }
        for w in &self.words {
            if w.len() != dim || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "codebook {}: every word needs {dim} finite values",
                    self.key
                )));
            }
        }
        Ok(())
    }

    pub fn k_total(&self) -> usize {
        self.words.len()
    }

    pub fn dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn file_name(&self) -> String {
        codebook_file_name(self.key)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::data(e.to_string()))
    }

    pub fn from_json(bytes: &[u8]) -> Result<Codebook> {
        let cb: Codebook = serde_json::from_slice(bytes)
            .map_err(|e| Error::data(format!("bad codebook file: {e}")))?;
        cb.validate()?;
        Ok(cb)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
        let path = dir.as_ref().join(self.file_name());
        std::fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Codebook> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Codebook::from_json(&bytes)
    }
}

/// `<metric>_<region>.codebook.json`
pub fn codebook_file_name(key: FeatureKey) -> String {
    format!("{}.codebook.json", key.stem())
}

/// Cluster each cohort's patches separately and merge the centroids.
pub fn learn_codebook(
    patches_control: &[Patch],
    patches_mtbi: &[Patch],
    key: FeatureKey,
    k_per_cohort: usize,
    cfg: &KMeansConfig,
) -> Result<Codebook> {
    let mut words = Vec::with_capacity(2 * k_per_cohort);
    let mut provenance = Vec::with_capacity(2 * k_per_cohort);
    let mut patch_size = None;
    for (cohort, patches) in [(Cohort::Control, patches_control), (Cohort::Mtbi, patches_mtbi)] {
        if patches.len() < k_per_cohort {
            return Err(Error::data(format!(
                "codebook {key}: {cohort:?} cohort has {} patches, need at least {k_per_cohort}",
                patches.len()
            )));
        }
        if let Some(p) = patches.iter().find(|p| p.key != key) {
            return Err(Error::data(format!(
                "codebook {key}: received a patch for {}",
                p.key
            )));
        }
        let dim = patches[0].values.len();
        let side = (dim as f64).sqrt().round() as usize;
        if side * side != dim || patch_size.is_some_and(|s| s != side) {
            return Err(Error::data(format!("codebook {key}: inconsistent patch size")));
        }
        patch_size = Some(side);
        let values: Vec<&[f64]> = patches.iter().map(|p| p.values.as_slice()).collect();
        let sub = KMeansConfig {
            k: k_per_cohort,
            seed: mix(&[cfg.seed, key.metric as u64, key.region as u64]),
            ..*cfg
        };
        let res = kmeans(&values, &sub)?;
        provenance.extend(std::iter::repeat_n(cohort, res.centroids.len()));
        words.extend(res.centroids);
    }
    Codebook::new(key, patch_size.expect("two cohorts"), words, provenance)
}

/// Index of the closest word by squared Euclidean distance; ties go to the lowest index.
pub fn nearest_word(v: &[f64], cb: &Codebook) -> Result<usize> {
    if cb.words.is_empty() {
        return Err(Error::data("nearest_word: empty codebook"));
    }
    if v.len() != cb.dim() {
        return Err(Error::data(format!(
            "nearest_word: vector has {} values, codebook words have {}",
            v.len(),
            cb.dim()
        )));
    }
    let mut best = (0, f64::INFINITY);
    for (j, w) in cb.words.iter().enumerate() {
        let d = sq_dist(v, w);
        if d < best.1 {
            best = (j, d);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MetricId, RegionId};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn cfg(k: usize) -> KMeansConfig {
        KMeansConfig {
            k,
            ..KMeansConfig::default()
        }
    }

    #[test]
    fn identical_points_single_cluster() {
        let pts = vec![vec![1.5, -2.0]; 3];
        let r = kmeans(&pts, &cfg(1)).unwrap();
        assert_eq!(r.centroids, vec![vec![1.5, -2.0]]);
        assert_eq!(r.wcss, 0.0);
    }

    #[test]
    fn two_separated_pairs() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![10.0, 11.0],
            vec![0.0, 1.0],
            vec![10.0, 10.0],
        ];
        let r = kmeans(&pts, &cfg(2)).unwrap();
        assert_eq!(r.centroids, vec![vec![0.0, 0.5], vec![10.0, 10.5]]);
        assert!((r.wcss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_returns_points() {
        let pts = vec![vec![3.0], vec![-1.0], vec![2.0], vec![7.0]];
        let r = kmeans(&pts, &cfg(4)).unwrap();
        assert_eq!(r.centroids, vec![vec![-1.0], vec![2.0], vec![3.0], vec![7.0]]);
        assert_eq!(r.wcss, 0.0);
    }

    #[test]
    fn k_above_distinct_count_rejected() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert!(kmeans(&pts, &cfg(3)).is_err());
        assert!(kmeans(&pts, &cfg(2)).is_ok());
    }

    #[test]
    fn empty_clusters_never_survive() {
        // Heavily duplicated data makes empty clusters likely after seeding.
        let mut pts = vec![vec![0.0, 0.0]; 20];
        pts.extend(vec![vec![5.0, 5.0]; 20]);
        pts.push(vec![100.0, 0.0]);
        let r = kmeans(&pts, &cfg(3)).unwrap();
        assert_eq!(r.wcss, 0.0);
    }

    fn patch(values: Vec<f64>, key: FeatureKey, id: &str) -> Patch {
        Patch {
            values,
            origin: (0, 0, 0),
            key,
            subject_id: id.into(),
        }
    }

    #[test]
    fn constant_cohorts_give_two_words() {
        let key = FeatureKey::new(MetricId::Fa, RegionId::Thalamus);
        let c: Vec<_> = (0..3).map(|_| patch(vec![1.0; 4], key, "c")).collect();
        let m: Vec<_> = (0..3).map(|_| patch(vec![2.0; 4], key, "m")).collect();
        let cb = learn_codebook(&c, &m, key, 1, &cfg(1)).unwrap();
        assert_eq!(cb.words, vec![vec![1.0; 4], vec![2.0; 4]]);
        assert_eq!(cb.provenance, vec![Cohort::Control, Cohort::Mtbi]);
        assert_eq!(cb.patch_size, 2);
        assert!(learn_codebook(&c, &m, key, 4, &cfg(1)).is_err());
    }

    #[test]
    fn identical_cohorts_share_words_and_order_does_not_matter() {
        let key = FeatureKey::new(MetricId::Md, RegionId::CorpusCallosum);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let ps: Vec<Patch> = (0..40)
            .map(|_| patch((0..4).map(|_| rng.random::<f64>()).collect(), key, "x"))
            .collect();
        let cb = learn_codebook(&ps, &ps, key, 3, &cfg(3)).unwrap();
        let (c, m) = cb.words.split_at(3);
        assert_eq!(c, m);
        let mut rev = ps.clone();
        rev.reverse();
        let cb2 = learn_codebook(&rev, &rev, key, 3, &cfg(3)).unwrap();
        assert_eq!(cb, cb2);
    }

    #[test]
    fn nearest_word_rules() {
        let key = FeatureKey::new(MetricId::Fa, RegionId::Thalamus);
        let words = vec![vec![0.0; 4], vec![2.0; 4], vec![5.0; 4], vec![9.0; 4]];
        let cb = Codebook::new(key, 2, words, vec![Cohort::Control; 4]).unwrap();
        assert_eq!(nearest_word(&[9.0; 4], &cb).unwrap(), 3);
        assert_eq!(nearest_word(&[1.0; 4], &cb).unwrap(), 0);
        assert!(nearest_word(&[1.0; 3], &cb).is_err());
        let empty = Codebook {
            key,
            k: 0,
            patch_size: 2,
            provenance: vec![],
            words: vec![],
        };
        assert!(nearest_word(&[1.0; 4], &empty).is_err());
    }

    #[test]
    fn codebook_json_round_trip() {
        let key = FeatureKey::new(MetricId::Rk, RegionId::Thalamus);
        let words = vec![vec![0.1, 1.0 / 3.0, -2.5e-17, 7.0], vec![1e300, -0.0, 3.3, 4.4]];
        let cb = Codebook::new(key, 2, words, vec![Cohort::Control, Cohort::Mtbi]).unwrap();
        let back = Codebook::from_json(&cb.to_json().unwrap()).unwrap();
        assert_eq!(back, cb);
        assert_eq!(cb.file_name(), "RK_Thalamus.codebook.json");
        assert!(Codebook::from_json(br#"{"key":{"metric":"FA","region":"Thalamus"},"k":2,"patch_size":1,"provenance":["control"],"words":[[1.0]]}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nearest_matches_linear_scan(seed in any::<u64>(), k in 1usize..12) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let key = FeatureKey::new(MetricId::Ak, RegionId::Thalamus);
            let words: Vec<Vec<f64>> = (0..k).map(|_| (0..9).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let cb = Codebook::new(key, 3, words.clone(), vec![Cohort::Mtbi; k]).unwrap();
            let v: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut best = 0;
            for j in 1..k {
                let dj: f64 = v.iter().zip(&words[j]).map(|(a, b)| (a - b).powi(2)).sum();
                let db: f64 = v.iter().zip(&words[best]).map(|(a, b)| (a - b).powi(2)).sum();
                if dj < db { best = j; }
            }
            prop_assert_eq!(nearest_word(&v, &cb).unwrap(), best);
        }

        #[test]
        fn kmeans_is_order_invariant(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
            let mut shuffled = pts.clone();
            shuffled.rotate_left(7);
            let a = kmeans(&pts, &cfg(4)).unwrap();
            let b = kmeans(&shuffled, &cfg(4)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
