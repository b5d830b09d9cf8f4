//! Affinity regression between keypoint trajectories.
//!
//! The three graph losses evaluated on the combined matrix (trajectory,
//! local and time consistency) are linear in the affinity entries, so they
//! are computed as `Σ a_ij W_ij` with a precomputed weight matrix per loss
//! (see [`GraphTerms`]). The complexity loss acts on the decomposed matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::keypoints::KeypointTracks;
use crate::optim::{self, DescentSettings};
use crate::{par, Error, Result, Vec3};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "row of length {} in a {n}×{n} matrix",
                r.len()
            )));
        }
        Ok(Self {
            n,
            data: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// `Σ_ij self_ij · other_ij`.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Decomposed affinity matrices and their elementwise maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinitySet {
    pub matrices: Vec<Matrix>,
    pub combined: Matrix,
}

impl AffinitySet {
    pub fn new(matrices: Vec<Matrix>) -> Result<Self> {
        let combined = combine_affinity(&matrices)?;
        Ok(Self { matrices, combined })
    }

    pub fn n(&self) -> usize {
        self.matrices.len()
    }

    pub fn k(&self) -> usize {
        self.combined.size()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffinityConfig {
    /// Number of decomposed matrices (maximum neighbors per keypoint).
    pub n: usize,
    pub lambda_traj: f64,
    pub lambda_local: f64,
    pub lambda_time: f64,
    pub lambda_complex: f64,
    /// Velocity and acceleration vectors shorter than this carry no
    /// direction.
    pub velocity_eps: f64,
    /// Standard deviation of the random initial logits.
    pub init_scale: f64,
    pub descent: DescentSettings,
    pub seed: u64,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            n: 2,
            lambda_traj: 1.0,
            lambda_local: 0.001,
            lambda_time: 1.0,
            lambda_complex: 0.01,
            velocity_eps: 1e-8,
            init_scale: 0.1,
            descent: DescentSettings {
                max_iters: 300,
                initial_step: 10.0,
                ..DescentSettings::default()
            },
            seed: 0,
        }
    }
}

impl AffinityConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.n == 0 || self.n >= k {
            return Err(Error::InvalidParameter(format!(
                "neighbor count N={} must satisfy 1 ≤ N < K={k}",
                self.n
            )));
        }
        let w = [
            self.lambda_traj,
            self.lambda_local,
            self.lambda_time,
            self.lambda_complex,
        ];
        if w.iter().any(|x| !(*x >= 0.0)) || !(self.velocity_eps >= 0.0) {
            return Err(Error::InvalidParameter("loss weights must be ≥ 0".into()));
        }
        self.descent.validate()
    }
}

fn check_frames(tracks: &KeypointTracks, needed: usize) -> Result<()> {
    if tracks.t() < needed {
        return Err(Error::TooFew {
            what: "frames",
            needed,
            got: tracks.t(),
        });
    }
    Ok(())
}

fn cosine_or_zero(a: &Vec3, b: &Vec3, eps: f64) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na < eps || nb < eps {
        0.0
    } else {
        (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Forward-difference velocities and second-difference accelerations, each
/// padded to `T` entries by repeating the last available value.
fn derivatives(track: &[Vec3]) -> (Vec<Vec3>, Vec<Vec3>) {
    let t = track.len();
    let mut vel: Vec<Vec3> = (0..t - 1).map(|i| track[i + 1] - track[i]).collect();
    vel.push(vel[t - 2]);
    let mut acc: Vec<Vec3> = (0..t - 2)
        .map(|i| track[i + 2] - 2.0 * track[i + 1] + track[i])
        .collect();
    let last = acc[t - 3];
    acc.extend([last, last]);
    (vel, acc)
}

/// Per-frame motion dissimilarity of two trajectories, in `[0, 1]`.
///
/// `C_t = 1/2 − (cos(v_a, v_b) + cos(a_a, a_b)) / 4`. Frames past the last
/// forward difference reuse the last available derivative.
pub fn trajectory_cost(track_a: &[Vec3], track_b: &[Vec3], velocity_eps: f64) -> Result<Vec<f64>> {
    if track_a.len() != track_b.len() {
        return Err(Error::ShapeMismatch("trajectories differ in length".into()));
    }
    if track_a.len() < 3 {
        return Err(Error::TooFew {
            what: "frames",
            needed: 3,
            got: track_a.len(),
        });
    }
    let (va, aa) = derivatives(track_a);
    let (vb, ab) = derivatives(track_b);
    Ok((0..track_a.len())
        .map(|t| {
            0.5 - 0.25
                * (cosine_or_zero(&va[t], &vb[t], velocity_eps)
                    + cosine_or_zero(&aa[t], &ab[t], velocity_eps))
        })
        .collect())
}

/// Precomputed weight matrices of the graph losses that are linear in the
/// combined affinity. Each equals the gradient of its loss.
#[derive(Debug, Clone)]
pub struct GraphTerms {
    pub traj: Matrix,
    pub local: Matrix,
    pub time: Matrix,
    /// True when every keypoint's velocity is below `velocity_eps` in every
    /// frame.
    pub static_motion: bool,
}

impl GraphTerms {
    pub fn new(tracks: &KeypointTracks, velocity_eps: f64) -> Result<Self> {
        check_frames(tracks, 3)?;
        let mut terms = Self::consistency_only(tracks)?;
        let (k, t) = (tracks.k(), tracks.t());
        let trajectories: Vec<Vec<Vec3>> = (0..k).map(|i| tracks.track(i)).collect();
        let norm = 1.0 / (t * k * k) as f64;
        let rows = par::try_map_range(k, |i| -> Result<Vec<f64>> {
            (0..k)
                .map(|j| {
                    let c = trajectory_cost(&trajectories[i], &trajectories[j], velocity_eps)?;
                    Ok((0..t).map(|s| tracks.intensity(s, i) * c[s]).sum::<f64>() * norm)
                })
                .collect()
        })?;
        terms.traj = Matrix::from_rows(&rows)?;
        terms.static_motion = trajectories.iter().all(|tr| {
            tr.windows(2).all(|w| (w[1] - w[0]).norm() < velocity_eps)
        });
        Ok(terms)
    }

    /// Local and time terms only; needs `T ≥ 2`.
    pub fn consistency_only(tracks: &KeypointTracks) -> Result<Self> {
        check_frames(tracks, 2)?;
        let (k, t) = (tracks.k(), tracks.t());
        let norm = 1.0 / (t * k * k) as f64;
        let rows = par::map_range(k, |i| {
            let mut local = vec![0.0; k];
            let mut time = vec![0.0; k];
            for j in 0..k {
                let dists: Vec<f64> = (0..t)
                    .map(|s| (tracks.frame(s)[i].mu - tracks.frame(s)[j].mu).norm())
                    .collect();
                let mean = dists.iter().sum::<f64>() / t as f64;
                for (s, d) in dists.iter().enumerate() {
                    let alpha = tracks.intensity(s, i);
                    local[j] += alpha * d;
                    time[j] += alpha * (d - mean).powi(2);
                }
                local[j] *= norm;
                time[j] *= norm;
            }
            (local, time)
        });
        let (local, time): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Ok(Self {
            traj: Matrix::zeros(k),
            local: Matrix::from_rows(&local)?,
            time: Matrix::from_rows(&time)?,
            static_motion: false,
        })
    }
}

fn check_square(a: &Matrix, k: usize) -> Result<()> {
    if a.size() != k {
        return Err(Error::ShapeMismatch(format!(
            "affinity is {}×{0}, tracks have K={k}",
            a.size()
        )));
    }
    Ok(())
}

/// Graph trajectory loss and its gradient with respect to `a`.
pub fn graph_trajectory_loss(
    a: &Matrix,
    tracks: &KeypointTracks,
    velocity_eps: f64,
) -> Result<(f64, Matrix)> {
    check_square(a, tracks.k())?;
    let terms = GraphTerms::new(tracks, velocity_eps)?;
    Ok((a.dot(&terms.traj), terms.traj))
}

/// Local and time consistency losses with their gradients:
/// `(L_local, L_time, ∂L_local/∂A, ∂L_time/∂A)`.
pub fn consistency_losses(
    a: &Matrix,
    tracks: &KeypointTracks,
) -> Result<(f64, f64, Matrix, Matrix)> {
    check_square(a, tracks.k())?;
    let terms = GraphTerms::consistency_only(tracks)?;
    Ok((
        a.dot(&terms.local),
        a.dot(&terms.time),
        terms.local,
        terms.time,
    ))
}

/// `Σ_n Σ_{n'≠n} ‖A_n ⊙ A_{n'}‖_F` and its gradient per matrix.
pub fn complexity_loss(matrices: &[Matrix]) -> Result<(f64, Vec<Matrix>)> {
    let Some(first) = matrices.first() else {
        return Err(Error::TooFew {
            what: "affinity matrices",
            needed: 1,
            got: 0,
        });
    };
    let k = first.size();
    if matrices.iter().any(|m| m.size() != k) {
        return Err(Error::ShapeMismatch("affinity matrices differ in size".into()));
    }
    let count = matrices.len();
    let mut value = 0.0;
    let mut grads = vec![Matrix::zeros(k); count];
    for n in 0..count {
        for m in (n + 1)..count {
            let frob = matrices[n]
                .as_slice()
                .iter()
                .zip(matrices[m].as_slice())
                .map(|(x, y)| (x * y).powi(2))
                .sum::<f64>()
                .sqrt();
            // Ordered pairs (n, m) and (m, n) are equal.
            value += 2.0 * frob;
            if frob > 0.0 {
                for idx in 0..k * k {
                    let x = matrices[n].as_slice()[idx];
                    let y = matrices[m].as_slice()[idx];
                    grads[n].as_mut_slice()[idx] += 2.0 * x * y * y / frob;
                    grads[m].as_mut_slice()[idx] += 2.0 * y * x * x / frob;
                }
            }
        }
    }
    Ok((value, grads))
}

/// Elementwise maximum over the decomposed matrices.
pub fn combine_affinity(matrices: &[Matrix]) -> Result<Matrix> {
    let Some(first) = matrices.first() else {
        return Err(Error::TooFew {
            what: "affinity matrices",
            needed: 1,
            got: 0,
        });
    };
    let mut out = first.clone();
    for m in &matrices[1..] {
        if m.size() != out.size() {
            return Err(Error::ShapeMismatch(format!(
                "{}×{0} vs {}×{1}",
                out.size(),
                m.size()
            )));
        }
        for (o, v) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
            if *v > *o {
                *o = *v;
            }
        }
    }
    Ok(out)
}

/// Row-softmax parameterization: `logits[n][i]` holds `K − 1` values for the
/// off-diagonal entries of row `i` of `A_n`.
fn logits_to_matrices(x: &[f64], n: usize, k: usize) -> Vec<Matrix> {
    let row_len = k - 1;
    (0..n)
        .map(|m| {
            let mut a = Matrix::zeros(k);
            for i in 0..k {
                let z = &x[(m * k + i) * row_len..(m * k + i + 1) * row_len];
                let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
                let total: f64 = exps.iter().sum();
                for (slot, e) in exps.iter().enumerate() {
                    let j = if slot < i { slot } else { slot + 1 };
                    a.set(i, j, e / total);
                }
            }
            a
        })
        .collect()
}

/// Weighted affinity objective and its gradient with respect to the
/// decomposed matrices.
fn objective_on_matrices(
    matrices: &[Matrix],
    terms: &GraphTerms,
    weights: [f64; 4],
) -> (f64, Vec<Matrix>) {
    let [w_traj, w_local, w_time, w_complex] = weights;
    let k = terms.local.size();
    let combined = combine_affinity(matrices).expect("non-empty, same shape");
    let mut linear = Matrix::zeros(k);
    for idx in 0..k * k {
        linear.as_mut_slice()[idx] = w_traj * terms.traj.as_slice()[idx]
            + w_local * terms.local.as_slice()[idx]
            + w_time * terms.time.as_slice()[idx];
    }
    let mut value = combined.dot(&linear);
    let mut grads = vec![Matrix::zeros(k); matrices.len()];
    // The max routes the gradient to the first matrix attaining it.
    for idx in 0..k * k {
        let target = combined.as_slice()[idx];
        let owner = matrices
            .iter()
            .position(|m| m.as_slice()[idx] == target)
            .unwrap_or(0);
        grads[owner].as_mut_slice()[idx] += linear.as_slice()[idx];
    }
    if w_complex > 0.0 {
        let (c, gc) = complexity_loss(matrices).expect("non-empty, same shape");
        value += w_complex * c;
        for (g, h) in grads.iter_mut().zip(&gc) {
            for (a, b) in g.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *a += w_complex * b;
            }
        }
    }
    (value, grads)
}

fn softmax_backward(matrices: &[Matrix], grads: &[Matrix], k: usize) -> Vec<f64> {
    let row_len = k - 1;
    let mut out = vec![0.0; matrices.len() * k * row_len];
    for (m, (a, g)) in matrices.iter().zip(grads).enumerate() {
        for i in 0..k {
            let cols: Vec<usize> = (0..k).filter(|&j| j != i).collect();
            let inner: f64 = cols.iter().map(|&j| a.get(i, j) * g.get(i, j)).sum();
            for (slot, &j) in cols.iter().enumerate() {
                out[(m * k + i) * row_len + slot] = a.get(i, j) * (g.get(i, j) - inner);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AffinityFit {
    pub set: AffinitySet,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    /// The tracks carried no motion; only the proximity term was used.
    pub static_motion: bool,
}

/// Regresses `N` decomposed affinity matrices from keypoint trajectories.
pub fn optimize_affinity(tracks: &KeypointTracks, config: &AffinityConfig) -> Result<AffinityFit> {
    let k = tracks.k();
    if k < 2 {
        return Err(Error::TooFew {
            what: "keypoints",
            needed: 2,
            got: k,
        });
    }
    config.validate(k)?;
    check_frames(tracks, 3)?;
    let terms = GraphTerms::new(tracks, config.velocity_eps)?;
    let mut weights = [
        config.lambda_traj,
        config.lambda_local,
        config.lambda_time,
        config.lambda_complex,
    ];
    if terms.static_motion {
        log::warn!("keypoint tracks are static; affinity uses the proximity term only");
        weights = [0.0, config.lambda_local.max(f64::MIN_POSITIVE), 0.0, config.lambda_complex];
    }

    let n = config.n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_scale.max(0.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let x0: Vec<f64> = (0..n * k * (k - 1)).map(|_| normal.sample(&mut rng)).collect();

    let report = optim::minimize(
        x0,
        |x| {
            let mats = logits_to_matrices(x, n, k);
            let (v, g) = objective_on_matrices(&mats, &terms, weights);
            (v, softmax_backward(&mats, &g, k))
        },
        &config.descent,
    );
    let set = AffinitySet::new(logits_to_matrices(&report.x, n, k))?;
    Ok(AffinityFit {
        set,
        initial_objective: report.initial_value,
        final_objective: report.value,
        iterations: report.iterations,
        static_motion: terms.static_motion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::Keypoint;
    use rand::Rng;

    fn tracks_from(f: impl Fn(usize, usize) -> Vec3, t: usize, k: usize) -> KeypointTracks {
        KeypointTracks::new(
            (0..t)
                .map(|s| (0..k).map(|i| Keypoint::new(f(s, i), 1.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn cost_identical_opposite_orthogonal() {
        let a: Vec<Vec3> = (0..5).map(|t| Vec3::new((t * t) as f64, 0.0, 0.0)).collect();
        let c = trajectory_cost(&a, &a, 1e-8).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-15));

        let b: Vec<Vec3> = a.iter().map(|p| -p).collect();
        let c = trajectory_cost(&a, &b, 1e-8).unwrap();
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-15));

        // Velocity along y vs x, acceleration along z vs x: both cosines 0.
        let p: Vec<Vec3> = (0..4).map(|t| Vec3::new((t * t) as f64, 0.0, 0.0)).collect();
        let q: Vec<Vec3> = (0..4)
            .map(|t| Vec3::new(0.0, t as f64, (t * t) as f64))
            .collect();
        let c = trajectory_cost(&p, &q, 1e-8).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15);
        assert!(trajectory_cost(&p[..2], &q[..2], 1e-8).is_err());
    }

    #[test]
    fn cost_symmetric_and_scale_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<Vec3> = (0..6).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let b: Vec<Vec3> = (0..6).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let ab = trajectory_cost(&a, &b, 1e-8).unwrap();
        let ba = trajectory_cost(&b, &a, 1e-8).unwrap();
        let scaled: Vec<Vec3> = a.iter().map(|p| p * 3.5).collect();
        let sb = trajectory_cost(&scaled, &b, 1e-8).unwrap();
        for t in 0..6 {
            assert!((ab[t] - ba[t]).abs() < 1e-15);
            assert!((ab[t] - sb[t]).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&ab[t]));
        }
    }

    #[test]
    fn trajectory_loss_zero_cases() {
        let tr = tracks_from(|t, k| Vec3::new((t * t) as f64, k as f64, 0.0), 5, 3);
        let a = Matrix::from_rows(&[vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0], vec![0.3, 0.7, 0.0]]).unwrap();
        let (v, _) = graph_trajectory_loss(&a, &tr, 1e-8).unwrap();
        assert!(v.abs() < 1e-15);

        let zero_alpha = KeypointTracks::new(
            (0..5)
                .map(|t| (0..3).map(|k| Keypoint::new(Vec3::new(t as f64 * k as f64, (t * t) as f64, 0.0), 0.0)).collect())
                .collect(),
        )
        .unwrap();
        let (v, _) = graph_trajectory_loss(&a, &zero_alpha, 1e-8).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn consistency_zero_cases() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let still = tracks_from(|_, k| Vec3::new(k as f64, 0.0, 0.0), 4, 2);
        let (_, time, _, _) = consistency_losses(&a, &still).unwrap();
        assert_eq!(time, 0.0);
        let coincident = tracks_from(|t, _| Vec3::new(t as f64, 1.0, 2.0), 4, 2);
        let (local, _, _, _) = consistency_losses(&a, &coincident).unwrap();
        assert_eq!(local, 0.0);
    }

    #[test]
    fn complexity_cases() {
        let one = Matrix::from_rows(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]).unwrap();
        let (v, _) = complexity_loss(std::slice::from_ref(&one)).unwrap();
        assert_eq!(v, 0.0);
        let (v, _) = complexity_loss(&[one.clone(), one]).unwrap();
        assert!((v - 6.0).abs() < 1e-12);
    }

    #[test]
    fn combine_examples() {
        let a = Matrix::from_rows(&[vec![0.2, 0.9], vec![0.1, 0.3]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.5, 0.4], vec![0.8, 0.0]]).unwrap();
        let c = combine_affinity(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.to_rows(), vec![vec![0.5, 0.9], vec![0.8, 0.3]]);
        assert_eq!(combine_affinity(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(combine_affinity(&[b.clone(), a.clone()]).unwrap(), c);
        assert_eq!(combine_affinity(&[c.clone(), c.clone()]).unwrap(), c);
        assert!(combine_affinity(&[a, Matrix::zeros(3)]).is_err());
    }

    #[test]
    fn rows_stay_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..2 * 5 * 4).map(|_| rng.random_range(-30.0..30.0)).collect();
        for m in logits_to_matrices(&x, 2, 5) {
            for i in 0..5 {
                let s: f64 = m.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert_eq!(m.get(i, i), 0.0);
                assert!(m.row(i).iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn rigid_pair_gets_highest_affinity() {
        // Keypoints 0 and 1 ride one rigid body rotating about the origin;
        // keypoint 2 oscillates independently.
        let tr = tracks_from(
            |t, k| {
                let th = 0.3 * t as f64;
                match k {
                    0 => Vec3::new(th.cos(), th.sin(), 0.0) * 0.3,
                    1 => Vec3::new(th.cos(), th.sin(), 0.0) * 0.4,
                    _ => Vec3::new(0.5, 0.1 * (1.7 * t as f64).sin(), 0.2 * t as f64),
                }
            },
            12,
            3,
        );
        let cfg = AffinityConfig {
            n: 1,
            ..Default::default()
        };
        let fit = optimize_affinity(&tr, &cfg).unwrap();
        let a = &fit.set.combined;
        assert!(a.get(0, 1) > a.get(0, 2));
        assert!(fit.final_objective <= fit.initial_objective);
    }

    #[test]
    fn static_tracks_are_flagged() {
        let tr = tracks_from(|_, k| Vec3::new(k as f64 * 0.1, 0.0, 0.0), 5, 4);
        let fit = optimize_affinity(&tr, &AffinityConfig::default()).unwrap();
        assert!(fit.static_motion);
        // Proximity only: node 0's strongest neighbor is node 1.
        let row = fit.set.combined.row(0);
        assert!(row[1] > row[3]);
    }

    #[test]
    fn neighbor_count_must_be_below_k() {
        let tr = tracks_from(|t, k| Vec3::new(t as f64, k as f64, 0.0), 4, 2);
        let cfg = AffinityConfig { n: 2, ..Default::default() };
        assert!(optimize_affinity(&tr, &cfg).is_err());
    }
}
