//! Transfer hub placement and load-to-hub assignment.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{distance, GeoPoint, Instance, Load};

pub const DEFAULT_KMEANS_MAX_ITERS: usize = 100;
pub const DEFAULT_KMEANS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hub {
    pub id: usize,
    pub location: GeoPoint,
}

/// The autonomous leg of one load, between its origin hub and destination hub.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub load: usize,
    pub origin_hub: usize,
    pub dest_hub: usize,
    pub pickup_time: i64,
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<GeoPoint>,
    pub labels: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
}

fn sq_dist(a: GeoPoint, b: GeoPoint) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    dx * dx + dy * dy
}

fn nearest(p: GeoPoint, centroids: &[GeoPoint]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn count_distinct(points: &[GeoPoint]) -> usize {
    points
        .iter()
        .map(|p| (p.x.to_bits(), p.y.to_bits()))
        .collect::<HashSet<_>>()
        .len()
}

fn kmeans_plus_plus(points: &[GeoPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<GeoPoint> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|&p| sq_dist(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    if target < w {
                        chosen = Some(i);
                        break;
                    }
                    target -= w;
                }
            }
            // rounding can run off the end
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            0
        };
        let c = points[next];
        centroids.push(c);
        for (w, &p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, c));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. An empty cluster is reseeded at
/// the point farthest from its current centroid.
pub fn kmeans(
    points: &[GeoPoint],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Config("number of hubs must be >= 1".into()));
    }
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(Error::Config(format!(
            "{k} hubs requested but only {distinct} distinct load endpoints"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut labels = vec![0; points.len()];
    let mut history = Vec::new();

    for _ in 0..max_iters.max(1) {
        let mut objective = 0.0;
        let mut dist = vec![0.0; points.len()];
        for (i, &p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            labels[i] = c;
            dist[i] = d;
            objective += d;
        }
        history.push(objective);

        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&p, &c) in points.iter().zip(&labels) {
            sums[c].0 += p.x;
            sums[c].1 += p.y;
            sums[c].2 += 1;
        }
        let mut counts: Vec<usize> = sums.iter().map(|s| s.2).collect();
        let mut moved: f64 = 0.0;
        let mut next: Vec<GeoPoint> = sums
            .iter()
            .zip(&centroids)
            .map(|(&(sx, sy, n), &old)| {
                if n == 0 {
                    old
                } else {
                    GeoPoint::new(sx / n as f64, sy / n as f64)
                }
            })
            .collect();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // farthest point that does not leave its own cluster empty
            let far = (0..points.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                counts[c] += 1;
                labels[i] = c;
                dist[i] = 0.0;
                next[c] = points[i];
            }
        }
        for (a, b) in centroids.iter().zip(&next) {
            moved = moved.max(distance(*a, *b));
        }
        centroids = next;
        if moved < tol {
            break;
        }
    }

    Ok(KMeansResult {
        centroids,
        labels,
        objective_history: history,
    })
}

pub fn endpoints(instance: &Instance) -> Vec<GeoPoint> {
    instance
        .loads
        .iter()
        .flat_map(|l| [l.origin, l.destination])
        .collect()
}

/// Places `num_hubs` hubs at the k-means centroids of all load endpoints.
pub fn kmeans_hubs(
    instance: &Instance,
    num_hubs: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Vec<Hub>> {
    let points = endpoints(instance);
    let result = kmeans(&points, num_hubs, seed, max_iters, tol)?;
    Ok(result
        .centroids
        .into_iter()
        .enumerate()
        .map(|(id, location)| Hub { id, location })
        .collect())
}

/// Driving distance of serving `load` through the hub pair, with the hub-to-hub
/// leg discounted by `gamma`.
pub fn assignment_cost(load: &Load, origin_hub: &Hub, dest_hub: &Hub, gamma: f64) -> f64 {
    distance(load.origin, origin_hub.location)
        + (1.0 - gamma) * distance(origin_hub.location, dest_hub.location)
        + distance(dest_hub.location, load.destination)
}

/// Returns `(origin_hub_id, dest_hub_id)` minimizing [`assignment_cost`]; ties go
/// to the lexicographically smallest id pair.
pub fn assign_hubs(load: &Load, hubs: &[Hub], gamma: f64) -> (usize, usize) {
    assert!(!hubs.is_empty(), "assign_hubs needs at least one hub");
    let first: Vec<f64> = hubs.iter().map(|h| distance(load.origin, h.location)).collect();
    let last: Vec<f64> = hubs
        .iter()
        .map(|h| distance(h.location, load.destination))
        .collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, a) in hubs.iter().enumerate() {
        for (j, b) in hubs.iter().enumerate() {
            let cost = first[i] + (1.0 - gamma) * distance(a.location, b.location) + last[j];
            let better = match best {
                None => true,
                Some((c, x, y)) => cost < c || (cost == c && (a.id, b.id) < (x, y)),
            };
            if better {
                best = Some((cost, a.id, b.id));
            }
        }
    }
    let (_, h_plus, h_minus) = best.unwrap();
    (h_plus, h_minus)
}

/// One task per load; the route solver decides whether it is served autonomously.
pub fn build_tasks(instance: &Instance, hubs: &[Hub]) -> Vec<Task> {
    let mut loads: Vec<&Load> = instance.loads.iter().collect();
    loads.sort_by_key(|l| l.id);
    loads
        .into_iter()
        .map(|load| {
            let (origin_hub, dest_hub) = assign_hubs(load, hubs, instance.params.gamma);
            Task {
                id: load.id,
                load: load.id,
                origin_hub,
                dest_hub,
                pickup_time: load.release_time,
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct HubRecord {
    hub_id: usize,
    x: f64,
    y: f64,
}

pub fn write_hubs_csv(hubs: &[Hub], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for h in hubs {
        w.serialize(HubRecord {
            hub_id: h.id,
            x: h.location.x,
            y: h.location.y,
        })?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_hubs_csv(path: impl AsRef<Path>) -> Result<Vec<Hub>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut hubs = Vec::new();
    for rec in r.deserialize() {
        let rec: HubRecord = rec?;
        hubs.push(Hub {
            id: rec.hub_id,
            location: GeoPoint::new(rec.x, rec.y),
        });
    }
    hubs.sort_by_key(|h| h.id);
    if hubs.iter().enumerate().any(|(i, h)| h.id != i) {
        return Err(Error::Validation("hub ids must be contiguous from 0".into()));
    }
    Ok(hubs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Params;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand_distr::{Distribution, Normal};

    fn instance_from_points(pairs: &[(GeoPoint, GeoPoint)]) -> Instance {
        Instance {
            params: Params::default(),
            loads: pairs
                .iter()
                .enumerate()
                .map(|(id, &(origin, destination))| Load {
                    id,
                    origin,
                    destination,
                    release_time: 0,
                })
                .collect(),
            seed: 0,
        }
    }

    #[test]
    fn k_equals_point_count() {
        let corners = [
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(10.0, 0.0),
            GeoPoint::new(0.0, 10.0),
            GeoPoint::new(10.0, 10.0),
        ];
        let inst = instance_from_points(&[(corners[0], corners[1]), (corners[2], corners[3])]);
        for seed in 0..10 {
            let hubs = kmeans_hubs(&inst, 4, seed, 100, 1e-6).unwrap();
            for c in corners {
                assert!(hubs.iter().any(|h| distance(h.location, c) < 1e-6));
            }
        }
    }

    #[test]
    fn single_hub_is_centroid() {
        let inst = instance_from_points(&[
            (GeoPoint::new(0.0, 0.0), GeoPoint::new(4.0, 0.0)),
            (GeoPoint::new(1.0, 3.0), GeoPoint::new(7.0, 5.0)),
        ]);
        let hubs = kmeans_hubs(&inst, 1, 9, 100, 1e-6).unwrap();
        assert_eq!(hubs.len(), 1);
        assert!(distance(hubs[0].location, GeoPoint::new(3.0, 2.0)) < 1e-9);
    }

    #[test]
    fn too_many_hubs_is_config_error() {
        let p = GeoPoint::new(1.0, 1.0);
        let q = GeoPoint::new(2.0, 1.0);
        let inst = instance_from_points(&[(p, q), (q, p)]);
        assert!(matches!(kmeans_hubs(&inst, 3, 0, 100, 1e-6), Err(Error::Config(_))));
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 5.0).unwrap();
        let centers = [GeoPoint::new(0.0, 0.0), GeoPoint::new(1000.0, 400.0)];
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            let c = centers[i % 2];
            points.push(GeoPoint::new(c.x + noise.sample(&mut rng), c.y + noise.sample(&mut rng)));
            truth.push(i % 2);
        }
        for seed in 0..20 {
            let res = kmeans(&points, 2, seed, 100, 1e-6).unwrap();
            // brute-force partition check: labels equal truth up to a relabeling
            let direct = res.labels.iter().zip(&truth).all(|(a, b)| a == b);
            let flipped = res.labels.iter().zip(&truth).all(|(a, b)| *a == 1 - b);
            assert!(direct || flipped, "seed {seed} mixed the clusters");
        }
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<GeoPoint> = (0..300)
            .map(|_| GeoPoint::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
            .collect();
        for seed in 0..5 {
            let res = kmeans(&points, 7, seed, 100, 1e-9).unwrap();
            for w in res.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", res.objective_history);
            }
        }
    }

    fn three_hubs() -> Vec<Hub> {
        vec![
            Hub { id: 0, location: GeoPoint::new(0.0, 0.0) },
            Hub { id: 1, location: GeoPoint::new(300.0, 0.0) },
            Hub { id: 2, location: GeoPoint::new(150.0, 200.0) },
        ]
    }

    #[test]
    fn single_hub_assignment() {
        let hubs = vec![Hub { id: 0, location: GeoPoint::new(5.0, 5.0) }];
        let load = Load {
            id: 0,
            origin: GeoPoint::new(0.0, 0.0),
            destination: GeoPoint::new(100.0, 0.0),
            release_time: 0,
        };
        assert_eq!(assign_hubs(&load, &hubs, 0.0), (0, 0));
    }

    #[test]
    fn endpoints_on_hubs() {
        let hubs = three_hubs();
        let load = Load {
            id: 0,
            origin: hubs[0].location,
            destination: hubs[1].location,
            release_time: 0,
        };
        // exhaustive evaluation over all pairs
        let mut best = (f64::INFINITY, 0, 0);
        for a in &hubs {
            for b in &hubs {
                let c = assignment_cost(&load, a, b, 0.4);
                if c < best.0 {
                    best = (c, a.id, b.id);
                }
            }
        }
        assert_eq!((best.1, best.2), (0, 1));
        assert_eq!(assign_hubs(&load, &hubs, 0.4), (0, 1));
        // free middle mile
        assert_eq!(assign_hubs(&load, &hubs, 1.0), (0, 1));
    }

    #[test]
    fn tasks_mirror_loads() {
        let inst = instance_from_points(&[
            (GeoPoint::new(0.0, 0.0), GeoPoint::new(290.0, 5.0)),
            (GeoPoint::new(140.0, 190.0), GeoPoint::new(1.0, 1.0)),
        ]);
        let tasks = build_tasks(&inst, &three_hubs());
        assert_eq!(tasks.len(), 2);
        for (t, l) in tasks.iter().zip(&inst.loads) {
            assert_eq!(t.id, l.id);
            assert_eq!(t.pickup_time, l.release_time);
            assert!(t.origin_hub < 3 && t.dest_hub < 3);
        }
        let empty = instance_from_points(&[]);
        assert!(build_tasks(&empty, &three_hubs()).is_empty());
    }

    #[test]
    fn hubs_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hubs.csv");
        write_hubs_csv(&three_hubs(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("hub_id,x,y\n"));
        assert_eq!(read_hubs_csv(&path).unwrap(), three_hubs());
    }

    proptest! {
        #[test]
        fn assignment_cost_is_permutation_invariant(
            coords in prop::collection::vec((0.0..500.0f64, 0.0..500.0f64), 1..6),
            o in (0.0..500.0f64, 0.0..500.0f64),
            d in (0.0..500.0f64, 0.0..500.0f64),
            gamma in 0.0..1.0f64,
            rot in 0usize..6,
        ) {
            let hubs: Vec<Hub> = coords.iter().enumerate()
                .map(|(id, &(x, y))| Hub { id, location: GeoPoint::new(x, y) }).collect();
            let mut shuffled = hubs.clone();
            shuffled.rotate_left(rot % hubs.len());
            shuffled.reverse();
            let load = Load { id: 0, origin: GeoPoint::new(o.0, o.1), destination: GeoPoint::new(d.0, d.1), release_time: 0 };
            let (a, b) = assign_hubs(&load, &hubs, gamma);
            let (c, e) = assign_hubs(&load, &shuffled, gamma);
            let cost1 = assignment_cost(&load, &hubs[a], &hubs[b], gamma);
            let cost2 = assignment_cost(&load, &hubs[c], &hubs[e], gamma);
            prop_assert!((cost1 - cost2).abs() <= 1e-9);
        }
    }
}
