//! Synthetic problem generation, MovieLens ingestion, splits, metrics and the
//! plain-text fixture format.
//!
//! Fixture format (whitespace separated):
//!
//! ```text
//! m n r snr_db missing seed
//! i j value          # one line per observed entry, 0-based indices
//! ```
//!
//! The companion truth file repeats the header and then holds `m` lines of `n`
//! values each. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::observed::ObservedMatrix;
use crate::schatten::Factors;

const FACTOR_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const MASK_STREAM: u64 = 3;
const SPLIT_STREAM: u64 = 5;

/// Seeded generator for one purpose. Different purposes draw from disjoint
/// ChaCha streams under the same seed.
pub fn purpose_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.m == 0 || self.n == 0 {
            return bad("matrix dimensions must be positive".into());
        }
        if self.rank == 0 || self.rank > self.m.min(self.n) {
            return bad(format!("rank must lie in 1..={}, got {}", self.m.min(self.n), self.rank));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad(format!("invalid snr {}", self.snr_db));
        }
        Ok(())
    }

    pub fn observed_count(&self) -> usize {
        ((1.0 - self.missing_rate) * (self.m * self.n) as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub x_true: DenseMatrix,
    pub noise: DenseMatrix,
    pub y_obs: ObservedMatrix,
    /// Held-out indices `Z̄`, row-major order.
    pub test_mask: Vec<(usize, usize)>,
}

/// `X = A·Bᵀ` with Gaussian factors, additive Gaussian noise at the requested
/// SNR (signal power `‖X‖²/(mn)`), and a uniformly drawn observation set.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let (m, n, r) = (spec.m, spec.n, spec.rank);
    let mut frng = purpose_rng(spec.seed, FACTOR_STREAM);
    let a = DenseMatrix::from_fn(m, r, |_, _| standard_normal(&mut frng));
    let b = DenseMatrix::from_fn(n, r, |_, _| standard_normal(&mut frng));
    let x_true = a.matmul_t(&b)?;

    let noise = if spec.snr_db.is_infinite() {
        DenseMatrix::zeros(m, n)
    } else {
        let power = x_true.frobenius_norm_sq() / (m * n) as f64;
        let std = (power / 10f64.powf(spec.snr_db / 10.0)).sqrt();
        let mut nrng = purpose_rng(spec.seed, NOISE_STREAM);
        DenseMatrix::from_fn(m, n, |_, _| std * standard_normal(&mut nrng))
    };

    let mut mrng = purpose_rng(spec.seed, MASK_STREAM);
    let mut picked = index::sample(&mut mrng, m * n, spec.observed_count()).into_vec();
    picked.sort_unstable();
    let mut observed = vec![false; m * n];
    for &k in &picked {
        observed[k] = true;
    }
    let triplets = picked
        .iter()
        .map(|&k| {
            let (i, j) = (k / n, k % n);
            (i, j, x_true.get(i, j) + noise.get(i, j))
        })
        .collect();
    let y_obs = ObservedMatrix::new(m, n, triplets)?;
    let test_mask = (0..m * n)
        .filter(|&k| !observed[k])
        .map(|k| (k / n, k % n))
        .collect();
    Ok(GroundTruth {
        spec: spec.clone(),
        x_true,
        noise,
        y_obs,
        test_mask,
    })
}

/// Indices of `shape` not present in `obs`, row-major.
pub fn complement_mask(obs: &ObservedMatrix) -> Vec<(usize, usize)> {
    (0..obs.rows())
        .flat_map(|i| (0..obs.cols()).map(move |j| (i, j)))
        .filter(|&(i, j)| !obs.contains(i, j))
        .collect()
}

/// Parses MovieLens `u.data` lines `user<TAB>item<TAB>rating<TAB>timestamp`.
/// IDs are 1-based; the shape is `(max user, max item)`.
pub fn parse_movielens_reader<R: Read>(reader: R) -> Result<ObservedMatrix> {
    let mut triplets = Vec::new();
    let (mut max_u, mut max_i) = (0usize, 0usize);
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let id = |s: &str, what: &str| -> Result<usize> {
            match s.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(Error::Parse {
                    line: lineno,
                    msg: format!("invalid {what} id {s:?}"),
                }),
            }
        };
        let user = id(fields[0], "user")?;
        let item = id(fields[1], "item")?;
        let rating: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid rating {:?}", fields[2]),
        })?;
        if !rating.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("non-finite rating {:?}", fields[2]),
            });
        }
        max_u = max_u.max(user);
        max_i = max_i.max(item);
        triplets.push((user - 1, item - 1, rating));
    }
    if triplets.is_empty() {
        return Err(Error::NoObservations);
    }
    ObservedMatrix::new(max_u, max_i, triplets)
}

pub fn parse_movielens(path: impl AsRef<Path>) -> Result<ObservedMatrix> {
    parse_movielens_reader(std::fs::File::open(path)?)
}

/// Writes `obs` in `u.data` layout with 1-based IDs and a zero timestamp.
pub fn write_movielens<W: Write>(mut w: W, obs: &ObservedMatrix) -> Result<()> {
    let mut buf = String::new();
    for o in obs.observations() {
        let _ = writeln!(buf, "{}\t{}\t{}\t0", o.row + 1, o.col + 1, o.value);
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MaskSplit {
    pub train: ObservedMatrix,
    pub test: ObservedMatrix,
}

/// Uniform random partition of the observations; `round(train_frac · |Z|)`
/// go to the training side.
pub fn split(obs: &ObservedMatrix, train_frac: f64, seed: u64) -> Result<MaskSplit> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.shuffle(&mut purpose_rng(seed, SPLIT_STREAM));
    let n_train = (train_frac * obs.len() as f64).round() as usize;
    let pick = |ids: &[usize]| {
        let t = ids
            .iter()
            .map(|&k| {
                let o = obs.observations()[k];
                (o.row, o.col, o.value)
            })
            .collect();
        ObservedMatrix::new(obs.rows(), obs.cols(), t)
    };
    Ok(MaskSplit {
        train: pick(&order[..n_train])?,
        test: pick(&order[n_train..])?,
    })
}

/// `‖P_Z̄(X̂ − X)‖_F / ‖P_Z̄(X)‖_F`
pub fn relative_error(f: &Factors, x_true: &DenseMatrix, test_mask: &[(usize, usize)]) -> Result<f64> {
    if test_mask.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if f.shape() != x_true.shape() {
        return Err(Error::ShapeMismatch("factors and ground truth differ in shape".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(i, j) in test_mask {
        let t = x_true.get(i, j);
        let e = dot(f.u().row(i), f.v().row(j)) - t;
        num += e * e;
        den += t * t;
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator("ground truth vanishes on the test mask"));
    }
    Ok((num / den).sqrt())
}

/// Mean absolute error over `test`, divided by `r_max − r_min`. Predictions
/// are not clipped.
pub fn nmae(f: &Factors, test: &ObservedMatrix, r_min: f64, r_max: f64) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if !(r_max > r_min) {
        return Err(Error::InvalidArgument(format!("rating range [{r_min}, {r_max}] is empty")));
    }
    test.check_factors(f)?;
    let total: f64 = test
        .observations()
        .iter()
        .map(|o| (o.value - dot(f.u().row(o.row), f.v().row(o.col))).abs())
        .sum();
    Ok(total / test.len() as f64 / (r_max - r_min))
}

fn header_line(spec: &SynthSpec) -> String {
    format!(
        "{} {} {} {} {} {}\n",
        spec.m, spec.n, spec.rank, spec.snr_db, spec.missing_rate, spec.seed
    )
}

fn parse_header(line: &str) -> Result<SynthSpec> {
    let t: Vec<&str> = line.split_whitespace().collect();
    let err = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    if t.len() != 6 {
        return Err(err("header must read `m n r snr missing seed`"));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| err("bad integer in header"));
    let spec = SynthSpec {
        m: int(t[0])?,
        n: int(t[1])?,
        rank: int(t[2])?,
        snr_db: t[3].parse().map_err(|_| err("bad snr in header"))?,
        missing_rate: t[4].parse().map_err(|_| err("bad missing rate in header"))?,
        seed: t[5].parse().map_err(|_| err("bad seed in header"))?,
    };
    Ok(spec)
}

pub fn write_fixture<W: Write>(mut w: W, spec: &SynthSpec, obs: &ObservedMatrix) -> Result<()> {
    let mut buf = header_line(spec);
    for o in obs.observations() {
        let _ = writeln!(buf, "{} {} {}", o.row, o.col, o.value);
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_fixture<R: Read>(reader: R) -> Result<(SynthSpec, ObservedMatrix)> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty fixture".into(),
    })??;
    let spec = parse_header(&header)?;
    let mut triplets = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = k + 2;
        let t: Vec<&str> = line.split_whitespace().collect();
        let err = || Error::Parse {
            line: lineno,
            msg: format!("expected `i j value`, got {line:?}"),
        };
        if t.len() != 3 {
            return Err(err());
        }
        let i = t[0].parse().map_err(|_| err())?;
        let j = t[1].parse().map_err(|_| err())?;
        let v = t[2].parse().map_err(|_| err())?;
        triplets.push((i, j, v));
    }
    let obs = ObservedMatrix::new(spec.m, spec.n, triplets)?;
    Ok((spec, obs))
}

pub fn write_truth<W: Write>(mut w: W, spec: &SynthSpec, x: &DenseMatrix) -> Result<()> {
    let mut buf = header_line(spec);
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(f64::to_string).collect();
        buf.push_str(&row.join(" "));
        buf.push('\n');
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_truth<R: Read>(reader: R) -> Result<(SynthSpec, DenseMatrix)> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty truth file".into(),
    })??;
    let spec = parse_header(&header)?;
    let mut data = Vec::with_capacity(spec.m * spec.n);
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split_whitespace() {
            data.push(tok.parse::<f64>().map_err(|_| Error::Parse {
                line: k + 2,
                msg: format!("bad value {tok:?}"),
            })?);
        }
    }
    let x = DenseMatrix::new(spec.m, spec.n, data)?;
    Ok((spec, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(missing: f64, snr: f64) -> SynthSpec {
        SynthSpec {
            m: 12,
            n: 9,
            rank: 3,
            snr_db: snr,
            missing_rate: missing,
            seed: 4,
        }
    }

    #[test]
    fn fully_observed_and_noiseless() {
        let gt = gen_synthetic(&spec(0.0, f64::INFINITY)).unwrap();
        assert_eq!(gt.y_obs.len(), 12 * 9);
        assert!(gt.test_mask.is_empty());
        for o in gt.y_obs.observations() {
            assert_eq!(o.value, gt.x_true.get(o.row, o.col));
        }
    }

    #[test]
    fn masks_partition() {
        let gt = gen_synthetic(&spec(0.4, 10.0)).unwrap();
        assert_eq!(gt.y_obs.len(), (0.6f64 * 108.0).round() as usize);
        assert_eq!(gt.y_obs.len() + gt.test_mask.len(), 108);
        assert!(gt.test_mask.iter().all(|&(i, j)| !gt.y_obs.contains(i, j)));
        assert_eq!(complement_mask(&gt.y_obs), gt.test_mask);
    }

    #[test]
    fn reproducible() {
        let a = gen_synthetic(&spec(0.3, 5.0)).unwrap();
        let b = gen_synthetic(&spec(0.3, 5.0)).unwrap();
        assert_eq!(a.x_true, b.x_true);
        assert_eq!(a.y_obs, b.y_obs);
        let mut other = spec(0.3, 5.0);
        other.seed = 5;
        assert_ne!(gen_synthetic(&other).unwrap().x_true, a.x_true);
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_synthetic(&spec(1.0, 5.0)).is_err());
        let mut s = spec(0.1, 5.0);
        s.rank = 10;
        assert!(gen_synthetic(&s).is_err());
    }

    #[test]
    fn movielens_parsing() {
        let one = parse_movielens_reader("196\t242\t3\t881250949\n".as_bytes()).unwrap();
        assert_eq!(one.shape(), (196, 242));
        let o = one.observations()[0];
        assert_eq!((o.row, o.col, o.value), (195, 241, 3.0));

        assert_eq!(parse_movielens_reader("".as_bytes()).unwrap_err(), Error::NoObservations);
        let dup = "1\t2\t3\t0\n1\t2\t4\t1\n";
        assert_eq!(
            parse_movielens_reader(dup.as_bytes()).unwrap_err(),
            Error::DuplicateObservation { row: 0, col: 1 }
        );
        let bad = "1\t2\t3\t0\n1\tx\t4\t1\n";
        assert!(matches!(
            parse_movielens_reader(bad.as_bytes()).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn split_contract() {
        let t = (0..10).map(|k| (k / 5, k % 5, k as f64)).collect();
        let obs = ObservedMatrix::new(2, 5, t).unwrap();
        let s = split(&obs, 0.5, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (5, 5));
        let again = split(&obs, 0.5, 3).unwrap();
        assert_eq!(s.train, again.train);
        let mut all: Vec<_> = s
            .train
            .observations()
            .iter()
            .chain(s.test.observations())
            .map(|o| (o.row, o.col, o.value))
            .collect();
        all.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let orig: Vec<_> = obs.observations().iter().map(|o| (o.row, o.col, o.value)).collect();
        assert_eq!(all, orig);
        assert!(split(&obs, 1.0, 3).is_err());
    }

    #[test]
    fn metrics() {
        let gt = gen_synthetic(&spec(0.5, f64::INFINITY)).unwrap();
        let exact = crate::schatten::balanced_factorization(&gt.x_true, 3).unwrap();
        assert!(relative_error(&exact, &gt.x_true, &gt.test_mask).unwrap() < 1e-12);
        let zero = Factors::zeros(12, 9, 1);
        assert_eq!(relative_error(&zero, &gt.x_true, &gt.test_mask).unwrap(), 1.0);
        let double = Factors::new(exact.u().scale(2.0), exact.v().clone()).unwrap();
        assert!((relative_error(&double, &gt.x_true, &gt.test_mask).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(relative_error(&zero, &gt.x_true, &[]).unwrap_err(), Error::EmptyTestSet);
        let zt = DenseMatrix::zeros(12, 9);
        assert!(matches!(
            relative_error(&zero, &zt, &gt.test_mask),
            Err(Error::ZeroDenominator(_))
        ));
    }

    #[test]
    fn nmae_cases() {
        let test = ObservedMatrix::new(1, 2, vec![(0, 0, 1.0), (0, 1, 5.0)]).unwrap();
        let three = Factors::new(
            DenseMatrix::from_rows(&[&[3.0]]).unwrap(),
            DenseMatrix::from_rows(&[&[1.0], &[1.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(nmae(&three, &test, 1.0, 5.0).unwrap(), 0.5);
        let perfect = Factors::new(
            DenseMatrix::from_rows(&[&[1.0]]).unwrap(),
            DenseMatrix::from_rows(&[&[1.0], &[5.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(nmae(&perfect, &test, 1.0, 5.0).unwrap(), 0.0);
        let off = Factors::new(
            DenseMatrix::from_rows(&[&[1.0]]).unwrap(),
            DenseMatrix::from_rows(&[&[5.0], &[9.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(nmae(&off, &test, 1.0, 5.0).unwrap(), 1.0);
        let empty = ObservedMatrix::new(1, 2, vec![]).unwrap();
        assert_eq!(nmae(&three, &empty, 1.0, 5.0).unwrap_err(), Error::EmptyTestSet);
    }

    #[test]
    fn fixture_roundtrip() {
        let s = spec(0.5, 12.5);
        let gt = gen_synthetic(&s).unwrap();
        let mut buf = Vec::new();
        write_fixture(&mut buf, &s, &gt.y_obs).unwrap();
        let (s2, obs) = read_fixture(buf.as_slice()).unwrap();
        assert_eq!(s2, s);
        assert_eq!(obs, gt.y_obs);

        let mut tbuf = Vec::new();
        write_truth(&mut tbuf, &s, &gt.x_true).unwrap();
        let (_, x) = read_truth(tbuf.as_slice()).unwrap();
        assert_eq!(x, gt.x_true);

        let inf = spec(0.5, f64::INFINITY);
        let mut ibuf = Vec::new();
        write_fixture(&mut ibuf, &inf, &gt.y_obs).unwrap();
        assert!(read_fixture(ibuf.as_slice()).unwrap().0.snr_db.is_infinite());
    }

    #[test]
    fn movielens_writer_round_trips() {
        let obs = ObservedMatrix::new(3, 4, vec![(0, 3, 4.0), (2, 0, 1.0), (2, 3, 5.0)]).unwrap();
        let mut buf = Vec::new();
        write_movielens(&mut buf, &obs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("1\t4\t4\t0\n"));
        assert_eq!(parse_movielens_reader(buf.as_slice()).unwrap(), obs);
    }
}
