use rand::seq::index;
use rand::Rng;

use super::{check_sorted, Key, PivotError, PivotSet, Strategy};

const SET_A: [usize; 15] = [1, 3, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 27, 29];
const SET_B: [usize; 15] = [4, 6, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 30, 32];

fn sorted_sample<R: Rng + ?Sized>(rng: &mut R, pool: &[usize], k: usize) -> Vec<usize> {
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

/// `Mixed(16)` over exactly 16 positions.
fn mixed_16<R: Rng + ?Sized>(pool: &[usize], rng: &mut R) -> Vec<usize> {
    debug_assert_eq!(pool.len(), 16);
    mixed(pool, 16, rng)
}

fn naive<R: Rng + ?Sized>(pool: &[usize], b: usize, rng: &mut R) -> Vec<usize> {
    sorted_sample(rng, pool, b - 1)
}

fn shift_half<R: Rng + ?Sized>(pool: &[usize], b: usize, rng: &mut R) -> Vec<usize> {
    let subset = if pool.len() == b { pool.to_vec() } else { sorted_sample(rng, pool, b) };
    if rng.gen_bool(0.5) {
        subset[..b - 1].to_vec()
    } else {
        subset[1..].to_vec()
    }
}

fn mixed<R: Rng + ?Sized>(pool: &[usize], b: usize, rng: &mut R) -> Vec<usize> {
    if rng.gen_bool(0.25) {
        naive(pool, b, rng)
    } else {
        shift_half(pool, b, rng)
    }
}

/// Pads `0..n` to `target` positions by duplicating uniformly chosen
/// positions (with replacement); the result stays sorted.
fn duplicate_to<R: Rng + ?Sized>(n: usize, target: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    pool.extend((n..target).map(|_| rng.gen_range(0..n)));
    pool.sort_unstable();
    pool
}

fn rule16<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let all: Vec<usize> = (0..n).collect();
    match n {
        0 => unreachable!("checked by caller"),
        1..=15 => mixed_16(&duplicate_to(n, 16, rng), rng),
        16 => mixed_16(&all, rng),
        17..=31 => mixed_16(&sorted_sample(rng, &all, 16), rng),
        _ => {
            let base = if n == 32 { all } else { sorted_sample(rng, &all, 32) };
            let set = if rng.gen_bool(0.5) { &SET_A } else { &SET_B };
            set.iter().map(|&i| base[i - 1]).collect()
        }
    }
}

/// Positions (into a sorted list of length `n`) of the pivots chosen by
/// `strategy`. Positions are non-decreasing and may repeat only for
/// `Rule16` with fewer than 16 keys.
pub fn select_indices<R: Rng + ?Sized>(
    strategy: &Strategy,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>, PivotError> {
    strategy.validate()?;
    let need = match strategy {
        Strategy::Rule16 => 1,
        Strategy::Naive(b) => b - 1,
        Strategy::ShiftHalf(b) | Strategy::Mixed(b) => *b,
        Strategy::RankMixture(w) => w.len(),
    };
    if n < need {
        return Err(PivotError::TooFewKeys { need, got: n });
    }
    let all: Vec<usize> = (0..n).collect();
    Ok(match strategy {
        Strategy::Rule16 => rule16(n, rng),
        Strategy::Naive(b) => naive(&all, *b, rng),
        Strategy::ShiftHalf(b) => shift_half(&all, *b, rng),
        Strategy::Mixed(b) => mixed(&all, *b, rng),
        Strategy::RankMixture(w) => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let rank = w
                .iter()
                .position(|&p| {
                    acc += p;
                    u < acc
                })
                .unwrap_or(w.len() - 1);
            vec![rank]
        }
    })
}

/// Candidate positions a sorting node contributes for `b` buckets, or
/// `None` when it holds no keys. Uses the 16-bucket routine for `b = 16`;
/// otherwise `Mixed(b)`, first padding short lists to `b` keys by
/// duplication as the 16-bucket routine does.
pub fn candidate_indices<R: Rng + ?Sized>(b: usize, n: usize, rng: &mut R) -> Option<Vec<usize>> {
    if n == 0 {
        return None;
    }
    if b == 16 {
        return Some(rule16(n, rng));
    }
    let pool = if n < b { duplicate_to(n, b, rng) } else { (0..n).collect() };
    Some(mixed(&pool, b, rng))
}

fn finish(keys: &[Key], idx: Vec<usize>) -> PivotSet {
    let set = PivotSet::new(idx.into_iter().map(|i| keys[i]).collect()).expect("positions are sorted");
    if set.is_degenerate() {
        log::warn!("repeated pivots from {} keys; some buckets will be empty", keys.len());
    }
    set
}

/// The 16-bucket routine over `sorted_keys`; always returns 15 pivots.
pub fn pivot_select_16<R: Rng + ?Sized>(sorted_keys: &[Key], rng: &mut R) -> Result<PivotSet, PivotError> {
    pivot_select(&Strategy::Rule16, sorted_keys, rng)
}

pub fn pivot_select<R: Rng + ?Sized>(
    strategy: &Strategy,
    sorted_keys: &[Key],
    rng: &mut R,
) -> Result<PivotSet, PivotError> {
    check_sorted(sorted_keys)?;
    let idx = select_indices(strategy, sorted_keys.len(), rng)?;
    Ok(finish(sorted_keys, idx))
}
