//! Random streams against an independent Python implementation of
//! SplitMix64 / PCG32 seeding / ChaCha8 (`fixtures/gen_rng.py`).

use itop_core::ndcore::rng::mix_seed;
use itop_core::ndcore::Rng;

const FIXTURE: &str = include_str!("fixtures/rng_streams.txt");

#[test]
fn streams_match_reference() {
    let mut streams: std::collections::BTreeMap<u64, Rng> = Default::default();
    let mut below_rng = Rng::new(99);
    let (mut mixes, mut draws, mut belows) = (0, 0, 0);
    for line in FIXTURE.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f[0] {
            "mix" => {
                let path: Vec<u64> = if f[2] == "-" {
                    Vec::new()
                } else {
                    f[2].split(',').map(|t| t.parse().unwrap()).collect()
                };
                assert_eq!(mix_seed(f[1].parse().unwrap(), &path), f[3].parse::<u64>().unwrap(), "{line}");
                mixes += 1;
            }
            "u64" => {
                let seed: u64 = f[1].parse().unwrap();
                let rng = streams.entry(seed).or_insert_with(|| Rng::new(seed));
                assert_eq!(rng.next_u64(), f[2].parse::<u64>().unwrap(), "{line}");
                draws += 1;
            }
            "below" => {
                assert_eq!(below_rng.below(f[2].parse().unwrap()), f[3].parse::<u64>().unwrap(), "{line}");
                belows += 1;
            }
            other => panic!("unknown fixture row {other}"),
        }
    }
    assert_eq!((mixes, draws, belows), (5, 3000, 120));
}

#[test]
fn seed_equal_to_tag_does_not_collapse() {
    let a = mix_seed(1, &[1]);
    let b = mix_seed(2, &[2]);
    assert_ne!(a, b);
}
