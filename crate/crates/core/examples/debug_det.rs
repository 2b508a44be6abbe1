use ixleak::codes::{determinize, error_probability, synthesize_decoders, CodeRef, StochasticCode};
use ixleak::exact::format_rational;
use ixleak::model::{Caps, Distribution, Instance};
use num::{BigInt, BigRational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let caps = Caps::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE7E12);
    for round in 0..100 {
        let n = rng.gen_range(2..=3usize);
        let side_info: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && rng.gen_bool(0.5)).collect())
            .collect();
        let inst = Instance::new(n, 2, side_info.clone()).unwrap();
        let space = inst.space(&inst.full_scope(), 1).unwrap();
        let len = space.len().unwrap() as usize;
        let weights: Vec<u32> = (0..len).map(|_| rng.gen_range(1..50)).collect();
        let total: u64 = weights.iter().map(|&w| w as u64).sum();
        let dist = Distribution::from_table(
            space.clone(),
            weights.iter().map(|&w| BigRational::new(BigInt::from(w), BigInt::from(total))).collect(),
        ).unwrap();
        let m = rng.gen_range(1..=4u64);
        let rows: Vec<Vec<(u64, BigRational)>> = (0..len)
            .map(|_| {
                let k = rng.gen_range(1..=m);
                let mut ys: Vec<u64> = (0..m).collect();
                for i in (1..ys.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    ys.swap(i, j);
                }
                let mut ys: Vec<u64> = ys.into_iter().take(k as usize).collect();
                ys.sort_unstable();
                let ws: Vec<u64> = (0..k).map(|_| rng.gen_range(1..9)).collect();
                let tot: u64 = ws.iter().sum();
                ys.into_iter().zip(&ws).map(|(y, &w)| (y, BigRational::new(BigInt::from(w), BigInt::from(tot)))).collect()
            })
            .collect();
        let stoch = StochasticCode::new(space.clone(), m, rows.clone()).unwrap();
        let det = determinize(&stoch, &inst, &dist, &caps).unwrap();
        let pe_s = error_probability(CodeRef::Stoch(&stoch), &inst, &dist, &caps).unwrap().p_e;
        let pe_d = error_probability(CodeRef::Det(&det), &inst, &dist, &caps).unwrap().p_e;
        if pe_d > pe_s {
            println!("VIOLATION at round {round}");
            println!("n={n} side_info={side_info:?}");
            println!("weights={weights:?} total={total}");
            println!("m={m}");
            for (x, row) in rows.iter().enumerate() {
                let r: Vec<String> = row.iter().map(|(y, p)| format!("{}:{}", y, format_rational(p))).collect();
                println!("  row {x}: {}", r.join(" "));
            }
            println!("det map: {:?}", det.table());
            println!("pe_stoch = {}", format_rational(&pe_s));
            println!("pe_det   = {}", format_rational(&pe_d));
            // P_e of det under the STOCH code's ML decoders:
            let dec_s = synthesize_decoders(CodeRef::Stoch(&stoch), &inst, &dist, &caps).unwrap();
            let pe_d_old = ixleak::codes::error_probability_with(CodeRef::Det(&det), &inst, &dist, &dec_s, &caps).unwrap().p_e;
            println!("pe_det under stoch decoders = {}", format_rational(&pe_d_old));
            return;
        }
    }
    println!("no violation found");
}
